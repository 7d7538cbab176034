#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "refcheck/errors.hpp"

namespace refcheck {

// One text-completion call: the prompt plus sampling parameters. A request
// at temperature 0 is deterministic, so n_samples is forced to 1 at
// construction time via validate()/normalized().
struct PromptRequest {
    std::string model_id;
    std::string prompt_text;
    double temperature = 0.0;  // [0, 2]
    int n_samples = 1;         // >= 1
    int max_tokens = 256;      // >= 1
    std::optional<std::int64_t> seed_hint;

    void validate() const;
    PromptRequest normalized() const;
};

enum class Provenance { live, cache, replay };

const char* to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct CompletionBatch {
    std::string request_digest;
    std::vector<std::string> completions;  // length == request n_samples
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    Provenance provenance = Provenance::live;
};

// Stable digest over (model_id, prompt_text, temperature, n_samples,
// max_tokens). Byte-exact over the prompt: no whitespace normalization.
std::string cache_key(const PromptRequest& request);

// Aggregated token/request tallies; additive.
struct Usage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t requests = 0;

    void add(const CompletionBatch& batch) {
        prompt_tokens += batch.prompt_tokens;
        completion_tokens += batch.completion_tokens;
        requests += 1;
    }
    Usage& operator+=(const Usage& o) {
        prompt_tokens += o.prompt_tokens;
        completion_tokens += o.completion_tokens;
        requests += o.requests;
        return *this;
    }
};

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    // `digest` is the cache key of `request`; backends attach it to errors.
    virtual CompletionBatch complete(const PromptRequest& request, const std::string& digest) = 0;
    virtual std::string name() const = 0;
};

// Offline backend: a table of digest -> recorded batch. Never touches the
// network; a missing digest means the fixtures do not cover the request.
class ReplayBackend : public CompletionBackend {
public:
    ReplayBackend() = default;

    // JSON-lines: {"digest": hex, "completions": [...],
    //              "prompt_tokens": n, "completion_tokens": n}
    static std::shared_ptr<ReplayBackend> from_file(const std::filesystem::path& path);

    void add(const std::string& digest, std::vector<std::string> completions,
             std::int64_t prompt_tokens = 0, std::int64_t completion_tokens = 0);

    CompletionBatch complete(const PromptRequest& request, const std::string& digest) override;
    std::string name() const override { return "replay"; }

    std::size_t lookups() const;
    std::size_t size() const;

private:
    struct Entry {
        std::vector<std::string> completions;
        std::int64_t prompt_tokens = 0;
        std::int64_t completion_tokens = 0;
    };
    mutable std::mutex mu_;
    std::map<std::string, Entry> entries_;
    std::size_t lookups_ = 0;
};

struct BackendPolicy {
    int max_in_flight = 4;
    int max_retries = 2;
    int backoff_base_ms = 250;
    int timeout_ms = 60000;

    void validate() const;
};

// Append-safe directory of digest-named records. Each record carries the
// versioned "RCK1" header followed by the serialized request and batch;
// records that fail any check are treated as misses.
class CompletionCache {
public:
    explicit CompletionCache(std::filesystem::path dir);

    std::optional<CompletionBatch> lookup(const std::string& digest) const;
    void store(const std::string& digest, const PromptRequest& request,
               const CompletionBatch& batch) const;

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

// Provider-agnostic completion access: bounded in-flight calls, retries with
// exponential backoff for transport-level failures, and content-addressed
// caching. Safe for concurrent use.
class Gateway {
public:
    Gateway(std::shared_ptr<CompletionBackend> backend, BackendPolicy policy,
            std::optional<std::filesystem::path> cache_dir = std::nullopt);

    CompletionBatch complete(const PromptRequest& request);

    const BackendPolicy& policy() const { return policy_; }

private:
    CompletionBatch call_with_retries(const PromptRequest& request, const std::string& digest);

    std::shared_ptr<CompletionBackend> backend_;
    BackendPolicy policy_;
    std::optional<CompletionCache> cache_;
    std::mutex mu_;
    std::condition_variable slot_free_;
    int in_flight_ = 0;
};

// Adapter for OpenAI-style completion endpoints over HTTP. The API key is
// read from the environment variable named in the constructor and is never
// logged or serialized.
class HttpCompletionBackend : public CompletionBackend {
public:
    HttpCompletionBackend(std::string endpoint, std::string api_key_env, int timeout_ms);

    CompletionBatch complete(const PromptRequest& request, const std::string& digest) override;
    std::string name() const override { return "http"; }

private:
    std::string endpoint_;
    std::string api_key_env_;
    int timeout_ms_;
};

}  // namespace refcheck
