#include "refcheck/gateway.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <json.hpp>

#include "refcheck/digest.hpp"
#include "refcheck/jsonl.hpp"

namespace refcheck {

namespace {

std::string shortest_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Length-prefixed field so that no two distinct requests serialize equally.
void append_field(std::string& out, std::string_view bytes) {
    out += std::to_string(bytes.size());
    out += ':';
    out += bytes;
}

}  // namespace

void PromptRequest::validate() const {
    if (prompt_text.empty()) throw ConfigError("prompt_text is empty");
    if (temperature < 0.0 || temperature > 2.0) {
        throw ConfigError("temperature out of range [0,2]");
    }
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    if (model_id.empty()) throw ConfigError("model_id is empty");
}

PromptRequest PromptRequest::normalized() const {
    PromptRequest r = *this;
    if (r.temperature == 0.0) r.n_samples = 1;
    return r;
}

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::live: return "live";
        case Provenance::cache: return "cache";
        case Provenance::replay: return "replay";
    }
    return "live";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "live") return Provenance::live;
    if (s == "cache") return Provenance::cache;
    if (s == "replay") return Provenance::replay;
    throw Error("unknown provenance: " + std::string(s));
}

std::string cache_key(const PromptRequest& request) {
    std::string buf = "refcheck-request-v1";
    append_field(buf, request.model_id);
    append_field(buf, request.prompt_text);
    append_field(buf, shortest_double(request.temperature));
    append_field(buf, std::to_string(request.n_samples));
    append_field(buf, std::to_string(request.max_tokens));
    return sha256_hex(buf);
}

// --- ReplayBackend ---------------------------------------------------------

std::shared_ptr<ReplayBackend> ReplayBackend::from_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError("replay fixture file not found: " + path.string());
    }
    auto backend = std::make_shared<ReplayBackend>();
    for (const auto& rec : read_jsonl(path)) {
        backend->add(rec.at("digest").get<std::string>(),
                     rec.at("completions").get<std::vector<std::string>>(),
                     rec.value("prompt_tokens", std::int64_t{0}),
                     rec.value("completion_tokens", std::int64_t{0}));
    }
    return backend;
}

void ReplayBackend::add(const std::string& digest, std::vector<std::string> completions,
                        std::int64_t prompt_tokens, std::int64_t completion_tokens) {
    std::lock_guard<std::mutex> lock(mu_);
    entries_[digest] = Entry{std::move(completions), prompt_tokens, completion_tokens};
}

CompletionBatch ReplayBackend::complete(const PromptRequest&, const std::string& digest) {
    std::lock_guard<std::mutex> lock(mu_);
    ++lookups_;
    auto it = entries_.find(digest);
    if (it == entries_.end()) {
        throw BackendUnavailable("replay fixture has no entry for request", digest);
    }
    CompletionBatch batch;
    batch.request_digest = digest;
    batch.completions = it->second.completions;
    batch.prompt_tokens = it->second.prompt_tokens;
    batch.completion_tokens = it->second.completion_tokens;
    batch.provenance = Provenance::replay;
    return batch;
}

std::size_t ReplayBackend::lookups() const {
    std::lock_guard<std::mutex> lock(mu_);
    return lookups_;
}

std::size_t ReplayBackend::size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
}

// --- BackendPolicy ----------------------------------------------------------

void BackendPolicy::validate() const {
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (backoff_base_ms < 1) throw ConfigError("backoff_base_ms must be positive");
    if (timeout_ms < 1) throw ConfigError("timeout_ms must be positive");
}

// --- CompletionCache ---------------------------------------------------------

namespace {

constexpr std::string_view kCacheHeader = "RCK1\n";

nlohmann::json request_to_json(const PromptRequest& r) {
    nlohmann::json j{
        {"model_id", r.model_id},     {"prompt_text", r.prompt_text},
        {"temperature", r.temperature}, {"n_samples", r.n_samples},
        {"max_tokens", r.max_tokens},
    };
    return j;
}

PromptRequest request_from_json(const nlohmann::json& j) {
    PromptRequest r;
    r.model_id = j.at("model_id").get<std::string>();
    r.prompt_text = j.at("prompt_text").get<std::string>();
    r.temperature = j.at("temperature").get<double>();
    r.n_samples = j.at("n_samples").get<int>();
    r.max_tokens = j.at("max_tokens").get<int>();
    return r;
}

}  // namespace

CompletionCache::CompletionCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::optional<CompletionBatch> CompletionCache::lookup(const std::string& digest) const {
    const auto path = dir_ / (digest + ".rck");
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;

    std::string raw;
    try {
        raw = read_file(path);
    } catch (const Error&) {
        return std::nullopt;
    }
    if (raw.rfind(kCacheHeader, 0) != 0) return std::nullopt;  // corrupt: bad header

    nlohmann::json rec = nlohmann::json::parse(raw.substr(kCacheHeader.size()), nullptr, false);
    if (rec.is_discarded()) return std::nullopt;

    try {
        const PromptRequest stored = request_from_json(rec.at("request"));
        if (cache_key(stored) != digest) return std::nullopt;  // content does not match name
        const auto& b = rec.at("batch");
        CompletionBatch batch;
        batch.request_digest = digest;
        batch.completions = b.at("completions").get<std::vector<std::string>>();
        batch.prompt_tokens = b.at("prompt_tokens").get<std::int64_t>();
        batch.completion_tokens = b.at("completion_tokens").get<std::int64_t>();
        batch.provenance = Provenance::cache;
        if (static_cast<int>(batch.completions.size()) != stored.n_samples) return std::nullopt;
        if (batch.prompt_tokens < 0 || batch.completion_tokens < 0) return std::nullopt;
        return batch;
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

void CompletionCache::store(const std::string& digest, const PromptRequest& request,
                            const CompletionBatch& batch) const {
    nlohmann::json rec{
        {"request", request_to_json(request)},
        {"batch",
         {{"completions", batch.completions},
          {"prompt_tokens", batch.prompt_tokens},
          {"completion_tokens", batch.completion_tokens},
          {"provenance", to_string(batch.provenance)}}},
    };
    std::string content(kCacheHeader);
    content += rec.dump();
    content += '\n';
    atomic_write(dir_ / (digest + ".rck"), content);
}

// --- Gateway -----------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<CompletionBackend> backend, BackendPolicy policy,
                 std::optional<std::filesystem::path> cache_dir)
    : backend_(std::move(backend)), policy_(policy) {
    policy_.validate();
    if (!backend_) throw ConfigError("no completion backend configured");
    if (cache_dir) cache_.emplace(*cache_dir);
}

CompletionBatch Gateway::call_with_retries(const PromptRequest& request,
                                           const std::string& digest) {
    int attempt = 0;
    for (;;) {
        try {
            CompletionBatch batch = backend_->complete(request, digest);
            if (static_cast<int>(batch.completions.size()) != request.n_samples) {
                throw MalformedResponse(
                    "backend returned " + std::to_string(batch.completions.size()) +
                        " completions, expected " + std::to_string(request.n_samples),
                    digest);
            }
            if (batch.prompt_tokens < 0 || batch.completion_tokens < 0) {
                throw MalformedResponse("backend returned negative token counts", digest);
            }
            batch.request_digest = digest;
            return batch;
        } catch (const BackendError&) {
            // Transport-level failure. Completions that merely look unhelpful
            // are never retried; they are scored as-is upstream.
            if (attempt >= policy_.max_retries) throw;
            const auto delay =
                std::chrono::milliseconds(policy_.backoff_base_ms) * (1LL << attempt);
            std::this_thread::sleep_for(delay);
            ++attempt;
        }
    }
}

CompletionBatch Gateway::complete(const PromptRequest& raw_request) {
    const PromptRequest request = raw_request.normalized();
    request.validate();
    const std::string digest = cache_key(request);

    if (cache_) {
        if (auto hit = cache_->lookup(digest)) return *hit;
    }

    // Bounded in-flight backend calls; cache hits above bypass the limit.
    {
        std::unique_lock<std::mutex> lock(mu_);
        slot_free_.wait(lock, [&] { return in_flight_ < policy_.max_in_flight; });
        ++in_flight_;
    }
    CompletionBatch batch;
    try {
        batch = call_with_retries(request, digest);
    } catch (...) {
        std::lock_guard<std::mutex> lock(mu_);
        --in_flight_;
        slot_free_.notify_one();
        throw;
    }
    {
        std::lock_guard<std::mutex> lock(mu_);
        --in_flight_;
        slot_free_.notify_one();
    }

    if (cache_) cache_->store(digest, request, batch);
    return batch;
}

}  // namespace refcheck
