#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "refcheck/label.hpp"

namespace refcheck {

// What we persist about a search: only whether the result set was empty,
// never the results themselves.
struct SearchResultSummary {
    std::string query;  // quoted form of the title
    bool result_count_is_zero = false;
    std::string retrieved_at;  // ISO-8601 UTC
};

// Title wrapped in double quotes; interior double quotes become apostrophes.
std::string build_quoted_query(const std::string& title);

class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual std::int64_t result_count(const std::string& query) = 0;
    virtual std::string name() const = 0;
};

// Offline backend: JSON-lines of {"query": string, "count": integer}.
class FixtureSearchBackend : public SearchBackend {
public:
    FixtureSearchBackend() = default;
    static std::shared_ptr<FixtureSearchBackend> from_file(const std::filesystem::path& path);

    void add(const std::string& query, std::int64_t count);
    std::int64_t result_count(const std::string& query) override;
    std::string name() const override { return "fixture"; }

    std::size_t lookups() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::int64_t> counts_;
    std::size_t lookups_ = 0;
};

// Generic HTTP search adapter: GET <endpoint with {query} substituted>, count
// extracted from the response body at a JSON pointer (Bing-style APIs fit).
class HttpSearchBackend : public SearchBackend {
public:
    HttpSearchBackend(std::string endpoint, std::string count_pointer, std::string api_key_env,
                      std::string api_key_header, int timeout_ms);

    std::int64_t result_count(const std::string& query) override;
    std::string name() const override { return "http"; }

private:
    std::string endpoint_;
    std::string count_pointer_;
    std::string api_key_env_;
    std::string api_key_header_;
    int timeout_ms_;
};

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::string now_iso8601() = 0;
};

class SystemClock : public Clock {
public:
    std::string now_iso8601() override;
};

// Deterministic runs pin every timestamp to one value.
class FixedClock : public Clock {
public:
    explicit FixedClock(std::string value = "1970-01-01T00:00:00Z") : value_(std::move(value)) {}
    std::string now_iso8601() override { return value_; }

private:
    std::string value_;
};

struct LabelOutcome {
    std::optional<Label> label;  // empty when the backend stayed unavailable
    std::optional<SearchResultSummary> summary;
};

// Quoted exact-match labeling: H iff the search returns zero results.
class Labeler {
public:
    Labeler(SearchBackend& backend, Clock& clock, int max_retries = 2,
            int backoff_base_ms = 250);

    // Never throws for backend outages; those come back unlabeled.
    LabelOutcome label_reference(const std::string& title);

private:
    SearchBackend& backend_;
    Clock& clock_;
    int max_retries_;
    int backoff_base_ms_;
};

}  // namespace refcheck
