#include "refcheck/labeler.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <thread>

#include "refcheck/jsonl.hpp"

namespace refcheck {

std::string build_quoted_query(const std::string& title) {
    std::string inner;
    inner.reserve(title.size());
    for (char c : title) inner += (c == '"') ? '\'' : c;
    return "\"" + inner + "\"";
}

std::shared_ptr<FixtureSearchBackend> FixtureSearchBackend::from_file(
    const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError("search fixture file not found: " + path.string());
    }
    auto backend = std::make_shared<FixtureSearchBackend>();
    for (const auto& rec : read_jsonl(path)) {
        backend->add(rec.at("query").get<std::string>(), rec.at("count").get<std::int64_t>());
    }
    return backend;
}

void FixtureSearchBackend::add(const std::string& query, std::int64_t count) {
    std::lock_guard<std::mutex> lock(mu_);
    counts_[query] = count;
}

std::int64_t FixtureSearchBackend::result_count(const std::string& query) {
    std::lock_guard<std::mutex> lock(mu_);
    ++lookups_;
    auto it = counts_.find(query);
    if (it == counts_.end()) {
        throw SearchBackendUnavailable("search fixture has no entry for query: " + query);
    }
    return it->second;
}

std::size_t FixtureSearchBackend::lookups() const {
    std::lock_guard<std::mutex> lock(mu_);
    return lookups_;
}

std::string SystemClock::now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

Labeler::Labeler(SearchBackend& backend, Clock& clock, int max_retries, int backoff_base_ms)
    : backend_(backend),
      clock_(clock),
      max_retries_(max_retries),
      backoff_base_ms_(backoff_base_ms) {}

LabelOutcome Labeler::label_reference(const std::string& title) {
    const std::string query = build_quoted_query(title);
    for (int attempt = 0;; ++attempt) {
        try {
            const std::int64_t count = backend_.result_count(query);
            SearchResultSummary summary;
            summary.query = query;
            summary.result_count_is_zero = (count == 0);
            summary.retrieved_at = clock_.now_iso8601();
            return LabelOutcome{count == 0 ? Label::H : Label::G, summary};
        } catch (const SearchBackendUnavailable&) {
            if (attempt >= max_retries_) {
                return LabelOutcome{std::nullopt, std::nullopt};  // flagged unlabeled
            }
            std::this_thread::sleep_for(
                std::chrono::milliseconds(backoff_base_ms_) * (1LL << attempt));
        }
    }
}

}  // namespace refcheck
