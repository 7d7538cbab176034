// HTTP adapters for live completion and search backends. Everything in the
// test suite runs against the offline replay/fixture backends; these adapters
// exist for real runs and are exercised manually.

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "refcheck/gateway.hpp"
#include "refcheck/labeler.hpp"
#include "refcheck/strutil.hpp"

namespace refcheck {

namespace {

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // /path...
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint must start with http:// or https://: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string env_or_empty(const std::string& name) {
    if (name.empty()) return {};
    const char* v = std::getenv(name.c_str());
    return v ? std::string(v) : std::string();
}

bool retryable_status(int status) {
    return status == 408 || status == 429 || status >= 500;
}

}  // namespace

HttpCompletionBackend::HttpCompletionBackend(std::string endpoint, std::string api_key_env,
                                             int timeout_ms)
    : endpoint_(std::move(endpoint)), api_key_env_(std::move(api_key_env)),
      timeout_ms_(timeout_ms) {}

CompletionBatch HttpCompletionBackend::complete(const PromptRequest& request,
                                                const std::string& digest) {
    const SplitUrl url = split_url(endpoint_);
    httplib::Client client(url.base);
    client.set_connection_timeout(0, timeout_ms_ * 1000LL);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);

    nlohmann::json body{
        {"model", request.model_id}, {"prompt", request.prompt_text},
        {"temperature", request.temperature}, {"n", request.n_samples},
        {"max_tokens", request.max_tokens},
    };
    if (request.seed_hint) body["seed"] = *request.seed_hint;

    httplib::Headers headers;
    const std::string key = env_or_empty(api_key_env_);
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) {
        if (res.error() == httplib::Error::ConnectionTimeout ||
            res.error() == httplib::Error::Read) {
            throw Timeout("completion request timed out", digest);
        }
        throw BackendUnavailable("completion endpoint unreachable", digest);
    }
    if (res->status != 200) {
        if (retryable_status(res->status)) {
            throw BackendUnavailable("completion endpoint returned status " +
                                         std::to_string(res->status),
                                     digest);
        }
        throw MalformedResponse("completion endpoint returned status " +
                                    std::to_string(res->status),
                                digest);
    }

    nlohmann::json payload = nlohmann::json::parse(res->body, nullptr, false);
    if (payload.is_discarded()) {
        throw MalformedResponse("completion payload is not valid JSON", digest);
    }
    CompletionBatch batch;
    batch.provenance = Provenance::live;
    try {
        for (const auto& choice : payload.at("choices")) {
            if (choice.contains("text")) {
                batch.completions.push_back(choice.at("text").get<std::string>());
            } else {
                batch.completions.push_back(
                    choice.at("message").at("content").get<std::string>());
            }
        }
        if (payload.contains("usage")) {
            batch.prompt_tokens = payload["usage"].value("prompt_tokens", std::int64_t{0});
            batch.completion_tokens =
                payload["usage"].value("completion_tokens", std::int64_t{0});
        }
    } catch (const nlohmann::json::exception& e) {
        throw MalformedResponse(std::string("completion payload missing fields: ") + e.what(),
                                digest);
    }
    return batch;
}

HttpSearchBackend::HttpSearchBackend(std::string endpoint, std::string count_pointer,
                                     std::string api_key_env, std::string api_key_header,
                                     int timeout_ms)
    : endpoint_(std::move(endpoint)),
      count_pointer_(std::move(count_pointer)),
      api_key_env_(std::move(api_key_env)),
      api_key_header_(std::move(api_key_header)),
      timeout_ms_(timeout_ms) {}

std::int64_t HttpSearchBackend::result_count(const std::string& query) {
    std::string full = endpoint_;
    const std::string marker = "{query}";
    const auto pos = full.find(marker);
    if (pos == std::string::npos) {
        throw ConfigError("search endpoint must contain a {query} placeholder");
    }
    full.replace(pos, marker.size(), url_encode(query));

    const SplitUrl url = split_url(full);
    httplib::Client client(url.base);
    client.set_connection_timeout(0, timeout_ms_ * 1000LL);
    client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);

    httplib::Headers headers;
    const std::string key = env_or_empty(api_key_env_);
    if (!key.empty()) headers.emplace(api_key_header_, key);

    auto res = client.Get(url.path, headers);
    if (!res || res->status != 200) {
        throw SearchBackendUnavailable("search endpoint unavailable");
    }
    nlohmann::json payload = nlohmann::json::parse(res->body, nullptr, false);
    if (payload.is_discarded()) {
        throw SearchBackendUnavailable("search payload is not valid JSON");
    }
    try {
        const auto ptr = nlohmann::json::json_pointer(count_pointer_);
        if (!payload.contains(ptr)) return 0;  // no match section at all: zero results
        return payload.at(ptr).get<std::int64_t>();
    } catch (const nlohmann::json::exception&) {
        throw SearchBackendUnavailable("search payload missing count field " + count_pointer_);
    }
}

}  // namespace refcheck
