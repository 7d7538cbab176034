#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "refcheck/gateway.hpp"
#include "refcheck/labeler.hpp"

namespace refcheck {

struct BackendConfig {
    std::string type = "replay";  // "replay" | "http"
    std::filesystem::path fixtures;
    std::string endpoint;
    std::string api_key_env = "REFCHECK_API_KEY";
};

struct SearchConfig {
    std::string type = "fixture";  // "fixture" | "http"
    std::filesystem::path fixtures;
    std::string endpoint;  // contains {query}
    std::string count_pointer = "/webPages/totalEstimatedMatches";
    std::string api_key_env = "REFCHECK_SEARCH_API_KEY";
    std::string api_key_header = "Ocp-Apim-Subscription-Key";
};

struct MetricsConfig {
    int bootstrap_replicates = 100;
    bool stratified_bootstrap = false;
    int grid_points = 101;
    int fdr_extrapolation_draws = 20;
};

// Defaults reproduce the studied protocol: 200 topics x 5 titles, j=10
// direct samples, i=3 indirect sessions.
struct RunConfig {
    int version = 1;
    std::string model_id;
    std::string judge_model_id;  // empty -> model_id
    std::filesystem::path taxonomy_path;
    int n_topics = 200;
    int titles_per_topic = 5;
    int j_direct = 10;
    int i_indirect = 3;
    int dq3_context_titles = 4;
    std::uint64_t seed = 0;
    BackendConfig backend;
    SearchConfig search;
    BackendPolicy policy;
    std::filesystem::path template_dir = "templates";
    std::filesystem::path output_dir;
    int max_tokens_titles = 400;
    int max_tokens_direct = 32;
    int max_tokens_authors = 256;
    int max_tokens_judge = 16;
    std::string overlap_judge = "lm";  // "lm" | "token"
    bool deterministic = false;
    MetricsConfig metrics;
    std::map<std::string, std::filesystem::path> rater_labels;  // rater name -> label file
    std::vector<std::string> refusal_patterns;                  // empty -> defaults

    std::string raw_bytes;  // original file content; hashed and copied verbatim

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_json(const nlohmann::json& j);
    void validate() const;
    std::string effective_judge_model() const {
        return judge_model_id.empty() ? model_id : judge_model_id;
    }
};

struct StageTokens {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t requests = 0;
};

struct MethodReport {
    std::string method;
    std::size_t n_scored = 0;
    std::size_t n_unscored = 0;
    std::optional<double> auc;
    std::optional<std::pair<double, double>> auc_ci95;
};

struct KappaEntry {
    std::string rater_a;
    std::string rater_b;
    std::size_t n = 0;
    double po = 0.0;
    double pe = 0.0;
    double kappa = 0.0;
};

struct RunReport {
    int format_version = 1;
    std::string config_digest;
    std::string model_id;
    std::uint64_t seed = 0;
    std::size_t generated = 0;
    std::size_t labeled = 0;
    std::size_t unlabeled = 0;  // generated == labeled + unlabeled
    std::optional<double> hallucination_rate;
    std::vector<MethodReport> methods;
    std::vector<KappaEntry> kappa;
    std::map<std::string, StageTokens> tokens;  // per stage plus "total"
    double wall_clock_seconds = 0.0;

    nlohmann::json to_json() const;
};

// Test seams: any of these overrides the backend built from the config.
struct PipelineHooks {
    std::shared_ptr<CompletionBackend> completion_backend;
    std::shared_ptr<SearchBackend> search_backend;
    std::shared_ptr<Clock> clock;
};

// The method keys recorded in scores.jsonl, in report order.
const std::vector<std::string>& method_names();

// Executes generate -> label -> DQ1-3 -> IQ -> ensembles -> metrics into
// run_dir, writing every stage artifact before the next stage starts.
// Re-running over an intact run directory verifies and skips completed
// stages, so repeated invocations reproduce the directory byte for byte.
RunReport run_pipeline(const RunConfig& config, const std::filesystem::path& run_dir,
                       const PipelineHooks& hooks = {});

// Resumes from the manifest in run_dir; completed stages are digest-verified
// and skipped. Tampered outputs raise DigestMismatch.
RunReport resume(const std::filesystem::path& run_dir, const PipelineHooks& hooks = {});

enum class ExportFormat { json, csv_bundle };

// Requires the run to be complete through the metrics stage.
std::vector<std::filesystem::path> export_report(const std::filesystem::path& run_dir,
                                                 ExportFormat format);

}  // namespace refcheck
