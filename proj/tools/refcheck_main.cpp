#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "refcheck/direct_query.hpp"
#include "refcheck/errors.hpp"
#include "refcheck/indirect_query.hpp"
#include "refcheck/pipeline.hpp"
#include "refcheck/template_engine.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void print_report_summary(const refcheck::RunReport& report, const fs::path& run_dir) {
    std::cout << "run directory: " << run_dir.string() << "\n";
    std::cout << "generated " << report.generated << " titles (" << report.labeled
              << " labeled, " << report.unlabeled << " unlabeled)\n";
    if (report.hallucination_rate) {
        std::cout << "hallucination rate: " << *report.hallucination_rate << "\n";
    }
    for (const auto& m : report.methods) {
        std::cout << "  " << m.method << ": ";
        if (m.auc) {
            std::cout << "AUC " << *m.auc << " [" << m.auc_ci95->first << ", "
                      << m.auc_ci95->second << "]";
        } else {
            std::cout << "not evaluated";
        }
        std::cout << " (" << m.n_scored << " scored)\n";
    }
    const auto total = report.tokens.at("total");
    std::cout << "tokens: " << total.prompt_tokens << " prompt + " << total.completion_tokens
              << " completion over " << total.requests << " requests\n";
}

int score_title_command(const std::string& config_path, const std::string& title,
                        const std::string& method, const std::vector<std::string>& context,
                        int j_override, int i_override) {
    using namespace refcheck;
    const RunConfig config = RunConfig::from_file(config_path);
    config.validate();

    const TemplateSet templates = TemplateSet::load(config.template_dir);
    std::shared_ptr<CompletionBackend> backend;
    if (config.backend.type == "replay") {
        backend = ReplayBackend::from_file(config.backend.fixtures);
    } else {
        backend = std::make_shared<HttpCompletionBackend>(
            config.backend.endpoint, config.backend.api_key_env, config.policy.timeout_ms);
    }
    Gateway gateway(backend, config.policy);

    const int j = j_override > 0 ? j_override : config.j_direct;
    const int i = i_override > 0 ? i_override : config.i_indirect;

    json out{{"title", title}, {"method", method}, {"model_id", config.model_id}};
    Usage usage;
    if (method == "iq") {
        std::unique_ptr<OverlapJudge> judge;
        if (config.overlap_judge == "token") {
            judge = std::make_unique<TokenOverlapJudge>();
        } else {
            judge = std::make_unique<LmOverlapJudge>(gateway, templates.iq_overlap,
                                                     config.effective_judge_model(),
                                                     config.max_tokens_judge);
        }
        IndirectScorer scorer(gateway, templates, config.model_id, config.max_tokens_authors,
                              *judge);
        const IndirectScore score = scorer.score(title, i, &usage);
        out["i"] = score.i;
        out["score"] = score.score;
        json judgments = json::array();
        for (const auto& jd : score.judgments) {
            judgments.push_back({{"session_a", jd.session_a},
                                 {"session_b", jd.session_b},
                                 {"overlap", jd.overlap}});
        }
        out["judgments"] = std::move(judgments);
    } else {
        DirectQueryKind kind;
        if (method == "dq1") {
            kind = DirectQueryKind::dq1;
        } else if (method == "dq2") {
            kind = DirectQueryKind::dq2;
        } else if (method == "dq3") {
            kind = DirectQueryKind::dq3;
        } else {
            throw ConfigError("unknown method: " + method);
        }
        if (kind == DirectQueryKind::dq3 && context.empty()) {
            throw ConfigError("dq3 needs at least one --context title");
        }
        DirectScorer scorer(gateway, templates, config.model_id, config.max_tokens_direct);
        const DirectScore score = scorer.score(kind, title, j, context, &usage);
        out["j"] = score.j;
        out["yes_count"] = score.yes_count;
        out["score"] = score.score;
    }
    out["tokens"] = {{"prompt_tokens", usage.prompt_tokens},
                     {"completion_tokens", usage.completion_tokens},
                     {"requests", usage.requests}};
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"refcheck: detect hallucinated references via LM self-consistency checks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string run_dir_arg;
    std::string out_dir;
    std::string format = "json";
    std::string title;
    std::string method;
    std::vector<std::string> context;
    int j_override = 0;
    int i_override = 0;

    auto* run_cmd = app.add_subcommand("run", "Run the full pipeline from a config file");
    run_cmd->add_option("--config", config_path, "Run config (JSON)")->required();
    run_cmd->add_option("--out", out_dir, "Run directory (overrides config output_dir)");

    auto* resume_cmd = app.add_subcommand("resume", "Resume an interrupted run directory");
    resume_cmd->add_option("run_dir", run_dir_arg, "Run directory")->required();

    auto* export_cmd = app.add_subcommand("export", "Export report and curves from a run");
    export_cmd->add_option("run_dir", run_dir_arg, "Run directory")->required();
    export_cmd->add_option("--format", format, "json or csv-bundle")
        ->check(CLI::IsMember({"json", "csv-bundle"}));

    auto* score_cmd = app.add_subcommand("score-title", "Score a single title ad hoc");
    score_cmd->add_option("--config", config_path, "Run config (JSON)")->required();
    score_cmd->add_option("--title", title, "Reference title to score")->required();
    score_cmd->add_option("--method", method, "iq, dq1, dq2 or dq3")
        ->required()
        ->check(CLI::IsMember({"iq", "dq1", "dq2", "dq3"}));
    score_cmd->add_option("--context", context, "Comparison titles for dq3 (repeatable)");
    score_cmd->add_option("-j", j_override, "Completions per direct query");
    score_cmd->add_option("-i", i_override, "Sessions per indirect query");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            const refcheck::RunConfig config = refcheck::RunConfig::from_file(config_path);
            fs::path run_dir = out_dir.empty() ? config.output_dir : fs::path(out_dir);
            if (run_dir.empty()) {
                throw refcheck::ConfigError("no run directory: set output_dir or pass --out");
            }
            const refcheck::RunReport report = refcheck::run_pipeline(config, run_dir);
            print_report_summary(report, run_dir);
            return refcheck::kExitOk;
        }
        if (resume_cmd->parsed()) {
            const refcheck::RunReport report = refcheck::resume(run_dir_arg);
            print_report_summary(report, run_dir_arg);
            return refcheck::kExitOk;
        }
        if (export_cmd->parsed()) {
            const auto fmt = format == "json" ? refcheck::ExportFormat::json
                                              : refcheck::ExportFormat::csv_bundle;
            for (const auto& path : refcheck::export_report(run_dir_arg, fmt)) {
                std::cout << path.string() << "\n";
            }
            return refcheck::kExitOk;
        }
        if (score_cmd->parsed()) {
            return score_title_command(config_path, title, method, context, j_override,
                                       i_override);
        }
    } catch (const refcheck::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return refcheck::kExitConfig;
    } catch (const refcheck::MissingContext& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return refcheck::kExitConfig;
    } catch (const refcheck::IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return refcheck::kExitIntegrity;
    } catch (const refcheck::BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return refcheck::kExitBackend;
    } catch (const refcheck::SearchBackendUnavailable& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return refcheck::kExitBackend;
    } catch (const refcheck::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return refcheck::kExitFailure;
    }
    return refcheck::kExitFailure;
}
