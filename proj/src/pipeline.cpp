#include "refcheck/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <iostream>
#include <set>

#include "refcheck/corpus.hpp"
#include "refcheck/digest.hpp"
#include "refcheck/direct_query.hpp"
#include "refcheck/indirect_query.hpp"
#include "refcheck/jsonl.hpp"
#include "refcheck/metrics.hpp"
#include "refcheck/parallel.hpp"
#include "refcheck/rng.hpp"
#include "refcheck/template_engine.hpp"

namespace refcheck {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kStages = {"corpus", "labels", "dq1", "dq2",
                                          "dq3",    "iq",     "scores", "metrics"};

const std::vector<std::string> kMethods = {"DQ1", "DQ2", "DQ3", "DQ", "IQ", "IQ+DQ"};

std::string method_slug(const std::string& method) {
    std::string slug;
    for (char c : method) {
        if (c == '+') {
            slug += '_';
        } else {
            slug += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return slug;
}

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void expect_keys(const json& j, const std::set<std::string>& allowed,
                 const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) {
            throw ConfigError("unknown config key \"" + key + "\" in " + where);
        }
    }
}

// --- manifest ---------------------------------------------------------------

json load_manifest_or_null(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    if (!fs::exists(path)) return json();
    json m = json::parse(read_file(path), nullptr, false);
    if (m.is_discarded() || !m.is_object() || !m.contains("config_digest") ||
        !m.contains("stages") || !m["stages"].is_object()) {
        throw ManifestCorrupt("manifest.json is not a valid run manifest: " + path.string());
    }
    return m;
}

void save_manifest(const fs::path& dir, const json& manifest) {
    atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
}

bool stage_complete(const json& manifest, const std::string& stage) {
    if (manifest.is_null()) return false;
    const auto& stages = manifest.at("stages");
    return stages.contains(stage) && stages.at(stage).value("complete", false);
}

void verify_stage_outputs(const fs::path& dir, const json& manifest, const std::string& stage) {
    const auto& entry = manifest.at("stages").at(stage);
    if (!entry.contains("outputs")) return;
    for (const auto& [file, digest] : entry.at("outputs").items()) {
        const fs::path path = dir / file;
        if (!fs::exists(path)) {
            throw DigestMismatch("stage \"" + stage + "\" output missing: " + file);
        }
        if (sha256_file_hex(path) != digest.get<std::string>()) {
            throw DigestMismatch("stage \"" + stage + "\" output modified: " + file);
        }
    }
}

StageTokens stage_tokens_from_manifest(const json& manifest, const std::string& stage) {
    StageTokens t;
    const auto& stages = manifest.at("stages");
    if (stages.contains(stage) && stages.at(stage).contains("tokens")) {
        const auto& tok = stages.at(stage).at("tokens");
        t.prompt_tokens = tok.value("prompt_tokens", std::int64_t{0});
        t.completion_tokens = tok.value("completion_tokens", std::int64_t{0});
        t.requests = tok.value("requests", std::int64_t{0});
    }
    return t;
}

// --- runtime ----------------------------------------------------------------

struct StageResult {
    std::map<std::string, std::string> outputs;  // relative file -> sha256
    Usage usage;
    json notes = json::object();
};

struct Runtime {
    RunConfig config;
    fs::path dir;
    PipelineHooks hooks;

    std::shared_ptr<Clock> clock;
    std::shared_ptr<CompletionBackend> backend;
    std::shared_ptr<SearchBackend> search;
    std::unique_ptr<Gateway> gateway;
    std::optional<TemplateSet> templates;

    Clock& get_clock() {
        if (!clock) {
            if (hooks.clock) {
                clock = hooks.clock;
            } else if (config.deterministic) {
                clock = std::make_shared<FixedClock>();
            } else {
                clock = std::make_shared<SystemClock>();
            }
        }
        return *clock;
    }

    Gateway& get_gateway() {
        if (!gateway) {
            if (hooks.completion_backend) {
                backend = hooks.completion_backend;
            } else if (config.backend.type == "replay") {
                backend = ReplayBackend::from_file(config.backend.fixtures);
            } else if (config.backend.type == "http") {
                backend = std::make_shared<HttpCompletionBackend>(
                    config.backend.endpoint, config.backend.api_key_env,
                    config.policy.timeout_ms);
            } else {
                throw ConfigError("unknown backend.type: " + config.backend.type);
            }
            gateway = std::make_unique<Gateway>(backend, config.policy, dir / "cache");
        }
        return *gateway;
    }

    SearchBackend& get_search() {
        if (!search) {
            if (hooks.search_backend) {
                search = hooks.search_backend;
            } else if (config.search.type == "fixture") {
                search = FixtureSearchBackend::from_file(config.search.fixtures);
            } else if (config.search.type == "http") {
                search = std::make_shared<HttpSearchBackend>(
                    config.search.endpoint, config.search.count_pointer,
                    config.search.api_key_env, config.search.api_key_header,
                    config.policy.timeout_ms);
            } else {
                throw ConfigError("unknown search.type: " + config.search.type);
            }
        }
        return *search;
    }

    const TemplateSet& get_templates() {
        if (!templates) templates = TemplateSet::load(config.template_dir);
        return *templates;
    }

    RefusalHeuristic heuristic() const {
        if (config.refusal_patterns.empty()) return RefusalHeuristic::defaults();
        RefusalHeuristic h;
        h.patterns = config.refusal_patterns;
        return h;
    }
};

// --- artifact io ------------------------------------------------------------

std::vector<CandidateReference> load_corpus(const fs::path& dir) {
    std::vector<CandidateReference> refs;
    for (const auto& j : read_jsonl(dir / "corpus.jsonl")) refs.push_back(candidate_from_json(j));
    return refs;
}

struct LabelsFile {
    std::map<int, Label> labels;      // only successfully labeled ids
    std::size_t unlabeled = 0;
};

LabelsFile load_labels(const fs::path& dir) {
    LabelsFile out;
    for (const auto& j : read_jsonl(dir / "labels.jsonl")) {
        if (j.at("label").is_null()) {
            ++out.unlabeled;
        } else {
            out.labels.emplace(j.at("id").get<int>(),
                               label_from_string(j.at("label").get<std::string>()));
        }
    }
    return out;
}

std::map<int, double> load_score_file(const fs::path& dir, const std::string& file) {
    std::map<int, double> out;
    for (const auto& j : read_jsonl(dir / file)) {
        if (!j.at("score").is_null()) out.emplace(j.at("id").get<int>(), j.at("score").get<double>());
    }
    return out;
}

// --- stages -----------------------------------------------------------------

StageResult run_corpus_stage(Runtime& rt) {
    const RunConfig& cfg = rt.config;
    const std::vector<Topic> taxonomy = load_taxonomy(cfg.taxonomy_path);
    const std::vector<Topic> topics = sample_topics(taxonomy, cfg.n_topics, cfg.seed);

    TitleGenerator generator(rt.get_gateway(), rt.get_templates().generate_titles, cfg.model_id,
                             cfg.max_tokens_titles);

    std::vector<std::vector<CandidateReference>> per_topic(topics.size());
    std::vector<Usage> usages(topics.size());
    std::vector<char> empty_generation(topics.size(), 0);

    bounded_for(topics.size(), static_cast<unsigned>(cfg.policy.max_in_flight),
                [&](std::size_t i) {
                    try {
                        per_topic[i] = generator.generate(topics[i], cfg.titles_per_topic,
                                                          &usages[i]);
                    } catch (const EmptyGeneration& e) {
                        empty_generation[i] = 1;  // recorded, not fatal
                        std::cerr << "warning: " << e.what() << "\n";
                    }
                });

    StageResult res;
    std::vector<json> lines;
    int id = 0;
    std::size_t empties = 0;
    for (std::size_t i = 0; i < topics.size(); ++i) {
        if (empty_generation[i]) ++empties;
        for (auto& ref : per_topic[i]) {
            ref.id = id++;
            lines.push_back(to_json(ref));
        }
        res.usage += usages[i];
    }
    write_jsonl(rt.dir / "corpus.jsonl", lines);
    res.outputs["corpus.jsonl"] = sha256_file_hex(rt.dir / "corpus.jsonl");
    if (empties) res.notes["empty_generations"] = empties;
    return res;
}

StageResult run_labels_stage(Runtime& rt) {
    const std::vector<CandidateReference> corpus = load_corpus(rt.dir);

    // One in-flight search per distinct quoted query.
    std::map<std::string, std::size_t> first_record_by_query;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        first_record_by_query.emplace(build_quoted_query(corpus[i].title), i);
    }
    std::vector<std::string> queries;
    std::vector<std::size_t> first_record;
    for (const auto& [query, idx] : first_record_by_query) {
        queries.push_back(query);
        first_record.push_back(idx);
    }

    Labeler labeler(rt.get_search(), rt.get_clock(), rt.config.policy.max_retries,
                    rt.config.policy.backoff_base_ms);

    std::vector<LabelOutcome> outcomes(queries.size());
    bounded_for(queries.size(), static_cast<unsigned>(rt.config.policy.max_in_flight),
                [&](std::size_t i) {
                    outcomes[i] = labeler.label_reference(corpus[first_record[i]].title);
                });

    std::map<std::string, const LabelOutcome*> outcome_by_query;
    for (std::size_t i = 0; i < queries.size(); ++i) outcome_by_query[queries[i]] = &outcomes[i];

    StageResult res;
    std::size_t unlabeled = 0;
    std::vector<json> lines;
    for (const auto& ref : corpus) {
        const LabelOutcome& outcome = *outcome_by_query.at(build_quoted_query(ref.title));
        json line{{"id", ref.id}};
        if (outcome.label) {
            line["label"] = std::string(1, to_char(*outcome.label));
            line["summary"] = {{"query", outcome.summary->query},
                               {"result_count_is_zero", outcome.summary->result_count_is_zero},
                               {"retrieved_at", outcome.summary->retrieved_at}};
        } else {
            ++unlabeled;
            line["label"] = nullptr;
            line["summary"] = nullptr;
        }
        lines.push_back(std::move(line));
    }
    write_jsonl(rt.dir / "labels.jsonl", lines);
    res.outputs["labels.jsonl"] = sha256_file_hex(rt.dir / "labels.jsonl");
    res.notes["queries"] = queries.size();
    if (unlabeled) res.notes["unlabeled"] = unlabeled;
    return res;
}

StageResult run_direct_stage(Runtime& rt, DirectQueryKind kind) {
    const RunConfig& cfg = rt.config;
    const std::vector<CandidateReference> corpus = load_corpus(rt.dir);

    // DQ3 comparison titles come from labeled records only, so failed
    // lookups cannot shift the seeded sampling on a resumed run.
    std::vector<std::size_t> labeled_pool;
    if (kind == DirectQueryKind::dq3) {
        const LabelsFile labels = load_labels(rt.dir);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (labels.labels.count(corpus[i].id)) labeled_pool.push_back(i);
        }
    }

    DirectScorer scorer(rt.get_gateway(), rt.get_templates(), cfg.model_id,
                        cfg.max_tokens_direct);

    std::vector<std::optional<DirectScore>> results(corpus.size());
    std::vector<Usage> usages(corpus.size());
    std::vector<std::vector<std::string>> contexts(corpus.size());
    std::size_t missing_context = 0;

    if (kind == DirectQueryKind::dq3) {
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            std::vector<std::size_t> pool;
            for (std::size_t p : labeled_pool) {
                if (corpus[p].title != corpus[i].title) pool.push_back(p);
            }
            const std::size_t want =
                std::min<std::size_t>(cfg.dq3_context_titles, pool.size());
            Rng rng(substream_seed(cfg.seed, "dq3-context",
                                   static_cast<std::uint64_t>(corpus[i].id)));
            for (std::size_t t = 0; t < want; ++t) {
                const std::size_t j = t + rng.below(pool.size() - t);
                std::swap(pool[t], pool[j]);
                contexts[i].push_back(corpus[pool[t]].title);
            }
            if (contexts[i].empty()) ++missing_context;
        }
    }

    std::atomic<std::size_t> failures{0};
    bounded_for(corpus.size(), static_cast<unsigned>(cfg.policy.max_in_flight),
                [&](std::size_t i) {
                    if (kind == DirectQueryKind::dq3 && contexts[i].empty()) return;
                    try {
                        results[i] = scorer.score(kind, corpus[i].title, cfg.j_direct,
                                                  contexts[i], &usages[i]);
                    } catch (const BackendError& e) {
                        failures.fetch_add(1);
                        std::cerr << "warning: " << method_name(kind) << " unscored for id "
                                  << corpus[i].id << ": " << e.what() << "\n";
                    }
                });

    StageResult res;
    std::vector<json> lines;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        json line{{"id", corpus[i].id}, {"j", cfg.j_direct}};
        if (results[i]) {
            line["score"] = results[i]->score;
            line["yes_count"] = results[i]->yes_count;
        } else {
            line["score"] = nullptr;
            line["yes_count"] = nullptr;
        }
        lines.push_back(std::move(line));
        res.usage += usages[i];
    }
    const std::string file = std::string("scores_") + method_slug(method_name(kind)) + ".jsonl";
    write_jsonl(rt.dir / file, lines);
    res.outputs[file] = sha256_file_hex(rt.dir / file);
    if (failures > 0) res.notes["backend_failures"] = failures.load();
    if (missing_context) res.notes["missing_context"] = missing_context;
    return res;
}

StageResult run_iq_stage(Runtime& rt) {
    const RunConfig& cfg = rt.config;
    const std::vector<CandidateReference> corpus = load_corpus(rt.dir);

    std::unique_ptr<OverlapJudge> judge;
    if (cfg.overlap_judge == "token") {
        judge = std::make_unique<TokenOverlapJudge>();
    } else {
        judge = std::make_unique<LmOverlapJudge>(rt.get_gateway(), rt.get_templates().iq_overlap,
                                                 cfg.effective_judge_model(),
                                                 cfg.max_tokens_judge);
    }
    IndirectScorer scorer(rt.get_gateway(), rt.get_templates(), cfg.model_id,
                          cfg.max_tokens_authors, *judge, rt.heuristic());

    std::vector<std::optional<IndirectScore>> results(corpus.size());
    std::vector<Usage> usages(corpus.size());
    std::atomic<std::size_t> failures{0};

    bounded_for(corpus.size(), static_cast<unsigned>(cfg.policy.max_in_flight),
                [&](std::size_t i) {
                    try {
                        results[i] = scorer.score(corpus[i].title, cfg.i_indirect, &usages[i]);
                    } catch (const BackendError& e) {
                        failures.fetch_add(1);
                        std::cerr << "warning: IQ unscored for id " << corpus[i].id << ": "
                                  << e.what() << "\n";
                    }
                });

    StageResult res;
    std::vector<json> lines;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        json line{{"id", corpus[i].id}, {"i", cfg.i_indirect}};
        if (results[i]) {
            line["score"] = results[i]->score;
            json judgments = json::array();
            for (const auto& jd : results[i]->judgments) {
                judgments.push_back({{"session_a", jd.session_a},
                                     {"session_b", jd.session_b},
                                     {"overlap", jd.overlap},
                                     {"judge_raw", jd.judge_raw}});
            }
            line["judgments"] = std::move(judgments);
        } else {
            line["score"] = nullptr;
            line["judgments"] = nullptr;
        }
        lines.push_back(std::move(line));
        res.usage += usages[i];
    }
    write_jsonl(rt.dir / "scores_iq.jsonl", lines);
    res.outputs["scores_iq.jsonl"] = sha256_file_hex(rt.dir / "scores_iq.jsonl");
    if (failures > 0) res.notes["backend_failures"] = failures.load();
    return res;
}

StageResult run_scores_stage(Runtime& rt) {
    const std::vector<CandidateReference> corpus = load_corpus(rt.dir);
    const LabelsFile labels = load_labels(rt.dir);
    const std::map<int, double> dq1 = load_score_file(rt.dir, "scores_dq1.jsonl");
    const std::map<int, double> dq2 = load_score_file(rt.dir, "scores_dq2.jsonl");
    const std::map<int, double> dq3 = load_score_file(rt.dir, "scores_dq3.jsonl");
    const std::map<int, double> iq = load_score_file(rt.dir, "scores_iq.jsonl");

    auto get = [](const std::map<int, double>& m, int id) -> std::optional<double> {
        auto it = m.find(id);
        if (it == m.end()) return std::nullopt;
        return it->second;
    };

    std::vector<json> lines;
    for (const auto& ref : corpus) {
        json scores = json::object();
        const auto s1 = get(dq1, ref.id);
        const auto s2 = get(dq2, ref.id);
        const auto s3 = get(dq3, ref.id);
        const auto si = get(iq, ref.id);
        scores["DQ1"] = s1 ? json(*s1) : json(nullptr);
        scores["DQ2"] = s2 ? json(*s2) : json(nullptr);
        scores["DQ3"] = s3 ? json(*s3) : json(nullptr);
        std::optional<double> dq;
        if (s1 && s2 && s3) dq = ensemble_dq(*s1, *s2, *s3);
        scores["DQ"] = dq ? json(*dq) : json(nullptr);
        scores["IQ"] = si ? json(*si) : json(nullptr);
        scores["IQ+DQ"] = (si && dq) ? json(ensemble_iq_dq(*si, *dq)) : json(nullptr);

        json line = to_json(ref);
        auto it = labels.labels.find(ref.id);
        line["label"] =
            it == labels.labels.end() ? json(nullptr) : json(std::string(1, to_char(it->second)));
        line["scores"] = std::move(scores);
        lines.push_back(std::move(line));
    }
    write_jsonl(rt.dir / "scores.jsonl", lines);

    StageResult res;
    res.outputs["scores.jsonl"] = sha256_file_hex(rt.dir / "scores.jsonl");
    return res;
}

std::string roc_csv(const metrics::RocCurve& curve) {
    std::string out = "fpr,tpr,band_lo,band_hi\n";
    if (curve.band) {
        const auto& band = *curve.band;
        for (std::size_t i = 0; i < band.grid.size(); ++i) {
            out += fmt_double(band.grid[i]) + "," +
                   fmt_double(interpolate_roc(curve, band.grid[i])) + "," +
                   fmt_double(band.lo[i]) + "," + fmt_double(band.hi[i]) + "\n";
        }
    } else {
        for (const auto& p : curve.points) {
            out += fmt_double(p.fpr) + "," + fmt_double(p.tpr) + ",,\n";
        }
    }
    return out;
}

double band_value_at(const metrics::Band& band, double x, bool hi) {
    const auto& grid = band.grid;
    const auto& v = hi ? band.hi : band.lo;
    if (x <= grid.front()) return v.front();
    if (x >= grid.back()) return v.back();
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (x > grid[i]) continue;
        const double span = grid[i] - grid[i - 1];
        if (span == 0.0) return v[i];
        const double t = (x - grid[i - 1]) / span;
        return v[i - 1] + t * (v[i] - v[i - 1]);
    }
    return v.back();
}

std::string fdr_csv(const metrics::FdrCurve& curve) {
    std::string out = "preserved,fdr,extrapolated,band_lo,band_hi\n";
    for (const auto& p : curve.points) {
        out += fmt_double(p.preserved_fraction) + "," + fmt_double(p.fdr) + "," +
               (p.extrapolated ? "1" : "0");
        if (curve.band) {
            out += "," + fmt_double(band_value_at(*curve.band, p.preserved_fraction, false)) +
                   "," + fmt_double(band_value_at(*curve.band, p.preserved_fraction, true));
        } else {
            out += ",,";
        }
        out += "\n";
    }
    return out;
}

std::map<int, Label> load_rater_file(const fs::path& path) {
    std::map<int, Label> out;
    for (const auto& j : read_jsonl(path)) {
        out.emplace(j.at("id").get<int>(), label_from_string(j.at("label").get<std::string>()));
    }
    return out;
}

StageResult run_metrics_stage(Runtime& rt) {
    const RunConfig& cfg = rt.config;
    const auto records = read_jsonl(rt.dir / "scores.jsonl");

    StageResult res;
    json summary;
    summary["format_version"] = 1;

    std::size_t generated = records.size();
    std::size_t labeled = 0;
    std::set<std::string> distinct_titles;
    std::vector<Label> all_labels;
    for (const auto& r : records) {
        distinct_titles.insert(r.at("title").get<std::string>());
        if (!r.at("label").is_null()) {
            ++labeled;
            all_labels.push_back(label_from_string(r.at("label").get<std::string>()));
        }
    }
    // Duplicates across topics stay distinct records; the count is reported
    // here only.
    summary["counts"] = {{"generated", generated},
                         {"labeled", labeled},
                         {"unlabeled", generated - labeled},
                         {"distinct_titles", distinct_titles.size()}};
    summary["hallucination_rate"] =
        all_labels.empty() ? json(nullptr) : json(metrics::hallucination_rate(all_labels));

    json methods = json::object();
    for (std::size_t mi = 0; mi < kMethods.size(); ++mi) {
        const std::string& method = kMethods[mi];
        std::vector<metrics::ScoredLabel> data;
        std::size_t n_scored = 0;
        for (const auto& r : records) {
            const auto& s = r.at("scores").at(method);
            if (s.is_null()) continue;
            ++n_scored;
            if (r.at("label").is_null()) continue;
            data.push_back({s.get<double>(),
                            label_from_string(r.at("label").get<std::string>())});
        }
        json entry;
        entry["n_scored"] = n_scored;
        entry["n_unscored"] = generated - n_scored;
        entry["n_evaluated"] = data.size();

        std::size_t n_g = 0, n_h = 0;
        for (const auto& d : data) (d.label == Label::G ? n_g : n_h) += 1;
        if (n_g == 0 || n_h == 0) {
            entry["auc"] = nullptr;
            entry["skipped"] = "needs both classes";
            methods[method] = std::move(entry);
            continue;
        }

        metrics::RocCurve roc = metrics::roc_curve(data);
        metrics::BootstrapOptions boot;
        boot.replicates = cfg.metrics.bootstrap_replicates;
        boot.stratified = cfg.metrics.stratified_bootstrap;
        boot.grid_points = cfg.metrics.grid_points;
        boot.seed = substream_seed(cfg.seed, "bootstrap-roc", mi);
        roc.band = metrics::bootstrap_band(data, metrics::roc_interpolation_statistic(), boot);

        metrics::FdrOptions fopts;
        fopts.seed = substream_seed(cfg.seed, "fdr-extrapolation", mi);
        fopts.extrapolation_draws = cfg.metrics.fdr_extrapolation_draws;
        metrics::FdrCurve fdr = metrics::fdr_curve(data, fopts);
        metrics::BootstrapOptions fboot = boot;
        fboot.seed = substream_seed(cfg.seed, "bootstrap-fdr", mi);
        fdr.band = metrics::bootstrap_band(
            data, metrics::fdr_interpolation_statistic(cfg.metrics.fdr_extrapolation_draws),
            fboot);

        const std::string slug = method_slug(method);
        const std::string roc_file = "metrics/roc_" + slug + ".csv";
        const std::string fdr_file = "metrics/fdr_" + slug + ".csv";
        atomic_write(rt.dir / roc_file, roc_csv(roc));
        atomic_write(rt.dir / fdr_file, fdr_csv(fdr));
        res.outputs[roc_file] = sha256_file_hex(rt.dir / roc_file);
        res.outputs[fdr_file] = sha256_file_hex(rt.dir / fdr_file);

        entry["auc"] = roc.auc;
        entry["auc_ci95"] = {roc.auc_ci95.first, roc.auc_ci95.second};
        methods[method] = std::move(entry);
    }
    summary["methods"] = std::move(methods);

    // Inter-rater reliability against supplied label files and the search
    // labels themselves.
    std::map<std::string, std::map<int, Label>> raters;
    for (const auto& [name, path] : cfg.rater_labels) raters[name] = load_rater_file(path);
    {
        std::map<int, Label> search_labels;
        for (const auto& r : records) {
            if (!r.at("label").is_null()) {
                search_labels.emplace(r.at("id").get<int>(),
                                      label_from_string(r.at("label").get<std::string>()));
            }
        }
        if (!raters.empty()) raters["search"] = std::move(search_labels);
    }
    json kappa_table = json::array();
    for (auto a = raters.begin(); a != raters.end(); ++a) {
        for (auto b = std::next(a); b != raters.end(); ++b) {
            std::vector<Label> va, vb;
            for (const auto& [id, label] : a->second) {
                auto it = b->second.find(id);
                if (it == b->second.end()) continue;
                va.push_back(label);
                vb.push_back(it->second);
            }
            if (va.empty()) continue;
            const metrics::KappaResult k = metrics::cohens_kappa(va, vb);
            kappa_table.push_back({{"rater_a", a->first},
                                   {"rater_b", b->first},
                                   {"n", va.size()},
                                   {"po", k.po},
                                   {"pe", k.pe},
                                   {"kappa", k.kappa}});
        }
    }
    summary["kappa"] = std::move(kappa_table);

    atomic_write(rt.dir / "metrics/summary.json", summary.dump(2) + "\n");
    res.outputs["metrics/summary.json"] = sha256_file_hex(rt.dir / "metrics/summary.json");
    return res;
}

StageResult run_stage(Runtime& rt, const std::string& stage) {
    if (stage == "corpus") return run_corpus_stage(rt);
    if (stage == "labels") return run_labels_stage(rt);
    if (stage == "dq1") return run_direct_stage(rt, DirectQueryKind::dq1);
    if (stage == "dq2") return run_direct_stage(rt, DirectQueryKind::dq2);
    if (stage == "dq3") return run_direct_stage(rt, DirectQueryKind::dq3);
    if (stage == "iq") return run_iq_stage(rt);
    if (stage == "scores") return run_scores_stage(rt);
    if (stage == "metrics") return run_metrics_stage(rt);
    throw Error("unknown stage: " + stage);
}

RunReport build_report(const fs::path& dir, const json& manifest, double wall_clock) {
    RunReport report;
    report.config_digest = manifest.at("config_digest").get<std::string>();
    report.seed = manifest.value("seed", std::uint64_t{0});
    report.wall_clock_seconds = wall_clock;

    const json summary = json::parse(read_file(dir / "metrics/summary.json"));
    const auto& counts = summary.at("counts");
    report.generated = counts.at("generated").get<std::size_t>();
    report.labeled = counts.at("labeled").get<std::size_t>();
    report.unlabeled = counts.at("unlabeled").get<std::size_t>();
    if (!summary.at("hallucination_rate").is_null()) {
        report.hallucination_rate = summary.at("hallucination_rate").get<double>();
    }
    for (const auto& method : kMethods) {
        const auto& entry = summary.at("methods").at(method);
        MethodReport m;
        m.method = method;
        m.n_scored = entry.at("n_scored").get<std::size_t>();
        m.n_unscored = entry.at("n_unscored").get<std::size_t>();
        if (!entry.at("auc").is_null()) {
            m.auc = entry.at("auc").get<double>();
            m.auc_ci95 = std::make_pair(entry.at("auc_ci95")[0].get<double>(),
                                        entry.at("auc_ci95")[1].get<double>());
        }
        report.methods.push_back(std::move(m));
    }
    for (const auto& k : summary.at("kappa")) {
        report.kappa.push_back({k.at("rater_a").get<std::string>(),
                                k.at("rater_b").get<std::string>(),
                                k.at("n").get<std::size_t>(), k.at("po").get<double>(),
                                k.at("pe").get<double>(), k.at("kappa").get<double>()});
    }

    StageTokens total;
    for (const auto& stage : kStages) {
        const StageTokens t = stage_tokens_from_manifest(manifest, stage);
        report.tokens[stage] = t;
        total.prompt_tokens += t.prompt_tokens;
        total.completion_tokens += t.completion_tokens;
        total.requests += t.requests;
    }
    report.tokens["total"] = total;
    return report;
}

RunReport execute(const RunConfig& config, const fs::path& run_dir, const PipelineHooks& hooks,
                  bool resuming) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();

    fs::create_directories(run_dir);
    const fs::path config_path = run_dir / "config.json";
    if (fs::exists(config_path)) {
        if (read_file(config_path) != config.raw_bytes) {
            throw ConfigError("run directory was created from a different config: " +
                              run_dir.string());
        }
    } else {
        if (resuming) throw ManifestCorrupt("run directory has no config.json");
        atomic_write(config_path, config.raw_bytes);
    }
    const std::string config_digest = sha256_hex(config.raw_bytes);

    json manifest = load_manifest_or_null(run_dir);
    if (manifest.is_null()) {
        if (resuming) throw ManifestCorrupt("run directory has no manifest.json");
        manifest = json{{"format_version", 1},
                        {"config_digest", config_digest},
                        {"seed", config.seed},
                        {"stages", json::object()}};
        save_manifest(run_dir, manifest);
    } else if (manifest.at("config_digest").get<std::string>() != config_digest) {
        throw ManifestCorrupt("manifest config digest does not match config.json");
    }

    Runtime rt;
    rt.config = config;
    rt.dir = run_dir;
    rt.hooks = hooks;

    for (const auto& stage : kStages) {
        if (stage_complete(manifest, stage)) {
            verify_stage_outputs(run_dir, manifest, stage);
            continue;
        }
        StageResult result = run_stage(rt, stage);
        json entry;
        entry["complete"] = true;
        entry["outputs"] = result.outputs;
        entry["tokens"] = {{"prompt_tokens", result.usage.prompt_tokens},
                           {"completion_tokens", result.usage.completion_tokens},
                           {"requests", result.usage.requests}};
        if (!result.notes.empty()) entry["notes"] = result.notes;
        manifest["stages"][stage] = std::move(entry);
        save_manifest(run_dir, manifest);
    }

    double wall = 0.0;
    if (!config.deterministic) {
        wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    RunReport report = build_report(run_dir, manifest, wall);
    report.model_id = config.model_id;
    atomic_write(run_dir / "report.json", report.to_json().dump(2) + "\n");
    return report;
}

}  // namespace

const std::vector<std::string>& method_names() { return kMethods; }

// --- config -----------------------------------------------------------------

RunConfig RunConfig::from_file(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    const std::string bytes = read_file(path);
    json j = json::parse(bytes, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
    RunConfig cfg = from_json(j);
    cfg.raw_bytes = bytes;
    return cfg;
}

RunConfig RunConfig::from_json(const json& j) {
    expect_keys(j, {"version", "model_id", "judge_model_id", "taxonomy_path", "n_topics",
                    "titles_per_topic", "j_direct", "i_indirect", "dq3_context_titles", "seed",
                    "backend", "search", "policy", "template_dir", "output_dir", "max_tokens",
                    "overlap_judge", "deterministic", "metrics", "rater_labels",
                    "refusal_patterns"},
                "config");
    RunConfig cfg;
    cfg.version = j.value("version", 1);
    if (cfg.version != 1) throw ConfigError("unsupported config version");
    cfg.model_id = j.value("model_id", "");
    cfg.judge_model_id = j.value("judge_model_id", "");
    cfg.taxonomy_path = j.value("taxonomy_path", "");
    cfg.n_topics = j.value("n_topics", 200);
    cfg.titles_per_topic = j.value("titles_per_topic", 5);
    cfg.j_direct = j.value("j_direct", 10);
    cfg.i_indirect = j.value("i_indirect", 3);
    cfg.dq3_context_titles = j.value("dq3_context_titles", 4);
    cfg.seed = j.value("seed", std::uint64_t{0});

    if (j.contains("backend")) {
        const auto& b = j.at("backend");
        expect_keys(b, {"type", "fixtures", "endpoint", "api_key_env"}, "backend");
        cfg.backend.type = b.value("type", "replay");
        cfg.backend.fixtures = b.value("fixtures", "");
        cfg.backend.endpoint = b.value("endpoint", "");
        cfg.backend.api_key_env = b.value("api_key_env", cfg.backend.api_key_env);
    }
    if (j.contains("search")) {
        const auto& s = j.at("search");
        expect_keys(s, {"type", "fixtures", "endpoint", "count_pointer", "api_key_env",
                        "api_key_header"},
                    "search");
        cfg.search.type = s.value("type", "fixture");
        cfg.search.fixtures = s.value("fixtures", "");
        cfg.search.endpoint = s.value("endpoint", "");
        cfg.search.count_pointer = s.value("count_pointer", cfg.search.count_pointer);
        cfg.search.api_key_env = s.value("api_key_env", cfg.search.api_key_env);
        cfg.search.api_key_header = s.value("api_key_header", cfg.search.api_key_header);
    }
    if (j.contains("policy")) {
        const auto& p = j.at("policy");
        expect_keys(p, {"max_in_flight", "max_retries", "backoff_base_ms", "timeout_ms"},
                    "policy");
        cfg.policy.max_in_flight = p.value("max_in_flight", cfg.policy.max_in_flight);
        cfg.policy.max_retries = p.value("max_retries", cfg.policy.max_retries);
        cfg.policy.backoff_base_ms = p.value("backoff_base_ms", cfg.policy.backoff_base_ms);
        cfg.policy.timeout_ms = p.value("timeout_ms", cfg.policy.timeout_ms);
    }
    cfg.template_dir = j.value("template_dir", "templates");
    cfg.output_dir = j.value("output_dir", "");
    if (j.contains("max_tokens")) {
        const auto& m = j.at("max_tokens");
        expect_keys(m, {"titles", "direct", "authors", "judge"}, "max_tokens");
        cfg.max_tokens_titles = m.value("titles", cfg.max_tokens_titles);
        cfg.max_tokens_direct = m.value("direct", cfg.max_tokens_direct);
        cfg.max_tokens_authors = m.value("authors", cfg.max_tokens_authors);
        cfg.max_tokens_judge = m.value("judge", cfg.max_tokens_judge);
    }
    cfg.overlap_judge = j.value("overlap_judge", "lm");
    cfg.deterministic = j.value(
        "deterministic", cfg.backend.type == "replay" && cfg.search.type == "fixture");
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        expect_keys(m, {"bootstrap_replicates", "stratified_bootstrap", "grid_points",
                        "fdr_extrapolation_draws"},
                    "metrics");
        cfg.metrics.bootstrap_replicates =
            m.value("bootstrap_replicates", cfg.metrics.bootstrap_replicates);
        cfg.metrics.stratified_bootstrap =
            m.value("stratified_bootstrap", cfg.metrics.stratified_bootstrap);
        cfg.metrics.grid_points = m.value("grid_points", cfg.metrics.grid_points);
        cfg.metrics.fdr_extrapolation_draws =
            m.value("fdr_extrapolation_draws", cfg.metrics.fdr_extrapolation_draws);
    }
    if (j.contains("rater_labels")) {
        for (const auto& [name, path] : j.at("rater_labels").items()) {
            cfg.rater_labels[name] = path.get<std::string>();
        }
    }
    if (j.contains("refusal_patterns")) {
        cfg.refusal_patterns = j.at("refusal_patterns").get<std::vector<std::string>>();
    }
    cfg.raw_bytes = j.dump(2) + "\n";
    return cfg;
}

void RunConfig::validate() const {
    if (model_id.empty()) throw ConfigError("model_id is required");
    if (taxonomy_path.empty()) throw ConfigError("taxonomy_path is required");
    if (n_topics < 1) throw ConfigError("n_topics must be >= 1");
    if (titles_per_topic < 1) throw ConfigError("titles_per_topic must be >= 1");
    if (j_direct < 1) throw ConfigError("j_direct must be >= 1");
    if (i_indirect < 2) throw ConfigError("i_indirect must be >= 2");
    if (dq3_context_titles < 1) throw ConfigError("dq3_context_titles must be >= 1");
    if (metrics.bootstrap_replicates < 2) {
        throw ConfigError("metrics.bootstrap_replicates must be >= 2");
    }
    if (metrics.grid_points < 2) throw ConfigError("metrics.grid_points must be >= 2");
    if (metrics.fdr_extrapolation_draws < 1) {
        throw ConfigError("metrics.fdr_extrapolation_draws must be >= 1");
    }
    if (overlap_judge != "lm" && overlap_judge != "token") {
        throw ConfigError("overlap_judge must be \"lm\" or \"token\"");
    }
    if (backend.type == "replay" && backend.fixtures.empty()) {
        throw ConfigError("replay backend needs a fixtures path");
    }
    if (backend.type == "http" && backend.endpoint.empty()) {
        throw ConfigError("http backend needs an endpoint");
    }
    if (search.type == "fixture" && search.fixtures.empty()) {
        throw ConfigError("fixture search needs a fixtures path");
    }
    if (search.type == "http" && search.endpoint.empty()) {
        throw ConfigError("http search needs an endpoint");
    }
    policy.validate();
}

// --- report -----------------------------------------------------------------

json RunReport::to_json() const {
    json j;
    j["format_version"] = format_version;
    j["config_digest"] = config_digest;
    j["model_id"] = model_id;
    j["seed"] = seed;
    j["counts"] = {{"generated", generated}, {"labeled", labeled}, {"unlabeled", unlabeled}};
    j["hallucination_rate"] =
        hallucination_rate ? json(*hallucination_rate) : json(nullptr);
    json methods_json = json::object();
    for (const auto& m : methods) {
        json e{{"n_scored", m.n_scored}, {"n_unscored", m.n_unscored}};
        e["auc"] = m.auc ? json(*m.auc) : json(nullptr);
        e["auc_ci95"] = m.auc_ci95 ? json::array({m.auc_ci95->first, m.auc_ci95->second})
                                   : json(nullptr);
        methods_json[m.method] = std::move(e);
    }
    j["methods"] = std::move(methods_json);
    json kappa_json = json::array();
    for (const auto& k : kappa) {
        kappa_json.push_back({{"rater_a", k.rater_a},
                              {"rater_b", k.rater_b},
                              {"n", k.n},
                              {"po", k.po},
                              {"pe", k.pe},
                              {"kappa", k.kappa}});
    }
    j["kappa"] = std::move(kappa_json);
    json tokens_json = json::object();
    for (const auto& [stage, t] : tokens) {
        tokens_json[stage] = {{"prompt_tokens", t.prompt_tokens},
                              {"completion_tokens", t.completion_tokens},
                              {"requests", t.requests}};
    }
    j["tokens"] = std::move(tokens_json);
    j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
}

// --- entry points -------------------------------------------------------------

RunReport run_pipeline(const RunConfig& config, const fs::path& run_dir,
                       const PipelineHooks& hooks) {
    return execute(config, run_dir, hooks, /*resuming=*/false);
}

RunReport resume(const fs::path& run_dir, const PipelineHooks& hooks) {
    const fs::path config_path = run_dir / "config.json";
    if (!fs::exists(config_path)) {
        throw ManifestCorrupt("run directory has no config.json: " + run_dir.string());
    }
    const RunConfig config = RunConfig::from_file(config_path);
    return execute(config, run_dir, hooks, /*resuming=*/true);
}

std::vector<fs::path> export_report(const fs::path& run_dir, ExportFormat format) {
    const json manifest = load_manifest_or_null(run_dir);
    if (manifest.is_null()) throw ManifestCorrupt("run directory has no manifest.json");
    if (!stage_complete(manifest, "metrics") || !fs::exists(run_dir / "report.json")) {
        throw RunIncomplete("run is not complete through metrics: " + run_dir.string());
    }

    const json report = json::parse(read_file(run_dir / "report.json"));
    std::vector<fs::path> written;

    if (format == ExportFormat::json) {
        json out;
        out["format_version"] = 1;
        out["report"] = report;
        json curves = json::object();
        for (const auto& method : kMethods) {
            const std::string slug = method_slug(method);
            const fs::path roc_path = run_dir / ("metrics/roc_" + slug + ".csv");
            const fs::path fdr_path = run_dir / ("metrics/fdr_" + slug + ".csv");
            if (!fs::exists(roc_path)) continue;
            curves[method] = {{"roc_csv", read_file(roc_path)},
                              {"fdr_csv", read_file(fdr_path)}};
        }
        out["curves"] = std::move(curves);
        const fs::path path = run_dir / "export/report.json";
        atomic_write(path, out.dump(2) + "\n");
        written.push_back(path);
        return written;
    }

    // csv-bundle: summary.csv plus one file per method per curve type.
    std::string summary_csv = "method,auc,ci_lo,ci_hi,n_scored,n_unscored\n";
    for (const auto& method : kMethods) {
        const auto& entry = report.at("methods").at(method);
        summary_csv += method + ",";
        if (entry.at("auc").is_null()) {
            summary_csv += ",,";
        } else {
            summary_csv += fmt_double(entry.at("auc").get<double>()) + "," +
                           fmt_double(entry.at("auc_ci95")[0].get<double>()) + "," +
                           fmt_double(entry.at("auc_ci95")[1].get<double>());
        }
        summary_csv += "," + std::to_string(entry.at("n_scored").get<std::size_t>()) + "," +
                       std::to_string(entry.at("n_unscored").get<std::size_t>()) + "\n";
    }
    const fs::path bundle = run_dir / "export/csv";
    atomic_write(bundle / "summary.csv", summary_csv);
    written.push_back(bundle / "summary.csv");

    std::string kappa_csv = "rater_a,rater_b,n,po,pe,kappa\n";
    for (const auto& k : report.at("kappa")) {
        kappa_csv += k.at("rater_a").get<std::string>() + "," +
                     k.at("rater_b").get<std::string>() + "," +
                     std::to_string(k.at("n").get<std::size_t>()) + "," +
                     fmt_double(k.at("po").get<double>()) + "," +
                     fmt_double(k.at("pe").get<double>()) + "," +
                     fmt_double(k.at("kappa").get<double>()) + "\n";
    }
    atomic_write(bundle / "kappa.csv", kappa_csv);
    written.push_back(bundle / "kappa.csv");

    json files = json::array();
    files.push_back("summary.csv");
    files.push_back("kappa.csv");
    for (const auto& method : kMethods) {
        const std::string slug = method_slug(method);
        for (const std::string kind : {"roc", "fdr"}) {
            const fs::path src = run_dir / ("metrics/" + kind + "_" + slug + ".csv");
            if (!fs::exists(src)) continue;
            const fs::path dst = bundle / (kind + "_" + slug + ".csv");
            atomic_write(dst, read_file(src));
            written.push_back(dst);
            files.push_back(kind + "_" + slug + ".csv");
        }
    }
    json bundle_manifest{{"format_version", 1}, {"files", std::move(files)}};
    atomic_write(bundle / "manifest.json", bundle_manifest.dump(2) + "\n");
    written.push_back(bundle / "manifest.json");
    return written;
}

}  // namespace refcheck
