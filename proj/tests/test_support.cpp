#include "test_support.hpp"

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <set>
#include <thread>

#include <json.hpp>

#include "refcheck/indirect_query.hpp"
#include "refcheck/jsonl.hpp"
#include "refcheck/rng.hpp"
#include "refcheck/strutil.hpp"

namespace refcheck::testing {

namespace fs = std::filesystem;

fs::path repo_dir() {
#ifdef REFCHECK_REPO_DIR
    return fs::path(REFCHECK_REPO_DIR);
#else
    return fs::current_path();
#endif
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("refcheck-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

// --- instrumentation ---------------------------------------------------------

InstrumentedBackend::InstrumentedBackend(std::shared_ptr<CompletionBackend> inner, int delay_ms)
    : inner_(std::move(inner)), delay_ms_(delay_ms) {}

CompletionBatch InstrumentedBackend::complete(const PromptRequest& request,
                                              const std::string& digest) {
    calls_.fetch_add(1);
    const int now = in_flight_.fetch_add(1) + 1;
    int seen = max_concurrent_.load();
    while (now > seen && !max_concurrent_.compare_exchange_weak(seen, now)) {
    }
    {
        std::lock_guard<std::mutex> lock(mu_);
        prompts_.push_back(request.prompt_text);
    }
    if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
    CompletionBatch batch;
    try {
        batch = inner_->complete(request, digest);
    } catch (...) {
        in_flight_.fetch_sub(1);
        throw;
    }
    in_flight_.fetch_sub(1);
    return batch;
}

std::vector<std::string> InstrumentedBackend::prompts() const {
    std::lock_guard<std::mutex> lock(mu_);
    return prompts_;
}

FlakyBackend::FlakyBackend(std::shared_ptr<CompletionBackend> inner, int failures)
    : inner_(std::move(inner)), remaining_failures_(failures) {}

CompletionBatch FlakyBackend::complete(const PromptRequest& request, const std::string& digest) {
    attempts_.fetch_add(1);
    if (remaining_failures_.fetch_sub(1) > 0) {
        throw BackendUnavailable("flaky backend simulated outage", digest);
    }
    return inner_->complete(request, digest);
}

EchoBackend::EchoBackend(std::string text, std::int64_t prompt_tokens,
                         std::int64_t completion_tokens)
    : text_(std::move(text)), prompt_tokens_(prompt_tokens),
      completion_tokens_(completion_tokens) {}

CompletionBatch EchoBackend::complete(const PromptRequest& request, const std::string& digest) {
    CompletionBatch batch;
    batch.request_digest = digest;
    batch.completions.assign(request.n_samples, text_);
    batch.prompt_tokens = prompt_tokens_;
    batch.completion_tokens = completion_tokens_;
    batch.provenance = Provenance::live;
    return batch;
}

// --- scripted fake LM ---------------------------------------------------------

namespace {

std::string extract_between(const std::string& text, const std::string& open,
                            const std::string& close) {
    const auto start = text.find(open);
    if (start == std::string::npos) return {};
    const auto from = start + open.size();
    const auto end = text.find(close, from);
    if (end == std::string::npos) return {};
    return text.substr(from, end - from);
}

std::string extract_line_after(const std::string& text, const std::string& marker) {
    const auto start = text.find(marker);
    if (start == std::string::npos) return {};
    const auto from = start + marker.size();
    auto end = text.find('\n', from);
    if (end == std::string::npos) end = text.size();
    return trim(text.substr(from, end - from));
}

std::int64_t approx_tokens(std::size_t bytes) {
    return static_cast<std::int64_t>(bytes / 4 + 1);
}

const std::vector<std::string> kAuthorPool = {
    "M. Albrecht", "R. Duarte",  "S. Kovacs",  "L. Mwangi",  "P. Novak",  "H. Saito",
    "T. Lindgren", "C. Ferreira", "A. Brennan", "K. Osei",    "J. Marek",  "I. Castellanos",
    "E. Thorne",   "N. Bakker",  "D. Rowan",   "G. Petrov"};

std::string planted_authors(const std::string& title, int variant) {
    const std::uint64_t h = fnv1a64("authors|" + title) + static_cast<std::uint64_t>(variant);
    const std::size_t n = 2 + h % 2;
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += ", ";
        out += kAuthorPool[(h / (i + 3)) % kAuthorPool.size()];
    }
    return out;
}

std::string fmt_fraction(double v) {
    const double r = std::round(v * 100.0) / 100.0;
    char buf[32];
    const int len = std::snprintf(buf, sizeof(buf), "%.2f", r);
    std::string s(buf, static_cast<std::size_t>(len));
    while (s.size() > 3 && s.back() == '0') s.pop_back();
    return s;
}

}  // namespace

bool ScriptedBackend::planted_grounded(const std::string& title) {
    return fnv1a64("grounded|" + title) % 100 < 55;
}

std::vector<std::string> ScriptedBackend::planted_titles(const std::string& area,
                                                         const std::string& topic, int k) {
    std::vector<std::string> titles = {
        "A Survey of " + topic,
        topic + ": Principles and Practice",
        "Foundations of " + topic + " in " + area,
        "Advances in " + topic + ": Methods and Applications",
        topic + " Systems: Design and Evaluation",
    };
    for (int i = 5; i < k; ++i) {
        titles.push_back(topic + " Perspectives, Volume " + std::to_string(i - 3));
    }
    titles.resize(std::min<std::size_t>(titles.size(), static_cast<std::size_t>(k)));
    return titles;
}

CompletionBatch ScriptedBackend::complete(const PromptRequest& request,
                                          const std::string& digest) {
    const std::string& prompt = request.prompt_text;
    std::vector<std::string> completions;

    if (prompt.find("about the computer science topic \"") != std::string::npos) {
        // Title generation.
        const std::string rendered =
            extract_between(prompt, "about the computer science topic \"", "\"");
        const auto sep = rendered.find(": ");
        const std::string area = sep == std::string::npos ? rendered : rendered.substr(0, sep);
        const std::string topic = sep == std::string::npos ? rendered : rendered.substr(sep + 2);
        int k = 5;
        if (prompt.rfind("Suggest ", 0) == 0) k = std::atoi(prompt.c_str() + 8);
        std::string list;
        const auto titles = planted_titles(area, topic, k);
        for (std::size_t i = 0; i < titles.size(); ++i) {
            list += std::to_string(i + 1) + ". " + titles[i] + "\n";
        }
        completions.assign(request.n_samples, list);
    } else if (prompt.find("Answer A: ") != std::string::npos) {
        // Overlap judgment.
        const std::string a = extract_line_after(prompt, "Answer A: ");
        const std::string b = extract_line_after(prompt, "Answer B: ");
        const std::string v = fmt_fraction(token_overlap(a, b));
        const std::uint64_t h = fnv1a64("judge|" + a + "|" + b);
        switch (h % 3) {
            case 0: completions.assign(request.n_samples, v); break;
            case 1:
                completions.assign(request.n_samples, "The estimated overlap is " + v + ".");
                break;
            default: completions.assign(request.n_samples, "Overlap: " + v); break;
        }
    } else if (prompt.find("Who are the authors") != std::string::npos) {
        // Interrogation.
        const std::string title = extract_between(prompt, "reference titled \"", "\"");
        const bool grounded = planted_grounded(title);
        const std::uint64_t h = fnv1a64("iq|" + title);
        for (int s = 0; s < request.n_samples; ++s) {
            if (grounded) {
                // Consistent answers; occasionally a reordered variant that
                // still names the same people.
                completions.push_back(planted_authors(title, 0));
            } else {
                switch (h % 4) {
                    case 0:
                        completions.push_back("I could not find a specific reference titled \"" +
                                              title + "\"; it may not exist.");
                        break;
                    case 1: completions.push_back(planted_authors(title, s)); break;
                    case 2: completions.push_back(planted_authors(title, 7)); break;
                    default:
                        if (s == 0) {
                            completions.push_back("I'm sorry, I cannot identify the authors of \"" +
                                                  title + "\".");
                        } else {
                            completions.push_back(planted_authors(title, 9));
                        }
                        break;
                }
            }
        }
    } else if (prompt.find("Answer yes or no") != std::string::npos) {
        // Direct query.
        std::string title = extract_line_after(prompt, "Title: ");
        if (title.empty()) title = extract_between(prompt, "Consider the title \"", "\"");
        std::string kind = "dq1";
        if (prompt.find("AI language model was asked") != std::string::npos) kind = "dq2";
        if (prompt.find("Consider the title \"") != std::string::npos) kind = "dq3";

        const std::uint64_t h = fnv1a64(kind + "|" + title);
        const int tenths = planted_grounded(title)
                               ? 5 + static_cast<int>(h % 6)
                               : static_cast<int>(h % 7);
        const int j = request.n_samples;
        const int yes = std::clamp((tenths * j + 5) / 10, 0, j);
        static const char* yes_texts[] = {"Yes.", "Yes, this reference exists.",
                                          "Yes, it is a real publication."};
        static const char* no_texts[] = {"No.", "No, I believe this reference is fabricated.",
                                         "I do not believe this reference exists."};
        for (int s = 0; s < j; ++s) {
            const std::size_t variant = (h + static_cast<std::uint64_t>(s)) % 3;
            completions.push_back(s < yes ? yes_texts[variant] : no_texts[variant]);
        }
    } else {
        completions.assign(request.n_samples, "I'm not sure how to answer that.");
    }

    CompletionBatch batch;
    batch.request_digest = digest;
    batch.prompt_tokens = approx_tokens(prompt.size());
    std::size_t out_bytes = 0;
    for (const auto& c : completions) out_bytes += c.size();
    batch.completion_tokens = approx_tokens(out_bytes);
    batch.completions = std::move(completions);
    batch.provenance = Provenance::live;
    return batch;
}

std::int64_t ScriptedSearchBackend::result_count(const std::string& query) {
    std::string title = query;
    if (title.size() >= 2 && title.front() == '"' && title.back() == '"') {
        title = title.substr(1, title.size() - 2);
    }
    if (!ScriptedBackend::planted_grounded(title)) return 0;
    return 3 + static_cast<std::int64_t>(fnv1a64("count|" + title) % 97);
}

// --- recording ---------------------------------------------------------------

RecordingBackend::RecordingBackend(std::shared_ptr<CompletionBackend> inner)
    : inner_(std::move(inner)) {}

CompletionBatch RecordingBackend::complete(const PromptRequest& request,
                                           const std::string& digest) {
    CompletionBatch batch = inner_->complete(request, digest);
    std::lock_guard<std::mutex> lock(mu_);
    recorded_[digest] = batch;
    usage_.add(batch);
    return batch;
}

void RecordingBackend::write_fixture(const fs::path& path) const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<nlohmann::json> lines;
    for (const auto& [digest, batch] : recorded_) {
        lines.push_back({{"digest", digest},
                         {"completions", batch.completions},
                         {"prompt_tokens", batch.prompt_tokens},
                         {"completion_tokens", batch.completion_tokens}});
    }
    write_jsonl(path, lines);
}

Usage RecordingBackend::total_usage() const {
    std::lock_guard<std::mutex> lock(mu_);
    return usage_;
}

RecordingSearchBackend::RecordingSearchBackend(std::shared_ptr<SearchBackend> inner)
    : inner_(std::move(inner)) {}

std::int64_t RecordingSearchBackend::result_count(const std::string& query) {
    const std::int64_t count = inner_->result_count(query);
    std::lock_guard<std::mutex> lock(mu_);
    recorded_[query] = count;
    ++calls_;
    return count;
}

void RecordingSearchBackend::write_fixture(const fs::path& path) const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<nlohmann::json> lines;
    for (const auto& [query, count] : recorded_) {
        lines.push_back({{"query", query}, {"count", count}});
    }
    write_jsonl(path, lines);
}

std::size_t RecordingSearchBackend::calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return calls_;
}

// --- tree comparison ----------------------------------------------------------

std::string compare_trees(const fs::path& a, const fs::path& b) {
    auto collect = [](const fs::path& root) {
        std::set<std::string> files;
        for (const auto& entry : fs::recursive_directory_iterator(root)) {
            if (entry.is_regular_file()) {
                files.insert(fs::relative(entry.path(), root).generic_string());
            }
        }
        return files;
    };
    const std::set<std::string> fa = collect(a);
    const std::set<std::string> fb = collect(b);
    for (const auto& f : fa) {
        if (!fb.count(f)) return "only in " + a.string() + ": " + f;
    }
    for (const auto& f : fb) {
        if (!fa.count(f)) return "only in " + b.string() + ": " + f;
    }
    for (const auto& f : fa) {
        if (read_file(a / f) != read_file(b / f)) return "content differs: " + f;
    }
    return {};
}

// --- synthetic datasets ---------------------------------------------------------

std::vector<metrics::ScoredLabel> gaussian_dataset(std::size_t n_g, std::size_t n_h,
                                                   double separation, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<metrics::ScoredLabel> data;
    data.reserve(n_g + n_h);
    for (std::size_t i = 0; i < n_g; ++i) {
        const double raw = rng.gaussian(separation, 1.0);
        data.push_back({1.0 / (1.0 + std::exp(-raw)), Label::G});
    }
    for (std::size_t i = 0; i < n_h; ++i) {
        const double raw = rng.gaussian(0.0, 1.0);
        data.push_back({1.0 / (1.0 + std::exp(-raw)), Label::H});
    }
    return data;
}

double analytic_gaussian_auc(double separation) {
    return 0.5 * std::erfc(-separation / (std::sqrt(2.0) * std::sqrt(2.0)));
}

}  // namespace refcheck::testing
