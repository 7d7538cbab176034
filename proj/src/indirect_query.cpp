#include "refcheck/indirect_query.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>

#include "refcheck/errors.hpp"
#include "refcheck/strutil.hpp"

namespace refcheck {

RefusalHeuristic RefusalHeuristic::defaults() {
    RefusalHeuristic h;
    h.patterns = {
        "i could not find",
        "i couldn't find",
        "i cannot find",
        "i can't find",
        "i'm sorry",
        "i am sorry",
        "sorry,",
        "i cannot",
        "i can't",
        "i do not have",
        "i don't have",
        "i'm not aware",
        "i am not aware",
        "i am unable",
        "i'm unable",
        "unable to",
        "as an ai",
        "there is no",
        "there doesn't",
        "there does not",
        "no specific reference",
        "unfortunately",
        "i'm not familiar",
        "i am not familiar",
    };
    return h;
}

bool RefusalHeuristic::looks_like_author_list(std::string_view text) const {
    const std::string_view trimmed = trim_view(text);
    if (trimmed.empty()) return false;
    if (trimmed.size() > max_chars) return false;
    const std::string lower = to_lower(trimmed);
    for (const auto& pattern : patterns) {
        if (lower.rfind(pattern, 0) == 0) return false;
    }
    return true;
}

std::optional<double> parse_overlap_fraction(std::string_view text) {
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        const bool starts_number =
            std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < text.size() &&
             std::isdigit(static_cast<unsigned char>(text[i + 1])));
        if (!starts_number) continue;

        const std::string token(text.substr(i, 32));
        char* end = nullptr;
        const double value = std::strtod(token.c_str(), &end);
        const std::size_t consumed = end ? static_cast<std::size_t>(end - token.c_str()) : 0;
        if (consumed == 0) continue;
        if (value >= 0.0 && value <= 1.0) return value;
        i += consumed - 1;  // skip the rest of an out-of-range number
    }
    return std::nullopt;
}

std::vector<std::string> surname_tokens(std::string_view authors) {
    // Split author chunks on the usual separators.
    std::string normalized(authors);
    for (std::string_view sep : {" and ", " And ", " AND ", " & ", ";"}) {
        std::size_t pos = 0;
        while ((pos = normalized.find(sep, pos)) != std::string::npos) {
            normalized.replace(pos, sep.size(), ",");
        }
    }

    std::set<std::string> out;
    std::size_t start = 0;
    while (start <= normalized.size()) {
        std::size_t comma = normalized.find(',', start);
        const std::string chunk = normalized.substr(
            start, comma == std::string::npos ? std::string::npos : comma - start);
        start = comma == std::string::npos ? normalized.size() + 1 : comma + 1;

        // Last token with at least two letters is taken as the surname;
        // initials-only chunks and filler tokens ("et al.") are skipped.
        static const std::set<std::string> stopwords = {"et", "al", "jr", "sr", "dr", "prof"};
        std::string surname;
        std::string token;
        auto flush = [&] {
            if (token.size() >= 2 && !stopwords.count(token)) surname = token;
            token.clear();
        };
        for (char raw : chunk) {
            const auto c = static_cast<unsigned char>(raw);
            if (std::isalpha(c) || c >= 0x80) {  // high bytes: UTF-8 letter parts
                token += static_cast<char>(std::tolower(c));
            } else if (raw == '-' || raw == '\'') {
                token += raw;  // name-internal punctuation
            } else {
                flush();
            }
        }
        flush();
        if (!surname.empty()) out.insert(surname);
    }
    return {out.begin(), out.end()};
}

double token_overlap(std::string_view a, std::string_view b) {
    const std::vector<std::string> ta = surname_tokens(a);
    const std::vector<std::string> tb = surname_tokens(b);
    if (ta.empty() && tb.empty()) return 0.0;
    std::size_t intersection = 0;
    for (const auto& t : ta) {
        if (std::binary_search(tb.begin(), tb.end(), t)) ++intersection;
    }
    const std::size_t uni = ta.size() + tb.size() - intersection;
    return uni == 0 ? 0.0 : static_cast<double>(intersection) / static_cast<double>(uni);
}

LmOverlapJudge::LmOverlapJudge(Gateway& gateway, const PromptTemplate& tmpl,
                               std::string model_id, int max_tokens)
    : gateway_(gateway), tmpl_(tmpl), model_id_(std::move(model_id)), max_tokens_(max_tokens) {}

OverlapJudgment LmOverlapJudge::judge(const AuthorResponse& a, const AuthorResponse& b,
                                      Usage* usage) {
    // Canonical answer order keeps the judgment independent of argument order.
    const AuthorResponse& first = a.raw_text <= b.raw_text ? a : b;
    const AuthorResponse& second = a.raw_text <= b.raw_text ? b : a;

    PromptRequest request;
    request.model_id = model_id_;
    request.prompt_text =
        tmpl_.render({{"answer_a", first.raw_text}, {"answer_b", second.raw_text}});
    request.temperature = 0.0;
    request.n_samples = 1;
    request.max_tokens = max_tokens_;

    auto attempt = [&]() -> OverlapJudgment {
        const CompletionBatch batch = gateway_.complete(request);
        if (usage) usage->add(batch);
        const std::string& raw = batch.completions.front();
        const auto fraction = parse_overlap_fraction(raw);
        if (!fraction) throw JudgeUnparseable(raw);
        OverlapJudgment judgment;
        judgment.overlap = *fraction;
        judgment.judge_raw = raw;
        return judgment;
    };

    try {
        return attempt();
    } catch (const JudgeUnparseable&) {
        try {
            return attempt();
        } catch (const JudgeUnparseable& again) {
            OverlapJudgment judgment;
            judgment.overlap = 0.0;
            judgment.judge_raw = again.what();
            return judgment;
        }
    }
}

OverlapJudgment TokenOverlapJudge::judge(const AuthorResponse& a, const AuthorResponse& b,
                                         Usage*) {
    OverlapJudgment judgment;
    judgment.overlap = token_overlap(a.raw_text, b.raw_text);
    judgment.judge_raw = "token-overlap";
    return judgment;
}

IndirectScorer::IndirectScorer(Gateway& gateway, const TemplateSet& templates,
                               std::string model_id, int max_tokens_authors, OverlapJudge& judge,
                               RefusalHeuristic heuristic)
    : gateway_(gateway),
      templates_(templates),
      model_id_(std::move(model_id)),
      max_tokens_authors_(max_tokens_authors),
      judge_(judge),
      heuristic_(std::move(heuristic)) {}

std::vector<AuthorResponse> IndirectScorer::interrogate(const std::string& title, int i,
                                                        Usage* usage) {
    if (i < 2) throw ConfigError("indirect queries need i >= 2 sessions");
    PromptRequest request;
    request.model_id = model_id_;
    request.prompt_text = templates_.iq_authors.render({{"title", title}});
    request.temperature = 1.0;  // multiple independent generations
    request.n_samples = i;
    request.max_tokens = max_tokens_authors_;

    const CompletionBatch batch = gateway_.complete(request);
    if (usage) usage->add(batch);

    std::vector<AuthorResponse> responses;
    responses.reserve(batch.completions.size());
    for (std::size_t s = 0; s < batch.completions.size(); ++s) {
        AuthorResponse r;
        r.title = title;
        r.session_index = static_cast<int>(s + 1);
        r.raw_text = batch.completions[s];
        r.looks_like_author_list = heuristic_.looks_like_author_list(r.raw_text);
        responses.push_back(std::move(r));
    }
    return responses;
}

OverlapJudgment IndirectScorer::estimate_overlap(const AuthorResponse& a,
                                                 const AuthorResponse& b, Usage* usage) {
    if (a.title != b.title) {
        throw ConfigError("overlap estimation requires responses for the same title");
    }
    OverlapJudgment judgment;
    judgment.session_a = std::min(a.session_index, b.session_index);
    judgment.session_b = std::max(a.session_index, b.session_index);

    if (!a.looks_like_author_list || !b.looks_like_author_list) {
        judgment.overlap = 0.0;  // refusal or non-answer on either side
        return judgment;
    }
    if (a.raw_text == b.raw_text) {
        judgment.overlap = 1.0;  // byte-identical answers need no judge
        return judgment;
    }
    OverlapJudgment judged = judge_.judge(a, b, usage);
    judgment.overlap = judged.overlap;
    judgment.judge_raw = std::move(judged.judge_raw);
    return judgment;
}

IndirectScore IndirectScorer::score(const std::string& title, int i, Usage* usage) {
    const std::vector<AuthorResponse> responses = interrogate(title, i, usage);

    IndirectScore out;
    out.title = title;
    out.i = i;
    double sum = 0.0;
    for (std::size_t a = 0; a < responses.size(); ++a) {
        for (std::size_t b = a + 1; b < responses.size(); ++b) {
            OverlapJudgment judgment = estimate_overlap(responses[a], responses[b], usage);
            sum += judgment.overlap;
            out.judgments.push_back(std::move(judgment));
        }
    }
    out.score = out.judgments.empty() ? 0.0 : sum / static_cast<double>(out.judgments.size());
    return out;
}

double ensemble_iq_dq(double iq, double dq) {
    return (iq + dq) / 2.0;
}

}  // namespace refcheck
