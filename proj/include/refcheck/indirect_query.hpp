#pragma once

#include <optional>
#include <string>
#include <vector>

#include "refcheck/gateway.hpp"
#include "refcheck/template_engine.hpp"

namespace refcheck {

struct AuthorResponse {
    std::string title;
    int session_index = 1;  // 1..i
    std::string raw_text;
    bool looks_like_author_list = false;
};

// Flags responses that are clearly not author lists (empty, overlong, or
// starting with a refusal phrase) so they can be forced to zero overlap
// without spending a judge call.
struct RefusalHeuristic {
    std::vector<std::string> patterns;  // lowercase prefixes
    std::size_t max_chars = 400;

    static RefusalHeuristic defaults();
    bool looks_like_author_list(std::string_view text) const;
};

struct OverlapJudgment {
    int session_a = 0;
    int session_b = 0;
    double overlap = 0.0;  // [0, 1]
    std::string judge_raw;
};

struct IndirectScore {
    std::string title;
    int i = 2;
    std::vector<OverlapJudgment> judgments;  // C(i,2) unordered pairs
    double score = 0.0;                      // mean overlap
};

// First number in [0, 1] found in the judge completion.
std::optional<double> parse_overlap_fraction(std::string_view text);

// Normalized surname tokens of a comma/and-separated author list.
std::vector<std::string> surname_tokens(std::string_view authors);

// Deterministic string-matching judge: Jaccard overlap of surname tokens.
double token_overlap(std::string_view a, std::string_view b);

class OverlapJudge {
public:
    virtual ~OverlapJudge() = default;
    virtual OverlapJudgment judge(const AuthorResponse& a, const AuthorResponse& b,
                                  Usage* usage) = 0;
};

// Asks the LM to compare the two answers; one completion at temperature 0.
// An unparseable judgment gets one retry, then overlap 0 with the raw
// completion preserved.
class LmOverlapJudge : public OverlapJudge {
public:
    LmOverlapJudge(Gateway& gateway, const PromptTemplate& tmpl, std::string model_id,
                   int max_tokens);
    OverlapJudgment judge(const AuthorResponse& a, const AuthorResponse& b,
                          Usage* usage) override;

private:
    Gateway& gateway_;
    const PromptTemplate& tmpl_;
    std::string model_id_;
    int max_tokens_;
};

// String-matching fallback judge; no LM calls.
class TokenOverlapJudge : public OverlapJudge {
public:
    OverlapJudgment judge(const AuthorResponse& a, const AuthorResponse& b,
                          Usage* usage) override;
};

class IndirectScorer {
public:
    IndirectScorer(Gateway& gateway, const TemplateSet& templates, std::string model_id,
                   int max_tokens_authors, OverlapJudge& judge,
                   RefusalHeuristic heuristic = RefusalHeuristic::defaults());

    // i independent author answers from one request at temperature 1.
    std::vector<AuthorResponse> interrogate(const std::string& title, int i,
                                            Usage* usage = nullptr);

    // Refusals force overlap 0 and byte-identical answers force 1.0, both
    // without consulting the judge. Symmetric: the pair is canonicalized
    // before judging, so (a,b) and (b,a) return the same overlap.
    OverlapJudgment estimate_overlap(const AuthorResponse& a, const AuthorResponse& b,
                                     Usage* usage = nullptr);

    IndirectScore score(const std::string& title, int i, Usage* usage = nullptr);

private:
    Gateway& gateway_;
    const TemplateSet& templates_;
    std::string model_id_;
    int max_tokens_authors_;
    OverlapJudge& judge_;
    RefusalHeuristic heuristic_;
};

// Arithmetic mean of the IQ score and the DQ ensemble score.
double ensemble_iq_dq(double iq, double dq);

}  // namespace refcheck
