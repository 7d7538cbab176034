#pragma once

#include <span>
#include <string>
#include <vector>

#include "refcheck/gateway.hpp"
#include "refcheck/template_engine.hpp"

namespace refcheck {

// The three existence-question framings: DQ1 asks outright, DQ2 adds the
// context that an LM produced the title, DQ3 additionally shows comparison
// titles.
enum class DirectQueryKind { dq1, dq2, dq3 };

const char* method_name(DirectQueryKind kind);  // "DQ1" / "DQ2" / "DQ3"

// For DQ3, {context_titles} expands to a numbered list of the comparison
// titles with the probe title appended as the last entry.
std::string render_direct_prompt(const TemplateSet& templates, DirectQueryKind kind,
                                 const std::string& title,
                                 std::span<const std::string> context_titles);

enum class YesNo { yes, no };

// yes iff the text contains "yes" as a case-insensitive whole word; empty or
// otherwise invalid answers are no.
YesNo classify_completion(std::string_view text);

struct DirectScore {
    std::string title;
    DirectQueryKind kind = DirectQueryKind::dq1;
    int j = 1;
    int yes_count = 0;
    double score = 0.0;  // yes_count / j
};

class DirectScorer {
public:
    DirectScorer(Gateway& gateway, const TemplateSet& templates, std::string model_id,
                 int max_tokens);

    // One request with n_samples = j; temperature 1 when j > 1, else 0.
    // Partial batches are rejected by the gateway, so a returned score always
    // reflects exactly j completions.
    DirectScore score(DirectQueryKind kind, const std::string& title, int j,
                      std::span<const std::string> context_titles = {}, Usage* usage = nullptr);

private:
    Gateway& gateway_;
    const TemplateSet& templates_;
    std::string model_id_;
    int max_tokens_;
};

// Arithmetic mean of the three direct-query scores.
double ensemble_dq(double s1, double s2, double s3);

}  // namespace refcheck
