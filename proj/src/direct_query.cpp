#include "refcheck/direct_query.hpp"

#include "refcheck/corpus.hpp"
#include "refcheck/errors.hpp"
#include "refcheck/strutil.hpp"

namespace refcheck {

const char* method_name(DirectQueryKind kind) {
    switch (kind) {
        case DirectQueryKind::dq1: return "DQ1";
        case DirectQueryKind::dq2: return "DQ2";
        case DirectQueryKind::dq3: return "DQ3";
    }
    return "DQ1";
}

std::string render_direct_prompt(const TemplateSet& templates, DirectQueryKind kind,
                                 const std::string& title,
                                 std::span<const std::string> context_titles) {
    if (title.empty()) throw ConfigError("title is empty");
    switch (kind) {
        case DirectQueryKind::dq1:
            return templates.dq1.render({{"title", title}});
        case DirectQueryKind::dq2:
            return templates.dq2.render({{"title", title}});
        case DirectQueryKind::dq3: {
            if (context_titles.empty()) {
                throw MissingContext("DQ3 requires at least one comparison title");
            }
            std::vector<std::string> listed(context_titles.begin(), context_titles.end());
            listed.push_back(title);
            return templates.dq3.render(
                {{"title", title}, {"context_titles", render_numbered_list(listed)}});
        }
    }
    throw ConfigError("unknown direct query kind");
}

YesNo classify_completion(std::string_view text) {
    return contains_word_ci(text, "yes") ? YesNo::yes : YesNo::no;
}

DirectScorer::DirectScorer(Gateway& gateway, const TemplateSet& templates, std::string model_id,
                           int max_tokens)
    : gateway_(gateway), templates_(templates), model_id_(std::move(model_id)),
      max_tokens_(max_tokens) {}

DirectScore DirectScorer::score(DirectQueryKind kind, const std::string& title, int j,
                                std::span<const std::string> context_titles, Usage* usage) {
    if (j < 1) throw ConfigError("j must be >= 1");

    PromptRequest request;
    request.model_id = model_id_;
    request.prompt_text = render_direct_prompt(templates_, kind, title, context_titles);
    request.temperature = j > 1 ? 1.0 : 0.0;
    request.n_samples = j;
    request.max_tokens = max_tokens_;

    const CompletionBatch batch = gateway_.complete(request);
    if (usage) usage->add(batch);

    int yes = 0;
    for (const auto& completion : batch.completions) {
        if (classify_completion(completion) == YesNo::yes) ++yes;
    }

    DirectScore out;
    out.title = title;
    out.kind = kind;
    out.j = j;
    out.yes_count = yes;
    out.score = static_cast<double>(yes) / static_cast<double>(j);
    return out;
}

double ensemble_dq(double s1, double s2, double s3) {
    return (s1 + s2 + s3) / 3.0;
}

}  // namespace refcheck
