#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "refcheck/gateway.hpp"
#include "refcheck/label.hpp"
#include "refcheck/template_engine.hpp"

namespace refcheck {

struct Topic {
    std::string taxonomy_id;
    std::string area;
    std::string topic;

    std::string rendered() const { return area + ": " + topic; }
    bool operator==(const Topic&) const = default;
};

// Taxonomy file: UTF-8, one topic per line, "taxonomy_id<TAB>area<TAB>topic".
std::vector<Topic> load_taxonomy(const std::filesystem::path& path);

// Uniform sample of n distinct topics, deterministic in (taxonomy order, n, seed).
std::vector<Topic> sample_topics(std::span<const Topic> taxonomy, int n, std::uint64_t seed);

// Extracts titles from numbered/bulleted list output: strips list markers,
// enclosing quote pairs, markdown bold, and trailing periods; keeps interior
// punctuation and casing; drops empty results and preamble prose.
std::vector<std::string> parse_title_list(const std::string& raw);

std::string render_numbered_list(std::span<const std::string> items);

struct CandidateReference {
    int id = 0;  // canonical per-run index (topic order, then position)
    std::string title;
    Topic topic;
    std::string generator_model;
    int position_in_batch = 1;  // 1..k
    std::optional<Label> label;
    std::map<std::string, double> scores;  // method name -> score in [0,1]
};

nlohmann::json to_json(const CandidateReference& ref);
CandidateReference candidate_from_json(const nlohmann::json& j);

// Renders the generation template for one topic and parses the completion.
// One completion is taken per topic, so the request runs at temperature 0.
class TitleGenerator {
public:
    TitleGenerator(Gateway& gateway, const PromptTemplate& tmpl, std::string model_id,
                   int max_tokens);

    std::string render_prompt(const Topic& topic, int k) const;
    std::vector<CandidateReference> generate(const Topic& topic, int k, Usage* usage = nullptr);

private:
    Gateway& gateway_;
    const PromptTemplate& tmpl_;
    std::string model_id_;
    int max_tokens_;
};

}  // namespace refcheck
