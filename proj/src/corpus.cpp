#include "refcheck/corpus.hpp"

#include <fstream>

#include "refcheck/errors.hpp"
#include "refcheck/jsonl.hpp"
#include "refcheck/rng.hpp"
#include "refcheck/strutil.hpp"

namespace refcheck {

std::vector<Topic> load_taxonomy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open taxonomy file: " + path.string());
    std::vector<Topic> topics;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim_view(line).empty()) continue;
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected taxonomy_id<TAB>area<TAB>topic");
        }
        Topic t;
        t.taxonomy_id = trim(line.substr(0, tab1));
        t.area = trim(line.substr(tab1 + 1, tab2 - tab1 - 1));
        t.topic = trim(line.substr(tab2 + 1));
        if (t.area.empty() || t.topic.empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": area and topic must be non-empty");
        }
        topics.push_back(std::move(t));
    }
    return topics;
}

std::vector<Topic> sample_topics(std::span<const Topic> taxonomy, int n, std::uint64_t seed) {
    if (n < 1 || static_cast<std::size_t>(n) > taxonomy.size()) {
        throw NOutOfRange("sample size " + std::to_string(n) + " out of range [1, " +
                          std::to_string(taxonomy.size()) + "]");
    }
    std::vector<std::size_t> idx(taxonomy.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    // Partial Fisher-Yates: the first n slots are a uniform sample without
    // replacement.
    Rng rng(substream_seed(seed, "topics"));
    for (int i = 0; i < n; ++i) {
        const std::size_t j = i + rng.below(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    std::vector<Topic> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) out.push_back(taxonomy[idx[i]]);
    return out;
}

namespace {

// Returns the item text when the line is a numbered or bulleted list entry.
std::optional<std::string_view> strip_list_marker(std::string_view line) {
    for (std::string_view bullet : {"- ", "* ", "• ", "– "}) {
        if (line.substr(0, bullet.size()) == bullet) return line.substr(bullet.size());
    }
    std::string_view rest = line;
    bool parenthesized = false;
    if (!rest.empty() && rest.front() == '(') {
        parenthesized = true;
        rest.remove_prefix(1);
    }
    std::size_t digits = 0;
    while (digits < rest.size() && digits < 3 && std::isdigit(static_cast<unsigned char>(rest[digits]))) {
        ++digits;
    }
    if (digits == 0) return std::nullopt;
    rest.remove_prefix(digits);
    if (rest.empty()) return std::nullopt;
    if (parenthesized) {
        if (rest.front() != ')') return std::nullopt;
        rest.remove_prefix(1);
    } else if (rest.front() == '.' || rest.front() == ')') {
        rest.remove_prefix(1);
    } else {
        return std::nullopt;
    }
    if (rest.empty() || !is_space(rest.front())) return std::nullopt;
    return trim_view(rest);
}

bool strip_enclosing_pair(std::string& s, std::string_view open, std::string_view close) {
    if (s.size() >= open.size() + close.size() && s.rfind(open, 0) == 0 &&
        s.compare(s.size() - close.size(), close.size(), close) == 0) {
        s = trim(s.substr(open.size(), s.size() - open.size() - close.size()));
        return true;
    }
    return false;
}

// Without list markers, generations are usually either bare title lines or
// refusal/preamble prose; the latter is recognizable by how it starts.
bool looks_like_prose_preamble(std::string_view line) {
    const std::string lower = to_lower(line);
    for (std::string_view prefix :
         {"i ", "i'", "sorry", "as an ai", "sure", "certainly", "of course", "unfortunately",
          "here are", "here is", "note:", "these are", "the following"}) {
        if (lower.rfind(prefix, 0) == 0) return true;
    }
    return false;
}

std::string clean_title(std::string_view raw) {
    std::string s = trim(raw);
    for (bool changed = true; changed && !s.empty();) {
        changed = false;
        changed |= strip_enclosing_pair(s, "**", "**");
        changed |= strip_enclosing_pair(s, "__", "__");
        changed |= strip_enclosing_pair(s, "\"", "\"");
        changed |= strip_enclosing_pair(s, "'", "'");
        changed |= strip_enclosing_pair(s, "“", "”");
        changed |= strip_enclosing_pair(s, "‘", "’");
        // Trailing period, but an ellipsis stays intact.
        if (s.size() >= 2 && s.back() == '.' && s[s.size() - 2] != '.') {
            s.pop_back();
            s = trim(s);
            changed = true;
        }
    }
    return s;
}

}  // namespace

std::vector<std::string> parse_title_list(const std::string& raw) {
    const std::vector<std::string> lines = split_lines(raw);

    std::vector<std::string> items;
    bool saw_marker = false;
    for (const auto& line : lines) {
        const std::string_view trimmed = trim_view(line);
        if (trimmed.empty()) continue;
        if (auto item = strip_list_marker(trimmed)) {
            if (!saw_marker) items.clear();  // markers win over any earlier prose
            saw_marker = true;
            items.emplace_back(*item);
        } else if (!saw_marker) {
            // No list markers seen yet: keep bare lines, dropping obvious
            // preamble ("Here are five titles:") and refusal prose.
            if (trimmed.back() == ':') continue;
            if (looks_like_prose_preamble(trimmed)) continue;
            items.emplace_back(trimmed);
        }
    }

    std::vector<std::string> titles;
    for (const auto& item : items) {
        std::string title = clean_title(item);
        if (!title.empty()) titles.push_back(std::move(title));
    }
    return titles;
}

std::string render_numbered_list(std::span<const std::string> items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += std::to_string(i + 1);
        out += ". ";
        out += items[i];
        if (i + 1 < items.size()) out += '\n';
    }
    return out;
}

nlohmann::json to_json(const CandidateReference& ref) {
    nlohmann::json j{
        {"id", ref.id},
        {"title", ref.title},
        {"topic",
         {{"taxonomy_id", ref.topic.taxonomy_id},
          {"area", ref.topic.area},
          {"topic", ref.topic.topic}}},
        {"generator_model", ref.generator_model},
        {"position_in_batch", ref.position_in_batch},
    };
    j["label"] = ref.label ? nlohmann::json(std::string(1, to_char(*ref.label)))
                           : nlohmann::json(nullptr);
    j["scores"] = ref.scores;
    return j;
}

CandidateReference candidate_from_json(const nlohmann::json& j) {
    CandidateReference ref;
    ref.id = j.at("id").get<int>();
    ref.title = j.at("title").get<std::string>();
    ref.topic.taxonomy_id = j.at("topic").at("taxonomy_id").get<std::string>();
    ref.topic.area = j.at("topic").at("area").get<std::string>();
    ref.topic.topic = j.at("topic").at("topic").get<std::string>();
    ref.generator_model = j.at("generator_model").get<std::string>();
    ref.position_in_batch = j.at("position_in_batch").get<int>();
    if (j.contains("label") && !j.at("label").is_null()) {
        ref.label = label_from_string(j.at("label").get<std::string>());
    }
    if (j.contains("scores")) {
        for (const auto& [k, v] : j.at("scores").items()) {
            if (!v.is_null()) ref.scores[k] = v.get<double>();
        }
    }
    return ref;
}

TitleGenerator::TitleGenerator(Gateway& gateway, const PromptTemplate& tmpl,
                               std::string model_id, int max_tokens)
    : gateway_(gateway), tmpl_(tmpl), model_id_(std::move(model_id)), max_tokens_(max_tokens) {}

std::string TitleGenerator::render_prompt(const Topic& topic, int k) const {
    return tmpl_.render({{"area", topic.area}, {"topic", topic.topic}, {"k", std::to_string(k)}});
}

std::vector<CandidateReference> TitleGenerator::generate(const Topic& topic, int k,
                                                         Usage* usage) {
    if (k < 1) throw ConfigError("titles per topic must be >= 1");
    PromptRequest request;
    request.model_id = model_id_;
    request.prompt_text = render_prompt(topic, k);
    request.temperature = 0.0;  // single generation per topic
    request.n_samples = 1;
    request.max_tokens = max_tokens_;

    const CompletionBatch batch = gateway_.complete(request);
    if (usage) usage->add(batch);

    std::vector<std::string> titles = parse_title_list(batch.completions.front());
    if (titles.size() > static_cast<std::size_t>(k)) titles.resize(k);
    if (titles.empty()) {
        throw EmptyGeneration("no parseable titles for topic: " + topic.rendered());
    }

    std::vector<CandidateReference> refs;
    refs.reserve(titles.size());
    for (std::size_t i = 0; i < titles.size(); ++i) {
        CandidateReference ref;
        ref.title = std::move(titles[i]);
        ref.topic = topic;
        ref.generator_model = model_id_;
        ref.position_in_batch = static_cast<int>(i + 1);
        refs.push_back(std::move(ref));
    }
    return refs;
}

}  // namespace refcheck
