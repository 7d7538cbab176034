#include "refcheck/template_engine.hpp"

#include "refcheck/errors.hpp"
#include "refcheck/jsonl.hpp"

namespace refcheck {

namespace {

bool is_placeholder_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

PromptTemplate PromptTemplate::from_string(std::string text) {
    PromptTemplate t;
    t.text_ = std::move(text);
    return t;
}

PromptTemplate PromptTemplate::from_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError("template file not found: " + path.string());
    }
    return from_string(read_file(path));
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& vars) const {
    std::string out;
    out.reserve(text_.size());
    std::size_t i = 0;
    while (i < text_.size()) {
        const char c = text_[i];
        if (c != '{') {
            out += c;
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < text_.size() && is_placeholder_char(text_[j])) ++j;
        if (j > i + 1 && j < text_.size() && text_[j] == '}') {
            const std::string key = text_.substr(i + 1, j - i - 1);
            auto it = vars.find(key);
            if (it == vars.end()) {
                throw ConfigError("template placeholder {" + key + "} not supplied");
            }
            out += it->second;
            i = j + 1;
        } else {
            out += c;  // literal brace
            ++i;
        }
    }
    return out;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    TemplateSet set;
    set.generate_titles = PromptTemplate::from_file(dir / "generate_titles.tmpl");
    set.dq1 = PromptTemplate::from_file(dir / "dq1.tmpl");
    set.dq2 = PromptTemplate::from_file(dir / "dq2.tmpl");
    set.dq3 = PromptTemplate::from_file(dir / "dq3.tmpl");
    set.iq_authors = PromptTemplate::from_file(dir / "iq_authors.tmpl");
    set.iq_overlap = PromptTemplate::from_file(dir / "iq_overlap.tmpl");
    return set;
}

}  // namespace refcheck
