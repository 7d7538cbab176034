#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace refcheck {

// Prompt templates live in user-editable files; placeholders are written
// {name} and every placeholder must be supplied at render time.
class PromptTemplate {
public:
    PromptTemplate() = default;
    static PromptTemplate from_string(std::string text);
    static PromptTemplate from_file(const std::filesystem::path& path);

    std::string render(const std::map<std::string, std::string>& vars) const;
    const std::string& text() const { return text_; }

private:
    std::string text_;
};

// The fixed template files one directory provides.
struct TemplateSet {
    PromptTemplate generate_titles;  // {area} {topic} {k}
    PromptTemplate dq1;              // {title}
    PromptTemplate dq2;              // {title}
    PromptTemplate dq3;              // {title} {context_titles}
    PromptTemplate iq_authors;       // {title}
    PromptTemplate iq_overlap;       // {answer_a} {answer_b}

    static TemplateSet load(const std::filesystem::path& dir);
};

}  // namespace refcheck
