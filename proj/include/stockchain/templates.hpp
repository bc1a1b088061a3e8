#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace stockchain {

// Prompt and preprocessing templates. A placeholder is `<name>` where name is
// an identifier ([A-Za-z_][A-Za-z0-9_]*); any other angle-bracketed text is
// literal.
enum class TemplateId {
    stockqa_question,  // question generation over a price sequence
    news_summary,      // one-paragraph news summary
    report_trend,      // report + price -> clear up/down answer
    report_cot,        // chain-of-thought answer layout ending in "probability: <prob>"
    stage1_prompt,     // trend-prediction instruction prefixed to report and market data
    stage2_prompt,     // Q&A preamble prefixed to knowledge, history and query
    qa_generation,     // entity-level question/answer pair generation
    judge_pairwise,    // pairwise preference judging
};

inline constexpr TemplateId kAllTemplateIds[] = {
    TemplateId::stockqa_question, TemplateId::news_summary, TemplateId::report_trend,
    TemplateId::report_cot,       TemplateId::stage1_prompt, TemplateId::stage2_prompt,
    TemplateId::qa_generation,    TemplateId::judge_pairwise};

std::string_view to_string(TemplateId id) noexcept;
TemplateId parse_template_id(std::string_view name);

using Bindings = std::map<std::string, std::string, std::less<>>;

// Placeholder names in order of first appearance (duplicates removed).
std::vector<std::string> placeholders(std::string_view tmpl);

// Substitutes every placeholder with its binding, verbatim and in a single
// pass. Unused bindings are ignored. Throws InputError naming the first
// placeholder without a binding.
std::string render_template(std::string_view tmpl, const Bindings& bindings);

// A versioned set of templates. The built-in set mirrors the files shipped
// under templates/<version>/.
class TemplateSet {
public:
    static const TemplateSet& builtin();
    // Reads <dir>/VERSION and <dir>/<id>.txt for every id. One trailing
    // newline is stripped from each file. Throws ConfigError on missing files.
    static TemplateSet load(const std::string& dir);

    TemplateSet(std::string version, std::map<TemplateId, std::string> texts);

    const std::string& version() const noexcept { return version_; }
    const std::string& text(TemplateId id) const;
    std::string render(TemplateId id, const Bindings& bindings) const;

private:
    std::string version_;
    std::map<TemplateId, std::string> texts_;
};

}  // namespace stockchain
