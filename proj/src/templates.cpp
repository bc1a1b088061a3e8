#include "stockchain/templates.hpp"

#include "stockchain/errors.hpp"

#include <fstream>
#include <sstream>

namespace stockchain {

std::string_view to_string(TemplateId id) noexcept {
    switch (id) {
        case TemplateId::stockqa_question: return "stockqa_question";
        case TemplateId::news_summary: return "news_summary";
        case TemplateId::report_trend: return "report_trend";
        case TemplateId::report_cot: return "report_cot";
        case TemplateId::stage1_prompt: return "stage1_prompt";
        case TemplateId::stage2_prompt: return "stage2_prompt";
        case TemplateId::qa_generation: return "qa_generation";
        case TemplateId::judge_pairwise: return "judge_pairwise";
    }
    return "unknown";
}

TemplateId parse_template_id(std::string_view name) {
    for (auto id : kAllTemplateIds) {
        if (to_string(id) == name) return id;
    }
    throw InputError("unknown template '" + std::string(name) + "'");
}

namespace {

bool ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }

// Length of the placeholder starting at `pos` (including brackets), or 0.
std::size_t placeholder_at(std::string_view t, std::size_t pos) {
    if (t[pos] != '<' || pos + 2 >= t.size() || !ident_start(t[pos + 1])) return 0;
    std::size_t j = pos + 2;
    while (j < t.size() && ident_char(t[j])) ++j;
    return j < t.size() && t[j] == '>' ? j - pos + 1 : 0;
}

}  // namespace

std::vector<std::string> placeholders(std::string_view tmpl) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        if (auto len = placeholder_at(tmpl, i)) {
            std::string name(tmpl.substr(i + 1, len - 2));
            bool seen = false;
            for (const auto& n : names) seen = seen || n == name;
            if (!seen) names.push_back(std::move(name));
            i += len - 1;
        }
    }
    return names;
}

std::string render_template(std::string_view tmpl, const Bindings& bindings) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (auto len = placeholder_at(tmpl, i)) {
            auto name = tmpl.substr(i + 1, len - 2);
            auto it = bindings.find(name);
            if (it == bindings.end()) {
                throw InputError("missing binding for placeholder '" + std::string(name) + "'");
            }
            out += it->second;
            i += len;
        } else {
            out += tmpl[i++];
        }
    }
    return out;
}

TemplateSet::TemplateSet(std::string version, std::map<TemplateId, std::string> texts)
    : version_(std::move(version)), texts_(std::move(texts)) {
    for (auto id : kAllTemplateIds) {
        if (!texts_.count(id)) {
            throw ConfigError("template set '" + version_ + "' lacks " + std::string(to_string(id)));
        }
    }
}

const TemplateSet& TemplateSet::builtin() {
    // Must stay identical to templates/v1/*.txt (checked by the test suite).
    static const TemplateSet set(
        "v1",
        {
            {TemplateId::stage1_prompt,
             "Please predict the rise and fall of the stock next month based on the research "
             "reports and data provided below. Please provide a clear answer, either \"up\" or "
             "\"down\"."},
            {TemplateId::stage2_prompt,
             "You are an intelligent assistant, please answer my question. To help you answer "
             "accurately, content from the local knowledge base is provided as follows, followed "
             "by our conversation history. Now, answer the question based on the knowledge and "
             "the history:"},
            {TemplateId::report_trend,
             "According to the financial report and stock price of the company below, please "
             "judge the trend of the company next month and give a clear answer up or down. "
             "Input: <reports_and_price>, Output:"},
            {TemplateId::report_cot,
             "According to the report and market data, the following conclusions can be drawn:\n"
             "1. Fundamentals: <fundamentals>\n"
             "2. Technical aspects: <technicals>\n"
             "Therefore, we predict the trend of <company> next month is <direction>, "
             "probability: <prob>"},
            {TemplateId::stockqa_question,
             "Based on the following sequence of stock prices, give me a good financial "
             "question. Input: <sequential_data>, Output:"},
            {TemplateId::news_summary,
             "Please summarize the key financial facts of the following news in a few "
             "sentences. Input: <news>, Output:"},
            {TemplateId::qa_generation,
             "Based on the following financial document, write question-answer dialogues about "
             "the entities and concepts it mentions. Write each pair on two lines, the question "
             "starting with \"Q:\" and the answer starting with \"A:\". Output nothing else.\n"
             "Document: <document>"},
            {TemplateId::judge_pairwise,
             "Please act as an impartial judge and evaluate two responses to the financial "
             "question below. Consider helpfulness, accuracy, timeliness and depth of analysis.\n"
             "Question: <prompt>\n"
             "[Response 1]\n"
             "<response_1>\n"
             "[Response 2]\n"
             "<response_2>\n"
             "Reply with exactly one line: \"Winner: 1\", \"Winner: 2\" or \"Winner: tie\"."},
        });
    return set;
}

namespace {

std::string read_file_trimmed(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read template file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    auto s = ss.str();
    if (!s.empty() && s.back() == '\n') s.pop_back();
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

TemplateSet TemplateSet::load(const std::string& dir) {
    auto version = read_file_trimmed(dir + "/VERSION");
    std::map<TemplateId, std::string> texts;
    for (auto id : kAllTemplateIds) {
        texts[id] = read_file_trimmed(dir + "/" + std::string(to_string(id)) + ".txt");
    }
    return TemplateSet(std::move(version), std::move(texts));
}

const std::string& TemplateSet::text(TemplateId id) const { return texts_.at(id); }

std::string TemplateSet::render(TemplateId id, const Bindings& bindings) const {
    return render_template(text(id), bindings);
}

}  // namespace stockchain
