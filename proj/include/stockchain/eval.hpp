#pragma once

#include "stockchain/model_gateway.hpp"
#include "stockchain/prediction.hpp"
#include "stockchain/templates.hpp"
#include "stockchain/text.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stockchain::eval {

enum class RougeVariant { rouge1, rouge2, rougeL };
std::string_view to_string(RougeVariant v) noexcept;
inline constexpr RougeVariant kAllVariants[] = {RougeVariant::rouge1, RougeVariant::rouge2,
                                                RougeVariant::rougeL};

struct RougeScore {
    RougeVariant variant = RougeVariant::rouge1;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;  // harmonic mean, 0 when precision + recall == 0
};

// Clipped n-gram overlap for rouge1/rouge2, longest common subsequence for
// rougeL. Throws InputError when the reference has no tokens; a candidate
// with no tokens scores 0.
RougeScore rouge(std::string_view candidate, std::string_view reference, RougeVariant variant,
                 text::TokenizerKind tokenizer = text::TokenizerKind::unicode);
RougeScore rouge_tokens(std::span<const std::string> candidate, std::span<const std::string> reference,
                        RougeVariant variant);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct OutputStats {
    double avg_len = 0.0;   // mean length in characters
    double na_ratio = 0.0;  // share of invalid directions
};
OutputStats output_stats(std::span<const std::pair<std::string, prediction::Direction>> responses);

enum class Outcome { win, tie, lose };
std::string_view to_string(Outcome o) noexcept;

struct PreferenceVerdict {
    std::string item_id;
    Outcome outcome = Outcome::tie;  // from response_a's side
    std::string judge_id;
    std::string raw_forward;  // judge output with a shown first
    std::string raw_swapped;  // judge output with b shown first
};

enum class JudgeChoice { first, second, tie };
// Reads "Winner: 1", "Winner: 2" or "Winner: tie" (case-insensitive).
// Throws JudgeFormatError, with the raw text, when no verdict or
// contradicting verdicts are found.
JudgeChoice parse_judge_output(const std::string& raw);

// Asks the judge twice, once per presentation order; disagreeing answers
// resolve to a tie.
PreferenceVerdict pairwise_judge(std::string item_id, const std::string& prompt,
                                 const std::string& response_a, const std::string& response_b,
                                 const gateway::ModelBackend& judge,
                                 const TemplateSet& templates = TemplateSet::builtin());

struct PreferenceSummary {
    std::size_t win = 0, tie = 0, lose = 0;
    std::size_t total() const noexcept { return win + tie + lose; }
    // wins / total; 0 for no verdicts.
    double win_rate() const noexcept;
};
PreferenceSummary summarize(std::span<const PreferenceVerdict> verdicts);

// ---- manifest runner -------------------------------------------------------

struct EvalItem {
    std::string item_id;
    std::string prompt;
    std::optional<std::string> reference;
    std::string response_a;
    std::optional<std::string> response_b;
};

std::vector<EvalItem> read_manifest(std::istream& in);
std::vector<EvalItem> load_manifest(const std::string& path);

struct EvalOptions {
    const gateway::ModelBackend* judge = nullptr;  // pairwise judging is skipped when null
    std::size_t parallelism = 4;                   // concurrent judge calls
    text::TokenizerKind tokenizer = text::TokenizerKind::unicode;
    const TemplateSet* templates = &TemplateSet::builtin();
};

// Per-item rows (manifest order) plus aggregates: preference counts and win
// rate, and mean ROUGE precision/recall/f1 per variant over items that have a
// reference.
nlohmann::ordered_json run_eval(std::span<const EvalItem> items, const EvalOptions& options);

}  // namespace stockchain::eval
