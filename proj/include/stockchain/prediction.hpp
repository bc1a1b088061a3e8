#pragma once

#include "stockchain/calendar.hpp"
#include "stockchain/corpus.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stockchain::prediction {

enum class Direction { up, down, invalid };
std::string_view to_string(Direction d) noexcept;
Direction parse_direction_name(std::string_view value);

// Labels only; no ordinal meaning is attached.
enum class ProbCategory { very_large, large, medium_to_upper, average };
std::string_view to_string(ProbCategory c) noexcept;
ProbCategory parse_prob_category_name(std::string_view value);

// Keywords that signal each direction. Purely alphabetic ASCII terms match
// case-insensitively on word boundaries; other terms (e.g. CJK) match as
// substrings.
struct DirectionLexicon {
    std::vector<std::string> up_terms;
    std::vector<std::string> down_terms;

    static const DirectionLexicon& standard();  // up/上涨, down/下跌
};

struct TrendPrediction {
    std::string company_id;
    YearMonth month;
    Direction direction = Direction::invalid;
    std::optional<ProbCategory> prob_category;
    std::string raw_response;
};

struct ChosenSet {
    YearMonth month;
    std::set<std::string> company_ids;
};

// Up when any up keyword occurs; otherwise down when a down keyword occurs;
// otherwise invalid.
Direction parse_direction(std::string_view response,
                          const DirectionLexicon& lexicon = DirectionLexicon::standard());

// First category phrase following the first "probability" marker.
std::optional<ProbCategory> parse_probability(std::string_view response);

TrendPrediction make_prediction(std::string company_id, YearMonth month, std::string response,
                                const DirectionLexicon& lexicon = DirectionLexicon::standard());

// Companies predicted up. Throws InputError on a prediction for another month
// or a duplicate company.
ChosenSet select_chosen(std::span<const TrendPrediction> predictions, YearMonth month);

using LabelKey = std::pair<std::string, YearMonth>;
using LabelMap = std::map<LabelKey, corpus::Label>;

// Fraction of predictions whose direction equals the label; invalid is
// always incorrect. Throws InputError on an empty list or a missing label.
double accuracy(std::span<const TrendPrediction> predictions, const LabelMap& labels);

// Line-delimited JSON: company_id, month, direction, prob_category, raw_response.
std::string serialize_prediction(const TrendPrediction& p);
TrendPrediction parse_prediction(std::string_view line, std::size_t line_no);
void write_predictions(std::span<const TrendPrediction> predictions, std::ostream& out);
std::vector<TrendPrediction> read_predictions(std::istream& in);
std::vector<TrendPrediction> load_predictions(const std::string& path);

}  // namespace stockchain::prediction
