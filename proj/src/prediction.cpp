#include "stockchain/prediction.hpp"

#include "stockchain/errors.hpp"
#include "stockchain/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

namespace stockchain::prediction {

using json = nlohmann::ordered_json;

std::string_view to_string(Direction d) noexcept {
    switch (d) {
        case Direction::up: return "up";
        case Direction::down: return "down";
        case Direction::invalid: return "invalid";
    }
    return "invalid";
}

Direction parse_direction_name(std::string_view value) {
    if (value == "up") return Direction::up;
    if (value == "down") return Direction::down;
    if (value == "invalid") return Direction::invalid;
    throw InputError("unknown direction '" + std::string(value) + "'");
}

std::string_view to_string(ProbCategory c) noexcept {
    switch (c) {
        case ProbCategory::very_large: return "very_large";
        case ProbCategory::large: return "large";
        case ProbCategory::medium_to_upper: return "medium_to_upper";
        case ProbCategory::average: return "average";
    }
    return "average";
}

ProbCategory parse_prob_category_name(std::string_view value) {
    for (auto c : {ProbCategory::very_large, ProbCategory::large, ProbCategory::medium_to_upper,
                   ProbCategory::average}) {
        if (to_string(c) == value) return c;
    }
    throw InputError("unknown probability category '" + std::string(value) + "'");
}

const DirectionLexicon& DirectionLexicon::standard() {
    static const DirectionLexicon lexicon{{"up", "上涨"}, {"down", "下跌"}};
    return lexicon;
}

namespace {

bool ascii_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

bool is_word_term(std::string_view term) {
    return !term.empty() && std::all_of(term.begin(), term.end(), [](char c) {
        return ascii_alpha(c) || c == ' ';
    });
}

// Position of the first occurrence of `term` at or after `from`, or npos.
std::size_t find_term(std::string_view text, std::string_view term, std::size_t from = 0) {
    if (!is_word_term(term)) return text.find(term, from);
    for (auto pos = text::ifind(text, term, from); pos != std::string_view::npos;
         pos = text::ifind(text, term, pos + 1)) {
        bool left = pos == 0 || !ascii_alpha(text[pos - 1]);
        auto end = pos + term.size();
        bool right = end == text.size() || !ascii_alpha(text[end]);
        if (left && right) return pos;
    }
    return std::string_view::npos;
}

bool contains_any(std::string_view text, const std::vector<std::string>& terms) {
    return std::any_of(terms.begin(), terms.end(),
                       [&](const std::string& t) { return find_term(text, t) != std::string_view::npos; });
}

struct CategoryPhrase {
    std::string_view phrase;
    ProbCategory category;
};

constexpr CategoryPhrase kPhrases[] = {
    {"very large", ProbCategory::very_large},
    {"large", ProbCategory::large},
    {"medium to upper", ProbCategory::medium_to_upper},
    {"average", ProbCategory::average},
    {"非常大", ProbCategory::very_large},
    {"很大", ProbCategory::very_large},
    {"较大", ProbCategory::large},
    {"中等偏上", ProbCategory::medium_to_upper},
    {"一般", ProbCategory::average},
};

constexpr std::string_view kMarkers[] = {"probability", "概率"};

}  // namespace

Direction parse_direction(std::string_view response, const DirectionLexicon& lexicon) {
    if (contains_any(response, lexicon.up_terms)) return Direction::up;
    if (contains_any(response, lexicon.down_terms)) return Direction::down;
    return Direction::invalid;
}

std::optional<ProbCategory> parse_probability(std::string_view response) {
    auto marker_end = std::string_view::npos;
    auto marker_pos = std::string_view::npos;
    for (auto m : kMarkers) {
        auto pos = find_term(response, m);
        if (pos < marker_pos) {
            marker_pos = pos;
            marker_end = pos + m.size();
        }
    }
    if (marker_pos == std::string_view::npos) return std::nullopt;

    auto best_pos = std::string_view::npos;
    std::size_t best_len = 0;
    std::optional<ProbCategory> best;
    for (const auto& [phrase, category] : kPhrases) {
        auto pos = find_term(response, phrase, marker_end);
        if (pos == std::string_view::npos) continue;
        if (pos < best_pos || (pos == best_pos && phrase.size() > best_len)) {
            best_pos = pos;
            best_len = phrase.size();
            best = category;
        }
    }
    return best;
}

TrendPrediction make_prediction(std::string company_id, YearMonth month, std::string response,
                                const DirectionLexicon& lexicon) {
    TrendPrediction p;
    p.company_id = std::move(company_id);
    p.month = month;
    p.direction = parse_direction(response, lexicon);
    p.prob_category = parse_probability(response);
    p.raw_response = std::move(response);
    return p;
}

ChosenSet select_chosen(std::span<const TrendPrediction> predictions, YearMonth month) {
    ChosenSet chosen{month, {}};
    std::set<std::string> seen;
    for (const auto& p : predictions) {
        if (p.month != month) {
            throw InputError("prediction for " + p.company_id + " is for " + p.month.to_string() +
                             ", expected " + month.to_string());
        }
        if (!seen.insert(p.company_id).second) {
            throw InputError("duplicate prediction for " + p.company_id + " in " + month.to_string());
        }
        if (p.direction == Direction::up) chosen.company_ids.insert(p.company_id);
    }
    return chosen;
}

double accuracy(std::span<const TrendPrediction> predictions, const LabelMap& labels) {
    if (predictions.empty()) throw InputError("accuracy of an empty prediction list");
    std::size_t correct = 0;
    for (const auto& p : predictions) {
        auto it = labels.find({p.company_id, p.month});
        if (it == labels.end()) {
            throw InputError("no label for " + p.company_id + " at " + p.month.to_string());
        }
        bool up = it->second == corpus::Label::up;
        if ((up && p.direction == Direction::up) || (!up && p.direction == Direction::down)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::string serialize_prediction(const TrendPrediction& p) {
    json obj;
    obj["company_id"] = p.company_id;
    obj["month"] = p.month.to_string();
    obj["direction"] = to_string(p.direction);
    obj["prob_category"] = p.prob_category ? json(to_string(*p.prob_category)) : json(nullptr);
    obj["raw_response"] = p.raw_response;
    return obj.dump();
}

TrendPrediction parse_prediction(std::string_view line, std::size_t line_no) {
    try {
        auto obj = json::parse(line);
        TrendPrediction p;
        p.company_id = obj.at("company_id").get<std::string>();
        p.month = YearMonth::parse(obj.at("month").get<std::string>());
        p.direction = parse_direction_name(obj.at("direction").get<std::string>());
        if (obj.contains("prob_category") && !obj["prob_category"].is_null()) {
            p.prob_category = parse_prob_category_name(obj["prob_category"].get<std::string>());
        }
        p.raw_response = obj.value("raw_response", std::string());
        return p;
    } catch (const json::exception& e) {
        throw InputError("predictions line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
        throw InputError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
}

void write_predictions(std::span<const TrendPrediction> predictions, std::ostream& out) {
    for (const auto& p : predictions) out << serialize_prediction(p) << '\n';
}

std::vector<TrendPrediction> read_predictions(std::istream& in) {
    std::vector<TrendPrediction> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(parse_prediction(line, line_no));
    }
    return out;
}

std::vector<TrendPrediction> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read predictions file '" + path + "'");
    return read_predictions(in);
}

}  // namespace stockchain::prediction
