#include "stockchain/eval.hpp"

#include "stockchain/errors.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

namespace stockchain::eval {

using json = nlohmann::ordered_json;

std::string_view to_string(RougeVariant v) noexcept {
    switch (v) {
        case RougeVariant::rouge1: return "rouge1";
        case RougeVariant::rouge2: return "rouge2";
        case RougeVariant::rougeL: return "rougeL";
    }
    return "rouge1";
}

std::string_view to_string(Outcome o) noexcept {
    switch (o) {
        case Outcome::win: return "win";
        case Outcome::tie: return "tie";
        case Outcome::lose: return "lose";
    }
    return "tie";
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(std::span<const std::string> toks, std::size_t n) {
    std::map<Ngram, std::size_t> counts;
    if (toks.size() < n) return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) ++counts[Ngram(toks.begin() + i, toks.begin() + i + n)];
    return counts;
}

RougeScore make_score(RougeVariant v, std::size_t overlap, std::size_t cand, std::size_t ref) {
    RougeScore s;
    s.variant = v;
    s.precision = cand ? static_cast<double>(overlap) / static_cast<double>(cand) : 0.0;
    s.recall = ref ? static_cast<double>(overlap) / static_cast<double>(ref) : 0.0;
    double sum = s.precision + s.recall;
    s.f1 = sum > 0.0 ? 2.0 * s.precision * s.recall / sum : 0.0;
    return s;
}

}  // namespace

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

RougeScore rouge_tokens(std::span<const std::string> cand, std::span<const std::string> ref,
                        RougeVariant variant) {
    if (ref.empty()) throw InputError("ROUGE reference is empty");
    if (variant == RougeVariant::rougeL) {
        return make_score(variant, lcs_length(cand, ref), cand.size(), ref.size());
    }
    std::size_t n = variant == RougeVariant::rouge1 ? 1 : 2;
    auto cc = ngram_counts(cand, n);
    auto rc = ngram_counts(ref, n);
    std::size_t overlap = 0;
    for (const auto& [gram, c] : cc) {
        if (auto it = rc.find(gram); it != rc.end()) overlap += std::min(c, it->second);
    }
    std::size_t cand_n = cand.size() >= n ? cand.size() - n + 1 : 0;
    std::size_t ref_n = ref.size() >= n ? ref.size() - n + 1 : 0;
    return make_score(variant, overlap, cand_n, ref_n);
}

RougeScore rouge(std::string_view candidate, std::string_view reference, RougeVariant variant,
                 text::TokenizerKind tokenizer) {
    auto ref = text::tokenize(reference, tokenizer);
    if (ref.empty()) throw InputError("ROUGE reference is empty");
    auto cand = text::tokenize(candidate, tokenizer);
    return rouge_tokens(cand, ref, variant);
}

OutputStats output_stats(std::span<const std::pair<std::string, prediction::Direction>> responses) {
    OutputStats s;
    if (responses.empty()) return s;
    std::size_t chars = 0, invalid = 0;
    for (const auto& [body, dir] : responses) {
        chars += text::char_count(body);
        if (dir == prediction::Direction::invalid) ++invalid;
    }
    auto n = static_cast<double>(responses.size());
    s.avg_len = static_cast<double>(chars) / n;
    s.na_ratio = static_cast<double>(invalid) / n;
    return s;
}

JudgeChoice parse_judge_output(const std::string& raw) {
    static const std::regex pattern(R"(winner\s*[:=]\s*(1|2|tie)\b)", std::regex::icase);
    std::optional<JudgeChoice> choice;
    for (auto it = std::sregex_iterator(raw.begin(), raw.end(), pattern); it != std::sregex_iterator(); ++it) {
        auto token = text::to_lower_ascii((*it)[1].str());
        JudgeChoice c = token == "1" ? JudgeChoice::first : token == "2" ? JudgeChoice::second : JudgeChoice::tie;
        if (choice && *choice != c) throw JudgeFormatError("judge gave contradicting verdicts", raw);
        choice = c;
    }
    if (!choice) throw JudgeFormatError("judge output has no \"Winner:\" line", raw);
    return *choice;
}

PreferenceVerdict pairwise_judge(std::string item_id, const std::string& prompt,
                                 const std::string& response_a, const std::string& response_b,
                                 const gateway::ModelBackend& judge, const TemplateSet& templates) {
    PreferenceVerdict v;
    v.item_id = std::move(item_id);
    v.judge_id = judge.id();
    auto ask = [&](const std::string& first, const std::string& second) {
        return judge.complete(templates.render(TemplateId::judge_pairwise,
                                               {{"prompt", prompt}, {"response_1", first}, {"response_2", second}}));
    };
    v.raw_forward = ask(response_a, response_b);
    v.raw_swapped = ask(response_b, response_a);

    auto forward = parse_judge_output(v.raw_forward);
    auto swapped = parse_judge_output(v.raw_swapped);
    auto as_outcome = [](JudgeChoice c, bool a_first) {
        if (c == JudgeChoice::tie) return Outcome::tie;
        return (c == JudgeChoice::first) == a_first ? Outcome::win : Outcome::lose;
    };
    auto o1 = as_outcome(forward, true);
    auto o2 = as_outcome(swapped, false);
    v.outcome = o1 == o2 ? o1 : Outcome::tie;
    return v;
}

double PreferenceSummary::win_rate() const noexcept {
    return total() ? static_cast<double>(win) / static_cast<double>(total()) : 0.0;
}

PreferenceSummary summarize(std::span<const PreferenceVerdict> verdicts) {
    PreferenceSummary s;
    for (const auto& v : verdicts) {
        switch (v.outcome) {
            case Outcome::win: ++s.win; break;
            case Outcome::tie: ++s.tie; break;
            case Outcome::lose: ++s.lose; break;
        }
    }
    return s;
}

std::vector<EvalItem> read_manifest(std::istream& in) {
    std::vector<EvalItem> items;
    std::string line;
    std::size_t line_no = 0;
    auto opt = [](const json& obj, const char* key) -> std::optional<std::string> {
        if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
        return obj[key].get<std::string>();
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto obj = json::parse(line);
            EvalItem item;
            item.item_id = obj.at("item_id").get<std::string>();
            item.prompt = obj.at("prompt").get<std::string>();
            item.reference = opt(obj, "reference");
            item.response_a = obj.at("response_a").get<std::string>();
            item.response_b = opt(obj, "response_b");
            items.push_back(std::move(item));
        } catch (const json::exception& e) {
            throw InputError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return items;
}

std::vector<EvalItem> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read eval manifest '" + path + "'");
    return read_manifest(in);
}

json run_eval(std::span<const EvalItem> items, const EvalOptions& options) {
    std::vector<std::optional<PreferenceVerdict>> verdicts(items.size());
    if (options.judge) {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        auto worker = [&] {
            for (std::size_t i = next++; i < items.size(); i = next++) {
                if (!items[i].response_b) continue;
                try {
                    verdicts[i] = pairwise_judge(items[i].item_id, items[i].prompt, items[i].response_a,
                                                 *items[i].response_b, *options.judge, *options.templates);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = items.size();
                }
            }
        };
        auto n = std::clamp<std::size_t>(options.parallelism, 1, std::max<std::size_t>(items.size(), 1));
        std::vector<std::thread> pool;
        for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    json rows = json::array();
    std::map<RougeVariant, RougeScore> sums;
    std::size_t with_reference = 0;
    std::vector<PreferenceVerdict> judged;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        json row;
        row["item_id"] = item.item_id;
        if (item.reference) {
            json r;
            for (auto v : kAllVariants) {
                auto s = rouge(item.response_a, *item.reference, v, options.tokenizer);
                r[std::string(to_string(v))] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
                sums[v].precision += s.precision;
                sums[v].recall += s.recall;
                sums[v].f1 += s.f1;
            }
            ++with_reference;
            row["rouge"] = std::move(r);
        } else {
            row["rouge"] = nullptr;
        }
        if (verdicts[i]) {
            row["outcome"] = to_string(verdicts[i]->outcome);
            row["judge_id"] = verdicts[i]->judge_id;
            judged.push_back(*verdicts[i]);
        } else {
            row["outcome"] = nullptr;
        }
        rows.push_back(std::move(row));
    }

    json agg;
    agg["items"] = items.size();
    auto pref = summarize(judged);
    agg["win"] = pref.win;
    agg["tie"] = pref.tie;
    agg["lose"] = pref.lose;
    agg["win_rate"] = pref.total() ? json(pref.win_rate()) : json(nullptr);
    if (with_reference) {
        json mean;
        auto d = static_cast<double>(with_reference);
        for (auto v : kAllVariants) {
            mean[std::string(to_string(v))] = {{"precision", sums[v].precision / d},
                                               {"recall", sums[v].recall / d},
                                               {"f1", sums[v].f1 / d}};
        }
        agg["mean_rouge"] = std::move(mean);
    } else {
        agg["mean_rouge"] = nullptr;
    }

    json out;
    out["rows"] = std::move(rows);
    out["aggregates"] = std::move(agg);
    return out;
}

}  // namespace stockchain::eval
