// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
#include "stockchain/backtest.hpp"
#include "stockchain/corpus.hpp"
#include "stockchain/digest.hpp"
#include "stockchain/dialogue.hpp"
#include "stockchain/eval.hpp"
#include "stockchain/knowledge_store.hpp"
#include "stockchain/pipeline.hpp"
#include "stockchain/prediction.hpp"
#include "stockchain/text.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace stockchain;

namespace {

// Tolerances.
constexpr double kCrTol = 0.005;
constexpr double kSrTol = 0.01;
constexpr double kWeightTol = 1e-12;
constexpr double kArTol = 1e-12;
constexpr double kTableSeconds = 1.0;
constexpr double kOracleSeconds = 10.0;

struct Check {
    bool ok = true;
    std::string detail;
    void expect(bool cond, const std::string& what) {
        if (!cond && ok) detail = what;
        ok = ok && cond;
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void report(const std::string& name, const std::function<void(Check&)>& body) {
    Check c;
    try {
        body(c);
    } catch (const std::exception& e) {
        c.ok = false;
        c.detail = std::string("exception: ") + e.what();
    }
    if (!c.ok) ++failures;
    std::cout << (c.ok ? "PASS " : "FAIL ") << name;
    if (!c.ok) std::cout << " -- " << c.detail;
    std::cout << '\n';
}

// ---- 1. published metric table ---------------------------------------------

struct TableRow {
    const char* name;
    double arr, aerr, anvol, sr, md, cr;
    int mdd;
};

// Percent values except SR, CR and MDD.
const TableRow kTable[] = {
    {"SSE50", -1.0, -2.7, 19.3, -0.054, 45.9, -0.023, 29},
    {"CSI300", 1.7, 0.0, 18.2, 0.092, 39.5, 0.043, 30},
    {"SCI", 3.9, 2.2, 14.8, 0.266, 21.5, 0.183, 19},
    {"CNX", 7.6, 5.9, 26.5, 0.287, 41.3, 0.185, 20},
    {"Randomforest", 9.8, 8.1, 19.5, 0.501, 16.0, 0.608, 22},
    {"RNN", 8.1, 6.4, 10.9, 0.742, 15.7, 0.515, 12},
    {"BERT", 10.7, 9.0, 16.1, 0.664, 13.5, 0.852, 14},
    {"GRU", 11.2, 9.5, 13.7, 0.814, 14.6, 0.765, 21},
    {"LSTM", 11.8, 10.1, 15.4, 0.767, 15.3, 0.768, 19},
    {"Logistic", 12.5, 10.8, 27.1, 0.463, 32.5, 0.385, 18},
    {"XGBoost", 13.1, 11.4, 20.5, 0.633, 20.9, 0.619, 17},
    {"Decision Tree", 13.4, 11.7, 19.6, 0.683, 11.9, 1.126, 20},
    {"ChatGLM2", 8.1, 6.4, 24.9, 0.324, 62.6, 0.126, 26},
    {"ChatGPT", 14.3, 12.6, 27.7, 0.516, 53.6, 0.267, 23},
    {"FinMa", 15.7, 14.0, 37.1, 0.422, 66.3, 0.236, 25},
    {"FinGPT", 17.5, 15.8, 28.9, 0.605, 55.5, 0.312, 24},
    {"Retrieval system", 30.8, 29.1, 19.6, 1.573, 13.3, 2.314, 10},
};

void table_consistency(Check& c) {
    auto t0 = std::chrono::steady_clock::now();
    const double bench_arr = 0.017;
    for (const auto& row : kTable) {
        double aerr = backtest::excess_return(row.arr / 100.0, bench_arr);
        double rounded = std::round(aerr * 1000.0) / 10.0;
        c.expect(std::abs(rounded - row.aerr) < 1e-9,
                 std::string(row.name) + " AERR " + std::to_string(rounded) + " vs " + std::to_string(row.aerr));
        if (std::string(row.name) == "Decision Tree") {
            auto cr = backtest::calmar_ratio(row.arr / 100.0, row.md / 100.0);
            c.expect(cr && std::abs(*cr - row.cr) <= kCrTol, "Decision Tree CR " + std::to_string(cr.value_or(NAN)));
        }
        if (std::string(row.name) == "Retrieval system") {
            auto sr = backtest::sharpe_ratio(row.arr / 100.0, row.anvol / 100.0, 0.0);
            c.expect(sr && std::abs(*sr - row.sr) <= kSrTol, "Retrieval system SR " + std::to_string(sr.value_or(NAN)));
        }
    }
    c.expect(seconds_since(t0) < kTableSeconds, "runtime");
}

// ---- 2. weights, AR and drawdown ---------------------------------------------

void strategy_oracle(Check& c) {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> mv(1e8, 1e12), step(-0.15, 0.15), unit(0.0, 1.0);
    for (int scenario = 0; scenario < 200; ++scenario) {
        int n = 1 + static_cast<int>(rng() % 20);
        int months = 1 + static_cast<int>(rng() % 48);
        YearMonth start(2015 + static_cast<int>(rng() % 5), 1 + static_cast<int>(rng() % 12));

        backtest::Universe universe;
        backtest::PriceBook prices;
        std::vector<std::string> ids;
        for (int i = 0; i < n; ++i) {
            std::string id = "C" + std::to_string(i);
            ids.push_back(id);
            universe[id] = {id, id, mv(rng)};
            corpus::PriceSeries s{id, {}};
            double close = 10.0 + 90.0 * unit(rng);
            YearMonth m = start;
            for (int k = 0; k <= months; ++k) {
                s.points.push_back({m, close});
                close *= 1.0 + step(rng);
                m = m.next();
            }
            prices[id] = std::move(s);
        }

        backtest::ChosenByMonth chosen;
        std::vector<std::vector<std::string>> picks;
        YearMonth m = start;
        for (int k = 0; k < months; ++k) {
            prediction::ChosenSet set{m, {}};
            double p = unit(rng);
            for (const auto& id : ids)
                if (unit(rng) < p) set.company_ids.insert(id);
            picks.emplace_back(set.company_ids.begin(), set.company_ids.end());
            chosen.emplace(m, std::move(set));
            m = m.next();
        }

        for (const auto& [month, set] : chosen) {
            auto w = backtest::portfolio_weights(set, universe);
            if (set.company_ids.empty()) {
                c.expect(!w.has_value(), "empty set should hold cash");
                continue;
            }
            double sum = 0.0;
            for (const auto& [id, x] : *w) sum += x;
            c.expect(std::abs(sum - 1.0) <= kWeightTol, "weights sum " + std::to_string(sum));
        }

        auto curve = backtest::run_strategy(chosen, universe, prices);
        c.expect(static_cast<int>(curve.size()) == months, "curve length");

        // Independent re-summation: value-weighted return built from raw closes.
        double ar = 0.0;
        for (int k = 0; k < months && k < static_cast<int>(curve.size()); ++k) {
            double num = 0.0, den = 0.0;
            for (const auto& id : picks[k]) {
                const auto& pts = prices[id].points;
                double r = pts[k + 1].close / pts[k].close - 1.0;
                num += universe[id].market_value * r;
                den += universe[id].market_value;
            }
            ar += den > 0.0 ? num / den : 0.0;
            c.expect(std::abs(curve.ar[k] - ar) <= kArTol, "AR mismatch at month " + std::to_string(k));
        }

        // All-pairs drawdown scan over the curve with AR_0 = 0.
        std::vector<double> full{0.0};
        full.insert(full.end(), curve.ar.begin(), curve.ar.end());
        double md = 0.0;
        for (std::size_t i = 0; i < full.size(); ++i)
            for (std::size_t j = i + 1; j < full.size(); ++j) md = std::max(md, full[i] - full[j]);
        int mdd = 0;
        for (std::size_t i = 1; i < full.size(); ++i) {
            int run = 0;
            for (std::size_t j = i; j < full.size(); ++j) {
                bool below = false;
                for (std::size_t p = 0; p < j; ++p) below = below || full[p] > full[j];
                if (!below) break;
                ++run;
            }
            mdd = std::max(mdd, run);
        }
        auto metrics = backtest::compute_metrics(curve, nullptr, std::nullopt);
        c.expect(metrics.md == md, "MD " + std::to_string(metrics.md) + " vs " + std::to_string(md));
        c.expect(metrics.mdd == mdd, "MDD " + std::to_string(metrics.mdd) + " vs " + std::to_string(mdd));
    }
    c.expect(seconds_since(t0) < kOracleSeconds, "runtime");
}

// ---- 3. retrieval ---------------------------------------------------------------

struct Ranked {
    double score;
    std::string doc_id;
};

void retrieval_oracle(Check& c) {
    auto t0 = std::chrono::steady_clock::now();
    constexpr std::size_t dim = 32;
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0.0, 1.0);
    auto random_unit = [&] {
        std::vector<double> v(dim);
        double n = 0.0;
        for (auto& x : v) {
            x = g(rng);
            n += x * x;
        }
        n = std::sqrt(n);
        for (auto& x : v) x /= n;
        return v;
    };

    knowledge::KnowledgeStore store("oracle", dim);
    std::vector<std::pair<std::string, std::vector<double>>> stored;
    for (int i = 0; i < 1000; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "v%04d", i);
        auto v = random_unit();
        // A few exact duplicates make the tie-break matter.
        if (i % 100 == 99) v = stored[static_cast<std::size_t>(i - 50)].second;
        stored.emplace_back(id, v);
        store.upsert(knowledge::make_record({id, knowledge::Granularity::summary, "k", "p"}, v));
    }

    testutil::TempDir dir;
    store.save(dir.file("index.json"));
    auto loaded = knowledge::KnowledgeStore::load(dir.file("index.json"));

    for (int q = 0; q < 100; ++q) {
        auto query = q % 10 == 0 ? stored[static_cast<std::size_t>(q * 7 + 49)].second : random_unit();
        std::vector<Ranked> scan;
        for (const auto& [id, v] : stored) {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                dot += v[i] * query[i];
                na += v[i] * v[i];
                nb += query[i] * query[i];
            }
            scan.push_back({dot / std::sqrt(na * nb), id});
        }
        std::sort(scan.begin(), scan.end(), [](const Ranked& a, const Ranked& b) {
            // Scores within rounding noise count as tied.
            if (std::abs(a.score - b.score) > 1e-12) return a.score > b.score;
            return a.doc_id < b.doc_id;
        });
        for (std::size_t k : {1u, 5u}) {
            auto hits = store.retrieve_vector(query, k);
            c.expect(hits.size() == k, "hit count");
            for (std::size_t i = 0; i < k && i < hits.size(); ++i) {
                c.expect(hits[i].record.unit.doc_id == scan[i].doc_id,
                         "query " + std::to_string(q) + " rank " + std::to_string(i) + ": " +
                             hits[i].record.unit.doc_id + " vs " + scan[i].doc_id);
            }
        }
        auto a = store.retrieve_vector(query, 10);
        auto b = loaded.retrieve_vector(query, 10);
        for (std::size_t i = 0; i < a.size(); ++i) {
            c.expect(a[i].record.unit.doc_id == b[i].record.unit.doc_id && a[i].score == b[i].score,
                     "save/load ranking differs");
        }
    }
    c.expect(seconds_since(t0) < kOracleSeconds, "runtime");
}

// ---- 4. end to end -----------------------------------------------------------------

void end_to_end(Check& c) {
    auto corpus = corpus::load_corpus(testutil::fixture("corpus.jsonl"));
    auto market = pipeline::load_market_data(testutil::fixture("prices.jsonl"));
    auto bench = pipeline::load_benchmark(testutil::fixture("benchmark.csv"));
    const auto& templates = TemplateSet::builtin();

    auto scripted = gateway::ScriptedBackend::load(testutil::fixture("model_up.json"));
    std::string pred_bytes[2], report_bytes[2];
    for (int i = 0; i < 2; ++i) {
        auto preds = pipeline::predict(corpus, *scripted, templates);
        std::ostringstream out;
        prediction::write_predictions(preds, out);
        pred_bytes[i] = out.str();
        report_bytes[i] = pipeline::run_backtest(preds, market, bench, 0.0).report_json;
    }
    c.expect(pred_bytes[0] == pred_bytes[1], "prediction bytes differ");
    c.expect(report_bytes[0] == report_bytes[1], "report bytes differ");

    // Perfect oracle: each stage-1 input, keyed by digest, answers its label.
    std::map<std::string, std::string> answers;
    double expected_ar = 0.0;
    std::map<YearMonth, std::pair<double, double>> month_sums;
    for (const auto& job : pipeline::stage1_jobs(corpus, templates)) {
        const auto& pts = market.prices.at(job.company.id).points;
        double now = 0.0, next = 0.0;
        for (const auto& p : pts) {
            if (p.month == job.month) now = p.close;
            if (p.month == job.month.next()) next = p.close;
        }
        double r = next / now - 1.0;
        answers[sha256_hex(job.input.text)] = r > 0.0 ? "The stock will go up." : "The stock will go down.";
        auto& s = month_sums[job.month];
        if (r > 0.0) {
            double v = market.universe.at(job.company.id).market_value;
            s.first += v * r;
            s.second += v;
        }
    }
    for (const auto& [m, s] : month_sums) expected_ar += s.second > 0.0 ? s.first / s.second : 0.0;

    gateway::ScriptedBackend oracle("oracle", answers);
    auto preds = pipeline::predict(corpus, oracle, templates);
    auto run = pipeline::run_backtest(preds, market, bench, 0.0);
    c.expect(run.report.acc && *run.report.acc == 1.0, "ACC " + std::to_string(run.report.acc.value_or(NAN)));
    double ar = run.report.curve.ar.back();
    c.expect(std::abs(ar - expected_ar) <= kArTol, "AR " + std::to_string(ar) + " vs " + std::to_string(expected_ar));
}

// ---- 5. direction parsing and chosen set -----------------------------------------

void direction_suite(Check& c) {
    using prediction::Direction;
    const std::pair<const char*, Direction> cases[] = {
        {"The stock will go up next month.", Direction::up},
        {"UP", Direction::up},
        {"Up, probability: large", Direction::up},
        {"I expect the price to move up.", Direction::up},
        {"It should go up rather than down.", Direction::up},
        {"down then up", Direction::up},
        {"预计下个月股价上涨。", Direction::up},
        {"上涨，概率：较大", Direction::up},
        {"股价将会上涨", Direction::up},
        {"先下跌后上涨", Direction::up},
        {"This stock will go down next month.", Direction::down},
        {"DOWN", Direction::down},
        {"Down, probability: medium to upper", Direction::down},
        {"The price is likely to drift down.", Direction::down},
        {"downward? no, just down", Direction::down},
        {"预计下个月股价下跌。", Direction::down},
        {"下跌，概率：中等偏上", Direction::down},
        {"股价可能会下跌", Direction::down},
        {"I think: down.", Direction::down},
        {"Going (down)", Direction::down},
        {"", Direction::invalid},
        {"No opinion.", Direction::invalid},
        {"The outlook is uncertain.", Direction::invalid},
        {"股价走势不明", Direction::invalid},
        {"无法判断", Direction::invalid},
        {"an upgrade is expected", Direction::invalid},
        {"downtown office sales", Direction::invalid},
        {"setup and breakdown", Direction::invalid},
        {"probability: large", Direction::invalid},
        {"横盘整理", Direction::invalid},
    };
    int mismatches = 0;
    for (const auto& [text, want] : cases) {
        if (prediction::parse_direction(text) != want) {
            ++mismatches;
            c.expect(false, std::string("case '") + text + "'");
        }
    }
    c.expect(mismatches == 0, std::to_string(mismatches) + " mismatches");

    std::mt19937_64 rng(6);
    const char* replies[] = {"up", "down", "unsure", "上涨", "下跌", "flat"};
    YearMonth m(2023, 6);
    for (int t = 0; t < 500; ++t) {
        std::vector<prediction::TrendPrediction> preds;
        int n = static_cast<int>(rng() % 25);
        for (int i = 0; i < n; ++i)
            preds.push_back(prediction::make_prediction("c" + std::to_string(i), m, replies[rng() % 6]));
        std::set<std::string> want;
        for (const auto& p : preds)
            if (p.direction == Direction::up) want.insert(p.company_id);
        c.expect(prediction::select_chosen(preds, m).company_ids == want, "chosen set differs");
    }
}

// ---- 6. ROUGE -------------------------------------------------------------------------

eval::RougeScore oracle_rouge(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                              eval::RougeVariant v) {
    double overlap = 0.0, nc = 0.0, nr = 0.0;
    if (v == eval::RougeVariant::rougeL) {
        // Longest subsequence of cand found in ref, by enumeration.
        std::size_t best = 0;
        for (std::uint32_t mask = 0; mask < (1u << cand.size()); ++mask) {
            std::size_t j = 0, len = 0;
            bool ok = true;
            for (std::size_t i = 0; i < cand.size() && ok; ++i) {
                if (!(mask >> i & 1u)) continue;
                while (j < ref.size() && ref[j] != cand[i]) ++j;
                if (j == ref.size()) ok = false;
                else {
                    ++j;
                    ++len;
                }
            }
            if (ok) best = std::max(best, len);
        }
        overlap = static_cast<double>(best);
        nc = static_cast<double>(cand.size());
        nr = static_cast<double>(ref.size());
    } else {
        std::size_t n = v == eval::RougeVariant::rouge1 ? 1 : 2;
        auto grams = [n](const std::vector<std::string>& t) {
            std::vector<std::vector<std::string>> out;
            for (std::size_t i = 0; i + n <= t.size(); ++i) out.emplace_back(t.begin() + i, t.begin() + i + n);
            return out;
        };
        auto cg = grams(cand), rg = grams(ref);
        nc = static_cast<double>(cg.size());
        nr = static_cast<double>(rg.size());
        // Clipped matching: each reference gram is used at most once.
        std::vector<bool> used(rg.size(), false);
        for (const auto& g : cg) {
            for (std::size_t i = 0; i < rg.size(); ++i) {
                if (!used[i] && rg[i] == g) {
                    used[i] = true;
                    overlap += 1.0;
                    break;
                }
            }
        }
    }
    eval::RougeScore s;
    s.variant = v;
    s.precision = nc > 0.0 ? overlap / nc : 0.0;
    s.recall = nr > 0.0 ? overlap / nr : 0.0;
    double sum = s.precision + s.recall;
    s.f1 = sum > 0.0 ? 2.0 * s.precision * s.recall / sum : 0.0;
    return s;
}

void rouge_oracle(Check& c) {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(12);
    const char* vocab[] = {"the", "stock", "price", "rose", "fell", "market", "up", "down"};
    auto sentence = [&](std::size_t min_len) {
        std::vector<std::string> t(min_len + rng() % (13 - min_len));
        for (auto& x : t) x = vocab[rng() % 8];
        return t;
    };
    auto join = [](const std::vector<std::string>& t) {
        std::string s;
        for (const auto& x : t) s += (s.empty() ? "" : " ") + x;
        return s;
    };
    for (int i = 0; i < 500; ++i) {
        auto cand = sentence(0), ref = sentence(1);
        auto cs = join(cand), rs = join(ref);
        c.expect(text::tokenize(cs) == cand && text::tokenize(rs) == ref, "tokenizer changed the tokens");
        for (auto v : eval::kAllVariants) {
            auto got = eval::rouge(cs, rs, v);
            auto want = oracle_rouge(cand, ref, v);
            c.expect(got.precision == want.precision && got.recall == want.recall && got.f1 == want.f1,
                     std::string(eval::to_string(v)) + " mismatch on '" + cs + "' / '" + rs + "'");
            c.expect(got.f1 >= 0.0 && got.f1 <= 1.0 && got.precision >= 0.0 && got.precision <= 1.0 &&
                         got.recall >= 0.0 && got.recall <= 1.0,
                     "bounds");
            bool has_grams = v != eval::RougeVariant::rouge2 || ref.size() >= 2;
            if (has_grams) c.expect(eval::rouge(rs, rs, v).f1 == 1.0, "reflexivity on '" + rs + "'");
        }
    }
    c.expect(seconds_since(t0) < kOracleSeconds, "runtime");
}

// ---- 7. dialogue ---------------------------------------------------------------------

void dialogue_contract(Check& c) {
    knowledge::HashingEmbedder embedder(64);
    knowledge::KnowledgeStore store(embedder.id(), embedder.dimension());
    store.add({"qa-kline", knowledge::Granularity::qa_pair, "What is the meaning of k line?",
               "A k line records open, high, low and close prices for a period."},
              embedder);
    store.add({"news-byd", knowledge::Granularity::summary, "BYD monthly vehicle sales rose",
               "BYD reported higher monthly sales of new energy vehicles."},
              embedder);
    store.add({"res-pe", knowledge::Granularity::summary, "PE ratio valuation of liquor makers",
               "Liquor makers trade at a premium PE ratio."},
              embedder);

    const std::string queries[] = {"What is the meaning of k line?", "BYD monthly vehicle sales rose?",
                                   "PE ratio valuation of liquor makers"};
    const std::string payloads[] = {"A k line records open", "BYD reported higher monthly sales",
                                    "Liquor makers trade at a premium"};
    gateway::ScriptedBackend model("scripted-chat", {}, std::string("Scripted answer."));
    dialogue::DialogueContext ctx;
    ctx.store = &store;
    ctx.backend = &model;
    ctx.embedder = &embedder;
    const auto& prompt = TemplateSet::builtin().text(TemplateId::stage2_prompt);

    std::string transcripts[2];
    for (int run = 0; run < 2; ++run) {
        dialogue::DialogueSession session{"acceptance", {}, {}};
        for (std::size_t t = 0; t < 3; ++t) {
            auto history = session.turns;
            auto r = dialogue::respond(session, queries[t], ctx);
            const auto& in = r.input.text;
            c.expect(in.rfind(prompt, 0) == 0, "turn " + std::to_string(t + 1) + ": prompt prefix");
            auto kpos = in.find(payloads[t], prompt.size());
            c.expect(kpos != std::string::npos, "turn " + std::to_string(t + 1) + ": payload");
            auto pos = kpos;
            for (const auto& h : history) {
                auto hpos = in.find(gateway::serialize_turn(h), pos);
                c.expect(hpos != std::string::npos && hpos > kpos, "turn " + std::to_string(t + 1) + ": history order");
                pos = hpos;
            }
            auto qpos = in.rfind(queries[t]);
            c.expect(qpos != std::string::npos && qpos >= pos && qpos + queries[t].size() == in.size(),
                     "turn " + std::to_string(t + 1) + ": query last");
        }
        transcripts[run] = dialogue::transcript(session);
    }
    c.expect(transcripts[0] == transcripts[1], "transcripts differ");
    c.expect(std::count(transcripts[0].begin(), transcripts[0].end(), '\n') == 3, "transcript lines");
}

}  // namespace

int main() {
    report("metric relations reproduce the published table", table_consistency);
    report("cap weights, accumulated return and drawdown oracle", strategy_oracle);
    report("retrieval matches exhaustive scan and survives save/load", retrieval_oracle);
    report("end-to-end determinism and perfect-oracle backtest", end_to_end);
    report("direction table and chosen-set oracle", direction_suite);
    report("ROUGE matches brute-force oracle", rouge_oracle);
    report("dialogue input assembly and transcript reproducibility", dialogue_contract);
    return failures == 0 ? 0 : 1;
}
