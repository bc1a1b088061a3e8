#include "stockchain/errors.hpp"
#include "stockchain/eval.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace stockchain;
using namespace stockchain::eval;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

// Prefers the longer response; equal lengths tie.
std::string longer_wins(const std::string& in) {
    auto a = in.find("[Response 1]\n") + 13;
    auto b = in.find("\n[Response 2]\n");
    auto c = b + 14;
    auto d = in.find("\nReply with");
    auto l1 = b - a, l2 = d - c;
    if (l1 > l2) return "Winner: 1";
    if (l2 > l1) return "Winner: 2";
    return "Winner: tie";
}

std::size_t brute_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    // Every subsequence of a, checked against b. Short inputs only.
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
        std::size_t j = 0, len = 0;
        bool ok = true;
        for (std::size_t i = 0; i < a.size() && ok; ++i) {
            if (!(mask & (1u << i))) continue;
            while (j < b.size() && b[j] != a[i]) ++j;
            if (j == b.size()) ok = false;
            else {
                ++j;
                ++len;
            }
        }
        if (ok) best = std::max(best, len);
    }
    return best;
}

}  // namespace

TEST(Rouge, Examples) {
    auto r1 = rouge("the cat sat", "the cat ran", RougeVariant::rouge1);
    EXPECT_NEAR(r1.precision, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(r1.recall, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(r1.f1, 2.0 / 3.0, 1e-12);
    auto r2 = rouge("the cat sat", "the cat ran", RougeVariant::rouge2);
    EXPECT_NEAR(r2.f1, 0.5, 1e-12);
    auto rl = rouge("the cat sat", "the cat ran", RougeVariant::rougeL);
    EXPECT_NEAR(rl.f1, 2.0 / 3.0, 1e-12);
}

TEST(Rouge, ClippedCounts) {
    auto r = rouge_tokens(toks({"the", "the", "the"}), toks({"the", "cat"}), RougeVariant::rouge1);
    EXPECT_NEAR(r.precision, 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(r.recall, 0.5, 1e-12);
}

TEST(Rouge, EdgeCases) {
    EXPECT_THROW(rouge("x", "", RougeVariant::rouge1), InputError);
    EXPECT_THROW(rouge("x", "  ", RougeVariant::rougeL), InputError);
    auto empty = rouge("", "a b", RougeVariant::rouge1);
    EXPECT_EQ(empty.f1, 0.0);
    EXPECT_EQ(rouge("a b", "c d", RougeVariant::rouge2).f1, 0.0);
    // A single token reference has no bigrams; nothing to recall.
    EXPECT_EQ(rouge("a", "a", RougeVariant::rouge2).f1, 0.0);
    for (auto v : kAllVariants) EXPECT_DOUBLE_EQ(rouge("股价 上涨 了", "股价 上涨 了", v).f1, 1.0);
}

TEST(Rouge, LcsMatchesBruteForce) {
    std::mt19937_64 rng(8);
    const char* vocab[] = {"a", "b", "c", "d"};
    for (int t = 0; t < 300; ++t) {
        std::vector<std::string> a(rng() % 10), b(rng() % 10);
        for (auto& x : a) x = vocab[rng() % 4];
        for (auto& x : b) x = vocab[rng() % 4];
        EXPECT_EQ(lcs_length(a, b), brute_lcs(a, b));
    }
}

TEST(OutputStatsTest, Examples) {
    using prediction::Direction;
    std::vector<std::pair<std::string, Direction>> rs{{"up", Direction::up}, {"none!", Direction::invalid},
                                                      {"下跌", Direction::down}};
    auto s = output_stats(rs);
    EXPECT_NEAR(s.avg_len, (2.0 + 5.0 + 2.0) / 3.0, 1e-12);
    EXPECT_NEAR(s.na_ratio, 1.0 / 3.0, 1e-12);
    auto none = output_stats(std::vector<std::pair<std::string, Direction>>{});
    EXPECT_EQ(none.avg_len, 0.0);
}

TEST(Judge, ParseOutput) {
    EXPECT_EQ(parse_judge_output("Winner: 1"), JudgeChoice::first);
    EXPECT_EQ(parse_judge_output("reasoning...\nwinner = 2"), JudgeChoice::second);
    EXPECT_EQ(parse_judge_output("WINNER: Tie"), JudgeChoice::tie);
    EXPECT_EQ(parse_judge_output("Winner: 1\nWinner: 1"), JudgeChoice::first);
    try {
        parse_judge_output("I like both");
        FAIL();
    } catch (const JudgeFormatError& e) {
        EXPECT_EQ(e.raw(), "I like both");
    }
    EXPECT_THROW(parse_judge_output("Winner: 1 ... Winner: 2"), JudgeFormatError);
    EXPECT_THROW(parse_judge_output("Winner: 12"), JudgeFormatError);
}

TEST(Judge, PairwiseOutcomes) {
    gateway::FunctionBackend judge("len", longer_wins);
    EXPECT_EQ(pairwise_judge("i", "q", "a much longer answer", "short", judge).outcome, Outcome::win);
    EXPECT_EQ(pairwise_judge("i", "q", "short", "a much longer answer", judge).outcome, Outcome::lose);
    auto same = pairwise_judge("i", "q", "same", "same", judge);
    EXPECT_EQ(same.outcome, Outcome::tie);
    EXPECT_EQ(same.judge_id, "len");
    EXPECT_FALSE(same.raw_forward.empty());
    // A judge that always picks the first slot is position-biased: tie.
    gateway::FunctionBackend first("first", [](const std::string&) { return std::string("Winner: 1"); });
    EXPECT_EQ(pairwise_judge("i", "q", "x", "yy", first).outcome, Outcome::tie);
}

TEST(Judge, Antisymmetric) {
    gateway::FunctionBackend judge("len", longer_wins);
    std::mt19937_64 rng(2);
    for (int t = 0; t < 50; ++t) {
        std::string a(rng() % 8 + 1, 'a'), b(rng() % 8 + 1, 'b');
        auto ab = pairwise_judge("i", "q", a, b, judge).outcome;
        auto ba = pairwise_judge("i", "q", b, a, judge).outcome;
        if (ab == Outcome::tie) EXPECT_EQ(ba, Outcome::tie);
        else EXPECT_NE(ab, ba);
    }
}

TEST(Judge, Summary) {
    std::vector<PreferenceVerdict> vs;
    for (int i = 0; i < 100; ++i) {
        PreferenceVerdict v;
        v.outcome = i < 62 ? Outcome::win : (i < 80 ? Outcome::tie : Outcome::lose);
        vs.push_back(v);
    }
    auto s = summarize(vs);
    EXPECT_EQ(s.win, 62u);
    EXPECT_EQ(s.tie, 18u);
    EXPECT_EQ(s.lose, 20u);
    EXPECT_DOUBLE_EQ(s.win_rate(), 0.62);
    EXPECT_EQ(summarize(std::vector<PreferenceVerdict>{}).win_rate(), 0.0);
}

TEST(Runner, ManifestFixture) {
    auto items = load_manifest(testutil::fixture("eval_manifest.jsonl"));
    ASSERT_EQ(items.size(), 3u);
    gateway::FunctionBackend judge("len", longer_wins);
    EvalOptions opts;
    opts.judge = &judge;
    auto one = run_eval(items, opts);
    opts.parallelism = 1;
    auto two = run_eval(items, opts);
    EXPECT_EQ(one.dump(), two.dump());
    EXPECT_EQ(one["rows"].size(), 3u);
    EXPECT_EQ(one["rows"][0]["item_id"], "q1");
    EXPECT_TRUE(one["rows"][2]["rouge"].is_null());
    EXPECT_TRUE(one["rows"][2]["outcome"].is_null());
    EXPECT_EQ(one["aggregates"]["items"], 3);
}

TEST(Runner, BadManifest) {
    std::istringstream in("{\"item_id\": \"x\"}\n");
    EXPECT_THROW(read_manifest(in), Error);
}
