#include "stockchain/calendar.hpp"
#include "stockchain/digest.hpp"
#include "stockchain/errors.hpp"
#include "stockchain/text.hpp"

#include <gtest/gtest.h>

using namespace stockchain;

TEST(YearMonth, ParseAndStep) {
    auto m = YearMonth::parse("2023-12");
    EXPECT_EQ(m.year(), 2023);
    EXPECT_EQ(m.month(), 12);
    EXPECT_EQ(m.next().to_string(), "2024-01");
    EXPECT_EQ(YearMonth::parse("2024-01").prev().to_string(), "2023-12");
    EXPECT_EQ(YearMonth::distance(YearMonth(2022, 11), YearMonth(2023, 2)), 3);
    EXPECT_LT(YearMonth(2023, 1), YearMonth(2023, 2));
}

TEST(YearMonth, RejectsMalformed) {
    EXPECT_THROW(YearMonth::parse("2023-13"), InputError);
    EXPECT_THROW(YearMonth::parse("2023-1"), InputError);
    EXPECT_THROW(YearMonth::from_date("2023-02-30"), InputError);
    EXPECT_NO_THROW(YearMonth::from_date("2024-02-29"));
    EXPECT_THROW(YearMonth::from_date("2023-02-29"), InputError);
    EXPECT_EQ(YearMonth::from_date("2023-07-15").to_string(), "2023-07");
}

TEST(Text, CountsCodePoints) {
    EXPECT_EQ(text::char_count("abc"), 3u);
    EXPECT_EQ(text::char_count("上涨"), 2u);
    EXPECT_EQ(text::utf8_prefix("贵州茅台abc", 3), "贵州茅");
    EXPECT_EQ(text::char_count(std::string("\xff\xfe", 2)), 2u);
}

TEST(Text, UnicodeTokenizer) {
    auto t = text::tokenize("Moutai 提价20%, up!");
    std::vector<std::string> want{"moutai", "提", "价", "20", "up"};
    EXPECT_EQ(t, want);
    auto w = text::tokenize("A  b\tC", text::TokenizerKind::whitespace);
    std::vector<std::string> want_ws{"A", "b", "C"};
    EXPECT_EQ(w, want_ws);
    EXPECT_TRUE(text::tokenize("  ,. ").empty());
}

TEST(Text, CaseInsensitiveFind) {
    EXPECT_EQ(text::ifind("Trend is UP", "up"), 9u);
    EXPECT_EQ(text::ifind("abc", "d"), std::string::npos);
}

TEST(Digest, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
