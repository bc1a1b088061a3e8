#pragma once

#include <compare>
#include <functional>
#include <string>
#include <string_view>

namespace stockchain {

// Calendar month. All strategy and alignment logic runs at month granularity.
class YearMonth {
public:
    constexpr YearMonth() = default;
    YearMonth(int year, int month);

    // Accepts "YYYY-MM". Throws InputError otherwise.
    static YearMonth parse(std::string_view text);
    // Accepts "YYYY-MM-DD" and truncates to the month. Validates the day.
    static YearMonth from_date(std::string_view date);

    int year() const noexcept { return year_; }
    int month() const noexcept { return month_; }

    YearMonth next() const;
    YearMonth prev() const;
    // Number of months from `a` to `b` (b - a).
    static int distance(YearMonth a, YearMonth b) noexcept;

    std::string to_string() const;

    friend constexpr auto operator<=>(const YearMonth&, const YearMonth&) = default;

private:
    int year_ = 1970;
    int month_ = 1;
};

// Validates a "YYYY-MM-DD" calendar date (including leap years).
bool is_valid_date(std::string_view date) noexcept;

}  // namespace stockchain

template <>
struct std::hash<stockchain::YearMonth> {
    std::size_t operator()(const stockchain::YearMonth& ym) const noexcept {
        return std::hash<int>{}(ym.year() * 12 + ym.month());
    }
};
