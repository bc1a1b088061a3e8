#include "stockchain/calendar.hpp"

#include "stockchain/errors.hpp"

#include <cctype>
#include <cstdio>

namespace stockchain {

namespace {

bool all_digits(std::string_view s) {
    for (char c : s) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    return !s.empty();
}

int to_int(std::string_view s) {
    int v = 0;
    for (char c : s) v = v * 10 + (c - '0');
    return v;
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static constexpr int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : days[m - 1];
}

}  // namespace

YearMonth::YearMonth(int year, int month) : year_(year), month_(month) {
    if (month < 1 || month > 12 || year < 1 || year > 9999) {
        throw InputError("invalid calendar month " + std::to_string(year) + "-" +
                         std::to_string(month));
    }
}

YearMonth YearMonth::parse(std::string_view text) {
    if (text.size() != 7 || text[4] != '-' || !all_digits(text.substr(0, 4)) ||
        !all_digits(text.substr(5, 2))) {
        throw InputError("expected YYYY-MM, got '" + std::string(text) + "'");
    }
    return YearMonth(to_int(text.substr(0, 4)), to_int(text.substr(5, 2)));
}

YearMonth YearMonth::from_date(std::string_view date) {
    if (!is_valid_date(date)) {
        throw InputError("expected YYYY-MM-DD, got '" + std::string(date) + "'");
    }
    return YearMonth(to_int(date.substr(0, 4)), to_int(date.substr(5, 2)));
}

YearMonth YearMonth::next() const {
    return month_ == 12 ? YearMonth(year_ + 1, 1) : YearMonth(year_, month_ + 1);
}

YearMonth YearMonth::prev() const {
    return month_ == 1 ? YearMonth(year_ - 1, 12) : YearMonth(year_, month_ - 1);
}

int YearMonth::distance(YearMonth a, YearMonth b) noexcept {
    return (b.year_ - a.year_) * 12 + (b.month_ - a.month_);
}

std::string YearMonth::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year_, month_);
    return buf;
}

bool is_valid_date(std::string_view date) noexcept {
    if (date.size() != 10 || date[4] != '-' || date[7] != '-') return false;
    auto y = date.substr(0, 4), m = date.substr(5, 2), d = date.substr(8, 2);
    if (!all_digits(y) || !all_digits(m) || !all_digits(d)) return false;
    int yi = to_int(y), mi = to_int(m), di = to_int(d);
    if (yi < 1 || mi < 1 || mi > 12 || di < 1) return false;
    return di <= days_in_month(yi, mi);
}

}  // namespace stockchain
