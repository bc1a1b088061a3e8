#pragma once

#include "stockchain/calendar.hpp"
#include "stockchain/corpus.hpp"
#include "stockchain/prediction.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace stockchain::backtest {

using Holdings = std::map<std::string, double>;  // company id -> weight

struct Portfolio {
    YearMonth month;
    Holdings holdings;
};

// Capitalization weights w_i = v_i / sum(v). Returns nullopt for an empty
// list (the month is held in cash). Throws InputError on a non-positive
// market value or a duplicate company.
std::optional<Holdings> cap_weights(std::span<const corpus::Company> companies);

// Additive accumulated-return curve. ar[i] = ar[i-1] + monthly_returns[i],
// starting from AR_0 = 0 (which is not stored).
struct EquityCurve {
    std::vector<YearMonth> months;
    std::vector<double> ar;
    std::vector<double> monthly_returns;

    std::size_t size() const noexcept { return months.size(); }
    bool empty() const noexcept { return months.empty(); }

    static EquityCurve from_returns(std::vector<YearMonth> months, std::vector<double> returns);
};

using ChosenByMonth = std::map<YearMonth, prediction::ChosenSet>;
using Universe = std::map<std::string, corpus::Company>;
using PriceBook = std::map<std::string, corpus::PriceSeries>;

// Contiguous months from the first to the last key of `chosen`.
std::vector<YearMonth> month_range(YearMonth first, YearMonth last);

// Holds each month's chosen set, cap-weighted, from close(m) to close(m+1).
// `months` defaults to the contiguous range spanned by `chosen`; months
// without a chosen set (or with an empty one) earn 0. Throws CoverageError
// naming company and month on a price gap, InputError for a company missing
// from the universe.
EquityCurve run_strategy(const ChosenByMonth& chosen, const Universe& universe,
                         const PriceBook& prices,
                         std::optional<std::vector<YearMonth>> months = std::nullopt);

// The holdings run_strategy uses for one month (nullopt = cash).
std::optional<Holdings> portfolio_weights(const prediction::ChosenSet& chosen, const Universe& universe);

// Monthly index returns close(m+1)/close(m) - 1 over `months`.
EquityCurve benchmark_curve(const corpus::PriceSeries& index, std::span<const YearMonth> months);

// ---- metric relations ------------------------------------------------------

inline constexpr int kMonthsPerYear = 12;

// (AR_M / M) * 12: arithmetic annualization of the additive curve.
double annualized_return(const EquityCurve& curve);
// Sample standard deviation of monthly returns times sqrt(12); 0 when fewer
// than two months.
double annualized_volatility(std::span<const double> monthly_returns);
// Absent when anvol is 0.
std::optional<double> sharpe_ratio(double arr, double anvol, double rf);
// Absent when md is 0.
std::optional<double> calmar_ratio(double arr, double md);
double excess_return(double arr, double benchmark_arr) noexcept;

struct Drawdown {
    double max_drawdown = 0.0;  // largest peak-to-trough fall of AR, AR_0 = 0 included
    int longest_months = 0;     // longest run of consecutive months below the running peak
};
Drawdown drawdown(std::span<const double> ar);

struct BacktestReport {
    double arr = 0.0;
    std::optional<double> aerr;
    double anvol = 0.0;
    std::optional<double> sr;
    double md = 0.0;
    std::optional<double> cr;
    int mdd = 0;
    std::optional<double> acc;
    double rf = 0.0;
    EquityCurve curve;
};

// Throws InputError on an empty curve or a benchmark on different months.
BacktestReport compute_metrics(const EquityCurve& curve, const EquityCurve* benchmark,
                               std::optional<double> acc, double rf = 0.0);

// {"metrics": {arr, aerr, anvol, sr, md, cr, mdd, acc}, "curve": [...]};
// absent metrics are null.
nlohmann::ordered_json to_json(const BacktestReport& report);

// ---- equity-curve export ---------------------------------------------------

using NamedCurve = std::pair<std::string, EquityCurve>;

// Decimal rendering rounded to 10 significant digits, no exponent.
std::string format_decimal(double value);

// CSV with header `month,<name>,...`, one row per month of the union of all
// curves (ascending), AR values; blanks where a curve lacks the month.
void export_equity_curves(std::span<const NamedCurve> curves, std::ostream& out);
void export_equity_curves(std::span<const NamedCurve> curves, const std::string& path);

struct CurveTable {
    std::vector<std::string> names;
    std::vector<std::pair<YearMonth, std::vector<std::optional<double>>>> rows;
};
CurveTable parse_equity_curves(std::istream& in);

}  // namespace stockchain::backtest
