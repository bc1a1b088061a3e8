#include "stockchain/backtest.hpp"

#include "stockchain/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace stockchain::backtest {

std::optional<Holdings> cap_weights(std::span<const corpus::Company> companies) {
    if (companies.empty()) return std::nullopt;
    double total = 0.0;
    for (const auto& c : companies) {
        if (!(c.market_value > 0.0) || !std::isfinite(c.market_value)) {
            throw InputError("market value of " + c.id + " must be positive");
        }
        total += c.market_value;
    }
    Holdings w;
    for (const auto& c : companies) {
        if (!w.emplace(c.id, c.market_value / total).second) {
            throw InputError("duplicate company " + c.id + " in portfolio");
        }
    }
    return w;
}

EquityCurve EquityCurve::from_returns(std::vector<YearMonth> months, std::vector<double> returns) {
    if (months.size() != returns.size()) throw InputError("months and returns differ in length");
    EquityCurve c;
    c.months = std::move(months);
    c.monthly_returns = std::move(returns);
    c.ar.reserve(c.monthly_returns.size());
    double ar = 0.0;
    for (double r : c.monthly_returns) {
        ar = ar + r;
        c.ar.push_back(ar);
    }
    return c;
}

std::vector<YearMonth> month_range(YearMonth first, YearMonth last) {
    std::vector<YearMonth> out;
    for (auto m = first; m <= last; m = m.next()) out.push_back(m);
    return out;
}

std::optional<Holdings> portfolio_weights(const prediction::ChosenSet& chosen, const Universe& universe) {
    std::vector<corpus::Company> members;
    members.reserve(chosen.company_ids.size());
    for (const auto& id : chosen.company_ids) {
        auto it = universe.find(id);
        if (it == universe.end()) {
            throw InputError("company " + id + " held in " + chosen.month.to_string() +
                             " is missing from the universe");
        }
        members.push_back(it->second);
    }
    return cap_weights(members);
}

EquityCurve run_strategy(const ChosenByMonth& chosen, const Universe& universe,
                         const PriceBook& prices, std::optional<std::vector<YearMonth>> months) {
    if (!months) {
        months = chosen.empty() ? std::vector<YearMonth>{}
                                : month_range(chosen.begin()->first, chosen.rbegin()->first);
    }
    std::vector<double> returns;
    returns.reserve(months->size());
    for (const auto& m : *months) {
        double r = 0.0;
        auto it = chosen.find(m);
        if (it != chosen.end()) {
            if (it->second.month != m) throw InputError("chosen set keyed under the wrong month");
            if (auto weights = portfolio_weights(it->second, universe)) {
                for (const auto& [id, w] : *weights) {
                    auto series = prices.find(id);
                    if (series == prices.end()) {
                        throw CoverageError("no prices for " + id + " held in " + m.to_string());
                    }
                    r += w * corpus::next_month_return(series->second, m);
                }
            }
        }
        returns.push_back(r);
    }
    return EquityCurve::from_returns(std::move(*months), std::move(returns));
}

EquityCurve benchmark_curve(const corpus::PriceSeries& index, std::span<const YearMonth> months) {
    std::vector<double> returns;
    returns.reserve(months.size());
    for (const auto& m : months) returns.push_back(corpus::next_month_return(index, m));
    return EquityCurve::from_returns({months.begin(), months.end()}, std::move(returns));
}

double annualized_return(const EquityCurve& curve) {
    if (curve.empty()) throw InputError("empty equity curve");
    return curve.ar.back() / static_cast<double>(curve.size()) * kMonthsPerYear;
}

double annualized_volatility(std::span<const double> r) {
    if (r.size() < 2) return 0.0;
    double mean = 0.0;
    for (double x : r) mean += x;
    mean /= static_cast<double>(r.size());
    double ss = 0.0;
    for (double x : r) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(r.size() - 1)) * std::sqrt(double(kMonthsPerYear));
}

std::optional<double> sharpe_ratio(double arr, double anvol, double rf) {
    if (!(anvol > 0.0)) return std::nullopt;
    return (arr - rf) / anvol;
}

std::optional<double> calmar_ratio(double arr, double md) {
    if (!(md > 0.0)) return std::nullopt;
    return arr / md;
}

double excess_return(double arr, double benchmark_arr) noexcept { return arr - benchmark_arr; }

Drawdown drawdown(std::span<const double> ar) {
    Drawdown d;
    double peak = 0.0;  // AR_0
    int run = 0;
    for (double a : ar) {
        if (a < peak) {
            d.max_drawdown = std::max(d.max_drawdown, peak - a);
            d.longest_months = std::max(d.longest_months, ++run);
        } else {
            peak = a;
            run = 0;
        }
    }
    return d;
}

BacktestReport compute_metrics(const EquityCurve& curve, const EquityCurve* benchmark,
                               std::optional<double> acc, double rf) {
    if (curve.empty()) throw InputError("empty equity curve");
    BacktestReport rep;
    rep.rf = rf;
    rep.arr = annualized_return(curve);
    rep.anvol = annualized_volatility(curve.monthly_returns);
    rep.sr = sharpe_ratio(rep.arr, rep.anvol, rf);
    auto dd = drawdown(curve.ar);
    rep.md = dd.max_drawdown;
    rep.mdd = dd.longest_months;
    rep.cr = calmar_ratio(rep.arr, rep.md);
    if (benchmark) {
        if (benchmark->months != curve.months) {
            throw InputError("benchmark curve is not aligned with the strategy months");
        }
        rep.aerr = excess_return(rep.arr, annualized_return(*benchmark));
    }
    rep.acc = acc;
    rep.curve = curve;
    return rep;
}

nlohmann::ordered_json to_json(const BacktestReport& r) {
    using json = nlohmann::ordered_json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json metrics;
    metrics["arr"] = r.arr;
    metrics["aerr"] = opt(r.aerr);
    metrics["anvol"] = r.anvol;
    metrics["sr"] = opt(r.sr);
    metrics["md"] = r.md;
    metrics["cr"] = opt(r.cr);
    metrics["mdd"] = r.mdd;
    metrics["acc"] = opt(r.acc);
    json curve = json::array();
    for (std::size_t i = 0; i < r.curve.size(); ++i) {
        json row;
        row["month"] = r.curve.months[i].to_string();
        row["return"] = r.curve.monthly_returns[i];
        row["ar"] = r.curve.ar[i];
        curve.push_back(std::move(row));
    }
    json out;
    out["metrics"] = std::move(metrics);
    out["curve"] = std::move(curve);
    return out;
}

std::string format_decimal(double value) {
    if (!std::isfinite(value)) throw InputError("cannot export a non-finite value");
    if (value == 0.0) return "0";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9e", value);
    std::string s(buf);
    bool negative = s[0] == '-';
    if (negative) s.erase(0, 1);
    auto e_pos = s.find('e');
    int exponent = std::atoi(s.c_str() + e_pos + 1);
    std::string digits = s.substr(0, 1) + s.substr(2, e_pos - 2);  // 10 digits

    std::string out;
    if (exponent >= 9) {
        out = digits + std::string(static_cast<std::size_t>(exponent - 9), '0');
    } else if (exponent >= 0) {
        out = digits.substr(0, exponent + 1) + "." + digits.substr(exponent + 1);
    } else {
        out = "0." + std::string(static_cast<std::size_t>(-exponent - 1), '0') + digits;
    }
    if (out.find('.') != std::string::npos) {
        while (out.back() == '0') out.pop_back();
        if (out.back() == '.') out.pop_back();
    }
    return negative ? "-" + out : out;
}

void export_equity_curves(std::span<const NamedCurve> curves, std::ostream& out) {
    std::set<YearMonth> months;
    std::vector<std::map<YearMonth, double>> values(curves.size());
    out << "month";
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const auto& [name, curve] = curves[i];
        if (name.find_first_of(",\"\n") != std::string::npos) {
            throw InputError("curve name '" + name + "' cannot appear in a CSV header");
        }
        out << ',' << name;
        for (std::size_t j = 0; j < curve.size(); ++j) {
            months.insert(curve.months[j]);
            values[i][curve.months[j]] = curve.ar[j];
        }
    }
    out << '\n';
    for (const auto& m : months) {
        out << m.to_string();
        for (const auto& v : values) {
            out << ',';
            if (auto it = v.find(m); it != v.end()) out << format_decimal(it->second);
        }
        out << '\n';
    }
}

void export_equity_curves(std::span<const NamedCurve> curves, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write equity curve file '" + path + "'");
    export_equity_curves(curves, out);
    if (!out) throw IoError("failed writing equity curve file '" + path + "'");
}

CurveTable parse_equity_curves(std::istream& in) {
    CurveTable t;
    std::string line;
    if (!std::getline(in, line)) throw InputError("equity curve file is empty");
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!s.empty() && s.back() == ',') cells.emplace_back();
        return cells;
    };
    auto header = split(line);
    if (header.empty() || header[0] != "month") throw InputError("equity curve header must start with 'month'");
    t.names.assign(header.begin() + 1, header.end());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != header.size()) throw InputError("ragged equity curve row: " + line);
        std::vector<std::optional<double>> row;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            if (cells[i].empty()) {
                row.emplace_back();
            } else {
                row.emplace_back(std::strtod(cells[i].c_str(), nullptr));
            }
        }
        t.rows.emplace_back(YearMonth::parse(cells[0]), std::move(row));
    }
    return t;
}

}  // namespace stockchain::backtest
