#include "stockchain/pipeline.hpp"

#include "stockchain/digest.hpp"
#include "stockchain/errors.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

namespace stockchain::pipeline {

using json = nlohmann::ordered_json;

std::optional<corpus::KnowledgeDocument> synthesize_market_data(const corpus::PriceSeries& prices,
                                                                YearMonth month) {
    std::vector<const corpus::PricePoint*> window;
    for (const auto& p : prices.points) {
        if (p.month <= month) window.push_back(&p);
    }
    if (window.empty()) return std::nullopt;
    if (window.size() > kMarketHistoryMonths) {
        window.erase(window.begin(), window.end() - static_cast<std::ptrdiff_t>(kMarketHistoryMonths));
    }
    std::string body = "Monthly closing prices of " + prices.company_id + ":";
    for (const auto* p : window) body += "\n" + p->month.to_string() + ": " + backtest::format_decimal(p->close);

    corpus::KnowledgeDocument doc;
    doc.id = "market:" + prices.company_id + ":" + month.to_string();
    doc.kind = corpus::DocKind::market_data;
    doc.body = std::move(body);
    doc.company_ids = {prices.company_id};
    doc.published_at = month.to_string() + "-01";
    return doc;
}

std::vector<Stage1Job> stage1_jobs(const corpus::Corpus& corpus, const TemplateSet& templates) {
    std::set<std::pair<YearMonth, std::string>> keys;
    for (const auto& rec : corpus.records()) {
        if (rec.doc.kind != corpus::DocKind::report) continue;
        for (const auto& cid : rec.doc.company_ids) keys.emplace(rec.doc.month(), cid);
    }
    std::vector<Stage1Job> jobs;
    jobs.reserve(keys.size());
    for (const auto& [month, cid] : keys) {
        Stage1Job job;
        if (auto it = corpus.companies().find(cid); it != corpus.companies().end()) {
            job.company = it->second;
        } else {
            job.company = {cid, cid, 0.0};
        }
        job.month = month;
        for (const auto* d : corpus.documents_for(cid, corpus::DocKind::report, month)) job.docs.push_back(*d);
        auto market = corpus.documents_for(cid, corpus::DocKind::market_data, month);
        for (const auto* d : market) job.docs.push_back(*d);
        if (market.empty()) {
            if (auto it = corpus.prices().find(cid); it != corpus.prices().end()) {
                if (auto doc = synthesize_market_data(it->second, month)) job.docs.push_back(std::move(*doc));
            }
        }
        job.input = gateway::build_stage1_input(job.company, job.docs, templates);
        jobs.push_back(std::move(job));
    }
    return jobs;
}

std::vector<prediction::TrendPrediction> predict(const corpus::Corpus& corpus,
                                                 const gateway::ModelBackend& model,
                                                 const TemplateSet& templates) {
    std::vector<prediction::TrendPrediction> out;
    for (auto& job : stage1_jobs(corpus, templates)) {
        auto response = gateway::complete(job.input, model);
        out.push_back(prediction::make_prediction(job.company.id, job.month, std::move(response)));
    }
    return out;
}

MarketData read_market_data(std::istream& in) {
    MarketData m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto where = "prices line " + std::to_string(line_no) + ": ";
        try {
            auto obj = json::parse(line);
            auto id = obj.at("company_id").get<std::string>();
            double mv = obj.at("market_value").get<double>();
            if (!(mv > 0.0)) throw InputError(where + "market_value must be positive");
            corpus::PriceSeries series{id, {}};
            for (const auto& p : obj.at("prices")) {
                series.points.push_back({YearMonth::parse(p.at("month").get<std::string>()), p.at("close").get<double>()});
            }
            series.validate();
            if (!m.universe.emplace(id, corpus::Company{id, obj.value("name", id), mv}).second) {
                throw InputError(where + "duplicate company " + id);
            }
            m.prices.emplace(id, std::move(series));
        } catch (const json::exception& e) {
            throw InputError(where + e.what());
        }
    }
    return m;
}

MarketData load_market_data(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read prices file '" + path + "'");
    return read_market_data(in);
}

MarketData market_data_from_corpus(const corpus::Corpus& corpus) {
    MarketData m;
    for (const auto& [id, company] : corpus.companies()) m.universe.emplace(id, company);
    for (const auto& [id, series] : corpus.prices()) m.prices.emplace(id, series);
    return m;
}

corpus::PriceSeries read_benchmark(std::istream& in, const std::string& name) {
    corpus::PriceSeries s{name, {}};
    std::string line;
    if (!std::getline(in, line)) throw InputError("benchmark file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "month,close") throw InputError("benchmark header must be 'month,close'");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw InputError("benchmark line " + std::to_string(line_no) + " needs month,close");
        }
        char* end = nullptr;
        auto value = line.substr(comma + 1);
        double close = std::strtod(value.c_str(), &end);
        if (value.empty() || *end != '\0') {
            throw InputError("benchmark line " + std::to_string(line_no) + ": bad close '" + value + "'");
        }
        s.points.push_back({YearMonth::parse(line.substr(0, comma)), close});
    }
    s.validate();
    return s;
}

corpus::PriceSeries load_benchmark(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read benchmark file '" + path + "'");
    return read_benchmark(in);
}

prediction::LabelMap labels_for(const std::vector<prediction::TrendPrediction>& predictions,
                                const backtest::PriceBook& prices) {
    prediction::LabelMap labels;
    for (const auto& p : predictions) {
        auto it = prices.find(p.company_id);
        if (it == prices.end()) {
            throw CoverageError("no prices for " + p.company_id + " at " + p.month.to_string());
        }
        labels[{p.company_id, p.month}] = corpus::label_for(corpus::next_month_return(it->second, p.month));
    }
    return labels;
}

namespace {

std::string run_digest(const std::vector<prediction::TrendPrediction>& predictions, const MarketData& market,
                       const std::optional<corpus::PriceSeries>& benchmark, double rf) {
    std::ostringstream canon;
    prediction::write_predictions(predictions, canon);
    for (const auto& [id, c] : market.universe) {
        canon << id << ' ' << json(c.market_value).dump() << '\n';
        if (auto it = market.prices.find(id); it != market.prices.end()) {
            for (const auto& p : it->second.points) canon << p.month.to_string() << '=' << json(p.close).dump() << ';';
        }
        canon << '\n';
    }
    if (benchmark) {
        for (const auto& p : benchmark->points) canon << p.month.to_string() << '=' << json(p.close).dump() << ';';
    }
    json rf_value = rf;
    canon << "\nrf=" << rf_value.dump();
    return sha256_hex(canon.str());
}

}  // namespace

BacktestRun run_backtest(const std::vector<prediction::TrendPrediction>& predictions, const MarketData& market,
                         const std::optional<corpus::PriceSeries>& benchmark, double rf) {
    if (predictions.empty()) throw InputError("no predictions to backtest");

    std::map<YearMonth, std::vector<prediction::TrendPrediction>> by_month;
    for (const auto& p : predictions) by_month[p.month].push_back(p);
    backtest::ChosenByMonth chosen;
    for (const auto& [month, preds] : by_month) chosen.emplace(month, prediction::select_chosen(preds, month));

    auto months = backtest::month_range(by_month.begin()->first, by_month.rbegin()->first);
    auto curve = backtest::run_strategy(chosen, market.universe, market.prices, months);
    double acc = prediction::accuracy(predictions, labels_for(predictions, market.prices));

    std::optional<backtest::EquityCurve> bench;
    if (benchmark) bench = backtest::benchmark_curve(*benchmark, months);

    BacktestRun run;
    run.report = backtest::compute_metrics(curve, bench ? &*bench : nullptr, acc, rf);
    auto digest = run_digest(predictions, market, benchmark, rf);
    run.run_id = digest.substr(0, 16);

    json meta;
    meta["config_digest"] = digest;
    meta["rf"] = rf;
    meta["window"] = {{"from", months.front().to_string()}, {"to", months.back().to_string()}};
    meta["months"] = months.size();
    meta["predictions"] = predictions.size();
    meta["companies"] = market.universe.size();
    meta["benchmark"] = bench.has_value();

    auto body = backtest::to_json(run.report);
    json doc;
    doc["run_id"] = run.run_id;
    doc["metadata"] = std::move(meta);
    doc["metrics"] = std::move(body["metrics"]);
    doc["curve"] = std::move(body["curve"]);
    run.report_json = doc.dump(2) + "\n";

    std::vector<backtest::NamedCurve> curves{{"strategy", curve}};
    if (bench) curves.emplace_back("benchmark", *bench);
    std::ostringstream csv;
    backtest::export_equity_curves(curves, csv);
    run.equity_csv = csv.str();
    return run;
}

BacktestRun run_backtest_files(const BacktestFiles& files) {
    auto predictions = prediction::load_predictions(files.predictions);
    auto market = load_market_data(files.prices);
    std::optional<corpus::PriceSeries> benchmark;
    if (!files.benchmark.empty()) benchmark = load_benchmark(files.benchmark);
    return run_backtest(predictions, market, benchmark, files.rf);
}

}  // namespace stockchain::pipeline
