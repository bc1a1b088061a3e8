#pragma once

#include "stockchain/backtest.hpp"
#include "stockchain/corpus.hpp"
#include "stockchain/model_gateway.hpp"
#include "stockchain/prediction.hpp"
#include "stockchain/templates.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace stockchain::pipeline {

// ---- stage 1 ---------------------------------------------------------------

struct Stage1Job {
    corpus::Company company;
    YearMonth month;
    std::vector<corpus::KnowledgeDocument> docs;
    gateway::AssembledInput input;
};

inline constexpr std::size_t kMarketHistoryMonths = 12;

// Closes up to and including `month` (at most kMarketHistoryMonths), as a
// market-data document. nullopt when no close is known by then.
std::optional<corpus::KnowledgeDocument> synthesize_market_data(const corpus::PriceSeries& prices,
                                                                YearMonth month);

// One job per (company, month) that has at least one report. The documents
// are that month's reports plus its market-data items; when the corpus holds
// no market-data item a section is synthesized from the price history.
// Ordered by (month, company id).
std::vector<Stage1Job> stage1_jobs(const corpus::Corpus& corpus,
                                   const TemplateSet& templates = TemplateSet::builtin());

std::vector<prediction::TrendPrediction> predict(const corpus::Corpus& corpus,
                                                 const gateway::ModelBackend& model,
                                                 const TemplateSet& templates = TemplateSet::builtin());

// ---- backtest inputs -------------------------------------------------------

struct MarketData {
    backtest::Universe universe;
    backtest::PriceBook prices;
};

// Lines of {"company_id", "market_value", "prices": [{"month", "close"}]}.
MarketData read_market_data(std::istream& in);
MarketData load_market_data(const std::string& path);
MarketData market_data_from_corpus(const corpus::Corpus& corpus);

// CSV with header `month,close`.
corpus::PriceSeries read_benchmark(std::istream& in, const std::string& name = "benchmark");
corpus::PriceSeries load_benchmark(const std::string& path);

// Up/down label for every prediction, from its next-month return. A missing
// close raises CoverageError.
prediction::LabelMap labels_for(const std::vector<prediction::TrendPrediction>& predictions,
                                const backtest::PriceBook& prices);

struct BacktestRun {
    backtest::BacktestReport report;
    std::string run_id;
    std::string report_json;  // the exact bytes written by the CLI and served by the API
    std::string equity_csv;
};

// Chosen sets per prediction month over the contiguous window from the first
// to the last prediction month; ACC over all predictions.
BacktestRun run_backtest(const std::vector<prediction::TrendPrediction>& predictions,
                         const MarketData& market, const std::optional<corpus::PriceSeries>& benchmark,
                         double rf);

struct BacktestFiles {
    std::string predictions;
    std::string prices;
    std::string benchmark;  // optional; empty when absent
    double rf = 0.0;
};
BacktestRun run_backtest_files(const BacktestFiles& files);

}  // namespace stockchain::pipeline
