#pragma once

#include "stockchain/calendar.hpp"

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace stockchain::corpus {

struct Company {
    std::string id;
    std::string name;
    double market_value = 0.0;  // v_i, currency units, > 0
};

enum class DocKind { report, news, market_data, research, stock_qa };

inline constexpr DocKind kAllKinds[] = {DocKind::report, DocKind::news, DocKind::market_data,
                                        DocKind::research, DocKind::stock_qa};

std::string_view to_string(DocKind kind) noexcept;
// Throws InputError naming the value when it is not a known kind.
DocKind parse_kind(std::string_view value);

struct KnowledgeDocument {
    std::string id;
    DocKind kind = DocKind::news;
    std::string body;
    std::vector<std::string> company_ids;
    std::string published_at;  // YYYY-MM-DD

    YearMonth month() const { return YearMonth::from_date(published_at); }
};

struct PricePoint {
    YearMonth month;
    double close = 0.0;

    friend bool operator==(const PricePoint&, const PricePoint&) = default;
};

// Monthly closes for one company. Months strictly increasing, closes > 0.
struct PriceSeries {
    std::string company_id;
    std::vector<PricePoint> points;

    std::optional<double> close_at(YearMonth month) const;
    // Throws InputError on ordering or positivity violations.
    void validate() const;
};

// One line of a corpus file. Optional fields are kept optional so the record
// re-serializes to exactly what was read.
struct CorpusRecord {
    KnowledgeDocument doc;
    std::optional<double> market_value;
    std::optional<std::vector<PricePoint>> prices;
    std::optional<std::string> label;  // supervised target text, when the record carries one
};

struct CorpusStats {
    std::map<DocKind, std::size_t> counts;  // every kind present, possibly 0
    std::size_t total = 0;
    double mean_input_length = 0.0;  // over all bodies
    double mean_label_length = 0.0;  // over records carrying a label
    std::size_t labeled = 0;
    static constexpr std::string_view length_unit = "characters";

    friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

// Immutable corpus snapshot; safe to read concurrently once constructed.
class Corpus {
public:
    Corpus() = default;
    // Validates cross-record consistency (unique ids, consistent prices).
    // `source_lines` maps record index to file line for error reporting.
    explicit Corpus(std::vector<CorpusRecord> records, std::vector<std::size_t> source_lines = {});

    const std::vector<CorpusRecord>& records() const noexcept { return records_; }
    const KnowledgeDocument* find(std::string_view doc_id) const;

    // Exact company-id join, optionally restricted to a kind and month.
    std::vector<const KnowledgeDocument*> documents_for(
        std::string_view company_id, std::optional<DocKind> kind = std::nullopt,
        std::optional<YearMonth> month = std::nullopt) const;

    const std::map<std::string, Company>& companies() const noexcept { return companies_; }
    const std::map<std::string, PriceSeries>& prices() const noexcept { return prices_; }

    CorpusStats stats() const;

private:
    std::vector<CorpusRecord> records_;
    std::map<std::string, std::size_t, std::less<>> by_id_;
    std::map<std::string, Company> companies_;
    std::map<std::string, PriceSeries> prices_;
};

// Parses one JSON line. Throws CorpusError carrying `line_no`.
CorpusRecord parse_record(std::string_view line, std::size_t line_no);
// Serializes with the documented field order:
// id, kind, body, company_ids, published_at, market_value, prices, label.
std::string serialize_record(const CorpusRecord& record);

Corpus read_corpus(std::istream& in);
Corpus load_corpus(const std::string& path);
void write_corpus(const Corpus& corpus, std::ostream& out);

CorpusStats ingest_corpus(const std::string& path);

enum class Label { up, down };
std::string_view to_string(Label label) noexcept;
Label parse_label(std::string_view value);

struct AlignedSample {
    KnowledgeDocument document;
    YearMonth as_of_month;
    Label label = Label::down;
    double next_month_return = 0.0;  // close(m+1)/close(m) - 1
};

// Simple return from month `m` to `m+1`. Throws CoverageError naming the
// company and the missing month.
double next_month_return(const PriceSeries& prices, YearMonth m);

// Up iff the next-month return is strictly positive.
Label label_for(double next_month_return) noexcept;

AlignedSample align_report_with_price(const KnowledgeDocument& report, const PriceSeries& prices);

}  // namespace stockchain::corpus
