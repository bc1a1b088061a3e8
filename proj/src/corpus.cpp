#include "stockchain/corpus.hpp"

#include "stockchain/errors.hpp"
#include "stockchain/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace stockchain::corpus {

using json = nlohmann::ordered_json;

std::string_view to_string(DocKind kind) noexcept {
    switch (kind) {
        case DocKind::report: return "report";
        case DocKind::news: return "news";
        case DocKind::market_data: return "market_data";
        case DocKind::research: return "research";
        case DocKind::stock_qa: return "stock_qa";
    }
    return "unknown";
}

DocKind parse_kind(std::string_view value) {
    for (DocKind k : kAllKinds) {
        if (to_string(k) == value) return k;
    }
    throw InputError("unknown document kind '" + std::string(value) + "'");
}

std::string_view to_string(Label label) noexcept { return label == Label::up ? "up" : "down"; }

Label parse_label(std::string_view value) {
    if (value == "up") return Label::up;
    if (value == "down") return Label::down;
    throw InputError("unknown label '" + std::string(value) + "'");
}

std::optional<double> PriceSeries::close_at(YearMonth month) const {
    auto it = std::lower_bound(points.begin(), points.end(), month,
                               [](const PricePoint& p, YearMonth m) { return p.month < m; });
    if (it == points.end() || it->month != month) return std::nullopt;
    return it->close;
}

void PriceSeries::validate() const {
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].close > 0.0)) {
            throw InputError("non-positive close for " + company_id + " at " +
                             points[i].month.to_string());
        }
        if (i > 0 && !(points[i - 1].month < points[i].month)) {
            throw InputError("price months not strictly increasing for " + company_id + " at " +
                             points[i].month.to_string());
        }
    }
}

namespace {

template <typename T>
T require(const json& obj, const char* field, std::size_t line_no) {
    auto it = obj.find(field);
    if (it == obj.end()) throw CorpusError(line_no, std::string("missing field '") + field + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw CorpusError(line_no, std::string("field '") + field + "' has the wrong type");
    }
}

}  // namespace

CorpusRecord parse_record(std::string_view line, std::size_t line_no) {
    json obj;
    try {
        obj = json::parse(line);
    } catch (const json::parse_error& e) {
        throw CorpusError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) throw CorpusError(line_no, "record is not a JSON object");

    CorpusRecord rec;
    auto& doc = rec.doc;
    doc.id = require<std::string>(obj, "id", line_no);
    if (doc.id.empty()) throw CorpusError(line_no, "empty id");
    auto kind = require<std::string>(obj, "kind", line_no);
    try {
        doc.kind = parse_kind(kind);
    } catch (const InputError& e) {
        throw CorpusError(line_no, e.what());
    }
    doc.body = require<std::string>(obj, "body", line_no);
    if (doc.body.empty()) throw CorpusError(line_no, "empty body");
    doc.company_ids = require<std::vector<std::string>>(obj, "company_ids", line_no);
    doc.published_at = require<std::string>(obj, "published_at", line_no);
    if (!is_valid_date(doc.published_at)) {
        throw CorpusError(line_no, "unparseable published_at '" + doc.published_at + "'");
    }

    if (auto it = obj.find("market_value"); it != obj.end()) {
        if (!it->is_number()) throw CorpusError(line_no, "field 'market_value' has the wrong type");
        rec.market_value = it->get<double>();
        if (!(*rec.market_value > 0.0)) throw CorpusError(line_no, "market_value must be positive");
    }
    if (auto it = obj.find("prices"); it != obj.end()) {
        if (!it->is_array()) throw CorpusError(line_no, "field 'prices' has the wrong type");
        std::vector<PricePoint> points;
        for (const auto& p : *it) {
            if (!p.is_object() || !p.contains("month") || !p.contains("close") ||
                !p["month"].is_string() || !p["close"].is_number()) {
                throw CorpusError(line_no, "price entries need {\"month\": str, \"close\": number}");
            }
            try {
                points.push_back({YearMonth::parse(p["month"].get<std::string>()),
                                  p["close"].get<double>()});
            } catch (const InputError& e) {
                throw CorpusError(line_no, e.what());
            }
        }
        PriceSeries check{doc.company_ids.empty() ? std::string() : doc.company_ids.front(), points};
        try {
            check.validate();
        } catch (const InputError& e) {
            throw CorpusError(line_no, e.what());
        }
        rec.prices = std::move(points);
    }
    if (auto it = obj.find("label"); it != obj.end()) {
        if (!it->is_string()) throw CorpusError(line_no, "field 'label' has the wrong type");
        rec.label = it->get<std::string>();
    }
    if ((rec.market_value || rec.prices) && doc.company_ids.size() != 1) {
        throw CorpusError(line_no, "market_value/prices require exactly one company id");
    }
    return rec;
}

std::string serialize_record(const CorpusRecord& rec) {
    json obj;
    obj["id"] = rec.doc.id;
    obj["kind"] = to_string(rec.doc.kind);
    obj["body"] = rec.doc.body;
    obj["company_ids"] = rec.doc.company_ids;
    obj["published_at"] = rec.doc.published_at;
    if (rec.market_value) obj["market_value"] = *rec.market_value;
    if (rec.prices) {
        json arr = json::array();
        for (const auto& p : *rec.prices) {
            json point;
            point["month"] = p.month.to_string();
            point["close"] = p.close;
            arr.push_back(std::move(point));
        }
        obj["prices"] = std::move(arr);
    }
    if (rec.label) obj["label"] = *rec.label;
    return obj.dump();
}

Corpus::Corpus(std::vector<CorpusRecord> records, std::vector<std::size_t> source_lines)
    : records_(std::move(records)) {
    std::map<std::string, std::string> value_stamp;  // company -> published_at of market_value
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto& rec = records_[i];
        const auto line = i < source_lines.size() ? source_lines[i] : i + 1;
        if (!by_id_.emplace(rec.doc.id, i).second) {
            throw CorpusError(line, "duplicate id '" + rec.doc.id + "'");
        }
        if ((rec.market_value || rec.prices) && rec.doc.company_ids.size() != 1) {
            throw CorpusError(line, "market_value/prices require exactly one company id");
        }
        if (rec.market_value) {
            const auto& cid = rec.doc.company_ids.front();
            auto& stamp = value_stamp[cid];
            if (rec.doc.published_at >= stamp) {
                stamp = rec.doc.published_at;
                companies_[cid] = Company{cid, cid, *rec.market_value};
            }
        }
        if (rec.prices) {
            const auto& cid = rec.doc.company_ids.front();
            auto& series = prices_[cid];
            series.company_id = cid;
            for (const auto& p : *rec.prices) {
                auto existing = series.close_at(p.month);
                if (existing) {
                    if (*existing != p.close) {
                        throw CorpusError(line, "conflicting close for " + cid + " at " +
                                                    p.month.to_string());
                    }
                    continue;
                }
                auto pos = std::lower_bound(
                    series.points.begin(), series.points.end(), p.month,
                    [](const PricePoint& a, YearMonth m) { return a.month < m; });
                series.points.insert(pos, p);
            }
        }
    }
}

const KnowledgeDocument* Corpus::find(std::string_view doc_id) const {
    auto it = by_id_.find(doc_id);
    return it == by_id_.end() ? nullptr : &records_[it->second].doc;
}

std::vector<const KnowledgeDocument*> Corpus::documents_for(std::string_view company_id,
                                                            std::optional<DocKind> kind,
                                                            std::optional<YearMonth> month) const {
    std::vector<const KnowledgeDocument*> out;
    for (const auto& rec : records_) {
        const auto& d = rec.doc;
        if (kind && d.kind != *kind) continue;
        if (std::find(d.company_ids.begin(), d.company_ids.end(), company_id) == d.company_ids.end())
            continue;
        if (month && d.month() != *month) continue;
        out.push_back(&d);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto* a, const auto* b) {
        return std::tie(a->published_at, a->id) < std::tie(b->published_at, b->id);
    });
    return out;
}

CorpusStats Corpus::stats() const {
    CorpusStats s;
    for (DocKind k : kAllKinds) s.counts[k] = 0;
    std::size_t input_chars = 0, label_chars = 0;
    for (const auto& rec : records_) {
        ++s.counts[rec.doc.kind];
        input_chars += text::char_count(rec.doc.body);
        if (rec.label) {
            ++s.labeled;
            label_chars += text::char_count(*rec.label);
        }
    }
    s.total = records_.size();
    if (s.total) s.mean_input_length = static_cast<double>(input_chars) / static_cast<double>(s.total);
    if (s.labeled) {
        s.mean_label_length = static_cast<double>(label_chars) / static_cast<double>(s.labeled);
    }
    return s;
}

Corpus read_corpus(std::istream& in) {
    std::vector<CorpusRecord> records;
    std::vector<std::size_t> line_numbers;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        records.push_back(parse_record(line, line_no));
        line_numbers.push_back(line_no);
    }
    return Corpus(std::move(records), std::move(line_numbers));
}

Corpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read corpus file '" + path + "'");
    return read_corpus(in);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
    for (const auto& rec : corpus.records()) out << serialize_record(rec) << '\n';
}

CorpusStats ingest_corpus(const std::string& path) { return load_corpus(path).stats(); }

double next_month_return(const PriceSeries& prices, YearMonth m) {
    auto now = prices.close_at(m);
    if (!now) {
        throw CoverageError("no close for " + prices.company_id + " at " + m.to_string());
    }
    auto next = prices.close_at(m.next());
    if (!next) {
        throw CoverageError("no close for " + prices.company_id + " at " + m.next().to_string());
    }
    return *next / *now - 1.0;
}

Label label_for(double r) noexcept { return r > 0.0 ? Label::up : Label::down; }

AlignedSample align_report_with_price(const KnowledgeDocument& report, const PriceSeries& prices) {
    if (report.kind != DocKind::report) {
        throw InputError("document '" + report.id + "' is not a report");
    }
    auto month = report.month();
    double r = next_month_return(prices, month);
    return AlignedSample{report, month, label_for(r), r};
}

}  // namespace stockchain::corpus
