#include "stockchain/knowledge_store.hpp"

#include "stockchain/errors.hpp"
#include "stockchain/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>

namespace stockchain::knowledge {

using json = nlohmann::ordered_json;

std::string_view to_string(Granularity g) noexcept {
    return g == Granularity::summary ? "summary" : "qa_pair";
}

Granularity parse_granularity(std::string_view value) {
    if (value == "summary") return Granularity::summary;
    if (value == "qa_pair") return Granularity::qa_pair;
    throw InputError("unknown granularity '" + std::string(value) + "'");
}

GranularityFilter parse_filter(std::string_view value) {
    if (value == "all") return GranularityFilter::all;
    if (value == "summary") return GranularityFilter::summary_only;
    if (value == "qa_pair") return GranularityFilter::qa_only;
    throw InputError("unknown granularity filter '" + std::string(value) + "'");
}

double euclidean_norm(std::span<const double> v) noexcept {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

EmbeddingRecord make_record(ExtractionUnit unit, std::vector<double> vector) {
    if (unit.key_text.empty()) throw InputError("empty key text for '" + unit.doc_id + "'");
    double norm = euclidean_norm(vector);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw InputError("zero or non-finite embedding for '" + unit.doc_id + "'");
    }
    return EmbeddingRecord{std::move(unit), std::move(vector), norm};
}

namespace {

std::vector<double> normalized(std::span<const double> v, double norm) {
    std::vector<double> out(v.begin(), v.end());
    for (auto& x : out) x /= norm;
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double clamp_unit(double x) noexcept { return std::clamp(x, -1.0, 1.0); }

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ConfigError("cosine of vectors with different dimensions");
    double na = euclidean_norm(a), nb = euclidean_norm(b);
    if (!(na > 0.0) || !(nb > 0.0)) throw InputError("cosine of a zero vector");
    return clamp_unit(dot(normalized(a, na), normalized(b, nb)));
}

// ---- extraction ------------------------------------------------------------

std::string HeadSummarizer::summarize(const corpus::KnowledgeDocument& doc) const {
    return text::utf8_prefix(doc.body, chars_);
}

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

template <typename Fn>
auto with_doc_context(const std::string& doc_id, Fn&& fn) {
    try {
        return fn();
    } catch (const TransportError& e) {
        throw TransportError("extraction for '" + doc_id + "': " + e.what(), e.retriable());
    }
}

}  // namespace

ModelSummarizer::ModelSummarizer(std::shared_ptr<const gateway::ModelBackend> backend,
                                 const TemplateSet& templates)
    : backend_(std::move(backend)), templates_(templates) {}

std::string ModelSummarizer::summarize(const corpus::KnowledgeDocument& doc) const {
    auto prompt = templates_.render(TemplateId::news_summary, {{"news", doc.body}});
    return with_doc_context(doc.id, [&] { return trim(backend_->complete(prompt)); });
}

ModelDialogueGenerator::ModelDialogueGenerator(std::shared_ptr<const gateway::ModelBackend> backend,
                                               const TemplateSet& templates)
    : backend_(std::move(backend)), templates_(templates) {}

std::vector<QaPair> ModelDialogueGenerator::generate(const corpus::KnowledgeDocument& doc) const {
    auto prompt = templates_.render(TemplateId::qa_generation, {{"document", doc.body}});
    auto raw = with_doc_context(doc.id, [&] { return backend_->complete(prompt); });
    return parse_qa_pairs(raw);
}

std::vector<QaPair> parse_qa_pairs(const std::string& raw) {
    std::vector<QaPair> pairs;
    std::optional<std::string> question;
    bool in_answer = false;
    std::istringstream lines(raw);
    std::string line;
    while (std::getline(lines, line)) {
        auto t = trim(line);
        if (t.empty()) continue;
        if (t.rfind("Q:", 0) == 0) {
            if (question) throw ParseError("question without answer", raw);
            question = trim(std::string_view(t).substr(2));
            in_answer = false;
        } else if (t.rfind("A:", 0) == 0) {
            if (!question) throw ParseError("answer without question", raw);
            pairs.push_back({*question, trim(std::string_view(t).substr(2))});
            question.reset();
            in_answer = true;
        } else if (in_answer) {
            pairs.back().answer += "\n" + t;
        } else {
            throw ParseError("unexpected line in dialogue output: " + t, raw);
        }
    }
    if (question) throw ParseError("question without answer", raw);
    for (const auto& p : pairs) {
        if (p.question.empty() || p.answer.empty()) throw ParseError("empty question or answer", raw);
    }
    return pairs;
}

ExtractionUnit extract_summary(const corpus::KnowledgeDocument& doc, const Summarizer& extractor) {
    if (doc.body.empty()) throw InputError("document '" + doc.id + "' has an empty body");
    auto summary = extractor.summarize(doc);
    if (summary.empty()) throw ParseError("empty summary for '" + doc.id + "'", summary);
    return ExtractionUnit{doc.id, Granularity::summary, std::move(summary), doc.body};
}

std::vector<ExtractionUnit> extract_qa_pairs(const corpus::KnowledgeDocument& doc,
                                             const DialogueGenerator& extractor) {
    if (doc.body.empty()) throw InputError("document '" + doc.id + "' has an empty body");
    std::vector<ExtractionUnit> units;
    for (auto& pair : extractor.generate(doc)) {
        units.push_back({doc.id, Granularity::qa_pair, std::move(pair.question), std::move(pair.answer)});
    }
    return units;
}

std::vector<double> embed(const std::string& text, const Embedder& embedder,
                          std::optional<std::size_t> expected_dimension) {
    if (text.empty()) throw InputError("cannot embed empty text");
    auto v = embedder.embed(text);
    if (v.size() != embedder.dimension()) {
        throw ConfigError("embedder '" + embedder.id() + "' returned dimension " +
                          std::to_string(v.size()) + ", declared " +
                          std::to_string(embedder.dimension()));
    }
    if (expected_dimension && v.size() != *expected_dimension) {
        throw ConfigError("embedding dimension " + std::to_string(v.size()) +
                          " does not match index dimension " + std::to_string(*expected_dimension));
    }
    return v;
}

// ---- index -----------------------------------------------------------------

UnitKey key_of(const ExtractionUnit& unit) {
    return {unit.doc_id, unit.granularity, unit.key_text};
}

bool ranks_before(const RetrievalHit& a, const RetrievalHit& b) noexcept {
    if (a.score != b.score) return a.score > b.score;
    const auto& ua = a.record.unit;
    const auto& ub = b.record.unit;
    return std::tie(ua.doc_id, ua.granularity, ua.key_text) <
           std::tie(ub.doc_id, ub.granularity, ub.key_text);
}

ExactIndex::ExactIndex(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) throw ConfigError("index dimension must be positive");
}

std::size_t ExactIndex::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

void ExactIndex::upsert(EmbeddingRecord record) {
    if (record.vector.size() != dimension_) {
        throw ConfigError("record dimension " + std::to_string(record.vector.size()) +
                          " does not match index dimension " + std::to_string(dimension_));
    }
    if (record.unit.key_text.empty()) throw InputError("empty key text");
    double norm = euclidean_norm(record.vector);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw InputError("zero or non-finite embedding");
    record.norm = norm;
    Entry entry{std::move(record), {}};
    entry.unit = normalized(entry.record.vector, norm);
    auto key = key_of(entry.record.unit);

    std::unique_lock lock(mutex_);
    if (auto it = positions_.find(key); it != positions_.end()) {
        entries_[it->second] = std::move(entry);
    } else {
        positions_.emplace(std::move(key), entries_.size());
        entries_.push_back(std::move(entry));
    }
}

std::vector<RetrievalHit> ExactIndex::search(std::span<const double> query, std::size_t k,
                                             GranularityFilter filter) const {
    if (query.size() != dimension_) {
        throw ConfigError("query dimension " + std::to_string(query.size()) +
                          " does not match index dimension " + std::to_string(dimension_));
    }
    double qn = euclidean_norm(query);
    if (!(qn > 0.0)) throw InputError("zero query vector");
    auto q = normalized(query, qn);

    std::shared_lock lock(mutex_);
    struct Scored {
        double score;
        const Entry* entry;
    };
    std::vector<Scored> scored;
    scored.reserve(entries_.size());
    for (const auto& e : entries_) {
        auto g = e.record.unit.granularity;
        if (filter == GranularityFilter::summary_only && g != Granularity::summary) continue;
        if (filter == GranularityFilter::qa_only && g != Granularity::qa_pair) continue;
        scored.push_back({clamp_unit(dot(q, e.unit)), &e});
    }
    auto before = [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        const auto& ua = a.entry->record.unit;
        const auto& ub = b.entry->record.unit;
        return std::tie(ua.doc_id, ua.granularity, ua.key_text) <
               std::tie(ub.doc_id, ub.granularity, ub.key_text);
    };
    auto n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                      before);
    std::vector<RetrievalHit> hits;
    hits.reserve(n);
    for (std::size_t i = 0; i < n; ++i) hits.push_back({scored[i].entry->record, scored[i].score});
    return hits;
}

std::vector<EmbeddingRecord> ExactIndex::records() const {
    std::shared_lock lock(mutex_);
    std::vector<EmbeddingRecord> out;
    out.reserve(entries_.size());
    for (const auto& [key, pos] : positions_) out.push_back(entries_[pos].record);
    return out;
}

KnowledgeStore::KnowledgeStore(std::string embedder_id, std::size_t dimension)
    : embedder_id_(std::move(embedder_id)), index_(std::make_unique<ExactIndex>(dimension)) {}

void KnowledgeStore::upsert(EmbeddingRecord record) { index_->upsert(std::move(record)); }

void KnowledgeStore::add(ExtractionUnit unit, const Embedder& embedder) {
    if (embedder.id() != embedder_id_) {
        throw ConfigError("embedder '" + embedder.id() + "' does not match index embedder '" +
                          embedder_id_ + "'");
    }
    auto v = embed(unit.key_text, embedder, dimension());
    upsert(make_record(std::move(unit), std::move(v)));
}

std::vector<RetrievalHit> KnowledgeStore::retrieve(const std::string& query, std::size_t k,
                                                   const Embedder& embedder,
                                                   GranularityFilter filter) const {
    if (k == 0) throw InputError("k must be at least 1");
    if (embedder.id() != embedder_id_) {
        throw ConfigError("embedder '" + embedder.id() + "' does not match index embedder '" +
                          embedder_id_ + "'");
    }
    if (size() == 0) throw EmptyIndexError();
    auto q = embed(query, embedder, dimension());
    return retrieve_vector(q, k, filter);
}

std::vector<RetrievalHit> KnowledgeStore::retrieve_vector(std::span<const double> query,
                                                          std::size_t k,
                                                          GranularityFilter filter) const {
    if (k == 0) throw InputError("k must be at least 1");
    if (size() == 0) throw EmptyIndexError();
    return index_->search(query, k, filter);
}

std::string KnowledgeStore::to_json() const {
    auto recs = records();
    json header;
    header["format_version"] = kIndexFormatVersion;
    header["dimension"] = dimension();
    header["count"] = recs.size();
    header["embedder_id"] = embedder_id_;

    std::ostringstream out;
    out << "{\n";
    for (const auto& [key, value] : header.items()) {
        out << "  " << json(key).dump() << ": " << value.dump() << ",\n";
    }
    out << "  \"records\": [";
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        json row;
        row["doc_id"] = r.unit.doc_id;
        row["granularity"] = to_string(r.unit.granularity);
        row["key_text"] = r.unit.key_text;
        row["payload_text"] = r.unit.payload_text;
        row["norm"] = r.norm;
        row["vector"] = r.vector;
        out << (i ? ",\n    " : "\n    ") << row.dump();
    }
    out << (recs.empty() ? "]\n" : "\n  ]\n") << "}\n";
    return out.str();
}

KnowledgeStore KnowledgeStore::from_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed index file: ") + e.what());
    }
    try {
        auto version = doc.at("format_version").get<int>();
        if (version != kIndexFormatVersion) {
            throw ConfigError("unsupported index format_version " + std::to_string(version));
        }
        KnowledgeStore store(doc.at("embedder_id").get<std::string>(),
                             doc.at("dimension").get<std::size_t>());
        const auto& rows = doc.at("records");
        if (rows.size() != doc.at("count").get<std::size_t>()) {
            throw ConfigError("index count does not match the number of records");
        }
        for (const auto& row : rows) {
            ExtractionUnit unit{row.at("doc_id").get<std::string>(),
                                parse_granularity(row.at("granularity").get<std::string>()),
                                row.at("key_text").get<std::string>(),
                                row.at("payload_text").get<std::string>()};
            store.upsert(make_record(std::move(unit), row.at("vector").get<std::vector<double>>()));
        }
        return store;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid index file: ") + e.what());
    }
}

void KnowledgeStore::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write index file '" + path + "'");
    out << to_json();
    if (!out) throw IoError("failed writing index file '" + path + "'");
}

KnowledgeStore KnowledgeStore::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read index file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::size_t index_corpus(const corpus::Corpus& corpus, const Embedder& embedder,
                         const IndexingOptions& options, KnowledgeStore& store) {
    std::size_t written = 0;
    for (const auto& rec : corpus.records()) {
        const auto& doc = rec.doc;
        if (options.kinds &&
            std::find(options.kinds->begin(), options.kinds->end(), doc.kind) == options.kinds->end()) {
            continue;
        }
        if (options.summarizer) {
            store.add(extract_summary(doc, *options.summarizer), embedder);
            ++written;
        }
        if (options.generator) {
            for (auto& unit : extract_qa_pairs(doc, *options.generator)) {
                store.add(std::move(unit), embedder);
                ++written;
            }
        }
    }
    return written;
}

}  // namespace stockchain::knowledge
