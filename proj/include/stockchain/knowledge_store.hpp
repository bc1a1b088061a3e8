#pragma once

#include "stockchain/corpus.hpp"
#include "stockchain/model_gateway.hpp"
#include "stockchain/templates.hpp"

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace stockchain::knowledge {

enum class Granularity { summary, qa_pair };
std::string_view to_string(Granularity g) noexcept;
Granularity parse_granularity(std::string_view value);

// Restricts retrieval to one extraction strategy, or searches both jointly.
enum class GranularityFilter { all, summary_only, qa_only };
GranularityFilter parse_filter(std::string_view value);

struct ExtractionUnit {
    std::string doc_id;
    Granularity granularity = Granularity::summary;
    std::string key_text;      // summary, or the question of a pair
    std::string payload_text;  // full document body, or the answer of a pair
};

struct EmbeddingRecord {
    ExtractionUnit unit;
    std::vector<double> vector;
    double norm = 0.0;  // Euclidean length of `vector`
};

double euclidean_norm(std::span<const double> v) noexcept;
// Builds a record, computing the norm. Throws InputError on a zero vector or
// empty key text.
EmbeddingRecord make_record(ExtractionUnit unit, std::vector<double> vector);

struct RetrievalHit {
    EmbeddingRecord record;
    double score = 0.0;  // cosine similarity in [-1, 1]
};

double cosine(std::span<const double> a, std::span<const double> b);

// ---- extraction backends -------------------------------------------------

class Summarizer {
public:
    virtual ~Summarizer() = default;
    virtual std::string id() const = 0;
    virtual std::string summarize(const corpus::KnowledgeDocument& doc) const = 0;
};

// Stub "head:N": the first N characters of the body.
class HeadSummarizer final : public Summarizer {
public:
    explicit HeadSummarizer(std::size_t chars) : chars_(chars) {}
    std::string id() const override { return "head:" + std::to_string(chars_); }
    std::string summarize(const corpus::KnowledgeDocument& doc) const override;

private:
    std::size_t chars_;
};

// Summaries produced by a chat model through the news_summary template.
class ModelSummarizer final : public Summarizer {
public:
    ModelSummarizer(std::shared_ptr<const gateway::ModelBackend> backend,
                    const TemplateSet& templates = TemplateSet::builtin());
    std::string id() const override { return "model:" + backend_->id(); }
    std::string summarize(const corpus::KnowledgeDocument& doc) const override;

private:
    std::shared_ptr<const gateway::ModelBackend> backend_;
    TemplateSet templates_;
};

struct QaPair {
    std::string question;
    std::string answer;
};

class DialogueGenerator {
public:
    virtual ~DialogueGenerator() = default;
    virtual std::string id() const = 0;
    virtual std::vector<QaPair> generate(const corpus::KnowledgeDocument& doc) const = 0;
};

// Emits the same pairs for every document.
class FixedPairGenerator final : public DialogueGenerator {
public:
    explicit FixedPairGenerator(std::vector<QaPair> pairs) : pairs_(std::move(pairs)) {}
    std::string id() const override { return "fixed"; }
    std::vector<QaPair> generate(const corpus::KnowledgeDocument&) const override { return pairs_; }

private:
    std::vector<QaPair> pairs_;
};

// Entity-level dialogues from a chat model through the qa_generation template.
class ModelDialogueGenerator final : public DialogueGenerator {
public:
    ModelDialogueGenerator(std::shared_ptr<const gateway::ModelBackend> backend,
                           const TemplateSet& templates = TemplateSet::builtin());
    std::string id() const override { return "model:" + backend_->id(); }
    std::vector<QaPair> generate(const corpus::KnowledgeDocument& doc) const override;

private:
    std::shared_ptr<const gateway::ModelBackend> backend_;
    TemplateSet templates_;
};

// "Q: ...\nA: ..." blocks; answer lines may continue on following lines.
// Blank output yields no pairs. Throws ParseError preserving the raw text.
std::vector<QaPair> parse_qa_pairs(const std::string& raw);

ExtractionUnit extract_summary(const corpus::KnowledgeDocument& doc, const Summarizer& extractor);
std::vector<ExtractionUnit> extract_qa_pairs(const corpus::KnowledgeDocument& doc,
                                             const DialogueGenerator& extractor);

// ---- embedding backends --------------------------------------------------

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual const std::string& id() const noexcept = 0;
    virtual std::size_t dimension() const noexcept = 0;
    virtual std::vector<double> embed(const std::string& text) const = 0;
    virtual bool healthy() const { return true; }
};

// Deterministic signed feature hashing of unicode tokens, unit-normalized.
class HashingEmbedder final : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dimension);
    const std::string& id() const noexcept override { return id_; }
    std::size_t dimension() const noexcept override { return dimension_; }
    std::vector<double> embed(const std::string& text) const override;

private:
    std::size_t dimension_;
    std::string id_;
};

// Fixed text -> vector table; unknown text throws FixtureError.
class ScriptedEmbedder final : public Embedder {
public:
    ScriptedEmbedder(std::string id, std::size_t dimension,
                     std::map<std::string, std::vector<double>> table);
    const std::string& id() const noexcept override { return id_; }
    std::size_t dimension() const noexcept override { return dimension_; }
    std::vector<double> embed(const std::string& text) const override;

private:
    std::string id_;
    std::size_t dimension_;
    std::map<std::string, std::vector<double>> table_;
};

// <dir>/<sha256(text)>.json {"input", "embedding": [...]}.
class ReplayEmbedder final : public Embedder {
public:
    ReplayEmbedder(std::string id, std::string dir, std::size_t dimension);
    const std::string& id() const noexcept override { return id_; }
    std::size_t dimension() const noexcept override { return dimension_; }
    std::vector<double> embed(const std::string& text) const override;

private:
    std::string id_;
    std::string dir_;
    std::size_t dimension_;
};

class RecordingEmbedder final : public Embedder {
public:
    RecordingEmbedder(std::shared_ptr<const Embedder> inner, std::string dir);
    const std::string& id() const noexcept override { return inner_->id(); }
    std::size_t dimension() const noexcept override { return inner_->dimension(); }
    std::vector<double> embed(const std::string& text) const override;

private:
    std::shared_ptr<const Embedder> inner_;
    std::string dir_;
};

// POST {"input": text} -> {"embedding": [numbers]}.
class RemoteEmbedder final : public Embedder {
public:
    RemoteEmbedder(std::string id, gateway::RemoteOptions options, std::size_t dimension);
    const std::string& id() const noexcept override { return id_; }
    std::size_t dimension() const noexcept override { return dimension_; }
    std::vector<double> embed(const std::string& text) const override;
    bool healthy() const override;

private:
    std::string id_;
    gateway::RemoteOptions options_;
    std::size_t dimension_;
};

// Embeds non-empty text and checks the backend honoured its declared
// dimension (and `expected_dimension` when given). Throws InputError on empty
// text and ConfigError on a dimension mismatch.
std::vector<double> embed(const std::string& text, const Embedder& embedder,
                          std::optional<std::size_t> expected_dimension = std::nullopt);

// ---- index ---------------------------------------------------------------

// Unique key of an indexed unit.
using UnitKey = std::tuple<std::string, Granularity, std::string>;
UnitKey key_of(const ExtractionUnit& unit);

// Ranking order: score descending, then doc_id, granularity (summary first)
// and key text ascending.
bool ranks_before(const RetrievalHit& a, const RetrievalHit& b) noexcept;

class VectorIndex {
public:
    virtual ~VectorIndex() = default;
    virtual std::size_t dimension() const noexcept = 0;
    virtual std::size_t size() const = 0;
    // Replaces any entry with the same key. Throws ConfigError on dimension mismatch.
    virtual void upsert(EmbeddingRecord record) = 0;
    virtual std::vector<RetrievalHit> search(std::span<const double> query, std::size_t k,
                                             GranularityFilter filter) const = 0;
    // All records in key order.
    virtual std::vector<EmbeddingRecord> records() const = 0;
};

// Exhaustive scan over length-normalized vectors. Many concurrent searches,
// exclusive upserts.
class ExactIndex final : public VectorIndex {
public:
    explicit ExactIndex(std::size_t dimension);

    std::size_t dimension() const noexcept override { return dimension_; }
    std::size_t size() const override;
    void upsert(EmbeddingRecord record) override;
    std::vector<RetrievalHit> search(std::span<const double> query, std::size_t k,
                                     GranularityFilter filter) const override;
    std::vector<EmbeddingRecord> records() const override;

private:
    struct Entry {
        EmbeddingRecord record;
        std::vector<double> unit;  // vector / norm
    };

    std::size_t dimension_;
    mutable std::shared_mutex mutex_;
    std::vector<Entry> entries_;
    std::map<UnitKey, std::size_t> positions_;
};

inline constexpr int kIndexFormatVersion = 1;

class KnowledgeStore {
public:
    KnowledgeStore(std::string embedder_id, std::size_t dimension);

    const std::string& embedder_id() const noexcept { return embedder_id_; }
    std::size_t dimension() const noexcept { return index_->dimension(); }
    std::size_t size() const { return index_->size(); }

    void upsert(EmbeddingRecord record);
    // Embeds and upserts one unit.
    void add(ExtractionUnit unit, const Embedder& embedder);

    // Throws EmptyIndexError when nothing is stored and InputError when
    // k == 0. A filter that excludes every record yields zero hits.
    std::vector<RetrievalHit> retrieve(const std::string& query, std::size_t k,
                                       const Embedder& embedder,
                                       GranularityFilter filter = GranularityFilter::all) const;
    std::vector<RetrievalHit> retrieve_vector(std::span<const double> query, std::size_t k,
                                              GranularityFilter filter = GranularityFilter::all) const;

    std::vector<EmbeddingRecord> records() const { return index_->records(); }

    // Header (format_version, dimension, count, embedder_id) then records in
    // key order, one per line. Field order is fixed so save/load/save is
    // byte-identical.
    std::string to_json() const;
    static KnowledgeStore from_json(std::string_view text);
    void save(const std::string& path) const;
    static KnowledgeStore load(const std::string& path);

private:
    std::string embedder_id_;
    std::unique_ptr<VectorIndex> index_;
};

struct IndexingOptions {
    const Summarizer* summarizer = nullptr;         // summary units when set
    const DialogueGenerator* generator = nullptr;   // qa_pair units when set
    std::optional<std::vector<corpus::DocKind>> kinds;  // all kinds when unset
};

// Extracts, embeds and upserts every selected document. Returns the number
// of units written.
std::size_t index_corpus(const corpus::Corpus& corpus, const Embedder& embedder,
                         const IndexingOptions& options, KnowledgeStore& store);

}  // namespace stockchain::knowledge
