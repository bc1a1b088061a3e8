#pragma once

#include "stockchain/knowledge_store.hpp"
#include "stockchain/model_gateway.hpp"
#include "stockchain/templates.hpp"

#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace stockchain::dialogue {

struct Evidence {
    std::string doc_id;
    knowledge::Granularity granularity = knowledge::Granularity::summary;
    double score = 0.0;
};

struct DialogueSession {
    std::string session_id;
    std::vector<gateway::Turn> turns;           // oldest first
    std::vector<std::vector<Evidence>> evidence;  // parallel to turns
};

// Session ids double as transcript file names: 1-128 chars of [A-Za-z0-9_.-],
// not starting with a dot.
bool valid_session_id(std::string_view id) noexcept;

struct RespondOptions {
    std::size_t k = 1;
    knowledge::GranularityFilter filter = knowledge::GranularityFilter::all;
    gateway::Stage2Options stage2;
};

// What one respond call needs besides the session. `store` may be null,
// which behaves like an empty index.
struct DialogueContext {
    const knowledge::KnowledgeStore* store = nullptr;
    const gateway::ModelBackend* backend = nullptr;
    const knowledge::Embedder* embedder = nullptr;
    const TemplateSet* templates = &TemplateSet::builtin();
    RespondOptions options;
};

struct RespondResult {
    std::string response;
    std::vector<knowledge::RetrievalHit> hits;
    gateway::AssembledInput input;
    std::size_t turn = 0;  // 1-based number of the recorded turn
};

// Embed the query, retrieve, assemble with the session history, complete and
// record the turn. The top hit's payload is the knowledge section; with an
// empty index the no-knowledge marker is used and the turn is still recorded.
// Backend failures propagate and leave the session untouched.
RespondResult respond(DialogueSession& session, const std::string& query, const DialogueContext& ctx);

inline void reset(DialogueSession& session) {
    session.turns.clear();
    session.evidence.clear();
}

// Line-delimited JSON, one turn per line:
// {"session_id","turn","query","response","evidence":[{"doc_id","granularity","score"}]}
void write_transcript(const DialogueSession& session, std::ostream& out);
std::string transcript(const DialogueSession& session);
DialogueSession read_transcript(std::istream& in);

// Thread-safe session registry. Lookups share a reader lock; each session has
// its own mutex so one respond runs per session at a time while different
// sessions proceed concurrently.
class SessionManager {
public:
    // Creates the session on first use. Throws InputError on a bad id.
    RespondResult respond(const std::string& session_id, const std::string& query,
                          const DialogueContext& ctx);
    // Throws NotFoundError for an unknown session.
    void reset(const std::string& session_id);
    std::optional<DialogueSession> snapshot(const std::string& session_id) const;
    std::vector<std::string> session_ids() const;

    // <dir>/<session_id>.jsonl for every session with at least one turn.
    void flush(const std::string& dir) const;
    // Loads every *.jsonl transcript in `dir`; a missing dir is not an error.
    void restore(const std::string& dir);

private:
    struct Slot {
        std::mutex mutex;
        DialogueSession session;
    };

    std::shared_ptr<Slot> find(const std::string& id) const;
    std::shared_ptr<Slot> find_or_create(const std::string& id);

    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Slot>> slots_;
};

}  // namespace stockchain::dialogue
