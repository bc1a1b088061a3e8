#include "stockchain/dialogue.hpp"

#include "stockchain/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace stockchain::dialogue {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

bool valid_session_id(std::string_view id) noexcept {
    if (id.empty() || id.size() > 128 || id.front() == '.') return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
               c == '_' || c == '-' || c == '.';
    });
}

RespondResult respond(DialogueSession& session, const std::string& query, const DialogueContext& ctx) {
    if (query.find_first_not_of(" \t\r\n") == std::string::npos) throw InputError("query is empty");
    if (!ctx.backend) throw ConfigError("no chat model backend configured");
    if (ctx.options.k == 0) throw InputError("k must be at least 1");

    RespondResult result;
    if (ctx.store && ctx.store->size() > 0) {
        if (!ctx.embedder) throw ConfigError("no embedding backend configured");
        result.hits = ctx.store->retrieve(query, ctx.options.k, *ctx.embedder, ctx.options.filter);
    }
    // A filter that excludes everything behaves like an empty index.
    std::optional<std::string_view> knowledge;
    if (!result.hits.empty()) knowledge = result.hits.front().record.unit.payload_text;

    result.input = gateway::build_stage2_input(knowledge, session.turns, query, *ctx.templates,
                                               ctx.options.stage2);
    result.response = gateway::complete(result.input, *ctx.backend);

    std::vector<Evidence> evidence;
    for (const auto& h : result.hits) {
        evidence.push_back({h.record.unit.doc_id, h.record.unit.granularity, h.score});
    }
    session.turns.push_back({query, result.response});
    session.evidence.push_back(std::move(evidence));
    result.turn = session.turns.size();
    return result;
}

void write_transcript(const DialogueSession& s, std::ostream& out) {
    for (std::size_t i = 0; i < s.turns.size(); ++i) {
        json line;
        line["session_id"] = s.session_id;
        line["turn"] = i + 1;
        line["query"] = s.turns[i].query;
        line["response"] = s.turns[i].response;
        json ev = json::array();
        if (i < s.evidence.size()) {
            for (const auto& e : s.evidence[i]) {
                json item;
                item["doc_id"] = e.doc_id;
                item["granularity"] = knowledge::to_string(e.granularity);
                item["score"] = e.score;
                ev.push_back(std::move(item));
            }
        }
        line["evidence"] = std::move(ev);
        out << line.dump() << '\n';
    }
}

std::string transcript(const DialogueSession& session) {
    std::ostringstream out;
    write_transcript(session, out);
    return out.str();
}

DialogueSession read_transcript(std::istream& in) {
    DialogueSession s;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto obj = json::parse(line);
            auto id = obj.at("session_id").get<std::string>();
            if (s.turns.empty()) {
                s.session_id = id;
            } else if (id != s.session_id) {
                throw InputError("transcript mixes sessions " + s.session_id + " and " + id);
            }
            if (obj.at("turn").get<std::size_t>() != s.turns.size() + 1) {
                throw InputError("transcript turns out of order");
            }
            s.turns.push_back({obj.at("query").get<std::string>(), obj.at("response").get<std::string>()});
            std::vector<Evidence> ev;
            for (const auto& item : obj.value("evidence", json::array())) {
                ev.push_back({item.at("doc_id").get<std::string>(),
                              knowledge::parse_granularity(item.at("granularity").get<std::string>()),
                              item.at("score").get<double>()});
            }
            s.evidence.push_back(std::move(ev));
        } catch (const json::exception& e) {
            throw InputError("transcript line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return s;
}

std::shared_ptr<SessionManager::Slot> SessionManager::find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = slots_.find(id);
    return it == slots_.end() ? nullptr : it->second;
}

std::shared_ptr<SessionManager::Slot> SessionManager::find_or_create(const std::string& id) {
    if (auto slot = find(id)) return slot;
    if (!valid_session_id(id)) throw InputError("invalid session id '" + id + "'");
    std::unique_lock lock(mutex_);
    auto& slot = slots_[id];
    if (!slot) {
        slot = std::make_shared<Slot>();
        slot->session.session_id = id;
    }
    return slot;
}

RespondResult SessionManager::respond(const std::string& session_id, const std::string& query,
                                      const DialogueContext& ctx) {
    auto slot = find_or_create(session_id);
    std::lock_guard lock(slot->mutex);
    return dialogue::respond(slot->session, query, ctx);
}

void SessionManager::reset(const std::string& session_id) {
    auto slot = find(session_id);
    if (!slot) throw NotFoundError("unknown session '" + session_id + "'");
    std::lock_guard lock(slot->mutex);
    dialogue::reset(slot->session);
}

std::optional<DialogueSession> SessionManager::snapshot(const std::string& session_id) const {
    auto slot = find(session_id);
    if (!slot) return std::nullopt;
    std::lock_guard lock(slot->mutex);
    return slot->session;
}

std::vector<std::string> SessionManager::session_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : slots_) ids.push_back(id);
    return ids;
}

void SessionManager::flush(const std::string& dir) const {
    fs::create_directories(dir);
    for (const auto& id : session_ids()) {
        auto s = snapshot(id);
        if (!s || s->turns.empty()) continue;
        auto path = fs::path(dir) / (id + ".jsonl");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write transcript '" + path.string() + "'");
        write_transcript(*s, out);
    }
}

void SessionManager::restore(const std::string& dir) {
    if (!fs::is_directory(dir)) return;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        std::ifstream in(path);
        auto session = read_transcript(in);
        if (session.turns.empty()) continue;
        if (!valid_session_id(session.session_id)) {
            throw InputError("transcript " + path.string() + " has an invalid session id");
        }
        auto slot = std::make_shared<Slot>();
        slot->session = std::move(session);
        std::unique_lock lock(mutex_);
        slots_[slot->session.session_id] = slot;
    }
}

}  // namespace stockchain::dialogue
