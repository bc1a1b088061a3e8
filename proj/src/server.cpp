#include "stockchain/server.hpp"

#include "stockchain/errors.hpp"
#include "stockchain/text.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace stockchain::service {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kSnippetChars = 200;

bool safe_name(const std::string& s) { return dialogue::valid_session_id(s); }

json hit_json(const knowledge::RetrievalHit& h) {
    json j;
    j["doc_id"] = h.record.unit.doc_id;
    j["granularity"] = knowledge::to_string(h.record.unit.granularity);
    j["score"] = h.score;
    j["key_text"] = h.record.unit.key_text;
    j["snippet"] = text::utf8_prefix(h.record.unit.payload_text, kSnippetChars);
    return j;
}

json session_json(const dialogue::DialogueSession& s) {
    json turns = json::array();
    for (std::size_t i = 0; i < s.turns.size(); ++i) {
        json t;
        t["turn"] = i + 1;
        t["query"] = s.turns[i].query;
        t["response"] = s.turns[i].response;
        json ev = json::array();
        if (i < s.evidence.size()) {
            for (const auto& e : s.evidence[i]) {
                ev.push_back({{"doc_id", e.doc_id}, {"granularity", knowledge::to_string(e.granularity)},
                              {"score", e.score}});
            }
        }
        t["evidence"] = std::move(ev);
        turns.push_back(std::move(t));
    }
    return {{"session_id", s.session_id}, {"turns", std::move(turns)}};
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::string& code, const std::string& message) {
    send_json(res, {{"error", code}, {"message", message}}, http_status(code));
}

json parse_body(const httplib::Request& req) {
    try {
        auto body = json::parse(req.body);
        if (!body.is_object()) throw InputError("request body must be a JSON object");
        return body;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed JSON body: ") + e.what());
    }
}

std::string required_string(const json& body, const char* key) {
    if (!body.contains(key) || !body[key].is_string()) {
        throw InputError(std::string("missing string field '") + key + "'");
    }
    return body[key].get<std::string>();
}

// Runs `fn`, turning exceptions into JSON error replies.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        send_error(res, e.code(), e.what());
    } catch (const std::exception& e) {
        send_error(res, "internal", e.what());
    }
}

}  // namespace

int http_status(const std::string& code) noexcept {
    if (code == "input" || code == "parse" || code == "corpus") return 400;
    if (code == "not_found") return 404;
    if (code == "empty_index") return 409;
    if (code == "coverage") return 422;
    if (code == "transport" || code == "judge_format") return 502;
    return 500;
}

dialogue::DialogueContext ServiceContext::dialogue_context() const {
    dialogue::DialogueContext ctx;
    ctx.store = store.get();
    ctx.backend = model.get();
    ctx.embedder = embedder.get();
    ctx.templates = &templates;
    ctx.options.k = config.k;
    ctx.options.filter = knowledge::parse_filter(config.filter);
    ctx.options.stage2.history_budget_chars = config.history_budget;
    return ctx;
}

void ServiceContext::store_run(const pipeline::BacktestRun& run) {
    {
        std::lock_guard lock(runs_mutex_);
        runs_[run.run_id] = run.equity_csv;
    }
    if (!config.runs_dir.empty()) {
        fs::create_directories(config.runs_dir);
        std::ofstream csv(fs::path(config.runs_dir) / (run.run_id + ".csv"), std::ios::binary | std::ios::trunc);
        csv << run.equity_csv;
        std::ofstream report(fs::path(config.runs_dir) / (run.run_id + ".json"), std::ios::binary | std::ios::trunc);
        report << run.report_json;
        if (!csv || !report) throw IoError("cannot write run " + run.run_id + " under '" + config.runs_dir + "'");
    }
}

std::optional<std::string> ServiceContext::equity_curve(const std::string& run_id) const {
    {
        std::lock_guard lock(runs_mutex_);
        if (auto it = runs_.find(run_id); it != runs_.end()) return it->second;
    }
    if (config.runs_dir.empty() || !safe_name(run_id)) return std::nullopt;
    std::ifstream in(fs::path(config.runs_dir) / (run_id + ".csv"), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

pipeline::BacktestFiles ServiceContext::backtest_files(const std::string& request_body) const {
    json body;
    try {
        body = json::parse(request_body);
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed JSON body: ") + e.what());
    }
    if (!body.is_object()) throw InputError("request body must be a JSON object");

    fs::path base;
    if (body.contains("scenario")) {
        auto id = required_string(body, "scenario");
        if (config.scenarios_dir.empty()) throw NotFoundError("no scenarios directory configured");
        if (!safe_name(id)) throw InputError("invalid scenario id '" + id + "'");
        auto path = fs::path(config.scenarios_dir) / (id + ".json");
        std::ifstream in(path);
        if (!in) throw NotFoundError("unknown scenario '" + id + "'");
        try {
            body = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("scenario '" + id + "': " + e.what());
        }
        base = path.parent_path();
    }
    auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return (path.is_relative() && !base.empty() ? base / path : path).string();
    };
    pipeline::BacktestFiles files;
    files.predictions = resolve(required_string(body, "predictions"));
    files.prices = resolve(required_string(body, "prices"));
    if (body.contains("benchmark") && !body["benchmark"].is_null()) {
        files.benchmark = resolve(required_string(body, "benchmark"));
    }
    files.rf = body.contains("rf") ? body["rf"].get<double>() : config.rf;
    return files;
}

std::shared_ptr<ServiceContext> make_context(const RunConfig& config) {
    config.validate();
    auto ctx = std::make_shared<ServiceContext>();
    ctx->config = config;
    ctx->templates = load_templates(config);
    if (!config.model.empty()) ctx->model = make_model(config.model, config);
    ctx->embedder = make_embedder(config.embedder, config);
    if (!config.index.empty()) {
        auto store = std::make_shared<knowledge::KnowledgeStore>(knowledge::KnowledgeStore::load(config.index));
        if (store->embedder_id() != ctx->embedder->id()) {
            throw ConfigError("index was built with embedder '" + store->embedder_id() + "' but '" +
                              ctx->embedder->id() + "' is configured");
        }
        ctx->store = std::move(store);
    }
    if (!config.sessions_dir.empty()) ctx->sessions.restore(config.sessions_dir);
    return ctx;
}

struct ApiServer::Impl {
    std::shared_ptr<ServiceContext> ctx;
    httplib::Server server;
    std::thread thread;
    bool flushed = false;
};

ApiServer::ApiServer(std::shared_ptr<ServiceContext> ctx) : impl_(std::make_unique<Impl>()) {
    impl_->ctx = std::move(ctx);
    auto& srv = impl_->server;
    auto* c = impl_->ctx.get();

    // httplib's default also sets SO_REUSEPORT, which would let a second
    // server share a taken port instead of failing.
    srv.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });

    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    srv.Post("/api/chat", [c](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto body = parse_body(req);
            auto session_id = required_string(body, "session_id");
            auto query = required_string(body, "query");
            auto dctx = c->dialogue_context();
            if (body.contains("k")) dctx.options.k = body["k"].get<std::size_t>();
            auto result = c->sessions.respond(session_id, query, dctx);
            json evidence = json::array();
            for (const auto& h : result.hits) evidence.push_back(hit_json(h));
            send_json(res, {{"session_id", session_id},
                            {"response", result.response},
                            {"evidence", std::move(evidence)},
                            {"turn", result.turn}});
        });
    });

    srv.Post("/api/session/reset", [c](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto session_id = required_string(parse_body(req), "session_id");
            c->sessions.reset(session_id);
            send_json(res, {{"session_id", session_id}, {"turns", 0}});
        });
    });

    srv.Get("/api/session", [c](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto id = req.get_param_value("session_id");
            if (id.empty()) throw InputError("missing session_id");
            auto s = c->sessions.snapshot(id);
            if (!s) throw NotFoundError("unknown session '" + id + "'");
            send_json(res, session_json(*s));
        });
    });

    srv.Get("/api/retrieve", [c](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto q = req.get_param_value("q");
            if (q.empty()) throw InputError("missing q");
            std::size_t k = c->config.k;
            if (req.has_param("k")) {
                try {
                    k = std::stoul(req.get_param_value("k"));
                } catch (const std::exception&) {
                    throw InputError("k must be a positive integer");
                }
            }
            auto filter = knowledge::parse_filter(
                req.has_param("filter") ? req.get_param_value("filter") : c->config.filter);
            if (!c->store) throw EmptyIndexError();
            json hits = json::array();
            for (const auto& h : c->store->retrieve(q, k, *c->embedder, filter)) hits.push_back(hit_json(h));
            send_json(res, {{"hits", std::move(hits)}});
        });
    });

    srv.Post("/api/backtest", [c](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto run = pipeline::run_backtest_files(c->backtest_files(req.body));
            c->store_run(run);
            res.status = 200;
            res.set_content(run.report_json, "application/json");
        });
    });

    srv.Get("/api/equity-curve", [c](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto run = req.get_param_value("run");
            if (run.empty()) throw InputError("missing run");
            auto csv = c->equity_curve(run);
            if (!csv) throw NotFoundError("unknown run '" + run + "'");
            res.status = 200;
            res.set_content(*csv, "text/csv");
        });
    });

    srv.Get("/api/health", [c](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            bool model_ok = c->model && c->model->healthy() && !c->model->nonconforming();
            bool embedder_ok = c->embedder && c->embedder->healthy();
            json body;
            body["status"] = model_ok && embedder_ok ? "ok" : "degraded";
            body["model"] = {{"id", c->model ? c->model->id() : ""}, {"healthy", model_ok}};
            body["embedder"] = {{"id", c->embedder ? c->embedder->id() : ""}, {"healthy", embedder_ok}};
            body["index_size"] = c->store ? c->store->size() : 0;
            body["templates"] = c->templates.version();
            send_json(res, body);
        });
    });
}

ApiServer::~ApiServer() {
    try {
        stop();
    } catch (...) {
    }
}

int ApiServer::bind(const std::string& host, int port) {
    if (port == 0) {
        port_ = impl_->server.bind_to_any_port(host);
        if (port_ < 0) throw ConfigError("cannot bind " + host);
    } else {
        if (!impl_->server.bind_to_port(host, port)) {
            throw ConfigError("cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
        }
        port_ = port;
    }
    return port_;
}

void ApiServer::run() { impl_->server.listen_after_bind(); }

void ApiServer::start() {
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void ApiServer::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
    if (!impl_->flushed && !impl_->ctx->config.sessions_dir.empty()) {
        impl_->ctx->sessions.flush(impl_->ctx->config.sessions_dir);
        impl_->flushed = true;
    }
}

}  // namespace stockchain::service
