#include "stockchain/cli.hpp"
#include "stockchain/errors.hpp"
#include "stockchain/server.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <sstream>

using namespace stockchain;
using namespace stockchain::service;
using json = nlohmann::ordered_json;

namespace {

EnvLookup no_env() {
    return [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
}

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args, const EnvLookup& env = no_env()) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err, env);
    return {code, out.str(), err.str()};
}

// Fixture corpus indexed with the hashing embedder, plus a scripted chat model.
struct Workspace {
    testutil::TempDir dir;
    std::string index = dir.file("index.json");

    Workspace() {
        auto r = cli({"index", "--corpus", testutil::fixture("corpus.jsonl"), "--out", index, "--embedder", "hash:64"});
        EXPECT_EQ(r.code, 0) << r.err;
    }

    RunConfig config() const {
        RunConfig c;
        c.index = index;
        c.embedder = "hash:64";
        c.model = "scripted:" + testutil::fixture("chat_model.json");
        c.runs_dir = dir.file("runs");
        c.sessions_dir = dir.file("sessions");
        return c;
    }
};

}  // namespace

TEST(Config, Precedence) {
    testutil::TempDir dir;
    testutil::write_file(dir.file("c.json"), R"({"k": 3, "rf": 0.01, "filter": "summary", "port": 9000})");
    auto env = [](const std::string& key) -> std::optional<std::string> {
        if (key == "STOCKCHAIN_K") return "5";
        if (key == "STOCKCHAIN_FILTER") return "qa_pair";
        return std::nullopt;
    };
    auto cfg = resolve_config(dir.file("c.json"), {{"k", "7"}}, env);
    EXPECT_EQ(cfg.k, 7u);
    EXPECT_EQ(cfg.filter, "qa_pair");
    EXPECT_EQ(cfg.rf, 0.01);
    EXPECT_EQ(cfg.port, 9000);
    EXPECT_EQ(cfg.embedder, "hash:256");
    EXPECT_THROW(resolve_config(std::nullopt, {{"k", "0"}}, no_env()), Error);
    EXPECT_THROW(resolve_config(std::nullopt, {{"nope", "1"}}, no_env()), ConfigError);
    EXPECT_THROW(resolve_config(dir.file("missing.json"), {}, no_env()), Error);
}

TEST(Config, DigestIgnoresApiKey) {
    RunConfig a, b;
    b.api_key = "secret";
    EXPECT_EQ(a.digest(), b.digest());
    EXPECT_EQ(a.to_json().dump().find("secret"), std::string::npos);
    b.k = 2;
    EXPECT_NE(a.digest(), b.digest());
}

TEST(Cli, ExitCodes) {
    auto usage = cli({"bogus"});
    EXPECT_EQ(usage.code, kExitUsage);
    EXPECT_EQ(json::parse(usage.err)["error"], "usage");
    auto missing = cli({"ingest", "--corpus", "/nonexistent/corpus.jsonl"});
    EXPECT_EQ(missing.code, kExitFailure);
    auto err = json::parse(missing.err);
    EXPECT_EQ(err["error"], "io");
    EXPECT_TRUE(err["message"].is_string());
    auto ok = cli({"ingest", "--corpus", testutil::fixture("corpus.jsonl")});
    EXPECT_EQ(ok.code, kExitOk) << ok.err;
    EXPECT_EQ(json::parse(ok.out)["total"], 51);
}

TEST(Cli, IndexThenRetrieve) {
    Workspace w;
    auto r = cli({"retrieve", "--index", w.index, "--embedder", "hash:64", "-k", "1", "-q",
                  "What is the meaning of k line?"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto hit = json::parse(r.out);
    EXPECT_EQ(hit["doc_id"], "qa-001");
    auto mismatch = cli({"retrieve", "--index", w.index, "--embedder", "hash:32", "-q", "x"});
    EXPECT_EQ(mismatch.code, kExitFailure);
    EXPECT_EQ(json::parse(mismatch.err)["error"], "config");
}

TEST(Cli, PredictDeterministicAndBacktest) {
    testutil::TempDir dir;
    auto model = "scripted:" + testutil::fixture("model_up.json");
    std::string preds[2], metas[2];
    for (int i = 0; i < 2; ++i) {
        auto r = cli({"predict", "--corpus", testutil::fixture("corpus.jsonl"), "--model", model, "--out",
                      dir.file("a.jsonl")});
        ASSERT_EQ(r.code, 0) << r.err;
        preds[i] = testutil::read_file(dir.file("a.jsonl"));
        metas[i] = testutil::read_file(dir.file("a.jsonl.meta.json"));
    }
    EXPECT_EQ(preds[0], preds[1]);
    EXPECT_EQ(metas[0], metas[1]);
    auto meta = json::parse(testutil::read_file(dir.file("a.jsonl.meta.json")));
    EXPECT_EQ(meta["predictions"], 40);

    auto bt = cli({"backtest", "--predictions", dir.file("a.jsonl"), "--prices", testutil::fixture("prices.jsonl"),
                   "--benchmark", testutil::fixture("benchmark.csv")});
    ASSERT_EQ(bt.code, 0) << bt.err;
    auto report = json::parse(bt.out);
    for (auto key : {"arr", "aerr", "anvol", "sr", "md", "cr", "mdd", "acc"}) {
        EXPECT_TRUE(report["metrics"].contains(key)) << key;
    }
    EXPECT_EQ(report["run_id"].get<std::string>().size(), 16u);
}

TEST(Cli, EvalAndChat) {
    auto ev = cli({"eval", "--manifest", testutil::fixture("eval_manifest.jsonl"), "--judge",
                   "scripted:" + testutil::fixture("judge_tie.json")});
    ASSERT_EQ(ev.code, 0) << ev.err;
    EXPECT_EQ(json::parse(ev.out)["aggregates"]["tie"], 2);

    Workspace w;
    auto chat = cli({"chat", "--index", w.index, "--embedder", "hash:64", "--model",
                     "scripted:" + testutil::fixture("chat_model.json"), "-q", "hello", "-q", "again",
                     "--transcript", w.dir.file("t.jsonl")});
    ASSERT_EQ(chat.code, 0) << chat.err;
    auto transcript = testutil::read_file(w.dir.file("t.jsonl"));
    EXPECT_EQ(std::count(transcript.begin(), transcript.end(), '\n'), 2);
}

TEST(Http, StatusMapping) {
    EXPECT_EQ(http_status("input"), 400);
    EXPECT_EQ(http_status("not_found"), 404);
    EXPECT_EQ(http_status("empty_index"), 409);
    EXPECT_EQ(http_status("coverage"), 422);
    EXPECT_EQ(http_status("transport"), 502);
    EXPECT_EQ(http_status("io"), 500);
}

class ServerTest : public ::testing::Test {
protected:
    Workspace w;
    std::shared_ptr<ServiceContext> ctx = make_context(w.config());
    ApiServer server{ctx};
    std::unique_ptr<httplib::Client> client;

    void SetUp() override {
        int port = server.bind("127.0.0.1", 0);
        server.start();
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
    }
    void TearDown() override { server.stop(); }

    json post(const std::string& path, const json& body, int expect = 200) {
        auto res = client->Post(path, body.dump(), "application/json");
        EXPECT_TRUE(res);
        if (!res) return {};
        EXPECT_EQ(res->status, expect) << res->body;
        return json::parse(res->body);
    }
    json get(const std::string& path, int expect = 200) {
        auto res = client->Get(path);
        EXPECT_TRUE(res);
        if (!res) return {};
        EXPECT_EQ(res->status, expect) << res->body;
        return json::parse(res->body);
    }
};

TEST_F(ServerTest, Health) {
    auto h = get("/api/health");
    EXPECT_EQ(h["status"], "ok");
    EXPECT_EQ(h["index_size"], 51);
}

TEST_F(ServerTest, ChatSessionLifecycle) {
    auto r1 = post("/api/chat", {{"session_id", "web"}, {"query", "What is the meaning of k line?"}});
    EXPECT_EQ(r1["response"], "S");
    EXPECT_EQ(r1["turn"], 1);
    ASSERT_EQ(r1["evidence"].size(), 1u);
    EXPECT_EQ(r1["evidence"][0]["doc_id"], "qa-001");
    auto r2 = post("/api/chat", {{"session_id", "web"}, {"query", "more"}});
    EXPECT_EQ(r2["turn"], 2);
    auto s = get("/api/session?session_id=web");
    EXPECT_EQ(s["turns"].size(), 2u);
    post("/api/session/reset", {{"session_id", "web"}});
    EXPECT_EQ(get("/api/session?session_id=web")["turns"].size(), 0u);
    post("/api/session/reset", {{"session_id", "nobody"}}, 404);
    get("/api/session?session_id=nobody", 404);
    post("/api/chat", {{"session_id", "web"}}, 400);
    auto bad = client->Post("/api/chat", "not json", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
}

TEST_F(ServerTest, Retrieve) {
    auto r = get("/api/retrieve?q=What%20is%20the%20meaning%20of%20k%20line%3F&k=3");
    ASSERT_EQ(r["hits"].size(), 3u);
    EXPECT_EQ(r["hits"][0]["doc_id"], "qa-001");
    get("/api/retrieve?q=x&k=0", 400);
}

TEST_F(ServerTest, BacktestMatchesCliBytes) {
    auto preds = w.dir.file("p.jsonl");
    ASSERT_EQ(cli({"predict", "--corpus", testutil::fixture("corpus.jsonl"), "--model",
                   "scripted:" + testutil::fixture("model_up.json"), "--out", preds})
                  .code,
              0);
    auto via_cli = cli({"backtest", "--predictions", preds, "--prices", testutil::fixture("prices.jsonl"),
                        "--benchmark", testutil::fixture("benchmark.csv")});
    ASSERT_EQ(via_cli.code, 0);
    json body{{"predictions", preds},
              {"prices", testutil::fixture("prices.jsonl")},
              {"benchmark", testutil::fixture("benchmark.csv")}};
    auto res = client->Post("/api/backtest", body.dump(), "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    EXPECT_EQ(res->body, via_cli.out);

    auto run_id = json::parse(res->body)["run_id"].get<std::string>();
    auto csv = client->Get("/api/equity-curve?run=" + run_id);
    ASSERT_TRUE(csv);
    EXPECT_EQ(csv->status, 200);
    EXPECT_EQ(csv->body.rfind("month,strategy,benchmark\n", 0), 0u);
    EXPECT_TRUE(std::filesystem::exists(w.dir.file("runs/" + run_id + ".csv")));
    get("/api/equity-curve?run=0000000000000000", 404);

    json missing{{"predictions", w.dir.file("none.jsonl")}, {"prices", testutil::fixture("prices.jsonl")}};
    auto err = client->Post("/api/backtest", missing.dump(), "application/json");
    ASSERT_TRUE(err);
    EXPECT_EQ(err->status, 500);
}

TEST_F(ServerTest, CorsPreflight) {
    auto res = client->Options("/api/chat");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 204);
    EXPECT_TRUE(res->has_header("Access-Control-Allow-Origin"));
}

TEST(Server, PortInUse) {
    Workspace w;
    auto ctx = make_context(w.config());
    ApiServer a(ctx);
    int port = a.bind("127.0.0.1", 0);
    ApiServer b(ctx);
    EXPECT_THROW(b.bind("127.0.0.1", port), ConfigError);
}

TEST(Server, SessionsFlushedOnStop) {
    Workspace w;
    auto cfg = w.config();
    {
        auto ctx = make_context(cfg);
        ApiServer s(ctx);
        int port = s.bind("127.0.0.1", 0);
        s.start();
        httplib::Client c("127.0.0.1", port);
        auto res = c.Post("/api/chat", json{{"session_id", "kept"}, {"query", "hi"}}.dump(), "application/json");
        ASSERT_TRUE(res);
        s.stop();
    }
    auto again = make_context(cfg);
    ASSERT_TRUE(again->sessions.snapshot("kept"));
    EXPECT_EQ(again->sessions.snapshot("kept")->turns.size(), 1u);
}

TEST(Server, HealthDegradedWithoutModel) {
    RunConfig cfg;
    cfg.embedder = "hash:16";
    auto ctx = make_context(cfg);
    ApiServer s(ctx);
    int port = s.bind("127.0.0.1", 0);
    s.start();
    httplib::Client c("127.0.0.1", port);
    auto res = c.Get("/api/health");
    ASSERT_TRUE(res);
    EXPECT_EQ(json::parse(res->body)["status"], "degraded");
    auto chat = c.Post("/api/chat", json{{"session_id", "x"}, {"query", "hi"}}.dump(), "application/json");
    ASSERT_TRUE(chat);
    EXPECT_GE(chat->status, 400);
    s.stop();
}
