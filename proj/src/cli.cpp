#include "stockchain/cli.hpp"

#include "stockchain/corpus.hpp"
#include "stockchain/digest.hpp"
#include "stockchain/errors.hpp"
#include "stockchain/eval.hpp"
#include "stockchain/pipeline.hpp"
#include "stockchain/server.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace stockchain::service {

using json = nlohmann::ordered_json;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << content;
    if (!out) throw IoError("failed writing '" + path + "'");
}

void require(const std::string& value, const char* what) {
    if (value.empty()) throw ConfigError(std::string("missing ") + what);
}

json hit_line(const knowledge::RetrievalHit& h) {
    json j;
    j["doc_id"] = h.record.unit.doc_id;
    j["granularity"] = knowledge::to_string(h.record.unit.granularity);
    j["score"] = h.score;
    j["key_text"] = h.record.unit.key_text;
    j["payload"] = h.record.unit.payload_text;
    return j;
}

json stats_json(const corpus::CorpusStats& s) {
    json counts;
    for (const auto& [kind, n] : s.counts) counts[std::string(corpus::to_string(kind))] = n;
    json j;
    j["total"] = s.total;
    j["counts"] = std::move(counts);
    j["mean_input_length"] = s.mean_input_length;
    j["mean_label_length"] = s.mean_label_length;
    j["labeled"] = s.labeled;
    j["length_unit"] = corpus::CorpusStats::length_unit;
    return j;
}

std::shared_ptr<knowledge::KnowledgeStore> open_index(const RunConfig& cfg, const knowledge::Embedder& embedder) {
    require(cfg.index, "--index");
    auto store = std::make_shared<knowledge::KnowledgeStore>(knowledge::KnowledgeStore::load(cfg.index));
    if (store->embedder_id() != embedder.id()) {
        throw ConfigError("index was built with embedder '" + store->embedder_id() + "' but '" + embedder.id() +
                          "' is configured");
    }
    return store;
}

struct Options {
    std::optional<std::string> config_file;
    std::map<std::string, std::string> flags;
    // Subcommand-local values that are not part of RunConfig.
    std::string out, meta, equity_csv, manifest, tokenizer = "unicode", session = "cli", input, transcript;
    std::vector<std::string> queries;
    std::vector<std::string> kinds;
};

void cfg_option(CLI::App* app, const std::string& name, const std::string& key, Options& o,
                const std::string& desc) {
    app->add_option_function<std::string>(name, [&o, key](const std::string& v) { o.flags[key] = v; }, desc);
}

int cmd_ingest(const RunConfig& cfg, const Options& o, std::ostream& out) {
    require(cfg.corpus, "--corpus");
    auto stats = stats_json(corpus::ingest_corpus(cfg.corpus));
    if (!o.out.empty()) write_file(o.out, stats.dump(2) + "\n");
    out << stats.dump() << '\n';
    return kExitOk;
}

int cmd_index(const RunConfig& cfg, const Options& o, std::ostream& out) {
    require(cfg.corpus, "--corpus");
    require(cfg.index, "--out");
    auto templates = load_templates(cfg);
    auto corpus = corpus::load_corpus(cfg.corpus);
    auto embedder = make_embedder(cfg.embedder, cfg);
    auto summarizer = make_summarizer(cfg.extractor, cfg, templates);
    auto generator = make_generator(cfg.qa_extractor, cfg, templates);

    knowledge::IndexingOptions opts;
    opts.summarizer = summarizer.get();
    opts.generator = generator.get();
    if (!o.kinds.empty()) {
        std::vector<corpus::DocKind> kinds;
        for (const auto& k : o.kinds) kinds.push_back(corpus::parse_kind(k));
        opts.kinds = std::move(kinds);
    }
    knowledge::KnowledgeStore store(embedder->id(), embedder->dimension());
    auto units = knowledge::index_corpus(corpus, *embedder, opts, store);
    store.save(cfg.index);
    out << json{{"index", cfg.index}, {"units", units}, {"embedder_id", store.embedder_id()}}.dump() << '\n';
    return kExitOk;
}

int cmd_retrieve(const RunConfig& cfg, const Options& o, std::ostream& out) {
    if (o.queries.size() != 1) throw ConfigError("retrieve takes exactly one -q");
    auto embedder = make_embedder(cfg.embedder, cfg);
    auto store = open_index(cfg, *embedder);
    for (const auto& h : store->retrieve(o.queries.front(), cfg.k, *embedder, knowledge::parse_filter(cfg.filter))) {
        out << hit_line(h).dump() << '\n';
    }
    return kExitOk;
}

int cmd_predict(const RunConfig& cfg, const Options& o, std::ostream& out) {
    require(cfg.corpus, "--corpus");
    require(cfg.model, "--model");
    require(cfg.predictions, "--out");
    auto templates = load_templates(cfg);
    auto corpus = corpus::load_corpus(cfg.corpus);
    auto model = make_model(cfg.model, cfg);
    auto predictions = pipeline::predict(corpus, *model, templates);

    std::ostringstream body;
    prediction::write_predictions(predictions, body);
    write_file(cfg.predictions, body.str());

    json meta;
    meta["config_digest"] = cfg.digest();
    meta["model_id"] = model->id();
    meta["model_kind"] = gateway::to_string(model->kind());
    meta["decoding"] = model->generation().strategy;
    meta["max_new_tokens"] = model->generation().max_new_tokens;
    meta["template_version"] = templates.version();
    meta["seed"] = cfg.seed;
    meta["corpus_sha256"] = sha256_hex(read_file(cfg.corpus));
    meta["predictions"] = predictions.size();
    meta["config"] = cfg.to_json();
    auto meta_path = o.meta.empty() ? cfg.predictions + ".meta.json" : o.meta;
    write_file(meta_path, meta.dump(2) + "\n");
    out << json{{"predictions", predictions.size()}, {"out", cfg.predictions}, {"meta", meta_path}}.dump() << '\n';
    return kExitOk;
}

int cmd_backtest(const RunConfig& cfg, const Options& o, std::ostream& out) {
    require(cfg.predictions, "--predictions");
    pipeline::BacktestRun run;
    if (!cfg.prices.empty()) {
        run = pipeline::run_backtest_files({cfg.predictions, cfg.prices, cfg.benchmark, cfg.rf});
    } else {
        require(cfg.corpus, "--prices or --corpus");
        auto corpus = corpus::load_corpus(cfg.corpus);
        std::optional<corpus::PriceSeries> bench;
        if (!cfg.benchmark.empty()) bench = pipeline::load_benchmark(cfg.benchmark);
        run = pipeline::run_backtest(prediction::load_predictions(cfg.predictions),
                                     pipeline::market_data_from_corpus(corpus), bench, cfg.rf);
    }
    if (!o.equity_csv.empty()) write_file(o.equity_csv, run.equity_csv);
    if (!cfg.runs_dir.empty()) {
        std::filesystem::create_directories(cfg.runs_dir);
        write_file((std::filesystem::path(cfg.runs_dir) / (run.run_id + ".csv")).string(), run.equity_csv);
        write_file((std::filesystem::path(cfg.runs_dir) / (run.run_id + ".json")).string(), run.report_json);
    }
    if (o.out.empty()) {
        out << run.report_json;
    } else {
        write_file(o.out, run.report_json);
        out << json{{"run_id", run.run_id}, {"out", o.out}}.dump() << '\n';
    }
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const Options& o, std::ostream& out) {
    require(o.manifest, "--manifest");
    auto items = eval::load_manifest(o.manifest);
    auto templates = load_templates(cfg);
    std::shared_ptr<const gateway::ModelBackend> judge;
    if (!cfg.judge.empty()) judge = make_model(cfg.judge, cfg);
    eval::EvalOptions opts;
    opts.judge = judge.get();
    opts.parallelism = cfg.parallelism;
    opts.templates = &templates;
    if (o.tokenizer == "unicode") {
        opts.tokenizer = text::TokenizerKind::unicode;
    } else if (o.tokenizer == "whitespace") {
        opts.tokenizer = text::TokenizerKind::whitespace;
    } else {
        throw ConfigError("unknown tokenizer '" + o.tokenizer + "'");
    }
    auto result = eval::run_eval(items, opts);
    result["metadata"] = {{"judge_id", judge ? judge->id() : ""},
                          {"template_version", templates.version()},
                          {"tokenizer", o.tokenizer},
                          {"seed", cfg.seed}};
    auto text = result.dump(2) + "\n";
    if (o.out.empty()) {
        out << text;
    } else {
        write_file(o.out, text);
    }
    return kExitOk;
}

int cmd_chat(const RunConfig& cfg, const Options& o, std::ostream& out) {
    require(cfg.model, "--model");
    std::vector<std::string> queries = o.queries;
    if (queries.empty()) {
        std::ifstream file;
        if (!o.input.empty()) {
            file.open(o.input);
            if (!file) throw IoError("cannot read '" + o.input + "'");
        }
        std::istream& in = o.input.empty() ? std::cin : file;
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") != std::string::npos) queries.push_back(line);
        }
    }
    auto ctx = make_context(cfg);
    auto dctx = ctx->dialogue_context();
    dialogue::DialogueSession session{o.session, {}, {}};
    if (!dialogue::valid_session_id(session.session_id)) throw InputError("invalid session id");
    for (const auto& q : queries) {
        auto r = dialogue::respond(session, q, dctx);
        json ev = json::array();
        for (const auto& h : r.hits) ev.push_back({{"doc_id", h.record.unit.doc_id}, {"score", h.score}});
        out << json{{"turn", r.turn}, {"response", r.response}, {"evidence", std::move(ev)}}.dump() << '\n';
    }
    if (!o.transcript.empty()) write_file(o.transcript, dialogue::transcript(session));
    return kExitOk;
}

int cmd_serve(const RunConfig& cfg, std::ostream& out) {
    auto ctx = make_context(cfg);
    ApiServer server(ctx);
    int port = server.bind(cfg.host, cfg.port);
    g_stop = false;
    auto old_int = std::signal(SIGINT, on_signal);
    auto old_term = std::signal(SIGTERM, on_signal);
    server.start();
    out << json{{"listening", cfg.host + ":" + std::to_string(port)}}.dump() << std::endl;
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    std::signal(SIGINT, old_int);
    std::signal(SIGTERM, old_term);
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
    CLI::App app{"stockchain: retrieval-grounded trend prediction, backtesting and financial Q&A"};
    app.name("stockchain");
    app.require_subcommand(1);
    Options o;

    app.add_option_function<std::string>("--config", [&o](const std::string& v) { o.config_file = v; },
                                         "JSON config file (flags > env > file)");
    cfg_option(&app, "--seed", "seed", o, "seed recorded in run metadata");
    cfg_option(&app, "--templates", "templates", o, "template directory or 'builtin'");

    auto* ingest = app.add_subcommand("ingest", "validate a corpus and print its statistics");
    cfg_option(ingest, "--corpus", "corpus", o, "corpus JSONL");
    ingest->add_option("--out", o.out, "also write the statistics here");

    auto* index = app.add_subcommand("index", "build a knowledge index");
    cfg_option(index, "--corpus", "corpus", o, "corpus JSONL");
    cfg_option(index, "--out", "index", o, "index file to write");
    cfg_option(index, "--embedder", "embedder", o, "embedder spec");
    cfg_option(index, "--extractor", "extractor", o, "summary extractor spec");
    cfg_option(index, "--qa-extractor", "qa_extractor", o, "qa-pair extractor spec");
    index->add_option("--kinds", o.kinds, "document kinds to index")->delimiter(',');

    auto* retrieve = app.add_subcommand("retrieve", "query an index");
    cfg_option(retrieve, "--index", "index", o, "index file");
    cfg_option(retrieve, "--embedder", "embedder", o, "embedder spec");
    cfg_option(retrieve, "-k", "k", o, "number of hits");
    cfg_option(retrieve, "--filter", "filter", o, "all | summary | qa_pair");
    retrieve->add_option("-q,--query", o.queries, "query text");

    auto* predict = app.add_subcommand("predict", "stage-1 trend predictions");
    cfg_option(predict, "--corpus", "corpus", o, "corpus JSONL");
    cfg_option(predict, "--model", "model", o, "model spec");
    cfg_option(predict, "--out", "predictions", o, "predictions JSONL to write");
    predict->add_option("--meta", o.meta, "run metadata path (default <out>.meta.json)");

    auto* backtest = app.add_subcommand("backtest", "cap-weighted monthly backtest");
    cfg_option(backtest, "--predictions", "predictions", o, "predictions JSONL");
    cfg_option(backtest, "--prices", "prices", o, "prices JSONL");
    cfg_option(backtest, "--corpus", "corpus", o, "take prices and market values from a corpus instead");
    cfg_option(backtest, "--benchmark", "benchmark", o, "benchmark CSV (month,close)");
    cfg_option(backtest, "--rf", "rf", o, "risk-free rate for SR");
    cfg_option(backtest, "--runs-dir", "runs_dir", o, "also store <run_id>.json/.csv here");
    backtest->add_option("--out", o.out, "report JSON path (stdout when absent)");
    backtest->add_option("--equity-csv", o.equity_csv, "equity curve CSV path");

    auto* evalc = app.add_subcommand("eval", "ROUGE and pairwise preference evaluation");
    evalc->add_option("--manifest", o.manifest, "eval manifest JSONL");
    cfg_option(evalc, "--judge", "judge", o, "judge model spec");
    cfg_option(evalc, "--parallelism", "parallelism", o, "concurrent judge calls");
    evalc->add_option("--tokenizer", o.tokenizer, "unicode | whitespace");
    evalc->add_option("--out", o.out, "results JSON path (stdout when absent)");

    auto* chat = app.add_subcommand("chat", "multi-turn Q&A from the command line");
    cfg_option(chat, "--index", "index", o, "index file");
    cfg_option(chat, "--model", "model", o, "model spec");
    cfg_option(chat, "--embedder", "embedder", o, "embedder spec");
    cfg_option(chat, "-k", "k", o, "hits per turn");
    cfg_option(chat, "--filter", "filter", o, "all | summary | qa_pair");
    cfg_option(chat, "--history-budget", "history_budget", o, "history budget in characters");
    chat->add_option("-q,--query", o.queries, "queries, in order (otherwise read from --input or stdin)");
    chat->add_option("--input", o.input, "file with one query per line");
    chat->add_option("--session", o.session, "session id");
    chat->add_option("--transcript", o.transcript, "write the transcript JSONL here");

    auto* serve = app.add_subcommand("serve", "HTTP API");
    cfg_option(serve, "--index", "index", o, "index file");
    cfg_option(serve, "--model", "model", o, "model spec");
    cfg_option(serve, "--embedder", "embedder", o, "embedder spec");
    cfg_option(serve, "-k", "k", o, "hits per turn");
    cfg_option(serve, "--filter", "filter", o, "all | summary | qa_pair");
    cfg_option(serve, "--host", "host", o, "bind address");
    cfg_option(serve, "--port", "port", o, "port");
    cfg_option(serve, "--sessions-dir", "sessions_dir", o, "session transcripts directory");
    cfg_option(serve, "--runs-dir", "runs_dir", o, "backtest runs directory");
    cfg_option(serve, "--scenarios-dir", "scenarios_dir", o, "stored backtest scenarios");
    cfg_option(serve, "--history-budget", "history_budget", o, "history budget in characters");
    cfg_option(serve, "--rf", "rf", o, "default risk-free rate");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
        return kExitUsage;
    }

    try {
        auto cfg = resolve_config(o.config_file, o.flags, env);
        cfg.validate();
        auto* sub = app.get_subcommands().front();
        const auto& name = sub->get_name();
        if (name == "ingest") return cmd_ingest(cfg, o, out);
        if (name == "index") return cmd_index(cfg, o, out);
        if (name == "retrieve") return cmd_retrieve(cfg, o, out);
        if (name == "predict") return cmd_predict(cfg, o, out);
        if (name == "backtest") return cmd_backtest(cfg, o, out);
        if (name == "eval") return cmd_eval(cfg, o, out);
        if (name == "chat") return cmd_chat(cfg, o, out);
        if (name == "serve") return cmd_serve(cfg, out);
        throw ConfigError("unhandled subcommand " + name);
    } catch (const Error& e) {
        err << json{{"error", e.code()}, {"message", e.what()}}.dump() << '\n';
    } catch (const std::exception& e) {
        err << json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
    }
    return kExitFailure;
}

}  // namespace stockchain::service
