#pragma once

#include "stockchain/config.hpp"
#include "stockchain/dialogue.hpp"
#include "stockchain/knowledge_store.hpp"
#include "stockchain/model_gateway.hpp"
#include "stockchain/pipeline.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace stockchain::service {

// Shared state behind the HTTP API.
struct ServiceContext {
    RunConfig config;
    TemplateSet templates = TemplateSet::builtin();
    std::shared_ptr<const knowledge::KnowledgeStore> store;  // null: no index loaded
    std::shared_ptr<const gateway::ModelBackend> model;
    std::shared_ptr<const knowledge::Embedder> embedder;
    dialogue::SessionManager sessions;

    dialogue::DialogueContext dialogue_context() const;

    // Equity-curve CSVs by run id; mirrored to config.runs_dir when set.
    void store_run(const pipeline::BacktestRun& run);
    std::optional<std::string> equity_curve(const std::string& run_id) const;

    // {"scenario": id} resolves <scenarios_dir>/<id>.json; otherwise the body
    // itself holds {"predictions", "prices", "benchmark"?, "rf"?}. Relative
    // paths inside a scenario file are taken from the scenario's directory.
    pipeline::BacktestFiles backtest_files(const std::string& request_body) const;

private:
    mutable std::mutex runs_mutex_;
    std::map<std::string, std::string> runs_;
};

// Loads templates, backends and (when configured) the index.
std::shared_ptr<ServiceContext> make_context(const RunConfig& config);

// Maps an error code to an HTTP status.
int http_status(const std::string& error_code) noexcept;

class ApiServer {
public:
    explicit ApiServer(std::shared_ptr<ServiceContext> ctx);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    // Port 0 picks a free port. Throws ConfigError when the port is taken.
    int bind(const std::string& host, int port);
    void run();    // serves until stop()
    void start();  // serves on a background thread
    // Stops serving and flushes sessions to config.sessions_dir when set.
    void stop();
    int port() const noexcept { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace stockchain::service
