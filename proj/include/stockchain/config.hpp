#pragma once

#include "stockchain/knowledge_store.hpp"
#include "stockchain/model_gateway.hpp"
#include "stockchain/templates.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace stockchain::service {

// Everything a run needs to be replayed. Backends are given as spec strings:
//   model / judge:  scripted:<file> | replay:<dir> | remote:<url>
//   embedder:       hash:<dim> | scripted:<file> | replay:<dim>:<dir> | remote:<dim>:<url>
//   extractor:      head:<chars> | model:<model spec>
//   qa_extractor:   none | model:<model spec>
struct RunConfig {
    std::string model;
    std::string embedder = "hash:256";
    std::string extractor = "head:400";
    std::string qa_extractor = "none";
    std::string judge;
    std::size_t k = 1;
    std::string filter = "all";
    double rf = 0.0;
    std::string templates = "builtin";  // or a template directory
    std::string corpus;
    std::string index;
    std::string prices;
    std::string benchmark;
    std::string predictions;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string sessions_dir;
    std::string runs_dir;
    std::string scenarios_dir;
    std::string api_key;  // sent as a bearer token to remote backends; never recorded
    std::uint64_t seed = 0;
    std::size_t parallelism = 4;
    std::size_t history_budget = 4000;

    // Sets one field from its textual form. Throws ConfigError on an unknown
    // key or a malformed value.
    void set(const std::string& key, const std::string& value);

    // Recorded fields (api_key excluded), in declaration order.
    nlohmann::ordered_json to_json() const;
    std::string digest() const;

    // k >= 1, port in range, known filter.
    void validate() const;
};

// All settable keys; env vars are STOCKCHAIN_<KEY upper-cased>.
const std::vector<std::string>& config_keys();

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

// Defaults, then the JSON config file, then environment, then flags.
RunConfig resolve_config(const std::optional<std::string>& config_file,
                         const std::map<std::string, std::string>& flags,
                         const EnvLookup& env = process_env());

std::shared_ptr<const gateway::ModelBackend> make_model(const std::string& spec, const RunConfig& cfg);
std::shared_ptr<const knowledge::Embedder> make_embedder(const std::string& spec, const RunConfig& cfg);
std::shared_ptr<const knowledge::Summarizer> make_summarizer(const std::string& spec, const RunConfig& cfg,
                                                             const TemplateSet& templates);
// nullptr for "none" or an empty spec.
std::shared_ptr<const knowledge::DialogueGenerator> make_generator(const std::string& spec,
                                                                   const RunConfig& cfg,
                                                                   const TemplateSet& templates);
TemplateSet load_templates(const RunConfig& cfg);

}  // namespace stockchain::service
