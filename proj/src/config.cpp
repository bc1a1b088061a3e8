#include "stockchain/config.hpp"

#include "stockchain/digest.hpp"
#include "stockchain/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>

namespace stockchain::service {

using json = nlohmann::ordered_json;

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError("invalid value '" + value + "' for " + key);
    }
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    char* end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size()) {
        throw ConfigError("invalid value '" + value + "' for " + key);
    }
    return v;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
    static const std::vector<std::pair<std::string, Setter>> table = [] {
        std::vector<std::pair<std::string, Setter>> t;
        auto str = [&t](const char* key, std::string RunConfig::*field) {
            t.emplace_back(key, [field](RunConfig& c, const std::string& v) { c.*field = v; });
        };
        str("model", &RunConfig::model);
        str("embedder", &RunConfig::embedder);
        str("extractor", &RunConfig::extractor);
        str("qa_extractor", &RunConfig::qa_extractor);
        str("judge", &RunConfig::judge);
        t.emplace_back("k", [](RunConfig& c, const std::string& v) { c.k = parse_number<std::size_t>("k", v); });
        str("filter", &RunConfig::filter);
        t.emplace_back("rf", [](RunConfig& c, const std::string& v) { c.rf = parse_real("rf", v); });
        str("templates", &RunConfig::templates);
        str("corpus", &RunConfig::corpus);
        str("index", &RunConfig::index);
        str("prices", &RunConfig::prices);
        str("benchmark", &RunConfig::benchmark);
        str("predictions", &RunConfig::predictions);
        str("host", &RunConfig::host);
        t.emplace_back("port", [](RunConfig& c, const std::string& v) { c.port = parse_number<int>("port", v); });
        str("sessions_dir", &RunConfig::sessions_dir);
        str("runs_dir", &RunConfig::runs_dir);
        str("scenarios_dir", &RunConfig::scenarios_dir);
        str("api_key", &RunConfig::api_key);
        t.emplace_back("seed", [](RunConfig& c, const std::string& v) {
            c.seed = parse_number<std::uint64_t>("seed", v);
        });
        t.emplace_back("parallelism", [](RunConfig& c, const std::string& v) {
            c.parallelism = parse_number<std::size_t>("parallelism", v);
        });
        t.emplace_back("history_budget", [](RunConfig& c, const std::string& v) {
            c.history_budget = parse_number<std::size_t>("history_budget", v);
        });
        return t;
    }();
    return table;
}

std::string env_name(const std::string& key) {
    std::string out = "STOCKCHAIN_";
    for (char c : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

// "<dim>:<rest>"
std::pair<std::size_t, std::string> split_dim(const std::string& spec, const std::string& rest) {
    auto colon = rest.find(':');
    if (colon == std::string::npos) throw ConfigError("embedder spec '" + spec + "' needs <dim>:<target>");
    return {parse_number<std::size_t>("embedder dimension", rest.substr(0, colon)), rest.substr(colon + 1)};
}

std::pair<std::string, std::string> split_scheme(const std::string& spec) {
    auto colon = spec.find(':');
    if (colon == std::string::npos) return {spec, ""};
    return {spec.substr(0, colon), spec.substr(colon + 1)};
}

gateway::RemoteOptions remote_options(const std::string& url, const RunConfig& cfg) {
    gateway::RemoteOptions o;
    o.url = url;
    o.api_key = cfg.api_key;
    return o;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const auto& [name, setter] : setters()) {
        if (name == key) {
            setter(*this, value);
            return;
        }
    }
    throw ConfigError("unknown configuration key '" + key + "'");
}

json RunConfig::to_json() const {
    json j;
    j["model"] = model;
    j["embedder"] = embedder;
    j["extractor"] = extractor;
    j["qa_extractor"] = qa_extractor;
    j["judge"] = judge;
    j["k"] = k;
    j["filter"] = filter;
    j["rf"] = rf;
    j["templates"] = templates;
    j["corpus"] = corpus;
    j["index"] = index;
    j["prices"] = prices;
    j["benchmark"] = benchmark;
    j["predictions"] = predictions;
    j["host"] = host;
    j["port"] = port;
    j["sessions_dir"] = sessions_dir;
    j["runs_dir"] = runs_dir;
    j["scenarios_dir"] = scenarios_dir;
    j["seed"] = seed;
    j["parallelism"] = parallelism;
    j["history_budget"] = history_budget;
    return j;
}

std::string RunConfig::digest() const { return sha256_hex(to_json().dump()); }

void RunConfig::validate() const {
    if (k < 1) throw ConfigError("k must be at least 1");
    if (port < 0 || port > 65535) throw ConfigError("port out of range");
    if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
    knowledge::parse_filter(filter);
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, _] : setters()) k.push_back(name);
        return k;
    }();
    return keys;
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    };
}

RunConfig resolve_config(const std::optional<std::string>& config_file,
                         const std::map<std::string, std::string>& flags, const EnvLookup& env) {
    RunConfig cfg;
    if (config_file) {
        std::ifstream in(*config_file);
        if (!in) throw ConfigError("cannot read config file '" + *config_file + "'");
        json doc;
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config file '" + *config_file + "': " + e.what());
        }
        if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
        for (const auto& [key, value] : doc.items()) {
            cfg.set(key, value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    for (const auto& key : config_keys()) {
        if (auto v = env(env_name(key))) cfg.set(key, *v);
    }
    for (const auto& [key, value] : flags) cfg.set(key, value);
    cfg.validate();
    return cfg;
}

std::shared_ptr<const gateway::ModelBackend> make_model(const std::string& spec, const RunConfig& cfg) {
    auto [scheme, rest] = split_scheme(spec);
    if (rest.empty()) throw ConfigError("model spec '" + spec + "' is incomplete");
    if (scheme == "scripted") return gateway::ScriptedBackend::load(rest);
    if (scheme == "replay") return std::make_shared<gateway::ReplayBackend>("replay:" + rest, rest);
    if (scheme == "remote") {
        return std::make_shared<gateway::RemoteBackend>("remote:" + rest, remote_options(rest, cfg));
    }
    throw ConfigError("unknown model backend '" + spec + "'");
}

std::shared_ptr<const knowledge::Embedder> make_embedder(const std::string& spec, const RunConfig& cfg) {
    auto [scheme, rest] = split_scheme(spec);
    if (scheme == "hash") {
        return std::make_shared<knowledge::HashingEmbedder>(parse_number<std::size_t>("embedder dimension", rest));
    }
    if (scheme == "scripted") {
        std::ifstream in(rest);
        if (!in) throw ConfigError("cannot read embedder fixture '" + rest + "'");
        auto doc = json::parse(in);
        std::map<std::string, std::vector<double>> table;
        for (const auto& [text, vec] : doc.at("vectors").items()) table[text] = vec.get<std::vector<double>>();
        return std::make_shared<knowledge::ScriptedEmbedder>(doc.value("id", "scripted:" + rest),
                                                             doc.at("dimension").get<std::size_t>(),
                                                             std::move(table));
    }
    if (scheme == "replay") {
        auto [dim, dir] = split_dim(spec, rest);
        return std::make_shared<knowledge::ReplayEmbedder>("replay:" + std::to_string(dim), dir, dim);
    }
    if (scheme == "remote") {
        auto [dim, url] = split_dim(spec, rest);
        return std::make_shared<knowledge::RemoteEmbedder>("remote:" + std::to_string(dim) + ":" + url,
                                                           remote_options(url, cfg), dim);
    }
    throw ConfigError("unknown embedder '" + spec + "'");
}

std::shared_ptr<const knowledge::Summarizer> make_summarizer(const std::string& spec, const RunConfig& cfg,
                                                             const TemplateSet& templates) {
    auto [scheme, rest] = split_scheme(spec);
    if (scheme == "head") {
        return std::make_shared<knowledge::HeadSummarizer>(parse_number<std::size_t>("extractor length", rest));
    }
    if (scheme == "model") return std::make_shared<knowledge::ModelSummarizer>(make_model(rest, cfg), templates);
    throw ConfigError("unknown extractor '" + spec + "'");
}

std::shared_ptr<const knowledge::DialogueGenerator> make_generator(const std::string& spec,
                                                                   const RunConfig& cfg,
                                                                   const TemplateSet& templates) {
    if (spec.empty() || spec == "none") return nullptr;
    auto [scheme, rest] = split_scheme(spec);
    if (scheme == "model") {
        return std::make_shared<knowledge::ModelDialogueGenerator>(make_model(rest, cfg), templates);
    }
    throw ConfigError("unknown qa extractor '" + spec + "'");
}

TemplateSet load_templates(const RunConfig& cfg) {
    if (cfg.templates.empty() || cfg.templates == "builtin") return TemplateSet::builtin();
    return TemplateSet::load(cfg.templates);
}

}  // namespace stockchain::service
