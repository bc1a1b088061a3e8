#include "stockchain/digest.hpp"
#include "stockchain/errors.hpp"
#include "stockchain/knowledge_store.hpp"
#include "stockchain/text.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <thread>

namespace stockchain::knowledge {

using json = nlohmann::ordered_json;

namespace {

std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

HashingEmbedder::HashingEmbedder(std::size_t dimension)
    : dimension_(dimension), id_("hash-v1:" + std::to_string(dimension)) {
    if (dimension == 0) throw ConfigError("embedding dimension must be positive");
}

std::vector<double> HashingEmbedder::embed(const std::string& input) const {
    std::vector<double> v(dimension_, 0.0);
    for (const auto& token : text::tokenize(input)) {
        auto h = fnv1a64(token);
        v[h % dimension_] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = euclidean_norm(v);
    if (norm == 0.0) {
        // No tokens, or every token cancelled out.
        v[fnv1a64(input) % dimension_] = 1.0;
        return v;
    }
    for (auto& x : v) x /= norm;
    return v;
}

ScriptedEmbedder::ScriptedEmbedder(std::string id, std::size_t dimension,
                                   std::map<std::string, std::vector<double>> table)
    : id_(std::move(id)), dimension_(dimension), table_(std::move(table)) {}

std::vector<double> ScriptedEmbedder::embed(const std::string& input) const {
    auto it = table_.find(input);
    if (it == table_.end()) {
        auto digest = sha256_hex(input);
        throw FixtureError("scripted embedder '" + id_ + "' has no vector for input " + digest, digest);
    }
    return it->second;
}

ReplayEmbedder::ReplayEmbedder(std::string id, std::string dir, std::size_t dimension)
    : id_(std::move(id)), dir_(std::move(dir)), dimension_(dimension) {}

std::vector<double> ReplayEmbedder::embed(const std::string& input) const {
    auto digest = sha256_hex(input);
    std::ifstream in(std::filesystem::path(dir_) / (digest + ".json"));
    if (!in) throw FixtureError("no embedding fixture for input " + digest, digest);
    auto doc = json::parse(in);
    if (doc.value("input", std::string()) != input) {
        throw FixtureError("embedding fixture " + digest + " records a different input", digest);
    }
    return doc.at("embedding").get<std::vector<double>>();
}

RecordingEmbedder::RecordingEmbedder(std::shared_ptr<const Embedder> inner, std::string dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::vector<double> RecordingEmbedder::embed(const std::string& input) const {
    auto v = inner_->embed(input);
    json doc;
    doc["input"] = input;
    doc["embedding"] = v;
    std::ofstream out(std::filesystem::path(dir_) / (sha256_hex(input) + ".json"),
                      std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write embedding fixture under '" + dir_ + "'");
    out << doc.dump() << '\n';
    return v;
}

RemoteEmbedder::RemoteEmbedder(std::string id, gateway::RemoteOptions options, std::size_t dimension)
    : id_(std::move(id)), options_(std::move(options)), dimension_(dimension) {
    gateway::split_url(options_.url);
}

std::vector<double> RemoteEmbedder::embed(const std::string& input) const {
    auto [origin, path] = gateway::split_url(options_.url);
    json body;
    body["input"] = input;
    const auto payload = body.dump();
    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
        if (attempt > 1) std::this_thread::sleep_for(options_.backoff * (attempt - 1));
        httplib::Client cli(origin);
        auto secs = options_.timeout.count() / 1000;
        auto usecs = (options_.timeout.count() % 1000) * 1000;
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        if (!options_.api_key.empty()) cli.set_bearer_token_auth(options_.api_key);
        auto res = cli.Post(path, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw TransportError("embedder '" + id_ + "' answered HTTP " + std::to_string(res->status),
                                 false);
        }
        try {
            return json::parse(res->body).at("embedding").get<std::vector<double>>();
        } catch (const json::exception&) {
            throw ParseError("embedder '" + id_ + "' reply lacks a numeric \"embedding\"", res->body);
        }
    }
    throw TransportError("embedder '" + id_ + "' unreachable after " +
                             std::to_string(options_.max_attempts) + " attempts: " + last_error,
                         true);
}

bool RemoteEmbedder::healthy() const {
    auto [origin, path] = gateway::split_url(options_.url);
    httplib::Client cli(origin);
    cli.set_connection_timeout(2, 0);
    return static_cast<bool>(cli.Get("/"));
}

}  // namespace stockchain::knowledge
