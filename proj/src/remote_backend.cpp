#include "stockchain/model_gateway.hpp"

#include "stockchain/errors.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

namespace stockchain::gateway {

using json = nlohmann::ordered_json;

std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("URL without scheme: '" + url + "'");
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

RemoteBackend::RemoteBackend(std::string id, RemoteOptions options, GenerationConfig generation)
    : id_(std::move(id)), options_(std::move(options)), generation_(std::move(generation)) {
    if (options_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
    split_url(options_.url);
}

namespace {

httplib::Client make_client(const std::string& origin, const RemoteOptions& options) {
    httplib::Client cli(origin);
    auto secs = options.timeout.count() / 1000;
    auto usecs = (options.timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    if (!options.api_key.empty()) cli.set_bearer_token_auth(options.api_key);
    return cli;
}

}  // namespace

std::string RemoteBackend::complete(const std::string& input) const {
    auto [origin, path] = split_url(options_.url);
    json body;
    body["input"] = input;
    body["max_new_tokens"] = generation_.max_new_tokens;
    body["temperature"] = 0;
    const auto payload = body.dump();

    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
        if (attempt > 1) std::this_thread::sleep_for(options_.backoff * (attempt - 1));
        auto cli = make_client(origin, options_);
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
            throw TransportError("backend '" + id_ + "' answered HTTP " + std::to_string(res->status),
                                 false);
        }
        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::parse_error&) {
            throw ParseError("backend '" + id_ + "' returned non-JSON output", res->body);
        }
        if (!reply.is_object() || !reply.contains("output") || !reply["output"].is_string()) {
            throw ParseError("backend '" + id_ + "' reply lacks a string \"output\"", res->body);
        }
        if (reply.contains("temperature") && reply["temperature"].is_number() &&
            reply["temperature"].get<double>() != 0.0) {
            nonconforming_ = true;
        }
        return reply["output"].get<std::string>();
    }
    throw TransportError("backend '" + id_ + "' unreachable after " +
                             std::to_string(options_.max_attempts) + " attempts: " + last_error,
                         true);
}

bool RemoteBackend::healthy() const {
    auto [origin, path] = split_url(options_.url);
    auto cli = make_client(origin, options_);
    cli.set_connection_timeout(2, 0);
    return static_cast<bool>(cli.Get("/"));
}

}  // namespace stockchain::gateway
