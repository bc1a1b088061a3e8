#include "stockchain/model_gateway.hpp"

#include "stockchain/digest.hpp"
#include "stockchain/errors.hpp"
#include "stockchain/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace stockchain::gateway {

using json = nlohmann::ordered_json;

std::string_view to_string(BackendKind kind) noexcept {
    switch (kind) {
        case BackendKind::remote: return "remote";
        case BackendKind::replay: return "replay";
        case BackendKind::scripted: return "scripted";
    }
    return "unknown";
}

std::string_view to_string(PartRole role) noexcept {
    switch (role) {
        case PartRole::prompt: return "prompt";
        case PartRole::knowledge: return "knowledge";
        case PartRole::history: return "history";
        case PartRole::query: return "query";
    }
    return "unknown";
}

ScriptedBackend::ScriptedBackend(std::string id, std::map<std::string, std::string> responses,
                                 std::optional<std::string> fallback, GenerationConfig generation)
    : id_(std::move(id)),
      responses_(std::move(responses)),
      fallback_(std::move(fallback)),
      generation_(std::move(generation)) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read scripted fixture '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed scripted fixture '" + path + "': " + e.what());
    }
    std::map<std::string, std::string> responses;
    if (doc.contains("responses")) {
        for (const auto& [key, value] : doc["responses"].items()) {
            responses[key] = value.get<std::string>();
        }
    }
    std::optional<std::string> fallback;
    if (doc.contains("default")) fallback = doc["default"].get<std::string>();
    auto id = doc.value("id", "scripted:" + std::filesystem::path(path).filename().string());
    return std::make_unique<ScriptedBackend>(std::move(id), std::move(responses), std::move(fallback));
}

std::string ScriptedBackend::complete(const std::string& input) const {
    if (auto it = responses_.find(input); it != responses_.end()) return it->second;
    auto digest = sha256_hex(input);
    if (auto it = responses_.find(digest); it != responses_.end()) return it->second;
    if (fallback_) return *fallback_;
    throw FixtureError("scripted backend '" + id_ + "' has no response for input " + digest, digest);
}

FunctionBackend::FunctionBackend(std::string id, Fn fn, GenerationConfig generation)
    : id_(std::move(id)), fn_(std::move(fn)), generation_(std::move(generation)) {}

ReplayBackend::ReplayBackend(std::string id, std::string dir, GenerationConfig generation)
    : id_(std::move(id)), dir_(std::move(dir)), generation_(std::move(generation)) {}

std::string ReplayBackend::fixture_path(const std::string& dir, std::string_view input) {
    return (std::filesystem::path(dir) / (sha256_hex(input) + ".json")).string();
}

std::string ReplayBackend::complete(const std::string& input) const {
    auto path = fixture_path(dir_, input);
    std::ifstream in(path);
    if (!in) {
        auto digest = sha256_hex(input);
        throw FixtureError("no replay fixture for input " + digest + " in '" + dir_ + "'", digest);
    }
    json doc = json::parse(in);
    if (doc.value("input", std::string()) != input) {
        auto digest = sha256_hex(input);
        throw FixtureError("replay fixture " + digest + " records a different input", digest);
    }
    return doc.at("output").get<std::string>();
}

RecordingBackend::RecordingBackend(std::shared_ptr<const ModelBackend> inner, std::string dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::string RecordingBackend::complete(const std::string& input) const {
    auto output = inner_->complete(input);
    json doc;
    doc["input"] = input;
    doc["output"] = output;
    std::ofstream out(ReplayBackend::fixture_path(dir_, input), std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write replay fixture under '" + dir_ + "'");
    out << doc.dump(2) << '\n';
    return output;
}

AssembledInput assemble(Stage stage, std::vector<InputPart> parts) {
    AssembledInput in;
    in.stage = stage;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) in.text.append(kSectionSeparator);
        in.text.append(parts[i].text);
    }
    in.parts = std::move(parts);
    return in;
}

AssembledInput build_stage1_input(const corpus::Company& company,
                                  std::span<const corpus::KnowledgeDocument> docs,
                                  const TemplateSet& templates) {
    using corpus::DocKind;
    if (docs.empty()) throw InputError("no documents for company '" + company.id + "'");
    std::vector<InputPart> parts{{PartRole::prompt, templates.text(TemplateId::stage1_prompt)}};
    for (const auto& d : docs) {
        if (std::find(d.company_ids.begin(), d.company_ids.end(), company.id) == d.company_ids.end()) {
            throw InputError("document '" + d.id + "' does not cover company '" + company.id + "'");
        }
    }
    for (DocKind kind : {DocKind::report, DocKind::market_data}) {
        for (const auto& d : docs) {
            if (d.kind == kind) parts.push_back({PartRole::knowledge, d.body});
        }
    }
    if (parts.size() == 1) {
        throw InputError("no report or market data for company '" + company.id + "'");
    }
    return assemble(Stage::one, std::move(parts));
}

std::string serialize_turn(const Turn& turn) {
    return "User: " + turn.query + "\nAssistant: " + turn.response;
}

std::vector<Turn> truncate_history(std::span<const Turn> history, std::size_t budget_chars) {
    std::size_t used = 0;
    std::size_t keep = 0;
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        auto len = text::char_count(serialize_turn(*it));
        if (used + len > budget_chars) break;
        used += len;
        ++keep;
    }
    return {history.end() - static_cast<std::ptrdiff_t>(keep), history.end()};
}

AssembledInput build_stage2_input(std::optional<std::string_view> knowledge,
                                  std::span<const Turn> history, std::string_view query,
                                  const TemplateSet& templates, const Stage2Options& options) {
    if (query.empty()) throw InputError("empty query");
    std::vector<InputPart> parts{{PartRole::prompt, templates.text(TemplateId::stage2_prompt)}};
    parts.push_back({PartRole::knowledge, std::string(knowledge.value_or(kNoKnowledgeMarker))});
    for (const auto& turn : truncate_history(history, options.history_budget_chars)) {
        parts.push_back({PartRole::history, serialize_turn(turn)});
    }
    parts.push_back({PartRole::query, std::string(query)});
    return assemble(Stage::two, std::move(parts));
}

}  // namespace stockchain::gateway
