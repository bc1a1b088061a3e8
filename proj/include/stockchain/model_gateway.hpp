#pragma once

#include "stockchain/corpus.hpp"
#include "stockchain/templates.hpp"

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stockchain::gateway {

enum class BackendKind { remote, replay, scripted };
std::string_view to_string(BackendKind kind) noexcept;

struct GenerationConfig {
    std::string strategy = "greedy";
    int max_new_tokens = 512;
};

// A chat-completion backend. Implementations are stateless per call and may
// be shared across threads.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    virtual const std::string& id() const noexcept = 0;
    virtual BackendKind kind() const noexcept = 0;
    virtual const GenerationConfig& generation() const noexcept = 0;

    virtual std::string complete(const std::string& input) const = 0;

    // Scripted and replay backends are always healthy.
    virtual bool healthy() const { return true; }
    // True once a remote answered with non-greedy decoding settings.
    virtual bool nonconforming() const noexcept { return false; }
};

// Fixed input -> output mapping. A key matches when it equals the input text
// or its SHA-256 hex digest. `fallback`, when set, answers unmapped inputs.
class ScriptedBackend final : public ModelBackend {
public:
    ScriptedBackend(std::string id, std::map<std::string, std::string> responses,
                    std::optional<std::string> fallback = std::nullopt,
                    GenerationConfig generation = {});

    // JSON file: {"id"?: str, "responses": {key: output}, "default"?: str}
    static std::unique_ptr<ScriptedBackend> load(const std::string& path);

    const std::string& id() const noexcept override { return id_; }
    BackendKind kind() const noexcept override { return BackendKind::scripted; }
    const GenerationConfig& generation() const noexcept override { return generation_; }
    std::string complete(const std::string& input) const override;

private:
    std::string id_;
    std::map<std::string, std::string> responses_;
    std::optional<std::string> fallback_;
    GenerationConfig generation_;
};

// Deterministic stub driven by a pure function of the input. Used for judges
// and oracle predictors in tests and demos.
class FunctionBackend final : public ModelBackend {
public:
    using Fn = std::function<std::string(const std::string&)>;
    FunctionBackend(std::string id, Fn fn, GenerationConfig generation = {});

    const std::string& id() const noexcept override { return id_; }
    BackendKind kind() const noexcept override { return BackendKind::scripted; }
    const GenerationConfig& generation() const noexcept override { return generation_; }
    std::string complete(const std::string& input) const override { return fn_(input); }

private:
    std::string id_;
    Fn fn_;
    GenerationConfig generation_;
};

// Replays fixtures stored as <dir>/<sha256(input)>.json {"input", "output"}.
class ReplayBackend final : public ModelBackend {
public:
    ReplayBackend(std::string id, std::string dir, GenerationConfig generation = {});

    const std::string& id() const noexcept override { return id_; }
    BackendKind kind() const noexcept override { return BackendKind::replay; }
    const GenerationConfig& generation() const noexcept override { return generation_; }
    std::string complete(const std::string& input) const override;

    static std::string fixture_path(const std::string& dir, std::string_view input);

private:
    std::string id_;
    std::string dir_;
    GenerationConfig generation_;
};

// Writes a replay fixture for every completion served by `inner`.
class RecordingBackend final : public ModelBackend {
public:
    RecordingBackend(std::shared_ptr<const ModelBackend> inner, std::string dir);

    const std::string& id() const noexcept override { return inner_->id(); }
    BackendKind kind() const noexcept override { return inner_->kind(); }
    const GenerationConfig& generation() const noexcept override { return inner_->generation(); }
    std::string complete(const std::string& input) const override;
    bool healthy() const override { return inner_->healthy(); }

private:
    std::shared_ptr<const ModelBackend> inner_;
    std::string dir_;
};

struct RemoteOptions {
    std::string url;  // full endpoint, e.g. http://host:8000/complete
    std::string api_key;
    std::chrono::milliseconds timeout{30000};
    int max_attempts = 3;
    std::chrono::milliseconds backoff{200};
};

// POST {"input", "max_new_tokens", "temperature": 0} -> {"output"}.
class RemoteBackend final : public ModelBackend {
public:
    RemoteBackend(std::string id, RemoteOptions options, GenerationConfig generation = {});

    const std::string& id() const noexcept override { return id_; }
    BackendKind kind() const noexcept override { return BackendKind::remote; }
    const GenerationConfig& generation() const noexcept override { return generation_; }
    std::string complete(const std::string& input) const override;
    bool healthy() const override;
    bool nonconforming() const noexcept override { return nonconforming_.load(); }

private:
    std::string id_;
    RemoteOptions options_;
    GenerationConfig generation_;
    mutable std::atomic<bool> nonconforming_{false};
};

// Split "http://host:port/path" into origin and path ("/" when absent).
std::pair<std::string, std::string> split_url(const std::string& url);

enum class Stage { one, two };
enum class PartRole { prompt, knowledge, history, query };
std::string_view to_string(PartRole role) noexcept;

struct InputPart {
    PartRole role;
    std::string text;
};

// Parts joined by kSectionSeparator give `text` exactly.
struct AssembledInput {
    Stage stage = Stage::one;
    std::string text;
    std::vector<InputPart> parts;
};

inline constexpr std::string_view kSectionSeparator = "\n";
inline constexpr std::string_view kNoKnowledgeMarker = "No local knowledge found.";

AssembledInput assemble(Stage stage, std::vector<InputPart> parts);

// Prompt_1, then every report body, then every market-data body, keeping the
// given order within each group. Other document kinds are not part of the
// stage-1 input. Throws InputError when docs is empty, when no report or
// market-data item is present, or when a document does not cover `company`.
AssembledInput build_stage1_input(const corpus::Company& company,
                                  std::span<const corpus::KnowledgeDocument> docs,
                                  const TemplateSet& templates = TemplateSet::builtin());

struct Turn {
    std::string query;
    std::string response;
};

std::string serialize_turn(const Turn& turn);

struct Stage2Options {
    std::size_t history_budget_chars = 4000;
};

// Most recent whole turns whose serialized lengths fit the budget, oldest first.
std::vector<Turn> truncate_history(std::span<const Turn> history, std::size_t budget_chars);

// Prompt_2, knowledge payload (or the no-knowledge marker), history turns
// oldest first, then the query. Throws InputError on an empty query.
AssembledInput build_stage2_input(std::optional<std::string_view> knowledge,
                                  std::span<const Turn> history, std::string_view query,
                                  const TemplateSet& templates = TemplateSet::builtin(),
                                  const Stage2Options& options = {});

inline std::string complete(const AssembledInput& input, const ModelBackend& backend) {
    return backend.complete(input.text);
}

}  // namespace stockchain::gateway
