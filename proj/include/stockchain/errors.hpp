#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stockchain {

// Base for every error raised by the library. `code()` is a short stable
// token used by the CLI and HTTP layers for machine-readable reporting.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class InputError : public Error {
public:
    explicit InputError(const std::string& message) : Error("input", message) {}
};

class CoverageError : public Error {
public:
    explicit CoverageError(const std::string& message) : Error("coverage", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& message) : Error("not_found", message) {}
};

class EmptyIndexError : public Error {
public:
    EmptyIndexError() : Error("empty_index", "knowledge index is empty") {}
};

// Network or remote-service failure. Retriable failures are the ones a
// caller may reasonably try again (connection refused, timeouts, 5xx).
class TransportError : public Error {
public:
    TransportError(const std::string& message, bool retriable)
        : Error("transport", message), retriable_(retriable) {}

    bool retriable() const noexcept { return retriable_; }

private:
    bool retriable_;
};

// A scripted or replay backend has no recorded answer for an input.
class FixtureError : public Error {
public:
    FixtureError(const std::string& message, std::string digest)
        : Error("fixture", message), digest_(std::move(digest)) {}

    const std::string& digest() const noexcept { return digest_; }

private:
    std::string digest_;
};

// Backend output that could not be interpreted. The raw text is preserved.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::string raw, std::string code = "parse")
        : Error(std::move(code), message), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class JudgeFormatError : public ParseError {
public:
    JudgeFormatError(const std::string& message, std::string raw)
        : ParseError(message, std::move(raw), "judge_format") {}
};

// Malformed corpus line; carries the 1-based line number.
class CorpusError : public Error {
public:
    CorpusError(std::size_t line, const std::string& message)
        : Error("corpus", "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace stockchain
