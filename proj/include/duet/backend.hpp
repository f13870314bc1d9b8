#pragma once

#include <chrono>
#include <cstddef>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "duet/chat.hpp"
#include "duet/error.hpp"

namespace duet {

struct BackendError : Error {
    explicit BackendError(const std::string& what) : Error(what) {}
};

/// A scripted backend was asked for more entries than its script holds.
/// This always indicates a harness logic bug or a fixture that is too short,
/// so it is never retried.
struct ScriptExhausted : BackendError {
    ScriptExhausted(std::string backend, std::size_t entries)
        : BackendError("scripted backend '" + backend + "' exhausted after " +
                       std::to_string(entries) + " entries"),
          name(std::move(backend)),
          entry_count(entries) {}
    std::string name;
    std::size_t entry_count;
};

struct ParseError : Error {
    ParseError(std::size_t line_number, const std::string& detail)
        : Error("line " + std::to_string(line_number) + ": " + detail), line(line_number) {}
    std::size_t line; // 1-based
};

/// Retry behavior for HTTP backends. Retries apply only to transport-level
/// failures and HTTP 5xx/429; backoff doubles per attempt.
struct RetryPolicy {
    std::size_t max_attempts = 3;
    std::chrono::milliseconds base_backoff{250};
    std::chrono::milliseconds timeout{30000};

    std::optional<std::string> violation() const {
        if (max_attempts < 1 || max_attempts > 10)
            return std::string("max_attempts must be in [1,10]");
        if (timeout.count() <= 0) return std::string("timeout must be positive");
        if (base_backoff.count() < 0) return std::string("base_backoff must be non-negative");
        return std::nullopt;
    }
};

/// One canned reply. `tool_calls` is used only by task-driver scripts;
/// plain chat replays carry just the response text.
struct ScriptEntry {
    std::size_t index = 0;
    std::string response;
    std::vector<ToolCall> tool_calls;

    friend bool operator==(const ScriptEntry&, const ScriptEntry&) = default;
};

/// Uniform chat-completion interface. Implementations must return a
/// non-empty Assistant message or throw.
class Backend {
public:
    virtual ~Backend() = default;

    virtual Message complete(const std::vector<Message>& messages) = 0;

    /// Number of complete() calls issued so far.
    virtual std::size_t call_count() const = 0;
};

/// Deterministic test double: replays entries by call ordinal, ignoring the
/// prompt content. Inputs are logged so tests can assert on the exact
/// messages the harness sent. Not safe for concurrent callers; give each
/// concurrent round its own instance.
class ScriptedBackend : public Backend {
public:
    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<ScriptEntry> entries, std::string name = "scripted")
        : entries_(std::move(entries)), name_(std::move(name)) {
        for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i].index = i;
    }

    /// Convenience for tests: text-only entries.
    static ScriptedBackend from_responses(std::vector<std::string> responses,
                                          std::string name = "scripted") {
        std::vector<ScriptEntry> entries;
        entries.reserve(responses.size());
        for (auto& r : responses) entries.push_back(ScriptEntry{entries.size(), std::move(r), {}});
        return ScriptedBackend(std::move(entries), std::move(name));
    }

    Message complete(const std::vector<Message>& messages) override {
        logged_inputs_.push_back(messages);
        const ScriptEntry& entry = next_entry();
        if (entry.response.empty())
            throw BackendError("scripted backend '" + name_ + "' entry " +
                               std::to_string(entry.index) +
                               " has empty response text for a chat completion");
        return assistant_message(entry.response);
    }

    /// Raw entry access for task drivers, which consume tool calls as well
    /// as text. Advances the same cursor as complete().
    const ScriptEntry& next_entry() {
        if (cursor_ >= entries_.size()) throw ScriptExhausted(name_, entries_.size());
        return entries_[cursor_++];
    }

    bool exhausted() const { return cursor_ >= entries_.size(); }
    std::size_t call_count() const override { return cursor_; }
    std::size_t entry_count() const { return entries_.size(); }
    const std::vector<ScriptEntry>& entries() const { return entries_; }
    const std::string& name() const { return name_; }

    /// Every message list passed to complete(), in call order.
    const std::vector<std::vector<Message>>& logged_inputs() const { return logged_inputs_; }

private:
    std::vector<ScriptEntry> entries_;
    std::string name_;
    std::size_t cursor_ = 0;
    std::vector<std::vector<Message>> logged_inputs_;
};

namespace detail {

inline ScriptEntry parse_script_record(const nlohmann::json& record, std::size_t line,
                                       std::size_t index) {
    if (!record.is_object()) throw ParseError(line, "record is not a JSON object");
    if (!record.contains("response") || !record["response"].is_string())
        throw ParseError(line, "record lacks a string 'response' field");

    ScriptEntry entry;
    entry.index = index;
    entry.response = record["response"].get<std::string>();

    if (record.contains("tool_calls")) {
        const auto& calls = record["tool_calls"];
        if (!calls.is_array()) throw ParseError(line, "'tool_calls' is not an array");
        for (const auto& call : calls) {
            if (!call.is_object() || !call.contains("name") || !call["name"].is_string())
                throw ParseError(line, "tool call lacks a string 'name' field");
            ToolCall tc;
            tc.name = call["name"].get<std::string>();
            if (call.contains("args")) {
                if (!call["args"].is_object())
                    throw ParseError(line, "tool call 'args' is not an object");
                for (const auto& [key, value] : call["args"].items()) {
                    tc.args[key] = value.is_string() ? value.get<std::string>() : value.dump();
                }
            }
            entry.tool_calls.push_back(std::move(tc));
        }
    }
    return entry;
}

} // namespace detail

/// Loads a JSON Lines script: one {"response": ..., "tool_calls": [...]?}
/// record per line. Blank lines are skipped; a malformed record throws
/// ParseError with its 1-based line number.
inline ScriptedBackend load_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open script file: " + path);

    std::vector<ScriptEntry> entries;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_number, e.what());
        }
        entries.push_back(detail::parse_script_record(record, line_number, entries.size()));
    }
    return ScriptedBackend(std::move(entries), path);
}

} // namespace duet
