#pragma once

#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "duet/error.hpp"

namespace duet {

enum class Role { System, User, Assistant, Tool };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "user";
}

/// One chat message. Backends must never return an Assistant message with
/// empty content; everything else is free-form.
struct Message {
    Role role = Role::User;
    std::string content;

    friend bool operator==(const Message&, const Message&) = default;
};

inline Message system_message(std::string text) { return {Role::System, std::move(text)}; }
inline Message user_message(std::string text) { return {Role::User, std::move(text)}; }
inline Message assistant_message(std::string text) { return {Role::Assistant, std::move(text)}; }

struct AssistantText {
    std::string text;
    friend bool operator==(const AssistantText&, const AssistantText&) = default;
};

struct ToolCall {
    std::string name;
    std::map<std::string, std::string> args;
    friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct ToolResult {
    std::string name;
    std::string payload;
    friend bool operator==(const ToolResult&, const ToolResult&) = default;
};

using EventKind = std::variant<AssistantText, ToolCall, ToolResult>;

/// One entry in a round transcript. `seq` is assigned by Transcript::append
/// and is dense from zero.
struct Event {
    std::size_t seq = 0;
    EventKind kind;
    friend bool operator==(const Event&, const Event&) = default;
};

/// Ordered record of everything that happened in one round: assistant text,
/// tool calls, and tool results. Append-only; sequence numbers stay dense.
class Transcript {
public:
    Transcript() = default;
    explicit Transcript(std::string round_id) : round_id_(std::move(round_id)) {}

    const std::string& round_id() const { return round_id_; }
    void set_round_id(std::string id) { round_id_ = std::move(id); }

    const std::vector<Event>& events() const { return events_; }
    bool empty() const { return events_.empty(); }
    std::size_t size() const { return events_.size(); }

    const Event& append(EventKind kind) {
        events_.push_back(Event{events_.size(), std::move(kind)});
        return events_.back();
    }

    /// Rebuilds a transcript from stored events (deserialization); the
    /// structural invariants are enforced, not re-derived.
    static Transcript restore(std::string round_id, std::vector<Event> events) {
        Transcript t(std::move(round_id));
        t.events_ = std::move(events);
        if (auto why = t.violation())
            throw Error("restored transcript is inconsistent: " + *why);
        return t;
    }

    /// Checks the structural invariants: dense strictly-increasing seq and
    /// every ToolResult preceded by a ToolCall of the same name.
    /// Returns an explanation for the first violation, or nullopt.
    std::optional<std::string> violation() const {
        std::vector<std::string_view> pending_calls;
        for (std::size_t i = 0; i < events_.size(); ++i) {
            if (events_[i].seq != i)
                return "event " + std::to_string(i) + " has seq " + std::to_string(events_[i].seq);
            if (const auto* call = std::get_if<ToolCall>(&events_[i].kind)) {
                pending_calls.push_back(call->name);
            } else if (const auto* result = std::get_if<ToolResult>(&events_[i].kind)) {
                bool matched = false;
                for (auto it = pending_calls.begin(); it != pending_calls.end(); ++it) {
                    if (*it == result->name) {
                        pending_calls.erase(it);
                        matched = true;
                        break;
                    }
                }
                if (!matched)
                    return "tool result '" + result->name + "' at seq " + std::to_string(i) +
                           " has no preceding tool call";
            }
        }
        return std::nullopt;
    }

    friend bool operator==(const Transcript&, const Transcript&) = default;

private:
    std::string round_id_;
    std::vector<Event> events_;
};

enum class VerdictValue { Agree, Disagree, Ambiguous };

inline const char* to_string(VerdictValue v) {
    switch (v) {
        case VerdictValue::Agree: return "agree";
        case VerdictValue::Disagree: return "disagree";
        case VerdictValue::Ambiguous: return "ambiguous";
    }
    return "ambiguous";
}

/// Result of scanning a reviewer response for the agreement markers.
/// marker_offset is the byte offset of the matched marker and is present
/// exactly when the verdict is not Ambiguous.
struct Verdict {
    VerdictValue value = VerdictValue::Ambiguous;
    std::optional<std::size_t> marker_offset;

    friend bool operator==(const Verdict&, const Verdict&) = default;
};

namespace detail {

inline std::optional<std::size_t> find_case_insensitive(std::string_view haystack,
                                                        std::string_view needle) {
    if (needle.empty() || haystack.size() < needle.size()) return std::nullopt;
    const auto fold = [](unsigned char c) { return static_cast<char>(std::tolower(c)); };
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        std::size_t j = 0;
        while (j < needle.size() && fold(haystack[i + j]) == fold(needle[j])) ++j;
        if (j == needle.size()) return i;
    }
    return std::nullopt;
}

} // namespace detail

/// The exact marker phrases the reviewer prompt asks for.
inline constexpr std::string_view kAgreeMarker = "I agree";
inline constexpr std::string_view kDisagreeMarker = "I do not agree";

/// Scans a reviewer response for the explicit agreement markers.
///
/// Matching is a case-insensitive substring search over the whole text, not
/// a prefix check: the reviewer prompt also asks for a bracketed objective
/// at the start of the response, so the marker can appear anywhere. The
/// disagree marker wins when both are present, because the prompt instructs
/// the reviewer to state disagreement first. Total function: never throws.
inline Verdict detect_verdict(std::string_view text) {
    if (auto off = detail::find_case_insensitive(text, kDisagreeMarker))
        return {VerdictValue::Disagree, off};
    if (auto off = detail::find_case_insensitive(text, kAgreeMarker))
        return {VerdictValue::Agree, off};
    return {VerdictValue::Ambiguous, std::nullopt};
}

} // namespace duet
