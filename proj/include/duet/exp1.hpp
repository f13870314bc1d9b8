#pragma once

#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "duet/backend.hpp"
#include "duet/chat.hpp"
#include "duet/debate.hpp"
#include "duet/error.hpp"
#include "duet/prompts.hpp"

namespace duet {

inline constexpr std::string_view kDefaultTerminalTool = "list-summarize";
inline constexpr std::string_view kRoiSentencePrefix = "The final largest ROI is ";

/// A task driver script: replayed entry by entry, each entry contributing
/// an optional assistant-text event followed by its tool-call events.
/// The terminal tool call (default "list-summarize") must appear exactly
/// once, as the last event; its entry's text is the round's final summary.
struct TaskScript {
    std::vector<ScriptEntry> entries;
    std::string terminal_tool = std::string(kDefaultTerminalTool);
    std::vector<std::string> image_names; // take_image names in replay order
};

struct MalformedTaskScript : Error {
    explicit MalformedTaskScript(const std::string& why) : Error("malformed task script: " + why) {}
};

struct MissingRoiStatement : Error {
    MissingRoiStatement() : Error("no ROI statement of the form \"The final largest ROI is <letter>\"") {}
};

struct NoScorableRounds : Error {
    NoScorableRounds() : Error("accuracy is undefined: every round was unscorable") {}
};

/// Annotates an error thrown while replaying a round with the event
/// sequence number it surfaced at; the cause is the nested exception.
struct RoundExecutionError : Error {
    RoundExecutionError(std::string round, std::size_t at_seq)
        : Error("round " + round + " failed at event seq " + std::to_string(at_seq)),
          round_id(std::move(round)),
          seq(at_seq) {}
    std::string round_id;
    std::size_t seq;
};

struct RoundRecord {
    std::string round_id;
    std::string last_photo_name;
    std::optional<std::string> final_roi; // single letter
    std::size_t function_call_count = 0;  // every tool call, terminal included
    std::vector<DebateOutcome> debates;
    std::vector<std::string> warnings;
};

struct GroundTruthMap {
    // image name -> acceptable labels; an empty set is legal and means no
    // label is correct for that image.
    std::map<std::string, std::set<std::string>> entries;

    std::optional<std::string> violation() const {
        for (const auto& [image, labels] : entries) {
            if (image.empty()) return std::string("empty image name");
            for (const auto& label : labels) {
                if (label.size() != 1 || !std::isalpha(static_cast<unsigned char>(label[0])))
                    return "label \"" + label + "\" for image \"" + image +
                           "\" is not a single letter";
            }
        }
        return std::nullopt;
    }
};

enum class RoundVerdict { Correct, Incorrect, Unscorable };

inline const char* to_string(RoundVerdict v) {
    switch (v) {
        case RoundVerdict::Correct: return "correct";
        case RoundVerdict::Incorrect: return "incorrect";
        default: return "unscorable";
    }
}

struct RoundScore {
    std::string round_id;
    RoundVerdict verdict = RoundVerdict::Unscorable;

    friend bool operator==(const RoundScore&, const RoundScore&) = default;
};

namespace detail {

inline bool is_known_tool(std::string_view name, std::string_view terminal) {
    return name == "take_image" || name == "image_analysis" || name == terminal;
}

/// The image named by a take_image call: the "name" arg, else the sole
/// arg's value when exactly one is given.
inline std::optional<std::string> photo_name_arg(const ToolCall& call) {
    if (auto it = call.args.find("name"); it != call.args.end()) return it->second;
    if (call.args.size() == 1) return call.args.begin()->second;
    return std::nullopt;
}

inline std::string analysis_request(const std::string& image_name) {
    if (image_name.empty())
        return "Analyze the most recent image and describe the labeled regions of interest.";
    return "Analyze the image '" + image_name +
           "' and describe the labeled regions of interest.";
}

} // namespace detail

/// Validates entries against the TaskScript invariants and derives
/// image_names. Throws MalformedTaskScript.
inline TaskScript make_task_script(std::vector<ScriptEntry> entries,
                                   std::string terminal_tool = std::string(kDefaultTerminalTool)) {
    if (terminal_tool.empty()) throw MalformedTaskScript("terminal tool name is empty");

    TaskScript task;
    task.terminal_tool = std::move(terminal_tool);

    std::size_t terminal_count = 0;
    for (std::size_t e = 0; e < entries.size(); ++e) {
        const ScriptEntry& entry = entries[e];
        for (std::size_t c = 0; c < entry.tool_calls.size(); ++c) {
            const ToolCall& call = entry.tool_calls[c];
            if (!detail::is_known_tool(call.name, task.terminal_tool))
                throw MalformedTaskScript("unknown tool \"" + call.name + "\" in entry " +
                                          std::to_string(e + 1));
            if (call.name == task.terminal_tool) {
                ++terminal_count;
                const bool last_call_of_last_entry =
                    e + 1 == entries.size() && c + 1 == entry.tool_calls.size();
                if (!last_call_of_last_entry)
                    throw MalformedTaskScript("terminal tool \"" + task.terminal_tool +
                                              "\" is not the final event");
            } else if (call.name == "take_image") {
                if (auto name = detail::photo_name_arg(call))
                    task.image_names.push_back(*name);
            }
        }
    }
    if (terminal_count == 0)
        throw MalformedTaskScript("no terminal \"" + task.terminal_tool + "\" call");
    if (terminal_count > 1)
        throw MalformedTaskScript("terminal tool \"" + task.terminal_tool +
                                  "\" appears " + std::to_string(terminal_count) + " times");

    task.entries = std::move(entries);
    return task;
}

inline TaskScript load_task_script(const std::string& path,
                                   std::string terminal_tool = std::string(kDefaultTerminalTool)) {
    return make_task_script(load_script(path).entries(), std::move(terminal_tool));
}

/// Extracts the label from the exact sentence "The final largest ROI is
/// <letter>" (optional trailing period). The prompt demands the sentence
/// appear exactly once at the end, so multiple matches return the last
/// and record a warning; a non-single-letter token is rejected with a
/// warning. Throws MissingRoiStatement when no valid match exists.
inline std::string extract_final_roi(const std::string& text,
                                     std::vector<std::string>* warnings = nullptr) {
    const auto warn = [&](std::string w) {
        if (warnings) warnings->push_back(std::move(w));
    };

    std::optional<std::string> label;
    std::size_t matches = 0;
    std::size_t pos = 0;
    while ((pos = text.find(kRoiSentencePrefix, pos)) != std::string::npos) {
        std::size_t tok = pos + kRoiSentencePrefix.size();
        std::size_t end = tok;
        while (end < text.size() &&
               std::isalnum(static_cast<unsigned char>(text[end])))
            ++end;
        const std::string token = text.substr(tok, end - tok);
        if (token.size() == 1 && std::isalpha(static_cast<unsigned char>(token[0]))) {
            label = token;
            ++matches;
        } else if (token.empty()) {
            warn("ROI statement without a label");
        } else {
            warn("ROI statement names \"" + token + "\", which is not a single letter");
        }
        pos = tok;
    }

    if (!label) throw MissingRoiStatement();
    if (matches > 1)
        warn("ROI statement appears " + std::to_string(matches) +
             " times; the prompt demands exactly one, keeping the last");
    return *label;
}

inline std::size_t count_image_analysis_calls(const Transcript& transcript) {
    std::size_t n = 0;
    for (const Event& event : transcript.events())
        if (const auto* call = std::get_if<ToolCall>(&event.kind))
            if (call->name == "image_analysis") ++n;
    return n;
}

/// Replays one driver script: every image_analysis call gets a fresh
/// responder analysis followed by a full debate (or, with no reviewer, a
/// degenerate zero-cycle Agreed outcome so individual and teamwork runs
/// share this code path); the terminal entry's text is the summary the
/// final ROI is extracted from. A non-null sink receives the full event
/// transcript.
inline RoundRecord run_round(const std::string& round_id, const TaskScript& task,
                             Backend& responder, Backend* reviewer,
                             const PromptTemplateSet& templates,
                             const DebateConfig& debate_config = {},
                             Transcript* sink = nullptr,
                             const std::optional<std::string>& system_prompt = std::nullopt) {
    if (round_id.empty()) throw Error("run_round requires a non-empty round id");

    Transcript local;
    Transcript& transcript = sink ? *sink : local;
    transcript.set_round_id(round_id);

    RoundRecord record;
    record.round_id = round_id;

    std::vector<Message> responder_history;
    if (system_prompt) responder_history.push_back(system_message(*system_prompt));
    std::size_t current_seq = 0;
    const auto run_step = [&](auto&& step) {
        try {
            step();
        } catch (...) {
            std::throw_with_nested(RoundExecutionError(round_id, current_seq));
        }
    };

    for (const ScriptEntry& entry : task.entries) {
        if (!entry.response.empty())
            transcript.append(AssistantText{entry.response});

        for (const ToolCall& call : entry.tool_calls) {
            current_seq = transcript.append(ToolCall{call.name, call.args}).seq;
            ++record.function_call_count;

            if (call.name == task.terminal_tool) {
                if (entry.response.empty()) {
                    record.warnings.push_back("terminal entry carries no summary text");
                } else {
                    try {
                        record.final_roi = extract_final_roi(entry.response, &record.warnings);
                    } catch (const MissingRoiStatement& missing) {
                        record.warnings.push_back(missing.what());
                    }
                }
                continue; // terminal event: no tool result follows
            }

            if (call.name == "take_image") {
                if (auto name = detail::photo_name_arg(call)) {
                    record.last_photo_name = *name;
                } else {
                    record.warnings.push_back("take_image call without a usable name argument");
                }
                transcript.append(ToolResult{call.name, record.last_photo_name});
                continue;
            }

            // image_analysis: obtain the analysis, then debate it.
            std::string final_text;
            run_step([&] {
                responder_history.push_back(
                    user_message(detail::analysis_request(record.last_photo_name)));
                const Message analysis = responder.complete(responder_history);
                responder_history.push_back(analysis);

                DebateOutcome outcome;
                if (reviewer) {
                    outcome = run_debate(analysis.content, responder, *reviewer, templates,
                                         debate_config);
                } else {
                    outcome.status = DebateStatus::Agreed;
                    outcome.final_text = analysis.content;
                    outcome.cycles_used = 0;
                }
                final_text = outcome.final_text;
                record.debates.push_back(std::move(outcome));
            });
            transcript.append(ToolResult{call.name, final_text});
        }
    }

    if (record.last_photo_name.empty())
        record.warnings.push_back("round issued no take_image call");
    if (auto why = transcript.violation())
        throw Error("round " + round_id + " produced an inconsistent transcript: " + *why);
    return record;
}

inline RoundScore score_round(const RoundRecord& record, const GroundTruthMap& truth) {
    RoundScore score;
    score.round_id = record.round_id;
    if (!record.final_roi) {
        score.verdict = RoundVerdict::Unscorable;
        return score;
    }
    const auto it = truth.entries.find(record.last_photo_name);
    if (it == truth.entries.end()) {
        score.verdict = RoundVerdict::Unscorable;
        return score;
    }
    // An empty acceptable set means no answer is correct, so any stated
    // ROI scores Incorrect rather than Unscorable.
    score.verdict = it->second.count(*record.final_roi) ? RoundVerdict::Correct
                                                        : RoundVerdict::Incorrect;
    return score;
}

struct AccuracySummary {
    std::size_t correct = 0;
    std::size_t incorrect = 0;
    std::size_t unscorable = 0;
    double fraction = 0.0; // correct / (correct + incorrect)

    friend bool operator==(const AccuracySummary&, const AccuracySummary&) = default;
};

inline AccuracySummary compute_accuracy(const std::vector<RoundScore>& scores) {
    AccuracySummary summary;
    for (const RoundScore& s : scores) {
        switch (s.verdict) {
            case RoundVerdict::Correct: ++summary.correct; break;
            case RoundVerdict::Incorrect: ++summary.incorrect; break;
            case RoundVerdict::Unscorable: ++summary.unscorable; break;
        }
    }
    const std::size_t scorable = summary.correct + summary.incorrect;
    if (scorable == 0) throw NoScorableRounds();
    summary.fraction = static_cast<double>(summary.correct) / static_cast<double>(scorable);
    return summary;
}

/// Round line emitted per round, bit-exact:
/// "<round_id> * Number of function calls: <n> * ROI Identified: <label>."
inline std::string format_round_line(const RoundRecord& record) {
    if (!record.final_roi)
        throw Error("cannot format a round line for round " + record.round_id +
                    ": no final ROI was extracted");
    return record.round_id + " * Number of function calls: " +
           std::to_string(record.function_call_count) + " * ROI Identified: " +
           *record.final_roi + ".";
}

struct ParsedRoundLine {
    std::string round_id;
    std::size_t function_call_count = 0;
    std::string final_roi;

    friend bool operator==(const ParsedRoundLine&, const ParsedRoundLine&) = default;
};

struct RoundLineParseError : Error {
    explicit RoundLineParseError(const std::string& why)
        : Error("unparseable round line: " + why) {}
};

inline ParsedRoundLine parse_round_line(const std::string& line) {
    static constexpr std::string_view kCalls = " * Number of function calls: ";
    static constexpr std::string_view kRoi = " * ROI Identified: ";

    const std::size_t calls_at = line.find(kCalls);
    if (calls_at == std::string::npos) throw RoundLineParseError("missing function-call field");
    const std::size_t roi_at = line.find(kRoi, calls_at + kCalls.size());
    if (roi_at == std::string::npos) throw RoundLineParseError("missing ROI field");

    ParsedRoundLine parsed;
    parsed.round_id = line.substr(0, calls_at);
    if (parsed.round_id.empty()) throw RoundLineParseError("empty round id");

    const std::string count_text =
        line.substr(calls_at + kCalls.size(), roi_at - calls_at - kCalls.size());
    if (count_text.empty() ||
        count_text.find_first_not_of("0123456789") != std::string::npos)
        throw RoundLineParseError("function-call count \"" + count_text + "\" is not a number");
    parsed.function_call_count = std::stoull(count_text);

    std::string tail = line.substr(roi_at + kRoi.size());
    if (tail.size() != 2 || tail.back() != '.' ||
        !std::isalpha(static_cast<unsigned char>(tail[0])))
        throw RoundLineParseError("ROI field \"" + tail + "\" is not a single letter plus period");
    parsed.final_roi = tail.substr(0, 1);
    return parsed;
}

} // namespace duet
