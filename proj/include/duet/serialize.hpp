#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "duet/backend.hpp"
#include "duet/chat.hpp"
#include "duet/debate.hpp"
#include "duet/error.hpp"
#include "duet/exp1.hpp"
#include "duet/exp2.hpp"
#include "duet/particle/analyze.hpp"

namespace duet {

namespace detail {

template <typename T>
std::optional<T> get_optional(const nlohmann::json& j, const char* key) {
    if (const auto it = j.find(key); it != j.end() && !it->is_null()) return it->get<T>();
    return std::nullopt;
}

} // namespace detail

// ---- chat-core ----

inline void to_json(nlohmann::json& j, const VerdictValue& v) { j = to_string(v); }

inline void from_json(const nlohmann::json& j, VerdictValue& v) {
    const auto s = j.get<std::string>();
    if (s == "agree") v = VerdictValue::Agree;
    else if (s == "disagree") v = VerdictValue::Disagree;
    else if (s == "ambiguous") v = VerdictValue::Ambiguous;
    else throw Error("unknown verdict value \"" + s + "\"");
}

inline void to_json(nlohmann::json& j, const Verdict& v) {
    j = nlohmann::json{{"value", v.value}};
    if (v.marker_offset) j["marker_offset"] = *v.marker_offset;
}

inline void from_json(const nlohmann::json& j, Verdict& v) {
    j.at("value").get_to(v.value);
    v.marker_offset = detail::get_optional<std::size_t>(j, "marker_offset");
}

inline void to_json(nlohmann::json& j, const ToolCall& c) {
    j = nlohmann::json{{"name", c.name}, {"args", c.args}};
}

inline void from_json(const nlohmann::json& j, ToolCall& c) {
    j.at("name").get_to(c.name);
    c.args.clear();
    if (const auto it = j.find("args"); it != j.end()) it->get_to(c.args);
}

inline void to_json(nlohmann::json& j, const Event& e) {
    j = nlohmann::json{{"seq", e.seq}};
    if (const auto* text = std::get_if<AssistantText>(&e.kind)) {
        j["type"] = "assistant_text";
        j["text"] = text->text;
    } else if (const auto* call = std::get_if<ToolCall>(&e.kind)) {
        j["type"] = "tool_call";
        j["name"] = call->name;
        j["args"] = call->args;
    } else {
        const auto& result = std::get<ToolResult>(e.kind);
        j["type"] = "tool_result";
        j["name"] = result.name;
        j["payload"] = result.payload;
    }
}

inline void from_json(const nlohmann::json& j, Event& e) {
    j.at("seq").get_to(e.seq);
    const auto type = j.at("type").get<std::string>();
    if (type == "assistant_text") {
        e.kind = AssistantText{j.at("text").get<std::string>()};
    } else if (type == "tool_call") {
        ToolCall call;
        j.get_to(call);
        e.kind = std::move(call);
    } else if (type == "tool_result") {
        e.kind = ToolResult{j.at("name").get<std::string>(),
                            j.at("payload").get<std::string>()};
    } else {
        throw Error("unknown event type \"" + type + "\"");
    }
}

inline void to_json(nlohmann::json& j, const Transcript& t) {
    j = nlohmann::json{{"round_id", t.round_id()}, {"events", t.events()}};
}

inline void from_json(const nlohmann::json& j, Transcript& t) {
    t = Transcript::restore(j.at("round_id").get<std::string>(),
                            j.at("events").get<std::vector<Event>>());
}

// ---- debate-engine ----

inline void to_json(nlohmann::json& j, const DebateStatus& s) { j = to_string(s); }

inline void from_json(const nlohmann::json& j, DebateStatus& s) {
    const auto text = j.get<std::string>();
    if (text == "agreed") s = DebateStatus::Agreed;
    else if (text == "fallback_after_max_cycles") s = DebateStatus::FallbackAfterMaxCycles;
    else throw Error("unknown debate status \"" + text + "\"");
}

inline void to_json(nlohmann::json& j, const DebateCycleRecord& r) {
    j = nlohmann::json{
        {"cycle", r.cycle}, {"reviewer_text", r.reviewer_text}, {"verdict", r.verdict}};
    if (r.responder_refinement) j["responder_refinement"] = *r.responder_refinement;
}

inline void from_json(const nlohmann::json& j, DebateCycleRecord& r) {
    j.at("cycle").get_to(r.cycle);
    j.at("reviewer_text").get_to(r.reviewer_text);
    j.at("verdict").get_to(r.verdict);
    r.responder_refinement = detail::get_optional<std::string>(j, "responder_refinement");
}

inline void to_json(nlohmann::json& j, const DebateOutcome& o) {
    j = nlohmann::json{{"status", o.status},
                       {"final_text", o.final_text},
                       {"cycles_used", o.cycles_used},
                       {"cycles", o.cycles},
                       {"ambiguous_count", o.ambiguous_count}};
}

inline void from_json(const nlohmann::json& j, DebateOutcome& o) {
    j.at("status").get_to(o.status);
    j.at("final_text").get_to(o.final_text);
    j.at("cycles_used").get_to(o.cycles_used);
    j.at("cycles").get_to(o.cycles);
    j.at("ambiguous_count").get_to(o.ambiguous_count);
}

// ---- exp1-harness ----

inline void to_json(nlohmann::json& j, const RoundRecord& r) {
    j = nlohmann::json{{"round_id", r.round_id},
                       {"last_photo_name", r.last_photo_name},
                       {"function_call_count", r.function_call_count},
                       {"debates", r.debates},
                       {"warnings", r.warnings}};
    if (r.final_roi) j["final_roi"] = *r.final_roi;
}

inline void from_json(const nlohmann::json& j, RoundRecord& r) {
    j.at("round_id").get_to(r.round_id);
    j.at("last_photo_name").get_to(r.last_photo_name);
    j.at("function_call_count").get_to(r.function_call_count);
    j.at("debates").get_to(r.debates);
    j.at("warnings").get_to(r.warnings);
    r.final_roi = detail::get_optional<std::string>(j, "final_roi");
}

inline void to_json(nlohmann::json& j, const RoundVerdict& v) { j = to_string(v); }

inline void from_json(const nlohmann::json& j, RoundVerdict& v) {
    const auto s = j.get<std::string>();
    if (s == "correct") v = RoundVerdict::Correct;
    else if (s == "incorrect") v = RoundVerdict::Incorrect;
    else if (s == "unscorable") v = RoundVerdict::Unscorable;
    else throw Error("unknown round verdict \"" + s + "\"");
}

inline void to_json(nlohmann::json& j, const RoundScore& s) {
    j = nlohmann::json{{"round_id", s.round_id}, {"verdict", s.verdict}};
}

inline void from_json(const nlohmann::json& j, RoundScore& s) {
    j.at("round_id").get_to(s.round_id);
    j.at("verdict").get_to(s.verdict);
}

inline void to_json(nlohmann::json& j, const AccuracySummary& a) {
    j = nlohmann::json{{"correct", a.correct},
                       {"incorrect", a.incorrect},
                       {"unscorable", a.unscorable},
                       {"fraction", a.fraction}};
}

inline void from_json(const nlohmann::json& j, AccuracySummary& a) {
    j.at("correct").get_to(a.correct);
    j.at("incorrect").get_to(a.incorrect);
    j.at("unscorable").get_to(a.unscorable);
    j.at("fraction").get_to(a.fraction);
}

inline void to_json(nlohmann::json& j, const GroundTruthMap& truth) {
    j = nlohmann::json::object();
    for (const auto& [image, labels] : truth.entries) j[image] = labels;
}

inline void from_json(const nlohmann::json& j, GroundTruthMap& truth) {
    truth.entries.clear();
    for (const auto& [image, labels] : j.items())
        truth.entries[image] = labels.get<std::set<std::string>>();
    if (auto why = truth.violation()) throw Error("invalid ground truth: " + *why);
}

// ---- exp2-harness ----

inline void to_json(nlohmann::json& j, const CritiqueLoopRecord& r) {
    j = nlohmann::json{{"image_id", r.image_id},
                       {"first_answer", r.first_answer},
                       {"critique", r.critique},
                       {"revised_answer", r.revised_answer},
                       {"correct_answer", r.correct_answer},
                       {"improved", r.improved}};
}

inline void from_json(const nlohmann::json& j, CritiqueLoopRecord& r) {
    j.at("image_id").get_to(r.image_id);
    j.at("first_answer").get_to(r.first_answer);
    if (const auto it = j.find("critique"); it != j.end()) it->get_to(r.critique);
    j.at("revised_answer").get_to(r.revised_answer);
    j.at("correct_answer").get_to(r.correct_answer);
    j.at("improved").get_to(r.improved);
}

inline void to_json(nlohmann::json& j, const Exp2FixtureEntry& e) {
    j = nlohmann::json{{"image_id", e.image_id}, {"correct_answer", e.correct_answer}};
    if (e.first_answer) j["first_answer"] = *e.first_answer;
    if (e.revised_answer) j["revised_answer"] = *e.revised_answer;
}

inline void from_json(const nlohmann::json& j, Exp2FixtureEntry& e) {
    j.at("image_id").get_to(e.image_id);
    j.at("correct_answer").get_to(e.correct_answer);
    e.first_answer = detail::get_optional<std::int64_t>(j, "first_answer");
    e.revised_answer = detail::get_optional<std::int64_t>(j, "revised_answer");
}

// ---- particle-oracle ----

inline void to_json(nlohmann::json& j, const Rect& r) {
    j = nlohmann::json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
}

inline void from_json(const nlohmann::json& j, Rect& r) {
    j.at("x").get_to(r.x);
    j.at("y").get_to(r.y);
    j.at("w").get_to(r.w);
    j.at("h").get_to(r.h);
}

inline void to_json(nlohmann::json& j, const Component& c) {
    j = nlohmann::json{{"id", c.id},
                       {"pixel_count", c.pixel_count},
                       {"area_um2", c.area_um2},
                       {"touches_bottom", c.touches_bottom},
                       {"in_exclusion", c.in_exclusion},
                       {"passes_area", c.passes_area},
                       {"bbox", c.bbox}};
}

inline void from_json(const nlohmann::json& j, Component& c) {
    j.at("id").get_to(c.id);
    j.at("pixel_count").get_to(c.pixel_count);
    j.at("area_um2").get_to(c.area_um2);
    j.at("touches_bottom").get_to(c.touches_bottom);
    j.at("in_exclusion").get_to(c.in_exclusion);
    j.at("passes_area").get_to(c.passes_area);
    j.at("bbox").get_to(c.bbox);
}

/// Per-image sidecar record for `oracle count`.
inline nlohmann::json particle_record(const std::string& image_name,
                                      const ParticleAnalysisResult& result) {
    return nlohmann::json{{"image", image_name},
                          {"count", result.count},
                          {"microns_per_pixel", result.calibration.microns_per_pixel},
                          {"components", result.components}};
}

// ---- file helpers ----

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(path + ": " + e.what());
    }
}

inline GroundTruthMap load_ground_truth(const std::string& path) {
    return load_json_file(path).get<GroundTruthMap>();
}

inline std::vector<Exp2FixtureEntry> load_exp2_fixture(const std::string& path) {
    const nlohmann::json j = load_json_file(path);
    if (!j.is_array()) throw Error(path + ": fixture must be a JSON list");
    return j.get<std::vector<Exp2FixtureEntry>>();
}

} // namespace duet
