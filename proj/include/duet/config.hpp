#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "duet/backend.hpp"
#include "duet/debate.hpp"
#include "duet/error.hpp"
#include "duet/http_backend.hpp"
#include "duet/particle/analyze.hpp"
#include "duet/prompts.hpp"
#include "duet/serialize.hpp"

namespace duet {

struct ConfigError : Error {
    explicit ConfigError(const std::string& why) : Error("config error: " + why) {}
};

/// Where a role's completions come from: a replayed script or a live
/// HTTP chat endpoint.
struct BackendSpec {
    enum class Kind { Scripted, Http };
    Kind kind = Kind::Scripted;
    std::string script_path; // Scripted
    HttpChatSpec http;       // Http

    static BackendSpec scripted(std::string path) {
        BackendSpec spec;
        spec.kind = Kind::Scripted;
        spec.script_path = std::move(path);
        return spec;
    }
};

inline void to_json(nlohmann::json& j, const BackendSpec& spec) {
    if (spec.kind == BackendSpec::Kind::Scripted) {
        j = nlohmann::json{{"type", "scripted"}, {"script", spec.script_path}};
        return;
    }
    j = nlohmann::json{{"type", "http"},
                       {"endpoint", spec.http.endpoint},
                       {"model", spec.http.model},
                       {"extract_path", spec.http.extract_path},
                       {"api_key_env", spec.http.api_key_env},
                       {"auth_header", spec.http.auth_header},
                       {"retry",
                        {{"max_attempts", spec.http.retry.max_attempts},
                         {"base_backoff_ms", spec.http.retry.base_backoff.count()},
                         {"timeout_ms", spec.http.retry.timeout.count()}}}};
}

inline void from_json(const nlohmann::json& j, BackendSpec& spec) {
    const auto type = j.at("type").get<std::string>();
    if (type == "scripted") {
        spec.kind = BackendSpec::Kind::Scripted;
        spec.script_path = j.at("script").get<std::string>();
        return;
    }
    if (type != "http") throw ConfigError("unknown backend type \"" + type + "\"");
    spec.kind = BackendSpec::Kind::Http;
    j.at("endpoint").get_to(spec.http.endpoint);
    j.at("model").get_to(spec.http.model);
    if (const auto it = j.find("extract_path"); it != j.end()) it->get_to(spec.http.extract_path);
    if (const auto it = j.find("api_key_env"); it != j.end()) it->get_to(spec.http.api_key_env);
    if (const auto it = j.find("auth_header"); it != j.end()) it->get_to(spec.http.auth_header);
    if (const auto it = j.find("retry"); it != j.end()) {
        if (const auto f = it->find("max_attempts"); f != it->end())
            f->get_to(spec.http.retry.max_attempts);
        if (const auto f = it->find("base_backoff_ms"); f != it->end())
            spec.http.retry.base_backoff = std::chrono::milliseconds(f->get<long long>());
        if (const auto f = it->find("timeout_ms"); f != it->end())
            spec.http.retry.timeout = std::chrono::milliseconds(f->get<long long>());
    }
}

inline std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
    if (spec.kind == BackendSpec::Kind::Scripted) {
        if (spec.script_path.empty())
            throw ConfigError("scripted backend needs a script path");
        return std::make_unique<ScriptedBackend>(load_script(spec.script_path));
    }
    if (auto why = spec.http.violation()) throw ConfigError(*why);
    return std::make_unique<HttpChatBackend>(spec.http);
}

/// Everything a run needs, resolved from defaults, then the --config
/// file, then command-line flags (last writer wins).
struct AppConfig {
    std::optional<BackendSpec> responder;
    std::optional<BackendSpec> reviewer;
    PromptTemplateSet templates = default_templates();
    SystemPromptFlags flags;
    FinalObjective objective = default_objective();
    DebateConfig debate;

    // Oracle settings (CLI flags map onto these too).
    AnalysisOptions oracle;
    std::optional<double> microns_per_pixel;
    std::optional<double> bar_microns;
    std::optional<std::size_t> bar_pixels;
    std::optional<Rect> exclusion;

    std::string terminal_tool = std::string(kDefaultTerminalTool);
};

namespace detail {

inline void apply_template_overrides(const nlohmann::json& j, PromptTemplateSet& t) {
    const auto set = [&j](const char* key, std::string& field) {
        if (const auto it = j.find(key); it != j.end()) it->get_to(field);
    };
    set("system_base", t.system_base);
    set("reviewer_template", t.reviewer_template);
    set("refine_template", t.refine_template);
    set("roi_format_instruction", t.roi_format_instruction);
    set("exp2_analyst_round1", t.exp2_analyst_round1);
    set("exp2_reviewer_meta", t.exp2_reviewer_meta);
    set("exp2_analyst_round2_prefix", t.exp2_analyst_round2_prefix);
}

inline void apply_flag_overrides(const nlohmann::json& j, SystemPromptFlags& f) {
    const auto set = [&j](const char* key, bool& field) {
        if (const auto it = j.find(key); it != j.end()) it->get_to(field);
    };
    set("collaborate_asap", f.collaborate_asap);
    set("concise_summarize_clause", f.concise_summarize_clause);
    set("exact_format_once_at_end", f.exact_format_once_at_end);
    set("append_final_objective", f.append_final_objective);
    set("label_in_final_image", f.label_in_final_image);
}

inline void apply_debate_overrides(const nlohmann::json& j, DebateConfig& d) {
    if (const auto it = j.find("max_review_cycles"); it != j.end())
        it->get_to(d.max_review_cycles);
    if (const auto it = j.find("ambiguous_policy"); it != j.end()) {
        const auto policy = it->get<std::string>();
        if (policy == "treat_as_disagree") d.ambiguous_policy = AmbiguousPolicy::TreatAsDisagree;
        else if (policy == "abort_debate") d.ambiguous_policy = AmbiguousPolicy::AbortDebate;
        else throw ConfigError("unknown ambiguous_policy \"" + policy + "\"");
    }
    if (const auto it = j.find("refine_after_final_disagreement"); it != j.end())
        it->get_to(d.refine_after_final_disagreement);
}

inline void apply_oracle_overrides(const nlohmann::json& j, AppConfig& cfg) {
    if (const auto it = j.find("min_area_um2"); it != j.end())
        it->get_to(cfg.oracle.min_area_um2);
    if (const auto it = j.find("connectivity"); it != j.end()) {
        const int c = it->get<int>();
        if (c == 4) cfg.oracle.connectivity = Connectivity::Four;
        else if (c == 8) cfg.oracle.connectivity = Connectivity::Eight;
        else throw ConfigError("connectivity must be 4 or 8");
    }
    if (const auto it = j.find("threshold"); it != j.end()) {
        if (it->is_string() && it->get<std::string>() == "otsu")
            cfg.oracle.threshold = ThresholdSpec::otsu();
        else if (it->is_number_integer())
            cfg.oracle.threshold = ThresholdSpec::fixed(it->get<int>());
        else
            throw ConfigError("threshold must be \"otsu\" or an integer level");
    }
    if (const auto it = j.find("exclusion_mode"); it != j.end()) {
        const auto mode = it->get<std::string>();
        if (mode == "zero_out") cfg.oracle.exclusion_mode = ExclusionMode::ZeroOut;
        else if (mode == "flag_only") cfg.oracle.exclusion_mode = ExclusionMode::FlagOnly;
        else throw ConfigError("unknown exclusion_mode \"" + mode + "\"");
    }
    if (const auto it = j.find("um_per_px"); it != j.end())
        cfg.microns_per_pixel = it->get<double>();
    if (const auto it = j.find("bar_um"); it != j.end()) cfg.bar_microns = it->get<double>();
    if (const auto it = j.find("bar_px"); it != j.end())
        cfg.bar_pixels = it->get<std::size_t>();
    if (const auto it = j.find("exclude"); it != j.end()) cfg.exclusion = it->get<Rect>();
}

} // namespace detail

/// Overlays a config-file JSON object onto cfg; only present keys change.
inline void apply_config_json(const nlohmann::json& j, AppConfig& cfg) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    static const char* known[] = {"backends", "templates", "flags",
                                  "objective", "debate",    "oracle",
                                  "terminal_tool"};
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("unknown config key \"" + key + "\"");
        (void)value;
    }

    if (const auto it = j.find("backends"); it != j.end()) {
        if (const auto r = it->find("responder"); r != it->end())
            cfg.responder = r->get<BackendSpec>();
        if (const auto r = it->find("reviewer"); r != it->end())
            cfg.reviewer = r->get<BackendSpec>();
    }
    if (const auto it = j.find("templates"); it != j.end())
        detail::apply_template_overrides(*it, cfg.templates);
    if (const auto it = j.find("flags"); it != j.end())
        detail::apply_flag_overrides(*it, cfg.flags);
    if (const auto it = j.find("objective"); it != j.end()) {
        if (it->is_string()) {
            cfg.objective.text = it->get<std::string>();
        } else {
            if (const auto t = it->find("text"); t != it->end()) t->get_to(cfg.objective.text);
            if (const auto h = it->find("hfw_microns"); h != it->end())
                cfg.objective.hfw_microns = h->get<double>();
        }
    }
    if (const auto it = j.find("debate"); it != j.end())
        detail::apply_debate_overrides(*it, cfg.debate);
    if (const auto it = j.find("oracle"); it != j.end())
        detail::apply_oracle_overrides(*it, cfg);
    if (const auto it = j.find("terminal_tool"); it != j.end())
        it->get_to(cfg.terminal_tool);

    if (auto why = cfg.templates.violation()) throw ConfigError(*why);
    if (auto why = cfg.debate.violation()) throw ConfigError(*why);
    if (cfg.terminal_tool.empty()) throw ConfigError("terminal_tool must be non-empty");
}

inline AppConfig load_app_config(const std::optional<std::string>& path) {
    AppConfig cfg;
    if (path) apply_config_json(load_json_file(*path), cfg);
    return cfg;
}

/// Snapshot of the fully resolved configuration, after file and flag
/// overrides; the manifest digest is computed over this, so two runs
/// with identical effective settings share a digest.
inline nlohmann::json resolved_config_json(const AppConfig& cfg) {
    nlohmann::json j;
    if (cfg.responder) j["backends"]["responder"] = *cfg.responder;
    if (cfg.reviewer) j["backends"]["reviewer"] = *cfg.reviewer;
    j["templates"] = {{"system_base", cfg.templates.system_base},
                      {"reviewer_template", cfg.templates.reviewer_template},
                      {"refine_template", cfg.templates.refine_template},
                      {"roi_format_instruction", cfg.templates.roi_format_instruction},
                      {"exp2_analyst_round1", cfg.templates.exp2_analyst_round1},
                      {"exp2_reviewer_meta", cfg.templates.exp2_reviewer_meta},
                      {"exp2_analyst_round2_prefix", cfg.templates.exp2_analyst_round2_prefix}};
    j["flags"] = {{"collaborate_asap", cfg.flags.collaborate_asap},
                  {"concise_summarize_clause", cfg.flags.concise_summarize_clause},
                  {"exact_format_once_at_end", cfg.flags.exact_format_once_at_end},
                  {"append_final_objective", cfg.flags.append_final_objective},
                  {"label_in_final_image", cfg.flags.label_in_final_image}};
    j["objective"]["text"] = cfg.objective.text;
    if (cfg.objective.hfw_microns) j["objective"]["hfw_microns"] = *cfg.objective.hfw_microns;
    j["debate"] = {{"max_review_cycles", cfg.debate.max_review_cycles},
                   {"ambiguous_policy", to_string(cfg.debate.ambiguous_policy)},
                   {"refine_after_final_disagreement",
                    cfg.debate.refine_after_final_disagreement}};
    j["oracle"] = {{"min_area_um2", cfg.oracle.min_area_um2},
                   {"connectivity", cfg.oracle.connectivity == Connectivity::Four ? 4 : 8},
                   {"exclusion_mode", cfg.oracle.exclusion_mode == ExclusionMode::ZeroOut
                                          ? "zero_out"
                                          : "flag_only"}};
    if (cfg.oracle.threshold.kind == ThresholdSpec::Kind::Fixed)
        j["oracle"]["threshold"] = cfg.oracle.threshold.level;
    else
        j["oracle"]["threshold"] = "otsu";
    if (cfg.microns_per_pixel) j["oracle"]["um_per_px"] = *cfg.microns_per_pixel;
    if (cfg.bar_microns) j["oracle"]["bar_um"] = *cfg.bar_microns;
    if (cfg.bar_pixels) j["oracle"]["bar_px"] = *cfg.bar_pixels;
    if (cfg.exclusion) j["oracle"]["exclude"] = *cfg.exclusion;
    j["terminal_tool"] = cfg.terminal_tool;
    return j;
}

} // namespace duet
