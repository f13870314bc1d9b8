#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "duet/error.hpp"

namespace duet {

/// Thrown by render_template when a {placeholder} has no binding.
struct MissingBinding : Error {
    explicit MissingBinding(std::string placeholder)
        : Error("missing binding for placeholder '{" + placeholder + "}'"),
          name(std::move(placeholder)) {}
    std::string name;
};

struct EmptyObjective : Error {
    EmptyObjective() : Error("final objective text is empty") {}
};

/// Every prompt used by the harness, as templates with {name} placeholders.
struct PromptTemplateSet {
    std::string system_base;
    std::string reviewer_template;
    std::string refine_template;
    std::string roi_format_instruction;
    std::string exp2_analyst_round1;
    std::string exp2_reviewer_meta;
    std::string exp2_analyst_round2_prefix;

    /// Returns an explanation for the first violated invariant, or nullopt.
    std::optional<std::string> violation() const {
        if (reviewer_template.find("{gemini_response}") == std::string::npos)
            return std::string("reviewer_template lacks {gemini_response}");
        if (refine_template.find("{chatgpt_response}") == std::string::npos)
            return std::string("refine_template lacks {chatgpt_response}");
        if (roi_format_instruction.find("The final largest ROI is") == std::string::npos)
            return std::string("roi_format_instruction lacks the ROI sentence skeleton");
        return std::nullopt;
    }
};

/// Feature flags for the system prompt. All default to the kept
/// configuration; the rejected prompt variants are available only as
/// explicit system_base overrides (see kRejectedNeedleHint and
/// kRejectedRoundTracking).
struct SystemPromptFlags {
    bool collaborate_asap = true;
    bool concise_summarize_clause = true;
    bool exact_format_once_at_end = true;
    bool append_final_objective = true;
    bool label_in_final_image = true;

    friend bool operator==(const SystemPromptFlags&, const SystemPromptFlags&) = default;
};

/// The operator command the agents work toward.
struct FinalObjective {
    std::string text;
    std::optional<double> hfw_microns;
};

inline FinalObjective default_objective() {
    return {"take a picture of the martensite phase with HFW of 80 microns and state the label "
            "of the largest ROI when the summarize function is called",
            80.0};
}

// Prompt variants that were tried and rejected. Kept available as data so a
// system_base override can reproduce them; never added by any flag.
inline constexpr std::string_view kRejectedNeedleHint =
    "Information that will be helpful: Martensite phases consist of needle-like structures.";
inline constexpr std::string_view kRejectedRoundTracking =
    "Keep track of which round of debate you are at, and in the last round, the largest ROI "
    "must be stated explicitly. Since there is a debate that occurs for each image analysis, "
    "you can get the final largest ROI from the last analysis provided by either ChatGPT and "
    "Gemini.";

inline PromptTemplateSet default_templates() {
    PromptTemplateSet t;
    t.system_base =
        "You are an expert assistant for scanning electron microscope image analysis, working "
        "toward the operator's stated final objective.";
    t.reviewer_template =
        "Based on the following analysis, provide your critique or agreement: {gemini_response}. "
        "Please collaborate with each other and try to reach an agreement as soon as possible. "
        "If you agree, please explicitly state 'I agree'. If you do not agree, please explicitly "
        "state 'I do not agree' first. In brackets, state the final objective at the start of "
        "your response.";
    t.refine_template =
        "ChatGPT has provided the following critique: {chatgpt_response}. Please collaborate "
        "with each other and try to reach an agreement as soon as possible. If you agree, "
        "please refine your analysis. If you don't agree, please state why, and repeat your "
        "analysis.";
    t.roi_format_instruction =
        "clearly state the label (e.g., a) of the largest ROI identified in this exact format "
        "\"The final largest ROI is a\". Please replace 'a' with the actual result.";
    t.exp2_analyst_round1 =
        "Tell me how many white particles are larger than 10 micrometers² in this photo. "
        "Use appropriate techniques to isolate the white particles and exclude irrelevant "
        "regions like the scale bar. Ensure particles at the bottom that may be intersecting "
        "are not included. Use the scale bar at the bottom for pixel to micrometer conversion "
        "and show me an annotated image that highlights the detected particles, along with the "
        "number. The detection should focus on particles over 10 micrometers² and avoid "
        "any false positives from the scale bar region.";
    t.exp2_reviewer_meta =
        "Assume the role where you are talking to ChatGPT, so your answer needs to be directly "
        "addressed to ChatGPT. I'm going to tell you what prompt i gave ChatGPT and what it "
        "responded me with. Evaluate its answer and give it feedback so that it can improve. "
        "You can also improve the prompt to help ChatGPT give a better answer.\n\n"
        "Prompt for ChatGPT:\n\n{analyst_prompt}\n\nChatGPT's response: {chatgpt_response}";
    t.exp2_analyst_round2_prefix = "See the feedback below and try the analysis again:\n\n";
    return t;
}

namespace detail {

inline bool placeholder_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

} // namespace detail

/// Substitutes {name} placeholders from the binding map, in a single pass:
/// substituted values are emitted verbatim and never re-scanned. "{{" and
/// "}}" escape literal braces; a "{" that does not open a well-formed
/// placeholder is kept as literal text.
///
/// Unused bindings and bindings with empty values are warnings, reported
/// through `warnings` when given. A placeholder with no binding throws
/// MissingBinding.
inline std::string render_template(std::string_view tmpl,
                                   const std::map<std::string, std::string>& bindings,
                                   std::vector<std::string>* warnings = nullptr) {
    std::string out;
    out.reserve(tmpl.size());
    std::set<std::string_view> used;

    for (std::size_t i = 0; i < tmpl.size();) {
        const char c = tmpl[i];
        if (c == '{') {
            if (i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
                out.push_back('{');
                i += 2;
                continue;
            }
            std::size_t j = i + 1;
            while (j < tmpl.size() && detail::placeholder_char(tmpl[j])) ++j;
            if (j > i + 1 && j < tmpl.size() && tmpl[j] == '}') {
                const std::string name(tmpl.substr(i + 1, j - i - 1));
                auto it = bindings.find(name);
                if (it == bindings.end()) throw MissingBinding(name);
                if (warnings && it->second.empty())
                    warnings->push_back("placeholder '{" + name + "}' substituted with empty text");
                out += it->second;
                used.insert(it->first);
                i = j + 1;
                continue;
            }
            out.push_back('{');
            ++i;
            continue;
        }
        if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            out.push_back('}');
            i += 2;
            continue;
        }
        out.push_back(c);
        ++i;
    }

    if (warnings) {
        for (const auto& [name, value] : bindings) {
            if (!used.count(name)) warnings->push_back("unused binding '" + name + "'");
        }
    }
    return out;
}

inline constexpr std::string_view kCollaborationSentence =
    "Please collaborate with each other and try to reach an agreement as soon as possible.";
inline constexpr std::string_view kLabelVisibilitySentence =
    "Label can be found in the final image generated.";
inline constexpr std::string_view kConciseSummarizeTrigger =
    "Once the list-summarize function is called,";
inline constexpr std::string_view kVerboseSummarizeTrigger =
    "Once the final objective has been achieved (after the list-summarize function is called),";
inline constexpr std::string_view kExactFormatOnce =
    "This sentence must appear in the exact format, exactly one time at the end.";
inline constexpr std::string_view kExactFormatPlain =
    "This sentence must appear in the exact format.";

/// Assembles the system prompt. Block order is fixed: base text,
/// collaboration sentence, ROI reporting block (summarize trigger + format
/// instruction + exactness sentence), label-visibility sentence, and the
/// final objective as the last line. Each flag controls exactly its own
/// clause and nothing else.
inline std::string build_system_prompt(const SystemPromptFlags& flags,
                                       const FinalObjective& objective,
                                       const PromptTemplateSet& templates = default_templates()) {
    if (objective.text.empty()) throw EmptyObjective();

    std::vector<std::string> blocks;
    if (!templates.system_base.empty()) blocks.emplace_back(templates.system_base);
    if (flags.collaborate_asap) blocks.emplace_back(kCollaborationSentence);

    std::string roi_block = "Very important: ";
    roi_block += flags.concise_summarize_clause ? kConciseSummarizeTrigger
                                                : kVerboseSummarizeTrigger;
    roi_block += " ";
    roi_block += templates.roi_format_instruction;
    roi_block += " ";
    roi_block += flags.exact_format_once_at_end ? kExactFormatOnce : kExactFormatPlain;
    blocks.push_back(std::move(roi_block));

    if (flags.label_in_final_image) blocks.emplace_back(kLabelVisibilitySentence);
    if (flags.append_final_objective) blocks.push_back(objective.text);

    std::string prompt;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) prompt += '\n';
        prompt += blocks[i];
    }
    return prompt;
}

/// Prompt sent to the reviewer, embedding the responder's current analysis.
inline std::string build_reviewer_prompt(const PromptTemplateSet& templates,
                                         const std::string& gemini_response,
                                         std::vector<std::string>* warnings = nullptr) {
    return render_template(templates.reviewer_template, {{"gemini_response", gemini_response}},
                           warnings);
}

/// Prompt sent back to the responder, embedding the reviewer's critique.
inline std::string build_refine_prompt(const PromptTemplateSet& templates,
                                       const std::string& chatgpt_response,
                                       std::vector<std::string>* warnings = nullptr) {
    return render_template(templates.refine_template, {{"chatgpt_response", chatgpt_response}},
                           warnings);
}

/// Meta-prompt for the particle-counting reviewer: it sees the analyst's
/// original prompt and first answer, and is asked to critique them.
inline std::string build_exp2_reviewer_prompt(const PromptTemplateSet& templates,
                                              const std::string& analyst_prompt,
                                              const std::string& analyst_response,
                                              std::vector<std::string>* warnings = nullptr) {
    return render_template(templates.exp2_reviewer_meta,
                           {{"analyst_prompt", analyst_prompt},
                            {"chatgpt_response", analyst_response}},
                           warnings);
}

/// Second-round analyst prompt: fixed prefix plus the critique, verbatim.
inline std::string build_exp2_round2_prompt(const PromptTemplateSet& templates,
                                            const std::string& critique) {
    return templates.exp2_analyst_round2_prefix + critique;
}

} // namespace duet
