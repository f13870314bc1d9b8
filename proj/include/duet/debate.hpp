#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "duet/backend.hpp"
#include "duet/chat.hpp"
#include "duet/error.hpp"
#include "duet/prompts.hpp"

namespace duet {

enum class AmbiguousPolicy { TreatAsDisagree, AbortDebate };

inline const char* to_string(AmbiguousPolicy p) {
    return p == AmbiguousPolicy::TreatAsDisagree ? "treat_as_disagree" : "abort_debate";
}

struct DebateConfig {
    std::size_t max_review_cycles = 5;
    AmbiguousPolicy ambiguous_policy = AmbiguousPolicy::TreatAsDisagree;
    bool refine_after_final_disagreement = true;

    std::optional<std::string> violation() const {
        if (max_review_cycles < 1) return std::string("max_review_cycles must be >= 1");
        return std::nullopt;
    }
};

/// One review cycle: the reviewer's critique, its verdict, and the
/// responder's refinement when one was issued.
struct DebateCycleRecord {
    std::size_t cycle = 0; // 1-based
    std::string reviewer_text;
    Verdict verdict;
    std::optional<std::string> responder_refinement;

    friend bool operator==(const DebateCycleRecord&, const DebateCycleRecord&) = default;
};

enum class DebateStatus { Agreed, FallbackAfterMaxCycles };

inline const char* to_string(DebateStatus s) {
    return s == DebateStatus::Agreed ? "agreed" : "fallback_after_max_cycles";
}

struct DebateOutcome {
    DebateStatus status = DebateStatus::Agreed;
    std::string final_text;
    std::size_t cycles_used = 0;
    std::vector<DebateCycleRecord> cycles;
    std::size_t ambiguous_count = 0;

    friend bool operator==(const DebateOutcome&, const DebateOutcome&) = default;
};

/// Thrown when ambiguous_policy is AbortDebate and a reviewer response
/// carries neither marker.
struct AmbiguousAbort : Error {
    explicit AmbiguousAbort(std::size_t at_cycle)
        : Error("reviewer verdict was ambiguous at cycle " + std::to_string(at_cycle)),
          cycle(at_cycle) {}
    std::size_t cycle;
};

/// Wrapper that annotates a backend failure with the cycle and role it
/// happened in; the original error is preserved as the nested exception.
struct DebateBackendFailure : Error {
    DebateBackendFailure(std::size_t at_cycle, std::string failed_role)
        : Error("backend failure in debate cycle " + std::to_string(at_cycle) + " (" +
                failed_role + ")"),
          cycle(at_cycle),
          role(std::move(failed_role)) {}
    std::size_t cycle;
    std::string role;
};

namespace detail {

inline Message call_backend(Backend& backend, const std::vector<Message>& conversation,
                            std::size_t cycle, const char* role) {
    try {
        return backend.complete(conversation);
    } catch (...) {
        std::throw_with_nested(DebateBackendFailure(cycle, role));
    }
}

} // namespace detail

/// Runs one review/refine debate over an initial analysis.
///
/// Per cycle the reviewer sees the responder's current text and issues a
/// verdict; on agreement the debate ends with the current text, otherwise
/// the responder refines against the critique and the refinement becomes
/// current. After max_review_cycles without agreement the responder's
/// latest text is taken as final (the fallback policy). By default the
/// responder still refines on the final disagreement, so the fallback is
/// the last refinement.
///
/// Each debate is context-isolated: the reviewer and responder
/// conversations are built here from scratch and accumulate only this
/// debate's exchanges. Strictly sequential; run independent debates on
/// independent backend instances for parallelism.
inline DebateOutcome run_debate(const std::string& initial_text, Backend& responder,
                                Backend& reviewer, const PromptTemplateSet& templates,
                                const DebateConfig& config = {}) {
    if (initial_text.empty()) throw Error("run_debate requires non-empty initial text");
    if (auto why = config.violation()) throw Error("invalid debate config: " + *why);

    std::vector<Message> reviewer_conv;
    std::vector<Message> responder_conv;

    DebateOutcome outcome;
    std::string current = initial_text;

    for (std::size_t cycle = 1; cycle <= config.max_review_cycles; ++cycle) {
        reviewer_conv.push_back(user_message(build_reviewer_prompt(templates, current)));
        const Message review = detail::call_backend(reviewer, reviewer_conv, cycle, "reviewer");
        reviewer_conv.push_back(review);

        DebateCycleRecord record;
        record.cycle = cycle;
        record.reviewer_text = review.content;
        record.verdict = detect_verdict(review.content);

        if (record.verdict.value == VerdictValue::Agree) {
            outcome.cycles.push_back(std::move(record));
            outcome.status = DebateStatus::Agreed;
            outcome.final_text = current;
            outcome.cycles_used = cycle;
            return outcome;
        }

        if (record.verdict.value == VerdictValue::Ambiguous) {
            ++outcome.ambiguous_count;
            if (config.ambiguous_policy == AmbiguousPolicy::AbortDebate)
                throw AmbiguousAbort(cycle);
        }

        const bool last_cycle = cycle == config.max_review_cycles;
        if (!last_cycle || config.refine_after_final_disagreement) {
            responder_conv.push_back(
                user_message(build_refine_prompt(templates, record.reviewer_text)));
            const Message refinement =
                detail::call_backend(responder, responder_conv, cycle, "responder");
            responder_conv.push_back(refinement);
            record.responder_refinement = refinement.content;
            current = refinement.content;
        }
        outcome.cycles.push_back(std::move(record));
    }

    outcome.status = DebateStatus::FallbackAfterMaxCycles;
    outcome.final_text = current;
    outcome.cycles_used = config.max_review_cycles;
    return outcome;
}

} // namespace duet
