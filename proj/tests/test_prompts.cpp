#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <string>
#include <vector>

#include "duet/prompts.hpp"

using namespace duet;

TEST_CASE("placeholders substitute from the binding map", "[prompts]") {
    CHECK(render_template("hello {who}", {{"who", "world"}}) == "hello world");
    CHECK(render_template("{a}{b}{a}", {{"a", "x"}, {"b", "y"}}) == "xyx");
}

TEST_CASE("substituted values are never re-scanned", "[prompts]") {
    // A value containing brace syntax must come through verbatim.
    CHECK(render_template("{a}", {{"a", "{b}"}}) == "{b}");
    CHECK(render_template("{a}", {{"a", "{{literal}}"}}) == "{{literal}}");
}

TEST_CASE("doubled braces escape to literals", "[prompts]") {
    CHECK(render_template("{{not_a_placeholder}}", {}) == "{not_a_placeholder}");
    CHECK(render_template("a {{ b }} c", {}) == "a { b } c");
    CHECK(render_template("{{{x}}}", {{"x", "v"}}) == "{v}");
}

TEST_CASE("malformed braces stay literal text", "[prompts]") {
    CHECK(render_template("open { brace", {}) == "open { brace");
    CHECK(render_template("{bad-char}", {}) == "{bad-char}");
    CHECK(render_template("trailing {", {}) == "trailing {");
    CHECK(render_template("{}", {}) == "{}");
    CHECK(render_template("lone } brace", {}) == "lone } brace");
}

TEST_CASE("a placeholder without a binding throws MissingBinding", "[prompts]") {
    try {
        render_template("{gone}", {{"other", "x"}});
        FAIL("expected MissingBinding");
    } catch (const MissingBinding& e) {
        CHECK(e.name == "gone");
    }
}

TEST_CASE("unused and empty bindings are warnings, not errors", "[prompts]") {
    std::vector<std::string> warnings;
    const std::string out =
        render_template("{used}", {{"used", ""}, {"spare", "x"}}, &warnings);
    CHECK(out.empty());
    REQUIRE(warnings.size() == 2);
    CHECK(warnings[0].find("used") != std::string::npos);
    CHECK(warnings[1].find("spare") != std::string::npos);
}

TEST_CASE("default templates satisfy their own invariants", "[prompts]") {
    CHECK_FALSE(default_templates().violation().has_value());

    PromptTemplateSet broken = default_templates();
    broken.reviewer_template = "no placeholder here";
    CHECK(broken.violation().has_value());

    broken = default_templates();
    broken.refine_template = "also none";
    CHECK(broken.violation().has_value());

    broken = default_templates();
    broken.roi_format_instruction = "state the label";
    CHECK(broken.violation().has_value());
}

TEST_CASE("system prompt assembles blocks in fixed order", "[prompts]") {
    const SystemPromptFlags flags; // all on
    const FinalObjective objective = default_objective();
    const std::string prompt = build_system_prompt(flags, objective);

    const auto base_at = prompt.find(default_templates().system_base);
    const auto collab_at = prompt.find(std::string(kCollaborationSentence));
    const auto trigger_at = prompt.find(std::string(kConciseSummarizeTrigger));
    const auto format_at = prompt.find(default_templates().roi_format_instruction);
    const auto once_at = prompt.find(std::string(kExactFormatOnce));
    const auto label_at = prompt.find(std::string(kLabelVisibilitySentence));
    const auto objective_at = prompt.find(objective.text);

    REQUIRE(base_at != std::string::npos);
    REQUIRE(collab_at != std::string::npos);
    REQUIRE(trigger_at != std::string::npos);
    REQUIRE(format_at != std::string::npos);
    REQUIRE(once_at != std::string::npos);
    REQUIRE(label_at != std::string::npos);
    REQUIRE(objective_at != std::string::npos);

    CHECK(base_at < collab_at);
    CHECK(collab_at < trigger_at);
    CHECK(trigger_at < format_at);
    CHECK(format_at < once_at);
    CHECK(once_at < label_at);
    CHECK(label_at < objective_at);

    // The objective is the final line, nothing after it.
    CHECK(prompt.substr(prompt.rfind('\n') + 1) == objective.text);
}

TEST_CASE("each flag controls exactly its own clause", "[prompts]") {
    const FinalObjective objective = default_objective();

    SystemPromptFlags flags;
    flags.collaborate_asap = false;
    CHECK(build_system_prompt(flags, objective).find(std::string(kCollaborationSentence)) ==
          std::string::npos);

    flags = SystemPromptFlags{};
    flags.concise_summarize_clause = false;
    const std::string verbose = build_system_prompt(flags, objective);
    CHECK(verbose.find(std::string(kVerboseSummarizeTrigger)) != std::string::npos);
    CHECK(verbose.find(std::string(kConciseSummarizeTrigger)) == std::string::npos);

    flags = SystemPromptFlags{};
    flags.exact_format_once_at_end = false;
    const std::string plain = build_system_prompt(flags, objective);
    CHECK(plain.find("exactly one time at the end") == std::string::npos);
    CHECK(plain.find(std::string(kExactFormatPlain)) != std::string::npos);

    flags = SystemPromptFlags{};
    flags.append_final_objective = false;
    CHECK(build_system_prompt(flags, objective).find(objective.text) == std::string::npos);

    flags = SystemPromptFlags{};
    flags.label_in_final_image = false;
    CHECK(build_system_prompt(flags, objective).find(std::string(kLabelVisibilitySentence)) ==
          std::string::npos);
}

TEST_CASE("an empty objective is rejected", "[prompts]") {
    CHECK_THROWS_AS(build_system_prompt(SystemPromptFlags{}, FinalObjective{"", {}}),
                    EmptyObjective);
}

TEST_CASE("reviewer prompt embeds the analysis verbatim", "[prompts]") {
    const std::string analysis = "Region q is the largest at 40 px.";
    const std::string prompt = build_reviewer_prompt(default_templates(), analysis);
    CHECK(prompt.find(analysis) != std::string::npos);
    CHECK(prompt.find("provide your critique or agreement") != std::string::npos);
    CHECK(prompt.find("I agree") != std::string::npos);
    CHECK(prompt.find("I do not agree") != std::string::npos);
    CHECK(prompt.find("state the final objective at the start") != std::string::npos);
}

TEST_CASE("refine prompt embeds the critique verbatim", "[prompts]") {
    const std::string critique = "The measurement of region b ignored its lower lobe.";
    const std::string prompt = build_refine_prompt(default_templates(), critique);
    CHECK(prompt.find(critique) != std::string::npos);
    CHECK(prompt.find("ChatGPT has provided the following critique") != std::string::npos);
    CHECK(prompt.find("please refine your analysis") != std::string::npos);
}

TEST_CASE("particle reviewer prompt carries both the prompt and the answer", "[prompts]") {
    const std::string analyst_prompt = "How many particles above the cutoff?";
    const std::string answer = "I count 17 particles.";
    const std::string prompt =
        build_exp2_reviewer_prompt(default_templates(), analyst_prompt, answer);
    CHECK(prompt.find(analyst_prompt) != std::string::npos);
    CHECK(prompt.find(answer) != std::string::npos);
    CHECK(prompt.find("Evaluate its answer and give it feedback") != std::string::npos);
    // The analyst prompt block precedes the response block.
    CHECK(prompt.find(analyst_prompt) < prompt.find(answer));
}

TEST_CASE("second-round analyst prompt is the prefix plus the critique", "[prompts]") {
    const std::string critique = "Mask the scale bar before counting.";
    CHECK(build_exp2_round2_prompt(default_templates(), critique) ==
          "See the feedback below and try the analysis again:\n\n" + critique);
}
