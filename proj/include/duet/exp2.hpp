#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "duet/backend.hpp"
#include "duet/chat.hpp"
#include "duet/error.hpp"
#include "duet/prompts.hpp"
#include "duet/table.hpp"

namespace duet {

inline constexpr std::string_view kParticleReportPrefix =
    "Identified Particles Larger Than 10 Microns: ";

struct CountExtractionFailed : Error {
    explicit CountExtractionFailed(int analyst_round = 0)
        : Error(analyst_round == 0
                    ? std::string("no integer answer found in the response")
                    : "no integer answer found in the analyst's round " +
                          std::to_string(analyst_round) + " response"),
          round(analyst_round) {}
    int round; // 1 or 2 when raised inside the critique loop, else 0
};

struct EmptyRecordSet : Error {
    EmptyRecordSet() : Error("cannot summarize zero critique-loop records") {}
};

/// One image's two-round critique exchange plus its scoring.
struct CritiqueLoopRecord {
    std::string image_id;
    std::int64_t first_answer = 0;
    std::string critique;
    std::int64_t revised_answer = 0;
    std::int64_t correct_answer = 0;
    bool improved = false;

    friend bool operator==(const CritiqueLoopRecord&, const CritiqueLoopRecord&) = default;
};

/// Strictly smaller absolute error; an unchanged distance (including an
/// unchanged answer) is not improvement.
inline bool improved(std::int64_t first, std::int64_t revised, std::int64_t truth) {
    // Distances via unsigned subtraction: exact even when the signed
    // difference would overflow (two's-complement wraparound is the value).
    const auto dist = [truth](std::int64_t v) {
        const auto uv = static_cast<std::uint64_t>(v);
        const auto ut = static_cast<std::uint64_t>(truth);
        return v >= truth ? uv - ut : ut - uv;
    };
    return dist(revised) < dist(first);
}

namespace detail {

inline bool is_unit_word(std::string_view rest) {
    const auto starts = [rest](std::string_view prefix) {
        if (rest.size() < prefix.size()) return false;
        for (std::size_t i = 0; i < prefix.size(); ++i) {
            const char a = static_cast<char>(
                std::tolower(static_cast<unsigned char>(rest[i])));
            if (a != prefix[i]) return false;
        }
        return true;
    };
    // "\xc2\xb5" is U+00B5 MICRO SIGN, "\xce\xbc" is U+03BC GREEK MU.
    if (starts("micron") || starts("micrometer") || starts("\xc2\xb5m") ||
        starts("\xce\xbcm"))
        return true;
    // Bare "um" only at a word boundary, so prose like "umbrella" stays a word.
    if (starts("um")) {
        if (rest.size() == 2) return true;
        const char next = rest[2];
        return next == '2' || !std::isalnum(static_cast<unsigned char>(next));
    }
    return false;
}

} // namespace detail

/// Pulls the answered particle count out of free-form text. The labeled
/// report line "Identified Particles Larger Than 10 Microns: <n>" wins
/// (last occurrence); otherwise the last standalone non-negative integer
/// is used, skipping decimals, negatives, digits glued to words, and
/// measurements like "10 micrometers^2" whose number is a unit's
/// magnitude rather than an answer.
inline std::int64_t extract_count(const std::string& text) {
    const auto parse_digits = [&text](std::size_t begin,
                                      std::size_t end) -> std::optional<std::int64_t> {
        if (end - begin > 18) return std::nullopt; // garbage, not a particle count
        std::int64_t value = 0;
        for (std::size_t i = begin; i < end; ++i) value = value * 10 + (text[i] - '0');
        return value;
    };
    const auto is_digit = [&text](std::size_t i) {
        return std::isdigit(static_cast<unsigned char>(text[i])) != 0;
    };

    // Labeled report line, last occurrence.
    std::optional<std::int64_t> labeled;
    for (std::size_t pos = 0;
         (pos = text.find(kParticleReportPrefix, pos)) != std::string::npos;
         pos += kParticleReportPrefix.size()) {
        std::size_t begin = pos + kParticleReportPrefix.size();
        std::size_t end = begin;
        while (end < text.size() && is_digit(end)) ++end;
        if (end > begin)
            if (auto v = parse_digits(begin, end)) labeled = v;
    }
    if (labeled) return *labeled;

    std::optional<std::int64_t> last;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!is_digit(i)) {
            ++i;
            continue;
        }
        const std::size_t begin = i;
        while (i < text.size() && is_digit(i)) ++i;
        const std::size_t end = i;

        const char before = begin > 0 ? text[begin - 1] : '\0';
        const char after = end < text.size() ? text[end] : '\0';
        if (before == '-') continue;                               // negative
        if (before == '.' && begin >= 2 && is_digit(begin - 2)) continue; // decimal tail
        if (after == '.' && end + 1 < text.size() && is_digit(end + 1)) continue; // decimal head
        if (std::isalpha(static_cast<unsigned char>(before))) continue; // glued to a word
        if (std::isalpha(static_cast<unsigned char>(after))) continue;  // "123px" style

        std::size_t next_word = end;
        while (next_word < text.size() &&
               (text[next_word] == ' ' || text[next_word] == '\t'))
            ++next_word;
        if (next_word > end &&
            detail::is_unit_word(std::string_view(text).substr(next_word)))
            continue; // a measurement's magnitude, not an answer

        if (auto v = parse_digits(begin, end)) last = v;
    }
    if (!last) throw CountExtractionFailed();
    return *last;
}

/// Two analyst rounds with one reviewer critique in between: ask for the
/// count, have the reviewer critique the prompt/response pair, then ask
/// the analyst again with the critique attached. Scored against truth.
inline CritiqueLoopRecord run_critique_loop(const std::string& image_id, Backend& analyst,
                                            Backend& reviewer,
                                            const PromptTemplateSet& templates,
                                            std::int64_t truth) {
    if (truth < 0) throw Error("ground-truth count must be non-negative");

    CritiqueLoopRecord record;
    record.image_id = image_id;
    record.correct_answer = truth;

    std::vector<Message> analyst_conv{user_message(templates.exp2_analyst_round1)};
    const Message first = analyst.complete(analyst_conv);
    analyst_conv.push_back(first);
    try {
        record.first_answer = extract_count(first.content);
    } catch (const CountExtractionFailed&) {
        throw CountExtractionFailed(1);
    }

    const std::vector<Message> reviewer_conv{user_message(
        build_exp2_reviewer_prompt(templates, templates.exp2_analyst_round1, first.content))};
    const Message critique = reviewer.complete(reviewer_conv);
    record.critique = critique.content;

    analyst_conv.push_back(user_message(build_exp2_round2_prompt(templates, critique.content)));
    const Message revised = analyst.complete(analyst_conv);
    try {
        record.revised_answer = extract_count(revised.content);
    } catch (const CountExtractionFailed&) {
        throw CountExtractionFailed(2);
    }

    record.improved = improved(record.first_answer, record.revised_answer, truth);
    return record;
}

struct Exp2Summary {
    std::vector<CritiqueLoopRecord> records;
    double improvement_rate = 0.0; // improved count / total
    ReportTable table;             // Image, First, Revised, Improved, Correct
};

inline Exp2Summary summarize_exp2(std::vector<CritiqueLoopRecord> records) {
    if (records.empty()) throw EmptyRecordSet();

    Exp2Summary summary;
    summary.table.headers = {"Image", "First", "Revised", "Improved", "Correct"};
    std::size_t improved_count = 0;
    for (const CritiqueLoopRecord& r : records) {
        if (r.improved) ++improved_count;
        summary.table.rows.push_back({r.image_id, std::to_string(r.first_answer),
                                      std::to_string(r.revised_answer),
                                      r.improved ? "Yes" : "No",
                                      std::to_string(r.correct_answer)});
    }
    summary.improvement_rate =
        static_cast<double>(improved_count) / static_cast<double>(records.size());
    summary.records = std::move(records);
    return summary;
}

/// Fixture row for replay mode: recorded answers scored without backends.
struct Exp2FixtureEntry {
    std::string image_id;
    std::optional<std::int64_t> first_answer;
    std::optional<std::int64_t> revised_answer;
    std::int64_t correct_answer = 0;
};

inline CritiqueLoopRecord replay_fixture_entry(const Exp2FixtureEntry& entry) {
    if (!entry.first_answer || !entry.revised_answer)
        throw Error("fixture entry \"" + entry.image_id +
                    "\" lacks recorded answers; replay needs both first and revised");
    CritiqueLoopRecord record;
    record.image_id = entry.image_id;
    record.first_answer = *entry.first_answer;
    record.revised_answer = *entry.revised_answer;
    record.correct_answer = entry.correct_answer;
    record.improved = improved(record.first_answer, record.revised_answer,
                               record.correct_answer);
    return record;
}

} // namespace duet
