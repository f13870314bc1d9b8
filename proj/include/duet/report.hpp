#pragma once

#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "duet/error.hpp"
#include "duet/exp1.hpp"
#include "duet/exp2.hpp"
#include "duet/serialize.hpp"
#include "duet/table.hpp"

namespace duet {

struct EmptyInput : Error {
    EmptyInput() : Error("nothing to report") {}
};

enum class RunMode { Exp1Individual, Exp1Teamwork, Exp2, OracleOnly };

inline const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::Exp1Individual: return "exp1-individual";
        case RunMode::Exp1Teamwork: return "exp1-teamwork";
        case RunMode::Exp2: return "exp2";
        default: return "oracle-only";
    }
}

inline RunMode run_mode_from_string(const std::string& s) {
    if (s == "exp1-individual") return RunMode::Exp1Individual;
    if (s == "exp1-teamwork") return RunMode::Exp1Teamwork;
    if (s == "exp2") return RunMode::Exp2;
    if (s == "oracle-only") return RunMode::OracleOnly;
    throw Error("unknown run mode \"" + s + "\"");
}

struct RunManifest {
    std::string run_id;
    RunMode mode = RunMode::Exp1Teamwork;
    std::string config_digest;
    std::string started;  // ISO-8601 UTC
    std::string finished; // ISO-8601 UTC
    std::size_t round_count = 0;
};

inline void to_json(nlohmann::json& j, const RunManifest& m) {
    j = nlohmann::json{{"run_id", m.run_id},         {"mode", to_string(m.mode)},
                       {"config_digest", m.config_digest}, {"started", m.started},
                       {"finished", m.finished},     {"round_count", m.round_count}};
}

inline void from_json(const nlohmann::json& j, RunManifest& m) {
    j.at("run_id").get_to(m.run_id);
    m.mode = run_mode_from_string(j.at("mode").get<std::string>());
    j.at("config_digest").get_to(m.config_digest);
    j.at("started").get_to(m.started);
    j.at("finished").get_to(m.finished);
    j.at("round_count").get_to(m.round_count);
}

/// FNV-1a 64 over the canonical (sorted-key) JSON dump; stable across
/// runs and platforms for identical resolved configs.
inline std::string config_digest(const nlohmann::json& resolved_config) {
    const std::string canon = resolved_config.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char byte : canon) {
        h ^= byte;
        h *= 1099511628211ull;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

inline std::string iso8601_utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Percentage with exactly one decimal, locale-free: the value is scaled
/// to integer tenths of a percent and printed digit by digit, so "19.4%"
/// means round(fraction * 1000) == 194 everywhere.
inline std::string format_percent(double fraction) {
    const long long tenths = std::llround(fraction * 1000.0);
    const bool negative = tenths < 0;
    const long long magnitude = negative ? -tenths : tenths;
    std::string out = negative ? "-" : "";
    out += std::to_string(magnitude / 10);
    out += '.';
    out += std::to_string(magnitude % 10);
    out += '%';
    return out;
}

struct RenderedSummary {
    ReportTable table;
    std::string text; // one-line headline with the percentage
};

/// Exp-I scores: table of per-round verdicts plus the accuracy headline.
/// Propagates NoScorableRounds when nothing can be graded.
inline RenderedSummary render_summary(const std::vector<RoundScore>& scores) {
    if (scores.empty()) throw EmptyInput();
    RenderedSummary out;
    out.table.headers = {"Round", "Verdict"};
    for (const RoundScore& s : scores)
        out.table.rows.push_back({s.round_id, to_string(s.verdict)});
    const AccuracySummary acc = compute_accuracy(scores);
    out.text = "Accuracy: " + format_percent(acc.fraction) + " (" +
               std::to_string(acc.correct) + " correct, " + std::to_string(acc.incorrect) +
               " incorrect, " + std::to_string(acc.unscorable) + " unscorable)";
    return out;
}

/// Exp-II summary: the five-column table plus the improvement headline.
inline RenderedSummary render_summary(const Exp2Summary& summary) {
    if (summary.records.empty()) throw EmptyInput();
    RenderedSummary out;
    out.table = summary.table;
    std::size_t improved_count = 0;
    for (const CritiqueLoopRecord& r : summary.records) improved_count += r.improved ? 1 : 0;
    out.text = "Improvement rate: " + format_percent(summary.improvement_rate) + " (" +
               std::to_string(improved_count) + " of " +
               std::to_string(summary.records.size()) + " improved)";
    return out;
}

inline std::string render_markdown_table(const ReportTable& table) {
    if (auto why = table.violation()) throw Error("malformed table: " + *why);
    const auto escape = [](const std::string& cell) {
        std::string out;
        for (const char c : cell) {
            if (c == '|') out += "\\|";
            else if (c == '\n') out += ' ';
            else out += c;
        }
        return out;
    };
    std::string md = "|";
    for (const auto& h : table.headers) md += " " + escape(h) + " |";
    md += "\n|";
    for (std::size_t i = 0; i < table.headers.size(); ++i) md += " --- |";
    md += "\n";
    for (const auto& row : table.rows) {
        md += "|";
        for (const auto& cell : row) md += " " + escape(cell) + " |";
        md += "\n";
    }
    return md;
}

inline std::string render_csv(const ReportTable& table) {
    if (auto why = table.violation()) throw Error("malformed table: " + *why);
    const auto field = [](const std::string& cell) {
        if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
        std::string out = "\"";
        for (const char c : cell) {
            if (c == '"') out += "\"\"";
            else out += c;
        }
        out += '"';
        return out;
    };
    std::string csv;
    for (std::size_t i = 0; i < table.headers.size(); ++i) {
        if (i) csv += ',';
        csv += field(table.headers[i]);
    }
    csv += '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) csv += ',';
            csv += field(row[i]);
        }
        csv += '\n';
    }
    return csv;
}

// ---- JSONL persistence ----

inline std::size_t write_jsonl(const std::string& path,
                               const std::vector<nlohmann::json>& rows, bool append = false) {
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& row : rows) out << row.dump() << '\n';
    if (!out) throw IoError("short write to " + path);
    return rows.size();
}

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<nlohmann::json> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, e.what());
        }
    }
    return rows;
}

/// One JSON object per line: every transcript event, then every debate
/// outcome, each tagged with the round id. Returns the line count.
inline std::size_t write_transcript(const std::string& path, const Transcript& transcript,
                                    const std::vector<DebateOutcome>& debates = {},
                                    bool append = false) {
    std::vector<nlohmann::json> rows;
    rows.reserve(transcript.size() + debates.size());
    for (const Event& event : transcript.events())
        rows.push_back(nlohmann::json{
            {"record", "event"}, {"round_id", transcript.round_id()}, {"event", event}});
    for (std::size_t i = 0; i < debates.size(); ++i)
        rows.push_back(nlohmann::json{{"record", "debate"},
                                      {"round_id", transcript.round_id()},
                                      {"debate_index", i},
                                      {"outcome", debates[i]}});
    return write_jsonl(path, rows, append);
}

struct TranscriptFileContents {
    std::vector<std::pair<std::string, Event>> events;          // (round_id, event)
    std::vector<std::pair<std::string, DebateOutcome>> debates; // (round_id, outcome)
};

inline TranscriptFileContents read_transcript_file(const std::string& path) {
    TranscriptFileContents contents;
    for (const nlohmann::json& row : read_jsonl(path)) {
        const auto kind = row.at("record").get<std::string>();
        const auto round_id = row.at("round_id").get<std::string>();
        if (kind == "event") {
            contents.events.emplace_back(round_id, row.at("event").get<Event>());
        } else if (kind == "debate") {
            contents.debates.emplace_back(round_id, row.at("outcome").get<DebateOutcome>());
        } else {
            throw Error("unknown transcript record \"" + kind + "\" in " + path);
        }
    }
    return contents;
}

} // namespace duet
