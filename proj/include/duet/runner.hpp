#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "duet/config.hpp"
#include "duet/error.hpp"
#include "duet/exp1.hpp"
#include "duet/exp2.hpp"
#include "duet/particle/analyze.hpp"
#include "duet/particle/image_io.hpp"
#include "duet/report.hpp"
#include "duet/serialize.hpp"

namespace duet {

struct RunPaths {
    std::filesystem::path dir;
    std::filesystem::path manifest;
    std::filesystem::path transcripts;
    std::filesystem::path rounds;
    std::filesystem::path summary_md;
    std::filesystem::path summary_csv;
};

inline RunPaths make_run_paths(const std::filesystem::path& dir) {
    return RunPaths{dir,
                    dir / "manifest.json",
                    dir / "transcripts.jsonl",
                    dir / "rounds.jsonl",
                    dir / "summary.md",
                    dir / "summary.csv"};
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
    write_text_file(path, nlohmann::json(manifest).dump(2) + "\n");
}

inline std::string zero_padded(std::size_t n, int width) {
    std::string digits = std::to_string(n);
    while (static_cast<int>(digits.size()) < width) digits.insert(digits.begin(), '0');
    return digits;
}

} // namespace detail

/// One Experiment-I round to run: the driver script plus optional
/// per-round scripted overrides for the two roles.
struct Exp1TaskEntry {
    std::string round_id;
    std::string driver;
    std::optional<std::string> responder;
    std::optional<std::string> reviewer;
};

/// Accepts either a single driver script (.jsonl), replicated `rounds`
/// times, or a task-set JSON file {"rounds": [{round_id, driver,
/// responder?, reviewer?}, ...]} with paths relative to the file.
inline std::vector<Exp1TaskEntry> load_exp1_tasks(const std::string& task_path,
                                                  std::size_t rounds) {
    const std::filesystem::path path(task_path);
    std::vector<Exp1TaskEntry> tasks;

    if (path.extension() == ".jsonl") {
        if (rounds < 1) throw ConfigError("--rounds must be at least 1");
        for (std::size_t i = 1; i <= rounds; ++i)
            tasks.push_back(Exp1TaskEntry{"round-" + detail::zero_padded(i, 3),
                                          task_path, std::nullopt, std::nullopt});
        return tasks;
    }

    const nlohmann::json j = load_json_file(task_path);
    const auto it = j.find("rounds");
    if (it == j.end() || !it->is_array())
        throw ConfigError(task_path + ": task set needs a \"rounds\" list");
    const std::filesystem::path base = path.parent_path();
    const auto resolve = [&base](const std::string& p) {
        const std::filesystem::path candidate(p);
        return candidate.is_absolute() ? candidate.string() : (base / candidate).string();
    };
    for (const auto& row : *it) {
        Exp1TaskEntry entry;
        entry.round_id = row.at("round_id").get<std::string>();
        entry.driver = resolve(row.at("driver").get<std::string>());
        if (const auto r = row.find("responder"); r != row.end())
            entry.responder = resolve(r->get<std::string>());
        if (const auto r = row.find("reviewer"); r != row.end())
            entry.reviewer = resolve(r->get<std::string>());
        if (entry.round_id.empty()) throw ConfigError(task_path + ": empty round_id");
        tasks.push_back(std::move(entry));
    }
    if (tasks.empty()) throw ConfigError(task_path + ": task set lists no rounds");
    if (rounds > 0 && rounds < tasks.size()) tasks.resize(rounds);
    if (rounds > tasks.size())
        throw ConfigError(task_path + ": asked for " + std::to_string(rounds) +
                          " rounds but the task set defines " + std::to_string(tasks.size()));
    return tasks;
}

struct Exp1RunOutput {
    RunManifest manifest;
    std::vector<RoundRecord> records;
    std::vector<RoundScore> scores;
    std::optional<AccuracySummary> accuracy; // absent when nothing was scorable
    RunPaths paths;
};

/// Runs the rounds sequentially and lays down the run directory:
/// manifest.json, transcripts.jsonl, rounds.jsonl, summary.md,
/// summary.csv. Files are deterministic for scripted backends except the
/// manifest's timestamps.
inline Exp1RunOutput run_exp1(const AppConfig& cfg, const std::vector<Exp1TaskEntry>& tasks,
                              const GroundTruthMap& truth, bool teamwork,
                              const std::string& out_dir, const std::string& run_id) {
    if (tasks.empty()) throw ConfigError("no rounds to run");
    // Base backend specs are needed only for rounds without their own.
    bool need_responder = false;
    bool need_reviewer = false;
    for (const Exp1TaskEntry& t : tasks) {
        need_responder = need_responder || !t.responder.has_value();
        need_reviewer = need_reviewer || !t.reviewer.has_value();
    }
    if (need_responder && !cfg.responder)
        throw ConfigError("responder backend is not configured");
    if (teamwork && need_reviewer && !cfg.reviewer)
        throw ConfigError("teamwork mode needs a reviewer backend");

    Exp1RunOutput out;
    out.paths = make_run_paths(out_dir);
    std::filesystem::create_directories(out.paths.dir);

    out.manifest.run_id = run_id;
    out.manifest.mode = teamwork ? RunMode::Exp1Teamwork : RunMode::Exp1Individual;
    out.manifest.config_digest = config_digest(resolved_config_json(cfg));
    out.manifest.started = iso8601_utc_now();

    const std::string system_prompt =
        build_system_prompt(cfg.flags, cfg.objective, cfg.templates);

    std::vector<nlohmann::json> round_rows;
    bool first_transcript = true;
    for (const Exp1TaskEntry& entry : tasks) {
        const TaskScript task = load_task_script(entry.driver, cfg.terminal_tool);

        const BackendSpec responder_spec =
            entry.responder ? BackendSpec::scripted(*entry.responder) : *cfg.responder;
        const auto responder = make_backend(responder_spec);

        std::unique_ptr<Backend> reviewer;
        if (teamwork) {
            const BackendSpec reviewer_spec =
                entry.reviewer ? BackendSpec::scripted(*entry.reviewer) : *cfg.reviewer;
            reviewer = make_backend(reviewer_spec);
        }

        Transcript transcript;
        RoundRecord record = run_round(entry.round_id, task, *responder, reviewer.get(),
                                       cfg.templates, cfg.debate, &transcript, system_prompt);

        write_transcript(out.paths.transcripts.string(), transcript, record.debates,
                         /*append=*/!first_transcript);
        first_transcript = false;

        round_rows.push_back(nlohmann::json(record));
        out.scores.push_back(score_round(record, truth));
        out.records.push_back(std::move(record));
    }
    if (first_transcript) write_jsonl(out.paths.transcripts.string(), {});
    write_jsonl(out.paths.rounds.string(), round_rows);

    // Summary files. Accuracy may legitimately not exist.
    ReportTable csv_table;
    csv_table.headers = {"Round", "FunctionCalls", "ROI", "Verdict"};
    for (std::size_t i = 0; i < out.records.size(); ++i) {
        const RoundRecord& r = out.records[i];
        csv_table.rows.push_back({r.round_id, std::to_string(r.function_call_count),
                                  r.final_roi.value_or(""), to_string(out.scores[i].verdict)});
    }
    detail::write_text_file(out.paths.summary_csv, render_csv(csv_table));

    std::string headline;
    try {
        out.accuracy = compute_accuracy(out.scores);
        headline = "Accuracy: " + format_percent(out.accuracy->fraction) + " (" +
                   std::to_string(out.accuracy->correct) + " correct, " +
                   std::to_string(out.accuracy->incorrect) + " incorrect, " +
                   std::to_string(out.accuracy->unscorable) + " unscorable)";
    } catch (const NoScorableRounds&) {
        headline = "Accuracy: undefined (no scorable rounds)";
    }

    std::string md = "# Run " + run_id + "\n\n";
    md += "- mode: " + std::string(to_string(out.manifest.mode)) + "\n";
    md += "- rounds: " + std::to_string(out.records.size()) + "\n";
    md += "- " + headline + "\n\n";
    md += "## Round lines\n\n```\n";
    for (const RoundRecord& r : out.records)
        if (r.final_roi) md += format_round_line(r) + "\n";
    md += "```\n\n## Rounds\n\n" + render_markdown_table(csv_table);
    detail::write_text_file(out.paths.summary_md, md);

    out.manifest.round_count = out.records.size();
    out.manifest.finished = iso8601_utc_now();
    detail::write_manifest(out.paths.manifest, out.manifest);
    return out;
}

struct Exp2RunOutput {
    RunManifest manifest;
    Exp2Summary summary;
    RunPaths paths;
};

namespace detail {

inline Exp2RunOutput write_exp2_run(const AppConfig& cfg,
                                    std::vector<CritiqueLoopRecord> records,
                                    const std::string& out_dir, const std::string& run_id,
                                    std::string started) {
    Exp2RunOutput out;
    out.paths = make_run_paths(out_dir);
    std::filesystem::create_directories(out.paths.dir);

    out.summary = summarize_exp2(std::move(records));

    out.manifest.run_id = run_id;
    out.manifest.mode = RunMode::Exp2;
    out.manifest.config_digest = config_digest(resolved_config_json(cfg));
    out.manifest.started = std::move(started);
    out.manifest.round_count = out.summary.records.size();

    std::vector<nlohmann::json> rows;
    rows.reserve(out.summary.records.size());
    for (const CritiqueLoopRecord& r : out.summary.records) rows.push_back(nlohmann::json(r));
    write_jsonl(out.paths.rounds.string(), rows);
    write_jsonl(out.paths.transcripts.string(), {});

    const RenderedSummary rendered = render_summary(out.summary);
    write_text_file(out.paths.summary_csv, render_csv(rendered.table));
    write_text_file(out.paths.summary_md,
                    "# Run " + run_id + "\n\n- mode: exp2\n- images: " +
                        std::to_string(out.summary.records.size()) + "\n- " + rendered.text +
                        "\n\n" + render_markdown_table(rendered.table));

    out.manifest.finished = iso8601_utc_now();
    write_manifest(out.paths.manifest, out.manifest);
    return out;
}

} // namespace detail

/// Replay mode: score recorded first/revised answers from a fixture.
inline Exp2RunOutput run_exp2_fixture(const AppConfig& cfg,
                                      const std::vector<Exp2FixtureEntry>& fixture,
                                      const std::string& out_dir, const std::string& run_id) {
    if (fixture.empty()) throw ConfigError("fixture lists no images");
    const std::string started = iso8601_utc_now();
    std::vector<CritiqueLoopRecord> records;
    records.reserve(fixture.size());
    for (const Exp2FixtureEntry& entry : fixture)
        records.push_back(replay_fixture_entry(entry));
    return detail::write_exp2_run(cfg, std::move(records), out_dir, run_id, started);
}

/// Live mode: ground truth from the particle oracle per image, then the
/// two-round critique loop against the configured backends. One analyst
/// and one reviewer instance serve the whole run, in image-name order.
inline Exp2RunOutput run_exp2_images(const AppConfig& cfg, const std::string& images_dir,
                                     const std::string& out_dir, const std::string& run_id) {
    if (!cfg.responder) throw ConfigError("analyst backend is not configured");
    if (!cfg.reviewer) throw ConfigError("reviewer backend is not configured");

    ScaleCalibration calibration;
    if (cfg.microns_per_pixel) {
        calibration = calibrate_direct(*cfg.microns_per_pixel, cfg.exclusion);
    } else if (cfg.bar_microns && cfg.bar_pixels) {
        calibration = calibrate_bar(*cfg.bar_microns, *cfg.bar_pixels, cfg.exclusion);
    } else {
        throw ConfigError("oracle calibration missing: set um_per_px or bar_um + bar_px");
    }

    std::vector<std::filesystem::path> images;
    for (const auto& entry : std::filesystem::directory_iterator(images_dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".pgm") images.push_back(entry.path());
    }
    std::sort(images.begin(), images.end());
    if (images.empty()) throw ConfigError(images_dir + " holds no .png or .pgm images");

    const std::string started = iso8601_utc_now();
    const auto analyst = make_backend(*cfg.responder);
    const auto reviewer = make_backend(*cfg.reviewer);

    std::vector<CritiqueLoopRecord> records;
    records.reserve(images.size());
    for (const auto& path : images) {
        const GrayImage image = read_gray_image(path.string());
        const ParticleAnalysisResult truth = count_particles(image, calibration, cfg.oracle);
        records.push_back(run_critique_loop(path.filename().string(), *analyst, *reviewer,
                                            cfg.templates,
                                            static_cast<std::int64_t>(truth.count)));
    }
    return detail::write_exp2_run(cfg, std::move(records), out_dir, run_id, started);
}

} // namespace duet
