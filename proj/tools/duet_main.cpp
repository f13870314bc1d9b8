// Command-line front end: debate replay, the two experiment harnesses,
// the particle-counting oracle, and run-directory reporting.
//
// Exit codes: 0 success, 1 usage or configuration problem, 2 backend
// failure, 3 finished run with no scorable rounds.

#include <cctype>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "duet/config.hpp"
#include "duet/debate.hpp"
#include "duet/particle/analyze.hpp"
#include "duet/particle/image_io.hpp"
#include "duet/report.hpp"
#include "duet/runner.hpp"
#include "duet/serialize.hpp"

namespace {

std::string default_run_id() {
    std::string id = "run-";
    for (const char c : duet::iso8601_utc_now())
        if (std::isalnum(static_cast<unsigned char>(c))) id += c;
    return id;
}

std::optional<std::string> value_of(const CLI::Option* opt, const std::string& storage) {
    if (opt->count() == 0) return std::nullopt;
    return storage;
}

duet::Rect parse_exclude(const std::string& text) {
    duet::Rect rect;
    char trailing = 0;
    if (std::sscanf(text.c_str(), "%zu,%zu,%zu,%zu%c", &rect.x, &rect.y, &rect.w, &rect.h,
                    &trailing) != 4)
        throw duet::ConfigError("--exclude expects x,y,w,h (got \"" + text + "\")");
    return rect;
}

duet::ThresholdSpec parse_threshold(const std::string& text) {
    if (text == "otsu") return duet::ThresholdSpec::otsu();
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
        throw duet::ConfigError("--threshold expects \"otsu\" or a level in [0, 255]");
    const long level = std::stol(text);
    if (level > 255) throw duet::ConfigError("--threshold level must be in [0, 255]");
    return duet::ThresholdSpec::fixed(static_cast<int>(level));
}

duet::ScaleCalibration calibration_from(const duet::AppConfig& cfg) {
    if (cfg.microns_per_pixel)
        return duet::calibrate_direct(*cfg.microns_per_pixel, cfg.exclusion);
    if (cfg.bar_microns && cfg.bar_pixels)
        return duet::calibrate_bar(*cfg.bar_microns, *cfg.bar_pixels, cfg.exclusion);
    throw duet::ConfigError(
        "oracle calibration missing: set --um-per-px or --bar-um with --bar-px");
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw duet::IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void print_accuracy(const duet::Exp1RunOutput& out) {
    if (out.accuracy) {
        std::cout << "Accuracy: " << duet::format_percent(out.accuracy->fraction) << " ("
                  << out.accuracy->correct << " correct, " << out.accuracy->incorrect
                  << " incorrect, " << out.accuracy->unscorable << " unscorable)\n";
    } else {
        std::cout << "Accuracy: undefined (no scorable rounds)\n";
    }
}

void print_error_chain(const std::exception& e, int depth = 0) {
    std::cerr << (depth == 0 ? "error: " : "  caused by: ") << e.what() << '\n';
    try {
        std::rethrow_if_nested(e);
    } catch (const std::exception& nested) {
        print_error_chain(nested, depth + 1);
    } catch (...) {
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reviewer-in-the-loop SEM analysis runner and particle-counting oracle"};
    app.require_subcommand(1);

    // ---- debate run ----
    auto* debate_cmd = app.add_subcommand("debate", "Single reviewer/responder debate");
    debate_cmd->require_subcommand(1);
    auto* debate_run = debate_cmd->add_subcommand("run", "Run one debate and print the outcome");
    std::string debate_initial, debate_responder, debate_reviewer, debate_config;
    debate_run->add_option("--initial", debate_initial, "Initial analysis text under review")
        ->required();
    auto* debate_responder_opt = debate_run->add_option(
        "--responder", debate_responder, "Scripted responder .jsonl (overrides the config)");
    auto* debate_reviewer_opt = debate_run->add_option(
        "--reviewer", debate_reviewer, "Scripted reviewer .jsonl (overrides the config)");
    auto* debate_config_opt =
        debate_run->add_option("--config", debate_config, "Config file (JSON)");

    // ---- exp1 run ----
    auto* exp1_cmd = app.add_subcommand("exp1", "Image-analysis rounds with optional review");
    exp1_cmd->require_subcommand(1);
    auto* exp1_run = exp1_cmd->add_subcommand("run", "Replay task scripts and score the rounds");
    std::string exp1_task, exp1_truth, exp1_mode = "teamwork", exp1_out = "runs",
                exp1_run_id, exp1_config;
    std::size_t exp1_rounds = 0;
    exp1_run->add_option("--task", exp1_task, "Driver script (.jsonl) or task-set JSON")
        ->required();
    exp1_run->add_option("--truth", exp1_truth, "Ground-truth JSON (image -> labels)")
        ->required();
    exp1_run->add_option("--rounds", exp1_rounds,
                         "Round count (required for a .jsonl task; 0 = all in a task set)");
    exp1_run->add_option("--mode", exp1_mode, "individual or teamwork (default teamwork)");
    exp1_run->add_option("--out", exp1_out, "Parent directory for run output (default runs)");
    auto* exp1_run_id_opt =
        exp1_run->add_option("--run-id", exp1_run_id, "Run identifier (default: timestamp)");
    auto* exp1_config_opt = exp1_run->add_option("--config", exp1_config, "Config file (JSON)");

    // ---- exp2 run ----
    auto* exp2_cmd = app.add_subcommand("exp2", "Count-critique-recount loop");
    exp2_cmd->require_subcommand(1);
    auto* exp2_run = exp2_cmd->add_subcommand("run", "Run or replay the critique loop");
    std::string exp2_images, exp2_fixture, exp2_out = "runs", exp2_run_id, exp2_config;
    auto* exp2_images_opt = exp2_run->add_option(
        "--images", exp2_images, "Directory of .png/.pgm images (live mode)");
    auto* exp2_fixture_opt = exp2_run->add_option(
        "--fixture", exp2_fixture, "Recorded answers JSON (replay mode)");
    exp2_images_opt->excludes(exp2_fixture_opt);
    exp2_run->add_option("--out", exp2_out, "Parent directory for run output (default runs)");
    auto* exp2_run_id_opt =
        exp2_run->add_option("--run-id", exp2_run_id, "Run identifier (default: timestamp)");
    auto* exp2_config_opt = exp2_run->add_option("--config", exp2_config, "Config file (JSON)");

    // ---- oracle count ----
    auto* oracle_cmd = app.add_subcommand("oracle", "Classical particle counting");
    oracle_cmd->require_subcommand(1);
    auto* oracle_count =
        oracle_cmd->add_subcommand("count", "Count particles and print one JSON record per image");
    std::vector<std::string> oracle_images;
    std::string oracle_exclude, oracle_threshold, oracle_overlay, oracle_config;
    double oracle_um_per_px = 0.0, oracle_bar_um = 0.0, oracle_min_area = 0.0;
    std::size_t oracle_bar_px = 0;
    int oracle_connectivity = 0;
    oracle_count->add_option("--image", oracle_images, "Image to analyze (repeatable)")
        ->required();
    auto* um_opt = oracle_count->add_option("--um-per-px", oracle_um_per_px,
                                            "Microns per pixel (direct calibration)");
    auto* bar_um_opt = oracle_count->add_option("--bar-um", oracle_bar_um,
                                                "Scale bar length in microns");
    auto* bar_px_opt = oracle_count->add_option("--bar-px", oracle_bar_px,
                                                "Scale bar length in pixels");
    auto* exclude_opt = oracle_count->add_option(
        "--exclude", oracle_exclude, "Region x,y,w,h to keep out of the count");
    auto* min_area_opt = oracle_count->add_option(
        "--min-area-um2", oracle_min_area, "Minimum particle area in square microns (default 10)");
    auto* connectivity_opt = oracle_count->add_option("--connectivity", oracle_connectivity,
                                                      "Pixel connectivity, 4 or 8 (default 8)");
    auto* threshold_opt = oracle_count->add_option(
        "--threshold", oracle_threshold, "\"otsu\" (default) or a fixed level 0-255");
    auto* overlay_opt = oracle_count->add_option(
        "--overlay", oracle_overlay, "Write an RGB overlay PNG (single image only)");
    auto* oracle_config_opt =
        oracle_count->add_option("--config", oracle_config, "Config file (JSON)");

    // ---- report ----
    auto* report_cmd = app.add_subcommand("report", "Print the summary of a finished run");
    std::string report_dir;
    report_cmd->add_option("run_dir", report_dir, "Run directory to summarize")->required();

    int rc = 0;

    debate_run->callback([&]() {
        duet::AppConfig cfg =
            duet::load_app_config(value_of(debate_config_opt, debate_config));
        if (const auto path = value_of(debate_responder_opt, debate_responder))
            cfg.responder = duet::BackendSpec::scripted(*path);
        if (const auto path = value_of(debate_reviewer_opt, debate_reviewer))
            cfg.reviewer = duet::BackendSpec::scripted(*path);
        if (!cfg.responder || !cfg.reviewer)
            throw duet::ConfigError(
                "debate needs both backends: pass --responder/--reviewer or a config file");

        const auto responder = duet::make_backend(*cfg.responder);
        const auto reviewer = duet::make_backend(*cfg.reviewer);
        const duet::DebateOutcome outcome = duet::run_debate(
            debate_initial, *responder, *reviewer, cfg.templates, cfg.debate);
        std::cout << nlohmann::json(outcome).dump(2) << '\n';
    });

    exp1_run->callback([&]() {
        duet::AppConfig cfg = duet::load_app_config(value_of(exp1_config_opt, exp1_config));
        if (exp1_mode != "individual" && exp1_mode != "teamwork")
            throw duet::ConfigError("--mode must be individual or teamwork");
        const bool teamwork = exp1_mode == "teamwork";

        const auto tasks = duet::load_exp1_tasks(exp1_task, exp1_rounds);
        const duet::GroundTruthMap truth = duet::load_ground_truth(exp1_truth);
        const std::string run_id =
            value_of(exp1_run_id_opt, exp1_run_id).value_or(default_run_id());
        const std::string run_dir = (std::filesystem::path(exp1_out) / run_id).string();

        const duet::Exp1RunOutput out =
            duet::run_exp1(cfg, tasks, truth, teamwork, run_dir, run_id);
        for (const duet::RoundRecord& record : out.records)
            if (record.final_roi) std::cout << duet::format_round_line(record) << '\n';
        print_accuracy(out);
        std::cout << "run directory: " << run_dir << '\n';
        if (!out.accuracy) rc = 3;
    });

    exp2_run->callback([&]() {
        duet::AppConfig cfg = duet::load_app_config(value_of(exp2_config_opt, exp2_config));
        const auto images = value_of(exp2_images_opt, exp2_images);
        const auto fixture = value_of(exp2_fixture_opt, exp2_fixture);
        if (!images && !fixture)
            throw duet::ConfigError("exp2 run needs --images or --fixture");

        const std::string run_id =
            value_of(exp2_run_id_opt, exp2_run_id).value_or(default_run_id());
        const std::string run_dir = (std::filesystem::path(exp2_out) / run_id).string();

        const duet::Exp2RunOutput out =
            fixture ? duet::run_exp2_fixture(cfg, duet::load_exp2_fixture(*fixture), run_dir,
                                             run_id)
                    : duet::run_exp2_images(cfg, *images, run_dir, run_id);
        std::cout << duet::render_summary(out.summary).text << '\n';
        std::cout << "run directory: " << run_dir << '\n';
    });

    oracle_count->callback([&]() {
        duet::AppConfig cfg =
            duet::load_app_config(value_of(oracle_config_opt, oracle_config));
        if (um_opt->count()) cfg.microns_per_pixel = oracle_um_per_px;
        if (bar_um_opt->count()) cfg.bar_microns = oracle_bar_um;
        if (bar_px_opt->count()) cfg.bar_pixels = oracle_bar_px;
        if (exclude_opt->count()) cfg.exclusion = parse_exclude(oracle_exclude);
        if (min_area_opt->count()) cfg.oracle.min_area_um2 = oracle_min_area;
        if (connectivity_opt->count()) {
            if (oracle_connectivity == 4) cfg.oracle.connectivity = duet::Connectivity::Four;
            else if (oracle_connectivity == 8)
                cfg.oracle.connectivity = duet::Connectivity::Eight;
            else throw duet::ConfigError("--connectivity must be 4 or 8");
        }
        if (threshold_opt->count()) cfg.oracle.threshold = parse_threshold(oracle_threshold);
        if (overlay_opt->count() && oracle_images.size() != 1)
            throw duet::ConfigError("--overlay needs exactly one --image");

        const duet::ScaleCalibration calibration = calibration_from(cfg);
        for (const std::string& image_path : oracle_images) {
            const duet::GrayImage image = duet::read_gray_image(image_path);
            const duet::ParticleAnalysisResult result =
                duet::count_particles(image, calibration, cfg.oracle);
            std::cout << duet::particle_record(image_path, result).dump() << '\n';
            if (overlay_opt->count()) duet::write_png_rgb(oracle_overlay, result.overlay);
        }
    });

    report_cmd->callback([&]() {
        const duet::RunPaths paths = duet::make_run_paths(report_dir);
        const duet::RunManifest manifest =
            duet::load_json_file(paths.manifest.string()).get<duet::RunManifest>();
        std::cout << "run " << manifest.run_id << " (" << duet::to_string(manifest.mode)
                  << "), " << manifest.round_count << " rounds\n"
                  << "config digest " << manifest.config_digest << '\n'
                  << "started " << manifest.started << ", finished " << manifest.finished
                  << "\n\n"
                  << read_text_file(paths.summary_md);
    });

    try {
        app.parse(argc, argv);
        return rc;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const duet::NoScorableRounds& e) {
        print_error_chain(e);
        return 3;
    } catch (const duet::RoundExecutionError& e) {
        print_error_chain(e);
        return 2;
    } catch (const duet::DebateBackendFailure& e) {
        print_error_chain(e);
        return 2;
    } catch (const duet::BackendError& e) {
        print_error_chain(e);
        return 2;
    } catch (const std::exception& e) {
        print_error_chain(e);
        return 1;
    }
}
