#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "evmstoch/error.hpp"
#include "evmstoch/pipeline.hpp"

using namespace evmstoch;

namespace {

ControlReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed report " + path.string() + ": " + e.what());
    }
    return control_report_from_json(j);
}

void print_report(const ControlReport& r) {
    std::printf("EV level            %.4f\n", r.ev_level);
    std::printf("SV / CV             %.6g / %.6g\n", r.status.schedule_variance, r.status.cost_variance);
    std::printf("p(anomaly)          %.4f%s\n", r.p_anomaly, r.anomalous ? "  (anomalous)" : "");
    std::printf("p(over-cost)        %.4f  [%s]\n", r.p_overcost, r.cost_classifier.family.c_str());
    std::printf("p(delay)            %.4f  [%s]\n", r.p_delay, r.time_classifier.family.c_str());
    std::printf("E[final cost]       %.6g  (over-cost %.6g)  [%s]\n", r.expected_final_cost, r.expected_overcost,
                r.cost_regressor.family.c_str());
    std::printf("E[final duration]   %.6g  (delay %.6g)  [%s]\n", r.expected_final_duration, r.expected_delay,
                r.time_regressor.family.c_str());
    if (!r.inside_training_hull) std::printf("warning: status lies outside the simulated cloud\n");
    if (r.cost_extrapolated || r.duration_extrapolated) std::printf("warning: regression extrapolates at this status\n");
    for (const std::string& w : r.warnings) std::printf("warning: %s\n", w.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic earned value analysis"};
    app.require_subcommand(1);

    RunConfig config;
    std::vector<double> levels = config.ev_levels;

    auto* simulate = app.add_subcommand("simulate", "Monte Carlo triads per EV level");
    simulate->add_option("--project", config.project_path, "project JSON")->required();
    simulate->add_option("--runs", config.runs, "number of runs")->capture_default_str();
    simulate->add_option("--seed", config.seed, "ensemble seed")->capture_default_str();
    simulate->add_option("--ev-levels", levels, "EV levels as fractions of BAC")->delimiter(',');
    simulate->add_option("--out", config.output_dir, "output directory")->required();

    double at = 0.0, ac = 0.0, ev = 0.0;
    std::string data_dir, cache_dir;
    std::filesystem::path analyze_out = "evmstoch_report";
    auto* analyze = app.add_subcommand("analyze", "Score one observed project status");
    analyze->add_option("--project", config.project_path, "project JSON")->required();
    analyze->add_option("--at", at, "actual time")->required();
    analyze->add_option("--ac", ac, "actual cost")->required();
    analyze->add_option("--ev", ev, "earned value")->required();
    analyze->add_option("--data", data_dir, "directory written by simulate");
    analyze->add_option("--runs", config.runs, "runs when simulating on demand")->capture_default_str();
    analyze->add_option("--seed", config.seed, "seed when simulating on demand")->capture_default_str();
    analyze->add_option("--out", analyze_out, "directory for report.json and prediction_grid.csv")->capture_default_str();
    analyze->add_option("--cache", cache_dir, "model-selection cache directory");

    std::filesystem::path report_path, svg_path;
    auto* chart = app.add_subcommand("chart", "Render control chart SVGs from a report");
    chart->add_option("--report", report_path, "report.json from analyze")->required();
    chart->add_option("--out", svg_path, "control chart SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::validation);
    }

    try {
        if (*simulate) {
            config.ev_levels = levels;
            const SimulateResult r = cmd_simulate(config);
            for (const auto& f : r.files) std::printf("%s\n", f.string().c_str());
            std::printf("%s\n", r.manifest.string().c_str());
        } else if (*analyze) {
            config.output_dir = analyze_out;
            if (!cache_dir.empty()) config.cache_dir = cache_dir;
            std::optional<std::filesystem::path> data;
            if (!data_dir.empty()) data = data_dir;
            const ControlReport r = cmd_analyze(config, {at, ac, ev}, data);
            print_report(r);
            std::printf("report: %s\n", (config.output_dir / "report.json").string().c_str());
        } else if (*chart) {
            const ChartResult r = cmd_chart(read_report(report_path), svg_path);
            for (const auto& p : {r.control_chart, r.density_chart, r.classification_chart, r.regression_chart, r.json})
                std::printf("%s\n", p.string().c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(e.kind());
    } catch (const std::bad_alloc&) {
        std::fprintf(stderr, "error: out of memory\n");
        return static_cast<int>(ErrorKind::numerical);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(ErrorKind::validation);
    }
    return 0;
}
