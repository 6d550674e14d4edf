#ifndef EVMSTOCH_PIPELINE_HPP
#define EVMSTOCH_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "evmstoch/classification.hpp"
#include "evmstoch/gam.hpp"
#include "evmstoch/project.hpp"

namespace evmstoch {

struct ModelGrids {
    std::vector<ForestParams> forest;
    std::vector<SvmParams> svm;
    int min_knots = 2, max_knots = 8;
    std::vector<double> spans;
};

/// Forest {ntree 200} x {min_node 5, 25}; SVM C in {0.5, 2, 8} x gamma in {0.25, 1, 4};
/// knots 2..8; spans 0.1..1.0.
ModelGrids default_model_grids();

struct RunConfig {
    std::filesystem::path project_path;
    std::uint64_t runs = 100000;
    std::uint64_t seed = 42;
    std::vector<double> ev_levels{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::size_t grid_resolution = 60;
    ModelGrids grids = default_model_grids();
    // Rows fed to model selection (first rows of the ensemble, which is in run order).
    std::size_t classifier_rows = 1000;
    std::size_t regression_rows = 2000;
    // Rows used to refit the selected models.
    std::size_t final_rows = 4000;
    std::size_t k_outer = 5, k_inner = 5;
    std::filesystem::path output_dir;
    std::optional<std::filesystem::path> cache_dir;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Triad CSV name for one EV level, e.g. "triads_ev0.5000.csv".
std::string triad_file_name(double ev_level);

struct SimulateResult {
    std::vector<std::filesystem::path> files;
    std::filesystem::path manifest;
};

/// Writes one triad CSV per EV level plus manifest.json (config, seed, counts, BAC, PD).
SimulateResult cmd_simulate(const RunConfig& config);

struct ObservedStatus {
    double at = 0.0;  // actual time
    double ac = 0.0;  // actual cost
    double ev = 0.0;  // earned value
};

struct ModelChoice {
    std::string family;
    Params params;
    double nested_score = 0.0;  // error rate or MSE of the chosen family
    nlohmann::json candidates;  // per family: outer mean/sd and final params
    bool single_class = false;
    double positive_fraction = 0.0;
};

struct ControlReport {
    nlohmann::json config;
    std::uint64_t spec_fingerprint = 0;
    double bac = 0.0, pd = 0.0;
    double ev_level = 0.0;
    EvmStatus status;
    double p_anomaly = 0.0;
    double p_overcost = 0.0;
    double p_delay = 0.0;
    double expected_final_cost = 0.0;
    double expected_overcost = 0.0;
    double expected_final_duration = 0.0;
    double expected_delay = 0.0;
    ModelChoice cost_classifier, time_classifier, cost_regressor, time_regressor;
    // Trust flags.
    bool inside_training_hull = false;
    bool cost_extrapolated = false;
    bool duration_extrapolated = false;
    bool anomalous = false;  // p_anomaly > 0.95
    std::vector<std::string> warnings;
    /// Figure payload: PV curve, point sample, contours, boundaries, prediction grid.
    nlohmann::json chart;
};

nlohmann::json to_json(const ControlReport& report);
ControlReport control_report_from_json(const nlohmann::json& j);

/// Fits (or loads cached selections for) the density model, both classifiers and both
/// regressors at ev_level = EV / BAC, then scores the observed status. Triads come from
/// `data_dir` when present (manifest seed and run count win over the config), otherwise
/// they are simulated on demand. Writes report.json and prediction_grid.csv into the
/// output directory when one is configured.
ControlReport cmd_analyze(const RunConfig& config, const ObservedStatus& status,
                          const std::optional<std::filesystem::path>& data_dir = std::nullopt);

struct ChartResult {
    std::filesystem::path control_chart;  // two-panel cost/time chart
    std::filesystem::path density_chart;
    std::filesystem::path classification_chart;
    std::filesystem::path regression_chart;
    std::filesystem::path json;
};

/// Renders the control chart at `svg_path` and the companion figures next to it, plus a
/// JSON twin (same stem, .json).
ChartResult cmd_chart(const ControlReport& report, const std::filesystem::path& svg_path);

// SVG rendering, exposed for tests.
std::string render_control_chart(const ControlReport& report);
std::string render_density_chart(const ControlReport& report);
std::string render_classification_chart(const ControlReport& report);
std::string render_regression_chart(const ControlReport& report);

}  // namespace evmstoch

#endif  // EVMSTOCH_PIPELINE_HPP
