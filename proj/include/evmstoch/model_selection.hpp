#ifndef EVMSTOCH_MODEL_SELECTION_HPP
#define EVMSTOCH_MODEL_SELECTION_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "evmstoch/classification.hpp"
#include "evmstoch/geometry.hpp"

namespace evmstoch {

/// One training row: features (t, c) and a response (0/1 class or a real value).
struct Sample {
    Point x;
    double y = 0.0;
};

std::vector<Sample> to_samples(std::span<const LabeledPoint> points);

enum class TaskKind { classification, regression };

using Params = nlohmann::json;
/// Classifiers return the probability of class 1; regressors return the prediction.
using Predictor = std::function<double(Point)>;
using Trainer = std::function<Predictor(std::span<const Sample>, const Params&)>;

/// A trainable model family with its hyperparameter grid, ordered from the simplest
/// to the most flexible setting. Ties in selection go to the smallest index.
struct ModelFamily {
    std::string name;
    TaskKind task = TaskKind::classification;
    std::vector<Params> grid;
    Trainer train;
};

struct FoldPlan {
    std::size_t n = 0;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> assignment;  // fold index per row

    std::vector<std::size_t> test_rows(std::size_t fold) const;
    std::vector<std::size_t> train_rows(std::size_t fold) const;
    std::vector<std::size_t> fold_sizes() const;
};

/// Shuffled assignment; fold sizes differ by at most one.
FoldPlan kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

/// As kfold_split, but each class is dealt round-robin so every fold's class counts
/// differ by at most one from each other.
FoldPlan stratified_kfold_split(std::span<const int> labels, std::size_t k, std::uint64_t seed);

/// Error rate (probability > 0.5 predicts class 1) or mean squared error.
double score(const Predictor& predictor, std::span<const Sample> test, TaskKind task);

struct CvResult {
    double mean = 0.0;
    std::vector<double> fold_scores;
};

/// Rows are weighted equally: the mean is the pooled score over all held-out rows.
CvResult cross_validate(std::span<const Sample> data, const ModelFamily& family, const Params& params,
                        const FoldPlan& plan);

struct NestedCvOptions {
    std::size_t k_outer = 5;
    std::size_t k_inner = 5;
    std::uint64_t seed = 1;
    bool stratify = true;      // classification only
    bool select_final = true;  // rerun the inner search on all rows to pick the deployed setting
};

struct OuterFold {
    std::size_t fold = 0;
    std::size_t train_size = 0, test_size = 0;
    std::vector<double> inner_scores;  // per grid index
    std::size_t chosen = 0;
    double inner_error = 0.0;  // inner CV score of the chosen setting
    double outer_error = 0.0;
};

struct SelectionReport {
    std::string family;
    TaskKind task = TaskKind::classification;
    std::vector<Params> grid;
    std::vector<OuterFold> folds;
    double outer_mean = 0.0;
    double outer_sd = 0.0;
    double inner_mean = 0.0;  // mean over outer folds of the selected inner error
    std::vector<double> final_scores;  // full-data CV per grid index (when select_final)
    std::size_t final_choice = 0;

    const Params& final_params() const { return grid.at(final_choice); }
};

SelectionReport nested_cv(std::span<const Sample> data, const ModelFamily& family, const NestedCvOptions& options = {});

/// Index of the lowest score; exact ties go to the smaller index.
std::size_t argmin_first(std::span<const double> scores);

nlohmann::json to_json(const SelectionReport& report);
/// Columns: outer_fold,grid_index,params,inner_error,outer_error,chosen.
void write_selection_csv(std::ostream& out, const SelectionReport& report);

// Families ----------------------------------------------------------------

ModelFamily qda_family();
ModelFamily forest_family(std::vector<ForestParams> grid);
/// Platt calibration inside selection fits uses `platt_folds` from each grid entry.
ModelFamily svm_family(std::vector<SvmParams> grid);
/// Predicts the training majority class (ties to class 0).
ModelFamily majority_family();
/// Predicts the training mean response.
ModelFamily mean_family();

}  // namespace evmstoch

#endif  // EVMSTOCH_MODEL_SELECTION_HPP
