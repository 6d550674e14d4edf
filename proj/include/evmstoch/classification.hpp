#ifndef EVMSTOCH_CLASSIFICATION_HPP
#define EVMSTOCH_CLASSIFICATION_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "evmstoch/geometry.hpp"
#include "evmstoch/simulation.hpp"

namespace evmstoch {

enum class Target { over_budget, late };

std::string to_string(Target target);

struct LabeledPoint {
    Point x;
    int label = 0;  // 1 = over-run (over budget or late)
};

struct LabeledSet {
    std::vector<LabeledPoint> points;
    double positive_fraction = 0.0;
    bool single_class = false;
};

/// Features (t, c) and the chosen over-run label for every row.
LabeledSet label_dataset(std::span<const TriadRow> rows, Target target);

/// Probability of the positive class at a (t, c) point.
using ProbabilityFn = std::function<double(Point)>;

// ---------------------------------------------------------------------------
// Quadratic discriminant analysis

struct GaussianClass {
    double prior = 0.0;
    Point mean;
    double s_tt = 0.0, s_tc = 0.0, s_cc = 0.0;  // covariance after regularisation
    bool ridged = false;
};

/// Gaussian class-conditional densities with per-class covariance; posterior by Bayes'
/// rule pi_k f_k(x) / sum_l pi_l f_l(x), evaluated in log space.
class QdaModel {
public:
    /// Needs at least 3 points per class. When a class covariance has condition number
    /// above 1e8 it gets a ridge of 1e-6 * trace / 2 on the diagonal.
    static QdaModel fit(std::span<const LabeledPoint> points);

    std::array<double, 2> predict(Point x) const;
    double probability(Point x) const { return predict(x)[1]; }
    const std::array<GaussianClass, 2>& classes() const noexcept { return m_classes; }

private:
    std::array<GaussianClass, 2> m_classes;
};

// ---------------------------------------------------------------------------
// Random forest

struct ForestParams {
    int ntree = 500;
    int mtry = 1;
    int min_node = 5;
    std::uint64_t seed = 1;
};

/// Bagged CART classification trees with Gini splits over `mtry` random features per
/// node. Trees vote with their leaf majority; probability = fraction of votes.
class ForestModel {
public:
    static ForestModel fit(std::span<const LabeledPoint> points, const ForestParams& params = {});

    std::array<double, 2> predict(Point x) const;
    double probability(Point x) const { return predict(x)[1]; }
    /// Misclassification rate of out-of-bag votes (rows never out of bag are skipped).
    double oob_error() const noexcept { return m_oob_error; }
    const ForestParams& params() const noexcept { return m_params; }
    std::size_t tree_count() const noexcept { return m_trees.size(); }
    /// Vote of a single tree (0, 0.5 or 1).
    double tree_vote(std::size_t tree, Point x) const;

    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        std::uint32_t left = 0, right = 0;
        double vote = 0.0;
        std::uint32_t count0 = 0, count1 = 0;
    };

private:
    ForestParams m_params;
    std::vector<std::vector<Node>> m_trees;
    double m_oob_error = 0.0;
};

// ---------------------------------------------------------------------------
// Support vector machine

struct SvmParams {
    double cost = 1.0;    // box constraint C
    double gamma = 1.0;   // RBF width on standardised features
    double tolerance = 1e-3;
    long max_iterations = 0;  // 0: max(10^7, 100 n)
    /// Folds used to produce held-out decision values for the Platt fit; 0 or samples
    /// too small for the folds fall back to in-sample decision values.
    int platt_folds = 5;
    std::uint64_t seed = 1;
};

/// Soft-margin C-SVC with RBF kernel exp(-gamma |z - z'|^2) on z-scored features,
/// trained by SMO with second-order working-set selection; Platt-calibrated output.
class SvmModel {
public:
    static SvmModel fit(std::span<const LabeledPoint> points, const SvmParams& params = {});

    double decision_value(Point x) const;
    double probability(Point x) const;

    const SvmParams& params() const noexcept { return m_params; }
    std::size_t support_vector_count() const noexcept { return m_sv.size(); }
    double platt_a() const noexcept { return m_platt_a; }
    double platt_b() const noexcept { return m_platt_b; }
    double kkt_residual() const noexcept { return m_kkt; }
    double bias() const noexcept { return -m_rho; }
    /// Dual coefficients alpha_i (in [0, C]) of the support vectors.
    const std::vector<double>& dual_coefficients() const noexcept { return m_alpha; }
    /// Training-set positions of the support vectors.
    const std::vector<std::size_t>& support_indices() const noexcept { return m_sv_index; }

    struct Standardizer {
        double mean_t = 0.0, scale_t = 1.0, mean_c = 0.0, scale_c = 1.0;
        Point apply(Point x) const { return {(x.t - mean_t) / scale_t, (x.c - mean_c) / scale_c}; }
    };

private:
    SvmParams m_params;
    Standardizer m_scale;
    std::vector<Point> m_sv;           // standardised support vectors
    std::vector<double> m_coef;        // y_i alpha_i
    std::vector<double> m_alpha;
    std::vector<std::size_t> m_sv_index;
    double m_rho = 0.0;
    double m_kkt = 0.0;
    double m_platt_a = 0.0, m_platt_b = 0.0;

};

/// Platt's sigmoid p = 1 / (1 + exp(A f + B)) fit by Newton's method with backtracking on
/// the regularised targets (n+ + 1)/(n+ + 2) and 1/(n- + 2).
std::pair<double, double> fit_platt(std::span<const double> decision_values, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Decision boundaries

struct DecisionBoundary {
    GridValues probability;
    std::vector<Polyline> lines;  // p = 0.5 level set
    /// Per cell (row-major over c, (nt-1) x (nc-1)): cell centre inside the training hull.
    std::vector<bool> trusted;
    std::size_t cells_over_run_likely = 0;  // trusted cells with centre probability > 0.5
    std::size_t cells_trusted = 0;
};

DecisionBoundary decision_boundary(const ProbabilityFn& predictor, const GridSpec& grid, const ConvexHull& hull);

}  // namespace evmstoch

#endif  // EVMSTOCH_CLASSIFICATION_HPP
