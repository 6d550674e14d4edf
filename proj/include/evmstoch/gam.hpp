#ifndef EVMSTOCH_GAM_HPP
#define EVMSTOCH_GAM_HPP

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evmstoch/geometry.hpp"
#include "evmstoch/model_selection.hpp"

namespace evmstoch {

// ---------------------------------------------------------------------------
// Natural cubic splines

/// Truncated-power natural cubic spline basis without the constant column. Interior
/// knots sit at equispaced quantiles k/(n_knots+1); boundary knots are the data range.
/// Dimension n_knots + 1; n_knots = 0 gives the linear term only.
class NaturalSplineBasis {
public:
    static NaturalSplineBasis fit(std::span<const double> x, int n_knots);

    std::size_t dimension() const noexcept { return m_knots.size() - 1; }
    const std::vector<double>& knots() const noexcept { return m_knots; }  // boundary included
    double lower() const noexcept { return m_knots.front(); }
    double upper() const noexcept { return m_knots.back(); }

    void evaluate(double x, std::span<double> row) const;
    Eigen::MatrixXd matrix(std::span<const double> x) const;

private:
    std::vector<double> m_knots;  // on the original scale
    std::vector<double> m_unit;   // the same knots mapped to [0, 1]
};

// ---------------------------------------------------------------------------
// Local regression

enum class LoessSurface {
    direct,       // local fit at every query
    interpolate,  // local fits at kd-style vertices joined by cubic Hermite interpolation
};

/// A smoothed curve on one predictor; constant-slope extrapolation outside the vertices.
class LoessCurve {
public:
    double operator()(double x) const;

    struct Impl;
    explicit LoessCurve(std::shared_ptr<const Impl> impl) : m_impl(std::move(impl)) {}
    LoessCurve() = default;

private:
    std::shared_ptr<const Impl> m_impl;
};

/// Degree-1 loess with tricube weights. For span <= 1 the neighbourhood holds
/// ceil(span n) points; for span > 1 every point is used and the maximum distance is
/// multiplied by span (one predictor).
class LoessSmoother {
public:
    LoessSmoother(std::span<const double> x, double span, LoessSurface surface = LoessSurface::interpolate);

    /// Fitted values at the training abscissae.
    std::vector<double> smooth(std::span<const double> y) const;
    LoessCurve curve(std::span<const double> y) const;
    /// Trace of the hat operator (exact).
    double trace() const;

    double span() const noexcept { return m_span; }
    std::size_t neighbourhood_size() const noexcept { return m_q; }
    double distance_inflation() const noexcept { return m_span > 1.0 ? m_span : 1.0; }
    std::size_t vertex_count() const noexcept { return m_vertices.size(); }

    struct Local {
        std::size_t start = 0;      // first sorted index of the neighbourhood
        std::vector<double> value;  // weights giving the local intercept
        std::vector<double> slope;  // weights giving the local slope
    };

private:
    Local local_at(double v) const;
    std::vector<double> sorted_values(std::span<const double> y) const;
    void vertex_fits(const std::vector<double>& ys, std::vector<double>& val, std::vector<double>& slp) const;

    double m_span;
    LoessSurface m_surface;
    std::size_t m_q = 0;
    std::vector<std::size_t> m_order;  // sorted position -> original row
    std::vector<double> m_x;           // sorted
    std::vector<double> m_vertices;
    std::vector<Local> m_locals;       // per vertex (interpolate surface)
};

struct LoessFit {
    std::vector<double> fitted;
    LoessCurve curve;
};

LoessFit loess_smooth(std::span<const double> x, std::span<const double> y, double span,
                      LoessSurface surface = LoessSurface::direct);

// ---------------------------------------------------------------------------
// Additive models

struct SmootherSpec {
    /// `none` drops the predictor (component identically 0, no degrees of freedom).
    enum class Kind { natural_spline, loess, none };
    Kind kind = Kind::natural_spline;
    int n_knots = 3;
    double span = 0.5;

    static SmootherSpec spline(int n_knots) { return {Kind::natural_spline, n_knots, 0.0}; }
    static SmootherSpec lo(double span) { return {Kind::loess, 0, span}; }
    static SmootherSpec omitted() { return {Kind::none, 0, 0.0}; }
    std::string describe() const;
};

struct BackfitOptions {
    int max_cycles = 100;
    /// Stop when the largest change in a fitted value over one cycle is <= tolerance * sd(y).
    double tolerance = 1e-6;
    LoessSurface loess_surface = LoessSurface::interpolate;
};

struct GamPrediction {
    double value = 0.0;
    bool extrapolated = false;
};

/// y = b0 + f_t(t) + f_c(c), each f centered over the training rows.
class GamModel {
public:
    GamPrediction predict(Point x) const;
    double operator()(Point x) const { return predict(x).value; }

    double intercept() const noexcept { return m_intercept; }
    double component(int j, double x) const;
    /// Effective degrees of freedom of smoother j (trace of its centered hat operator).
    double edf(int j) const { return m_edf.at(static_cast<std::size_t>(j)); }
    double total_df() const noexcept { return 1.0 + m_edf[0] + m_edf[1]; }
    double rss() const noexcept { return m_rss_history.empty() ? 0.0 : m_rss_history.back(); }
    const std::vector<double>& rss_history() const noexcept { return m_rss_history; }
    const std::vector<double>& delta_history() const noexcept { return m_delta_history; }
    int cycles() const noexcept { return static_cast<int>(m_rss_history.size()); }
    const std::vector<double>& fitted() const noexcept { return m_fitted; }
    const std::array<std::vector<double>, 2>& training_components() const noexcept { return m_components; }
    std::size_t size() const noexcept { return m_fitted.size(); }
    std::uint64_t data_fingerprint() const noexcept { return m_fingerprint; }
    const std::array<SmootherSpec, 2>& specs() const noexcept { return m_specs; }
    std::array<double, 2> lower() const noexcept { return m_lower; }
    std::array<double, 2> upper() const noexcept { return m_upper; }

    struct Component;

private:
    friend GamModel backfit_gam(std::span<const Point>, std::span<const double>, const std::array<SmootherSpec, 2>&,
                                const BackfitOptions&);

    double m_intercept = 0.0;
    std::array<SmootherSpec, 2> m_specs;
    std::array<std::shared_ptr<const Component>, 2> m_parts;
    std::array<double, 2> m_edf{0.0, 0.0};
    std::array<double, 2> m_lower{0.0, 0.0}, m_upper{0.0, 0.0};
    std::array<std::vector<double>, 2> m_components;
    std::vector<double> m_fitted;
    std::vector<double> m_rss_history, m_delta_history;
    std::uint64_t m_fingerprint = 0;
};

/// Backfitting: b0 = mean(y), f_j = 0, then cycle over j smoothing the partial
/// residual against x_j and recentering, until converged or out of cycles.
GamModel backfit_gam(std::span<const Point> x, std::span<const double> y, const std::array<SmootherSpec, 2>& specs,
                     const BackfitOptions& options = {});

struct AnovaResult {
    double f = 0.0;
    double p_value = 1.0;
    double df_num = 0.0, df_den = 0.0;
    double rss_a = 0.0, rss_b = 0.0;
    double df_a = 0.0, df_b = 0.0;
    bool clamped = false;
    std::string label = "approximate: models need not be nested";
};

/// F test of model_a (smaller df) against model_b on the same rows.
AnovaResult anova_compare(const GamModel& model_a, const GamModel& model_b);

// Families for model selection ---------------------------------------------

/// Knot pairs (t, c) in 2..8, ordered by total knots then lexicographically.
ModelFamily gam_spline_family(int min_knots = 2, int max_knots = 8, BackfitOptions options = {});
/// Span pairs in {0.1, ..., 1.0}, ordered from the smoothest (largest total span).
ModelFamily gam_loess_family(std::vector<double> spans = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0},
                             BackfitOptions options = {});
std::array<SmootherSpec, 2> specs_from_params(const Params& params);

}  // namespace evmstoch

#endif  // EVMSTOCH_GAM_HPP
