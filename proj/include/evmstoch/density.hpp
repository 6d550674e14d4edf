#ifndef EVMSTOCH_DENSITY_HPP
#define EVMSTOCH_DENSITY_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "evmstoch/geometry.hpp"

namespace evmstoch {

/// Symmetric positive-definite 2x2 bandwidth matrix [[tt, tc], [tc, cc]].
struct BandwidthMatrix {
    double tt = 1.0, tc = 0.0, cc = 1.0;

    double det() const { return tt * cc - tc * tc; }
    bool is_spd() const { return tt > 0.0 && cc > 0.0 && det() > 0.0; }
    /// Standard deviations of the kernel along each axis.
    double sd_t() const;
    double sd_c() const;
};

/// Normal-reference rule H = n^(-2/(d+4)) (4/(d+2))^(2/(d+4)) S with d = 2.
/// Throws NumericalError on fewer than 3 distinct points or a singular covariance.
BandwidthMatrix normal_scale_bandwidth(std::span<const Point> points);

struct ScvOptions {
    /// Below this sample size the rule falls back to normal_scale_bandwidth.
    std::size_t min_points = 50;
    /// Larger samples are subsampled (evenly spaced indices) before selection, and the
    /// selected H is scaled by (max_points / n)^(1/3).
    std::size_t max_points = 5000;
    /// Above this size the criterion is evaluated on a linear-binned grid.
    std::size_t exact_max_points = 1000;
    std::size_t bins = 101;
    int max_evaluations = 600;
};

struct ScvResult {
    BandwidthMatrix h;
    BandwidthMatrix pilot;
    double objective = 0.0;
    bool fell_back = false;
    std::string warning;
};

/// Smoothed cross-validation criterion for Gaussian kernels with pilot G:
///   SCV(H) = (4 pi)^-1 |H|^-1/2 / n
///          + n^-2 sum_{i,j} [phi_{2H+2G} - 2 phi_{H+2G} + phi_{2G}](X_i - X_j).
/// `binned` approximates the double sum on a linear-binned grid.
double scv_objective(std::span<const Point> points, const BandwidthMatrix& h, const BandwidthMatrix& pilot,
                     bool binned = false, std::size_t bins = 101);

/// Normal-scale pilot G = (4 / ((d+4) n))^(2/(d+6)) S used by the SCV criterion.
BandwidthMatrix scv_pilot(std::span<const Point> points);

/// Full-matrix SCV bandwidth minimised with Nelder-Mead over the Cholesky factor of H
/// (log-diagonal parameterisation), in coordinates whitened by the sample covariance
/// and started from the normal-scale H.
ScvResult scv_bandwidth(std::span<const Point> points, const ScvOptions& options = {});

/// Gaussian kernel density estimate f(x) = (1/n) sum_i phi_H(x - x_i).
/// Kernels are truncated beyond 6 standard units of H.
class KernelDensity {
public:
    KernelDensity(std::vector<Point> points, const BandwidthMatrix& h);

    double operator()(Point x) const;
    /// Exact when xs.size() * n <= 2e8, otherwise evaluate_binned().
    std::vector<double> evaluate(std::span<const Point> xs) const;
    /// Linear-binned approximation on a whitened grid of step 0.1 (relative error under 1%
    /// where f exceeds 1% of its peak).
    std::vector<double> evaluate_binned(std::span<const Point> xs) const;

    const std::vector<Point>& points() const noexcept { return m_points; }
    const BandwidthMatrix& bandwidth() const noexcept { return m_h; }

private:
    std::vector<Point> m_points;
    BandwidthMatrix m_h;
    // Whitening z = L^-1 x with H = L L^T (L lower triangular).
    double m_l11 = 1.0, m_l21 = 0.0, m_l22 = 1.0;
    double m_norm = 0.0;
    // Bucketed whitened points (CSR over cells).
    double m_zx0 = 0.0, m_zy0 = 0.0, m_cell = 6.0;
    long m_cells_x = 0, m_cells_y = 0;
    std::vector<std::size_t> m_cell_start;
    std::vector<double> m_zx, m_zy;

    void whiten(Point x, double& zx, double& zy) const;
};

/// Fitted density plus the sorted densities of a held-out reference sample.
class DensityModel {
public:
    DensityModel(KernelDensity kde, std::vector<double> reference_densities);

    double density(Point x) const { return m_kde(x); }
    /// Fraction of reference densities strictly greater than f(x).
    double anomaly_probability(Point x) const;
    double anomaly_from_density(double f) const;
    /// Density threshold whose exceedance equals `a` (the 1 - a reference quantile).
    double density_level_for_anomaly(double a) const;

    const KernelDensity& kde() const noexcept { return m_kde; }
    const std::vector<double>& reference_densities() const noexcept { return m_reference; }

private:
    KernelDensity m_kde;
    std::vector<double> m_reference;
};

DensityModel fit_density_model(std::vector<Point> fit_points, std::span<const Point> reference_points,
                               const BandwidthMatrix& h);

/// Splits a sample into (fit, reference) halves: even positions fit, odd positions reference.
std::pair<std::vector<Point>, std::vector<Point>> split_fit_reference(std::span<const Point> points);

struct ConfidenceRectangle {
    double level = 0.0;
    double t_lo = 0.0, t_hi = 0.0;
    double c_lo = 0.0, c_hi = 0.0;

    bool contains(Point p) const { return p.t >= t_lo && p.t <= t_hi && p.c >= c_lo && p.c <= c_hi; }
};

/// Marginal empirical percentiles at (1 - level)/2 and (1 + level)/2 for each axis.
ConfidenceRectangle percentile_rectangle(std::span<const Point> points, double level);

/// Chart grid: the data bounding box expanded by `expand` kernel standard deviations.
GridSpec density_grid(std::span<const Point> points, const BandwidthMatrix& h, std::size_t resolution = 200,
                      double expand = 3.0);

}  // namespace evmstoch

#endif  // EVMSTOCH_DENSITY_HPP
