#ifndef EVMSTOCH_STATS_HPP
#define EVMSTOCH_STATS_HPP

#include <span>
#include <vector>

#include "evmstoch/geometry.hpp"

namespace evmstoch {

double mean(std::span<const double> x);
/// Sample variance with n - 1 denominator.
double variance(std::span<const double> x);

struct Covariance2 {
    double tt = 0.0, tc = 0.0, cc = 0.0;
    double det() const { return tt * cc - tc * tc; }
};

Point mean(std::span<const Point> x);
Covariance2 covariance(std::span<const Point> x);

/// Linear-interpolated empirical quantile of sorted data (Hyndman & Fan type 7).
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> x, double p);

double normal_cdf(double z);

/// Kolmogorov-Smirnov distance between the empirical CDF of `x` and Uniform(0, 1).
double ks_distance_uniform(std::vector<double> x);

}  // namespace evmstoch

#endif  // EVMSTOCH_STATS_HPP
