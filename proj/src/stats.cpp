#include "evmstoch/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evmstoch {

double mean(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("mean of empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
    if (x.size() < 2) throw std::invalid_argument("variance needs at least two values");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

Point mean(std::span<const Point> x) {
    if (x.empty()) throw std::invalid_argument("mean of empty sample");
    Point m;
    for (const Point& p : x) {
        m.t += p.t;
        m.c += p.c;
    }
    m.t /= static_cast<double>(x.size());
    m.c /= static_cast<double>(x.size());
    return m;
}

Covariance2 covariance(std::span<const Point> x) {
    if (x.size() < 2) throw std::invalid_argument("covariance needs at least two points");
    const Point m = mean(x);
    Covariance2 s;
    for (const Point& p : x) {
        const double dt = p.t - m.t, dc = p.c - m.c;
        s.tt += dt * dt;
        s.tc += dt * dc;
        s.cc += dc * dc;
    }
    const double d = static_cast<double>(x.size() - 1);
    s.tt /= d;
    s.tc /= d;
    s.cc /= d;
    return s;
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
    if (p <= 0.0) return sorted.front();
    if (p >= 1.0) return sorted.back();
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::vector<double> x, double p) {
    std::sort(x.begin(), x.end());
    return quantile_sorted(x, p);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double ks_distance_uniform(std::vector<double> x) {
    if (x.empty()) throw std::invalid_argument("KS distance of empty sample");
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = std::clamp(x[i], 0.0, 1.0);
        d = std::max({d, static_cast<double>(i + 1) / n - u, u - static_cast<double>(i) / n});
    }
    return d;
}

}  // namespace evmstoch
