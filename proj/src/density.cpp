#include "evmstoch/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "evmstoch/error.hpp"
#include "evmstoch/stats.hpp"
#include "nelder_mead.hpp"

namespace evmstoch {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kTruncation = 6.0;  // kernel truncation radius in whitened units
constexpr double kExactPairBudget = 2e8;  // query x sample pairs evaluated exactly in bulk
constexpr double kBinStep = 0.1;          // binned grid step in whitened units
constexpr double kMaxBins = 1500.0;

struct Chol {
    double l11, l21, l22;
};

Chol cholesky(double a11, double a21, double a22) {
    const double l11 = std::sqrt(a11);
    const double l21 = a21 / l11;
    const double l22 = std::sqrt(a22 - l21 * l21);
    return {l11, l21, l22};
}

// Multiplies S = L (.) L^T back from whitened space: H = L Hw L^T.
BandwidthMatrix unwhiten(const BandwidthMatrix& hw, const Chol& l) {
    // L = [[l11, 0], [l21, l22]]
    const double a = l.l11, b = l.l21, c = l.l22;
    // L * Hw
    const double m11 = a * hw.tt, m12 = a * hw.tc;
    const double m21 = b * hw.tt + c * hw.tc, m22 = b * hw.tc + c * hw.cc;
    // (L Hw) L^T
    return {m11 * a, m11 * b + m12 * c, m21 * b + m22 * c};
}

std::vector<Point> whiten_points(std::span<const Point> points, const Chol& l) {
    std::vector<Point> out;
    out.reserve(points.size());
    for (const Point& p : points) {
        const double zx = p.t / l.l11;
        const double zy = (p.c - l.l21 * zx) / l.l22;
        out.push_back({zx, zy});
    }
    return out;
}

std::size_t distinct_count(std::span<const Point> points, std::size_t cap) {
    std::set<std::pair<double, double>> seen;
    for (const Point& p : points) {
        seen.emplace(p.t, p.c);
        if (seen.size() >= cap) break;
    }
    return seen.size();
}

// Gaussian density with covariance [[a, b], [b, d]] evaluated at (x, y), split into
// normalising constant and inverse entries so callers can hoist them.
struct Gauss2 {
    double norm, i11, i12, i22;
    explicit Gauss2(double a, double b, double d) {
        const double det = a * d - b * b;
        norm = 1.0 / (kTwoPi * std::sqrt(det));
        i11 = d / det;
        i12 = -b / det;
        i22 = a / det;
    }
    double operator()(double x, double y) const {
        return norm * std::exp(-0.5 * (i11 * x * x + 2.0 * i12 * x * y + i22 * y * y));
    }
};

}  // namespace

double BandwidthMatrix::sd_t() const { return std::sqrt(tt); }
double BandwidthMatrix::sd_c() const { return std::sqrt(cc); }

BandwidthMatrix normal_scale_bandwidth(std::span<const Point> points) {
    if (distinct_count(points, 3) < 3)
        throw NumericalError("normal-scale bandwidth needs at least 3 distinct points");
    const Covariance2 s = covariance(points);
    if (!(s.tt > 0.0 && s.cc > 0.0) || s.det() <= 1e-12 * s.tt * s.cc)
        throw NumericalError("normal-scale bandwidth: sample covariance is singular (points are collinear)");
    const double n = static_cast<double>(points.size());
    constexpr double d = 2.0;
    const double factor = std::pow(n, -2.0 / (d + 4.0)) * std::pow(4.0 / (d + 2.0), 2.0 / (d + 4.0));
    return {factor * s.tt, factor * s.tc, factor * s.cc};
}

BandwidthMatrix scv_pilot(std::span<const Point> points) {
    if (distinct_count(points, 3) < 3) throw NumericalError("SCV pilot needs at least 3 distinct points");
    const Covariance2 s = covariance(points);
    if (!(s.tt > 0.0 && s.cc > 0.0) || s.det() <= 1e-12 * s.tt * s.cc)
        throw NumericalError("SCV pilot: sample covariance is singular (points are collinear)");
    const double n = static_cast<double>(points.size());
    constexpr double d = 2.0;
    const double factor = std::pow(4.0 / ((d + 4.0) * n), 2.0 / (d + 6.0));
    return {factor * s.tt, factor * s.tc, factor * s.cc};
}

namespace {

// SCV criterion with the data-dependent part precomputed: either the raw points (exact
// double sum) or the autocorrelation of linear-binned counts (binned double sum).
class ScvCriterion {
public:
    ScvCriterion(std::span<const Point> points, const BandwidthMatrix& g, bool binned, std::size_t bins)
        : m_points(points.begin(), points.end()), m_g(g), m_binned(binned) {
        if (!g.is_spd()) throw NumericalError("SCV objective requires an SPD pilot bandwidth");
        if (binned) bin(std::max<std::size_t>(bins, 3));
    }

    double operator()(const BandwidthMatrix& h) const {
        if (!h.is_spd()) throw NumericalError("SCV objective requires an SPD bandwidth");
        const BandwidthMatrix& g = m_g;
        const double n = static_cast<double>(m_points.size());
        const Gauss2 k1(2 * h.tt + 2 * g.tt, 2 * h.tc + 2 * g.tc, 2 * h.cc + 2 * g.cc);
        const Gauss2 k2(h.tt + 2 * g.tt, h.tc + 2 * g.tc, h.cc + 2 * g.cc);
        const Gauss2 k3(2 * g.tt, 2 * g.tc, 2 * g.cc);
        auto kernel = [&](double x, double y) { return k1(x, y) - 2.0 * k2(x, y) + k3(x, y); };

        double sum = 0.0;
        if (!m_binned) {
            // Diagonal terms plus twice the strict upper triangle.
            sum = n * kernel(0.0, 0.0);
            double off = 0.0;
            for (std::size_t i = 0; i < m_points.size(); ++i)
                for (std::size_t j = i + 1; j < m_points.size(); ++j)
                    off += kernel(m_points[i].t - m_points[j].t, m_points[i].c - m_points[j].c);
            sum += 2.0 * off;
        } else {
            for (const Lag& lag : m_lags) sum += lag.weight * kernel(lag.dt, lag.dc);
        }
        const double first = 1.0 / (n * 4.0 * std::numbers::pi * std::sqrt(h.det()));
        return first + sum / (n * n);
    }

private:
    struct Lag {
        double dt, dc, weight;
    };

    void bin(std::size_t m) {
        double tmin = m_points[0].t, tmax = tmin, cmin = m_points[0].c, cmax = cmin;
        for (const Point& p : m_points) {
            tmin = std::min(tmin, p.t);
            tmax = std::max(tmax, p.t);
            cmin = std::min(cmin, p.c);
            cmax = std::max(cmax, p.c);
        }
        const double dt = (tmax - tmin) / static_cast<double>(m - 1);
        const double dc = (cmax - cmin) / static_cast<double>(m - 1);
        if (!(dt > 0.0) || !(dc > 0.0)) throw NumericalError("SCV objective: degenerate data range");
        std::vector<double> counts(m * m, 0.0);
        for (const Point& p : m_points) {
            const double u = (p.t - tmin) / dt, v = (p.c - cmin) / dc;
            const auto i = std::min(static_cast<std::size_t>(u), m - 2);
            const auto j = std::min(static_cast<std::size_t>(v), m - 2);
            const double fu = u - static_cast<double>(i), fv = v - static_cast<double>(j);
            counts[j * m + i] += (1 - fu) * (1 - fv);
            counts[j * m + i + 1] += fu * (1 - fv);
            counts[(j + 1) * m + i] += (1 - fu) * fv;
            counts[(j + 1) * m + i + 1] += fu * fv;
        }
        std::vector<std::size_t> nz;
        for (std::size_t k = 0; k < counts.size(); ++k)
            if (counts[k] > 0.0) nz.push_back(k);
        const std::size_t w = 2 * m - 1;
        std::vector<double> autocorr(w * w, 0.0);
        for (std::size_t a : nz) {
            const std::size_t ai = a % m, aj = a / m;
            const double ca = counts[a];
            for (std::size_t b : nz) {
                const std::size_t oi = b % m + (m - 1) - ai;
                const std::size_t oj = b / m + (m - 1) - aj;
                autocorr[oj * w + oi] += ca * counts[b];
            }
        }
        for (std::size_t oj = 0; oj < w; ++oj)
            for (std::size_t oi = 0; oi < w; ++oi)
                if (autocorr[oj * w + oi] != 0.0)
                    m_lags.push_back({(static_cast<double>(oi) - static_cast<double>(m - 1)) * dt,
                                      (static_cast<double>(oj) - static_cast<double>(m - 1)) * dc,
                                      autocorr[oj * w + oi]});
    }

    std::vector<Point> m_points;
    BandwidthMatrix m_g;
    bool m_binned;
    std::vector<Lag> m_lags;
};

}  // namespace

double scv_objective(std::span<const Point> points, const BandwidthMatrix& h, const BandwidthMatrix& g, bool binned,
                     std::size_t bins) {
    return ScvCriterion(points, g, binned, bins)(h);
}

ScvResult scv_bandwidth(std::span<const Point> points, const ScvOptions& options) {
    ScvResult result;
    if (points.size() < options.min_points) {
        result.h = normal_scale_bandwidth(points);
        result.pilot = result.h;
        result.fell_back = true;
        result.warning = "SCV needs at least " + std::to_string(options.min_points) + " points; using normal-scale rule";
        return result;
    }

    std::vector<Point> sample;
    if (points.size() > options.max_points) {
        sample.reserve(options.max_points);
        for (std::size_t k = 0; k < options.max_points; ++k)
            sample.push_back(points[k * points.size() / options.max_points]);
    } else {
        sample.assign(points.begin(), points.end());
    }

    const BandwidthMatrix h_ns = normal_scale_bandwidth(sample);
    const Covariance2 s = covariance(sample);
    const Chol sl = cholesky(s.tt, s.tc, s.cc);
    const std::vector<Point> z = whiten_points(sample, sl);
    const BandwidthMatrix g = scv_pilot(z);
    const bool binned = z.size() > options.exact_max_points;

    const ScvCriterion criterion(z, g, binned, options.bins);
    auto objective = [&](const std::vector<double>& p) {
        const double l11 = std::exp(p[0]), l21 = p[1], l22 = std::exp(p[2]);
        return criterion({l11 * l11, l11 * l21, l21 * l21 + l22 * l22});
    };

    const double n = static_cast<double>(z.size());
    const double log_h0 = 0.5 * std::log(std::pow(n, -1.0 / 3.0));
    const std::vector<double> x0{log_h0, 0.0, log_h0};
    const double f0 = objective(x0);
    const detail::NelderMeadResult nm =
        detail::nelder_mead(objective, x0, {0.25, 0.1, 0.25}, options.max_evaluations, 1e-10, 1e-5);

    const double l11 = std::exp(nm.x[0]), l21 = nm.x[1], l22 = std::exp(nm.x[2]);
    const BandwidthMatrix hw{l11 * l11, l11 * l21, l21 * l21 + l22 * l22};
    result.pilot = unwhiten(g, sl);
    if (!(nm.value < f0) || !std::isfinite(nm.value)) {
        result.h = h_ns;
        result.objective = f0;
        result.fell_back = true;
        result.warning = "SCV optimiser did not improve on the normal-scale start; using normal-scale rule";
        return result;
    }
    result.h = unwhiten(hw, sl);
    if (sample.size() < points.size()) {
        // Selected on a thinned sample: carry over to the full size with the n^(-1/3) rate.
        const double r = std::pow(static_cast<double>(sample.size()) / static_cast<double>(points.size()), 1.0 / 3.0);
        result.h = {result.h.tt * r, result.h.tc * r, result.h.cc * r};
    }
    result.objective = nm.value;
    if (!nm.converged) result.warning = "SCV optimiser hit the evaluation cap before converging";
    return result;
}

KernelDensity::KernelDensity(std::vector<Point> points, const BandwidthMatrix& h) : m_points(std::move(points)), m_h(h) {
    if (!h.is_spd()) throw NumericalError("kernel density: bandwidth matrix is not symmetric positive-definite");
    if (m_points.empty()) throw NumericalError("kernel density needs at least one point");
    const Chol l = cholesky(h.tt, h.tc, h.cc);
    m_l11 = l.l11;
    m_l21 = l.l21;
    m_l22 = l.l22;
    m_norm = 1.0 / (static_cast<double>(m_points.size()) * kTwoPi * std::sqrt(h.det()));

    std::vector<double> zx(m_points.size()), zy(m_points.size());
    double xmin = 0, ymin = 0, xmax = 0, ymax = 0;
    for (std::size_t i = 0; i < m_points.size(); ++i) {
        whiten(m_points[i], zx[i], zy[i]);
        if (i == 0 || zx[i] < xmin) xmin = zx[i];
        if (i == 0 || zx[i] > xmax) xmax = zx[i];
        if (i == 0 || zy[i] < ymin) ymin = zy[i];
        if (i == 0 || zy[i] > ymax) ymax = zy[i];
    }
    m_zx0 = xmin;
    m_zy0 = ymin;
    // Cells at least as wide as the truncation radius; coarser when the cloud is huge
    // relative to H so the cell table stays bounded.
    m_cell = std::max({kTruncation, (xmax - xmin) / 1024.0, (ymax - ymin) / 1024.0});
    m_cells_x = static_cast<long>(std::floor((xmax - xmin) / m_cell)) + 1;
    m_cells_y = static_cast<long>(std::floor((ymax - ymin) / m_cell)) + 1;
    const std::size_t n_cells = static_cast<std::size_t>(m_cells_x * m_cells_y);
    std::vector<std::size_t> cell_of(m_points.size());
    std::vector<std::size_t> counts(n_cells + 1, 0);
    for (std::size_t i = 0; i < m_points.size(); ++i) {
        const auto cx = static_cast<long>(std::floor((zx[i] - m_zx0) / m_cell));
        const auto cy = static_cast<long>(std::floor((zy[i] - m_zy0) / m_cell));
        cell_of[i] = static_cast<std::size_t>(cy * m_cells_x + cx);
        ++counts[cell_of[i] + 1];
    }
    for (std::size_t k = 1; k <= n_cells; ++k) counts[k] += counts[k - 1];
    m_cell_start = counts;
    m_zx.resize(m_points.size());
    m_zy.resize(m_points.size());
    std::vector<std::size_t> fill(counts.begin(), counts.end() - 1);
    for (std::size_t i = 0; i < m_points.size(); ++i) {
        const std::size_t slot = fill[cell_of[i]]++;
        m_zx[slot] = zx[i];
        m_zy[slot] = zy[i];
    }
}

void KernelDensity::whiten(Point x, double& zx, double& zy) const {
    zx = x.t / m_l11;
    zy = (x.c - m_l21 * zx) / m_l22;
}

double KernelDensity::operator()(Point x) const {
    double zx = 0, zy = 0;
    whiten(x, zx, zy);
    const auto cx = static_cast<long>(std::floor((zx - m_zx0) / m_cell));
    const auto cy = static_cast<long>(std::floor((zy - m_zy0) / m_cell));
    double sum = 0.0;
    for (long y = std::max(0L, cy - 1); y <= std::min(m_cells_y - 1, cy + 1); ++y) {
        for (long xx = std::max(0L, cx - 1); xx <= std::min(m_cells_x - 1, cx + 1); ++xx) {
            const auto cell = static_cast<std::size_t>(y * m_cells_x + xx);
            for (std::size_t k = m_cell_start[cell]; k < m_cell_start[cell + 1]; ++k) {
                const double dx = zx - m_zx[k], dy = zy - m_zy[k];
                sum += std::exp(-0.5 * (dx * dx + dy * dy));
            }
        }
    }
    return m_norm * sum;
}

std::vector<double> KernelDensity::evaluate(std::span<const Point> xs) const {
    if (static_cast<double>(xs.size()) * static_cast<double>(m_points.size()) > kExactPairBudget) return evaluate_binned(xs);
    std::vector<double> out;
    out.reserve(xs.size());
    for (const Point& x : xs) out.push_back((*this)(x));
    return out;
}

// Linear binning of the whitened sample, separable Gaussian convolution on the grid, then
// bilinear interpolation at the queries.
std::vector<double> KernelDensity::evaluate_binned(std::span<const Point> xs) const {
    std::vector<double> qx(xs.size()), qy(xs.size());
    double xmin = m_zx0, ymin = m_zy0;
    double xmax = m_zx0 + m_cell * static_cast<double>(m_cells_x), ymax = m_zy0 + m_cell * static_cast<double>(m_cells_y);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        whiten(xs[i], qx[i], qy[i]);
        xmin = std::min(xmin, qx[i]);
        xmax = std::max(xmax, qx[i]);
        ymin = std::min(ymin, qy[i]);
        ymax = std::max(ymax, qy[i]);
    }
    xmin -= kTruncation;
    ymin -= kTruncation;
    xmax += kTruncation;
    ymax += kTruncation;
    const double step = std::max({kBinStep, (xmax - xmin) / kMaxBins, (ymax - ymin) / kMaxBins});
    const auto nx = static_cast<std::size_t>(std::ceil((xmax - xmin) / step)) + 2;
    const auto ny = static_cast<std::size_t>(std::ceil((ymax - ymin) / step)) + 2;

    std::vector<double> counts(nx * ny, 0.0);
    for (std::size_t k = 0; k < m_zx.size(); ++k) {
        const double fx = (m_zx[k] - xmin) / step, fy = (m_zy[k] - ymin) / step;
        const auto ix = static_cast<std::size_t>(fx), iy = static_cast<std::size_t>(fy);
        const double wx = fx - static_cast<double>(ix), wy = fy - static_cast<double>(iy);
        counts[iy * nx + ix] += (1 - wx) * (1 - wy);
        counts[iy * nx + ix + 1] += wx * (1 - wy);
        counts[(iy + 1) * nx + ix] += (1 - wx) * wy;
        counts[(iy + 1) * nx + ix + 1] += wx * wy;
    }

    const auto radius = static_cast<long>(std::ceil(kTruncation / step));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    for (long d = -radius; d <= radius; ++d) {
        const double u = static_cast<double>(d) * step;
        taps[static_cast<std::size_t>(d + radius)] = std::exp(-0.5 * u * u);
    }
    auto convolve = [&](const std::vector<double>& in, std::vector<double>& out, std::size_t len, std::size_t count,
                        std::size_t stride, std::size_t pitch) {
        for (std::size_t line = 0; line < count; ++line) {
            const std::size_t base = line * pitch;
            for (std::size_t i = 0; i < len; ++i) {
                const double v = in[base + i * stride];
                if (v == 0.0) continue;
                const long lo = std::max(0L, static_cast<long>(i) - radius);
                const long hi = std::min(static_cast<long>(len) - 1, static_cast<long>(i) + radius);
                for (long j = lo; j <= hi; ++j)
                    out[base + static_cast<std::size_t>(j) * stride] += v * taps[static_cast<std::size_t>(j - static_cast<long>(i) + radius)];
            }
        }
    };
    std::vector<double> rows(nx * ny, 0.0), field(nx * ny, 0.0);
    convolve(counts, rows, nx, ny, 1, nx);
    convolve(rows, field, ny, nx, nx, 1);

    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double fx = (qx[i] - xmin) / step, fy = (qy[i] - ymin) / step;
        const auto ix = static_cast<std::size_t>(fx), iy = static_cast<std::size_t>(fy);
        const double wx = fx - static_cast<double>(ix), wy = fy - static_cast<double>(iy);
        const double v = (1 - wx) * (1 - wy) * field[iy * nx + ix] + wx * (1 - wy) * field[iy * nx + ix + 1] +
                         (1 - wx) * wy * field[(iy + 1) * nx + ix] + wx * wy * field[(iy + 1) * nx + ix + 1];
        out[i] = m_norm * v;
    }
    return out;
}

DensityModel::DensityModel(KernelDensity kde, std::vector<double> reference_densities)
    : m_kde(std::move(kde)), m_reference(std::move(reference_densities)) {
    if (m_reference.empty()) throw NumericalError("density model needs a nonempty reference sample");
    std::sort(m_reference.begin(), m_reference.end());
}

double DensityModel::anomaly_from_density(double f) const {
    const auto above = m_reference.end() - std::upper_bound(m_reference.begin(), m_reference.end(), f);
    return static_cast<double>(above) / static_cast<double>(m_reference.size());
}

double DensityModel::anomaly_probability(Point x) const { return anomaly_from_density(m_kde(x)); }

double DensityModel::density_level_for_anomaly(double a) const { return quantile_sorted(m_reference, 1.0 - a); }

DensityModel fit_density_model(std::vector<Point> fit_points, std::span<const Point> reference_points,
                               const BandwidthMatrix& h) {
    KernelDensity kde(std::move(fit_points), h);
    std::vector<double> reference = kde.evaluate(reference_points);
    return DensityModel(std::move(kde), std::move(reference));
}

std::pair<std::vector<Point>, std::vector<Point>> split_fit_reference(std::span<const Point> points) {
    std::pair<std::vector<Point>, std::vector<Point>> out;
    for (std::size_t i = 0; i < points.size(); ++i) (i % 2 == 0 ? out.first : out.second).push_back(points[i]);
    return out;
}

ConfidenceRectangle percentile_rectangle(std::span<const Point> points, double level) {
    if (points.size() < 2) throw ValidationError("percentile rectangle needs at least 2 rows");
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("percentile rectangle level must lie in (0, 1)");
    std::vector<double> t, c;
    for (const Point& p : points) {
        t.push_back(p.t);
        c.push_back(p.c);
    }
    std::sort(t.begin(), t.end());
    std::sort(c.begin(), c.end());
    const double lo = (1.0 - level) / 2.0, hi = (1.0 + level) / 2.0;
    return {level, quantile_sorted(t, lo), quantile_sorted(t, hi), quantile_sorted(c, lo), quantile_sorted(c, hi)};
}

GridSpec density_grid(std::span<const Point> points, const BandwidthMatrix& h, std::size_t resolution, double expand) {
    double tmin = points[0].t, tmax = tmin, cmin = points[0].c, cmax = cmin;
    for (const Point& p : points) {
        tmin = std::min(tmin, p.t);
        tmax = std::max(tmax, p.t);
        cmin = std::min(cmin, p.c);
        cmax = std::max(cmax, p.c);
    }
    return {tmin - expand * h.sd_t(), tmax + expand * h.sd_t(), cmin - expand * h.sd_c(), cmax + expand * h.sd_c(),
            resolution, resolution};
}

}  // namespace evmstoch
