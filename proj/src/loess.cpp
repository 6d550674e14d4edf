#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "evmstoch/error.hpp"
#include "evmstoch/gam.hpp"

namespace evmstoch {

namespace {

constexpr double kCell = 0.2;  // vertex cells hold at most floor(n * span * cell) points

double tricube(double u) {
    if (u >= 1.0) return 0.0;
    const double a = 1.0 - u * u * u;
    return a * a * a;
}

struct Hermite {
    double h00, h10, h01, h11;
};

Hermite hermite(double t) {
    const double t2 = t * t, t3 = t2 * t;
    return {2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + t, -2 * t3 + 3 * t2, t3 - t2};
}

double coefficient(const LoessSmoother::Local& local, const std::vector<double>& w, std::size_t i) {
    if (i < local.start || i >= local.start + w.size()) return 0.0;
    return w[i - local.start];
}

}  // namespace

struct LoessCurve::Impl {
    // Interpolated surface.
    std::vector<double> vertices, values, slopes;
    // Direct surface keeps the smoother and the sorted responses.
    std::function<double(double)> direct;
};

double LoessCurve::operator()(double x) const {
    if (!m_impl) throw ValidationError("empty loess curve");
    const Impl& s = *m_impl;
    if (s.direct) return s.direct(x);
    const auto& v = s.vertices;
    if (v.size() == 1) return s.values[0];
    if (x <= v.front()) return s.values.front() + s.slopes.front() * (x - v.front());
    if (x >= v.back()) return s.values.back() + s.slopes.back() * (x - v.back());
    const std::size_t k = static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), x) - v.begin()) - 1;
    const double d = v[k + 1] - v[k];
    const Hermite h = hermite((x - v[k]) / d);
    return h.h00 * s.values[k] + h.h10 * d * s.slopes[k] + h.h01 * s.values[k + 1] + h.h11 * d * s.slopes[k + 1];
}

LoessSmoother::LoessSmoother(std::span<const double> x, double span, LoessSurface surface)
    : m_span(span), m_surface(surface) {
    const std::size_t n = x.size();
    if (n < 3) throw ValidationError("loess needs at least 3 points");
    if (!(span > 0.0) || !std::isfinite(span)) throw ValidationError("loess span must be positive");
    for (double v : x)
        if (!std::isfinite(v)) throw ValidationError("loess input has a non-finite value");
    m_order.resize(n);
    std::iota(m_order.begin(), m_order.end(), 0);
    std::stable_sort(m_order.begin(), m_order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    m_x.resize(n);
    for (std::size_t i = 0; i < n; ++i) m_x[i] = x[m_order[i]];
    m_q = span > 1.0 ? n : static_cast<std::size_t>(std::ceil(span * static_cast<double>(n) - 1e-9));
    m_q = std::clamp<std::size_t>(m_q, 1, n);

    if (surface == LoessSurface::direct) return;

    // kd-style vertices: split cells at the median until each holds at most fc points.
    const auto fc = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * std::min(span, 1.0) * kCell)));
    m_vertices = {m_x.front(), m_x.back()};
    std::vector<std::pair<std::size_t, std::size_t>> cells{{0, n - 1}};
    while (!cells.empty()) {
        const auto [a, b] = cells.back();
        cells.pop_back();
        if (b - a + 1 <= fc || m_x[a] == m_x[b]) continue;
        const std::size_t mid = (a + b) / 2;
        const double median = (b - a) % 2 == 0 ? m_x[mid] : 0.5 * (m_x[mid] + m_x[mid + 1]);
        m_vertices.push_back(median);
        cells.emplace_back(a, mid);
        cells.emplace_back(mid + 1, b);
    }
    std::sort(m_vertices.begin(), m_vertices.end());
    m_vertices.erase(std::unique(m_vertices.begin(), m_vertices.end()), m_vertices.end());
    m_locals.reserve(m_vertices.size());
    for (double v : m_vertices) m_locals.push_back(local_at(v));
}

LoessSmoother::Local LoessSmoother::local_at(double v) const {
    const std::size_t n = m_x.size();
    std::size_t l = static_cast<std::size_t>(std::lower_bound(m_x.begin(), m_x.end(), v) - m_x.begin());
    std::size_t r = l;
    while (r - l < m_q) {
        if (l == 0)
            ++r;
        else if (r == n)
            --l;
        else if (v - m_x[l - 1] <= m_x[r] - v)
            --l;
        else
            ++r;
    }
    const double maxdist = std::max(v - m_x[l], m_x[r - 1] - v) * distance_inflation();

    Local local;
    local.start = l;
    std::vector<double> w(r - l);
    double total = 0.0;
    for (std::size_t i = l; i < r; ++i) {
        w[i - l] = maxdist > 0.0 ? tricube(std::abs(m_x[i] - v) / maxdist) : 1.0;
        total += w[i - l];
    }
    if (total <= 0.0) std::fill(w.begin(), w.end(), 1.0);

    double s0 = 0, s1 = 0, s2 = 0;
    for (std::size_t i = l; i < r; ++i) {
        const double dx = m_x[i] - v;
        s0 += w[i - l];
        s1 += w[i - l] * dx;
        s2 += w[i - l] * dx * dx;
    }
    const double det = s0 * s2 - s1 * s1;
    local.value.resize(w.size());
    local.slope.resize(w.size());
    if (!(det > 1e-12 * s0 * s2) || s2 <= 0.0) {
        // No spread in the neighbourhood: weighted mean, flat.
        for (std::size_t k = 0; k < w.size(); ++k) local.value[k] = w[k] / s0;
        return local;
    }
    for (std::size_t i = l; i < r; ++i) {
        const double dx = m_x[i] - v;
        local.value[i - l] = w[i - l] * (s2 - s1 * dx) / det;
        local.slope[i - l] = w[i - l] * (s0 * dx - s1) / det;
    }
    return local;
}

std::vector<double> LoessSmoother::sorted_values(std::span<const double> y) const {
    if (y.size() != m_x.size()) throw ValidationError("loess: x and y sizes differ");
    std::vector<double> ys(y.size());
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = y[m_order[i]];
    return ys;
}

void LoessSmoother::vertex_fits(const std::vector<double>& ys, std::vector<double>& val, std::vector<double>& slp) const {
    val.assign(m_locals.size(), 0.0);
    slp.assign(m_locals.size(), 0.0);
    for (std::size_t k = 0; k < m_locals.size(); ++k) {
        const Local& loc = m_locals[k];
        double a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < loc.value.size(); ++j) {
            a += loc.value[j] * ys[loc.start + j];
            b += loc.slope[j] * ys[loc.start + j];
        }
        val[k] = a;
        slp[k] = b;
    }
}

std::vector<double> LoessSmoother::smooth(std::span<const double> y) const {
    const std::vector<double> ys = sorted_values(y);
    const std::size_t n = m_x.size();
    std::vector<double> out(n);
    if (m_surface == LoessSurface::direct) {
        for (std::size_t i = 0; i < n; ++i) {
            const Local loc = local_at(m_x[i]);
            double a = 0.0;
            for (std::size_t j = 0; j < loc.value.size(); ++j) a += loc.value[j] * ys[loc.start + j];
            out[m_order[i]] = a;
        }
        return out;
    }
    std::vector<double> val, slp;
    vertex_fits(ys, val, slp);
    if (m_vertices.size() == 1) {
        std::fill(out.begin(), out.end(), val[0]);
        return out;
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k + 2 < m_vertices.size() && m_x[i] > m_vertices[k + 1]) ++k;
        const double d = m_vertices[k + 1] - m_vertices[k];
        const Hermite h = hermite((m_x[i] - m_vertices[k]) / d);
        out[m_order[i]] = h.h00 * val[k] + h.h10 * d * slp[k] + h.h01 * val[k + 1] + h.h11 * d * slp[k + 1];
    }
    return out;
}

LoessCurve LoessSmoother::curve(std::span<const double> y) const {
    auto impl = std::make_shared<LoessCurve::Impl>();
    if (m_surface == LoessSurface::direct) {
        auto self = std::make_shared<const LoessSmoother>(*this);
        auto ys = std::make_shared<const std::vector<double>>(sorted_values(y));
        impl->direct = [self, ys](double x) {
            const Local loc = self->local_at(x);
            double a = 0.0;
            for (std::size_t j = 0; j < loc.value.size(); ++j) a += loc.value[j] * (*ys)[loc.start + j];
            return a;
        };
        return LoessCurve(std::move(impl));
    }
    impl->vertices = m_vertices;
    vertex_fits(sorted_values(y), impl->values, impl->slopes);
    return LoessCurve(std::move(impl));
}

double LoessSmoother::trace() const {
    const std::size_t n = m_x.size();
    double tr = 0.0;
    if (m_surface == LoessSurface::direct) {
        for (std::size_t i = 0; i < n; ++i) {
            const Local loc = local_at(m_x[i]);
            tr += coefficient(loc, loc.value, i);
        }
        return tr;
    }
    if (m_vertices.size() == 1) {
        for (std::size_t i = 0; i < n; ++i) tr += coefficient(m_locals[0], m_locals[0].value, i);
        return tr;
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k + 2 < m_vertices.size() && m_x[i] > m_vertices[k + 1]) ++k;
        const double d = m_vertices[k + 1] - m_vertices[k];
        const Hermite h = hermite((m_x[i] - m_vertices[k]) / d);
        const Local& a = m_locals[k];
        const Local& b = m_locals[k + 1];
        tr += h.h00 * coefficient(a, a.value, i) + h.h10 * d * coefficient(a, a.slope, i) +
              h.h01 * coefficient(b, b.value, i) + h.h11 * d * coefficient(b, b.slope, i);
    }
    return tr;
}

LoessFit loess_smooth(std::span<const double> x, std::span<const double> y, double span, LoessSurface surface) {
    const LoessSmoother smoother(x, span, surface);
    return {smoother.smooth(y), smoother.curve(y)};
}

}  // namespace evmstoch
