#include "evmstoch/curve.hpp"

#include <algorithm>
#include <stdexcept>

namespace evmstoch {

PiecewiseLinear::PiecewiseLinear(std::vector<Breakpoint> points) : m_points(std::move(points)) {
    if (m_points.empty()) throw std::invalid_argument("piecewise-linear curve needs at least one breakpoint");
    for (std::size_t i = 1; i < m_points.size(); ++i)
        if (!(m_points[i].time > m_points[i - 1].time))
            throw std::invalid_argument("piecewise-linear breakpoints must have strictly increasing times");
}

double PiecewiseLinear::operator()(double t) const {
    if (t <= m_points.front().time) return m_points.front().value;
    if (t >= m_points.back().time) return m_points.back().value;
    auto it = std::upper_bound(m_points.begin(), m_points.end(), t,
                               [](double v, const Breakpoint& b) { return v < b.time; });
    const Breakpoint& hi = *it;
    const Breakpoint& lo = *(it - 1);
    if (t == lo.time) return lo.value;
    const double w = (t - lo.time) / (hi.time - lo.time);
    return lo.value + w * (hi.value - lo.value);
}

std::optional<double> PiecewiseLinear::first_crossing(double level) const {
    if (m_points.front().value >= level) return m_points.front().time;
    for (std::size_t i = 1; i < m_points.size(); ++i) {
        const Breakpoint& hi = m_points[i];
        if (hi.value < level) continue;
        const Breakpoint& lo = m_points[i - 1];
        if (hi.value == level) {
            // Earliest point of a plateau that sits exactly at the level.
            return hi.time;
        }
        const double w = (level - lo.value) / (hi.value - lo.value);
        return lo.time + w * (hi.time - lo.time);
    }
    return std::nullopt;
}

bool PiecewiseLinear::nondecreasing() const {
    for (std::size_t i = 1; i < m_points.size(); ++i)
        if (m_points[i].value < m_points[i - 1].value) return false;
    return true;
}

}  // namespace evmstoch
