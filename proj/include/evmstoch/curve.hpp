#ifndef EVMSTOCH_CURVE_HPP
#define EVMSTOCH_CURVE_HPP

#include <optional>
#include <vector>

namespace evmstoch {

struct Breakpoint {
    double time;
    double value;
};

/// Piecewise-linear function of time given by ordered breakpoints.
/// Constant extrapolation outside [front().time, back().time].
class PiecewiseLinear {
public:
    PiecewiseLinear() = default;
    explicit PiecewiseLinear(std::vector<Breakpoint> points);

    double operator()(double t) const;

    /// Earliest time at which the curve reaches `level`, interpolating inside
    /// the first segment whose right end is >= level. Empty if never reached.
    std::optional<double> first_crossing(double level) const;

    const std::vector<Breakpoint>& breakpoints() const noexcept { return m_points; }
    double start_time() const { return m_points.front().time; }
    double end_time() const { return m_points.back().time; }
    double final_value() const { return m_points.back().value; }
    bool nondecreasing() const;

private:
    std::vector<Breakpoint> m_points;
};

}  // namespace evmstoch

#endif  // EVMSTOCH_CURVE_HPP
