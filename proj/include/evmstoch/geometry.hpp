#ifndef EVMSTOCH_GEOMETRY_HPP
#define EVMSTOCH_GEOMETRY_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace evmstoch {

/// A (time, cost) status or sample.
struct Point {
    double t = 0.0;
    double c = 0.0;
};

/// Regular rectangular grid: nt x nc nodes spanning [t_min, t_max] x [c_min, c_max].
struct GridSpec {
    double t_min = 0.0, t_max = 1.0;
    double c_min = 0.0, c_max = 1.0;
    std::size_t nt = 2, nc = 2;

    double t_at(std::size_t i) const { return t_min + (t_max - t_min) * static_cast<double>(i) / static_cast<double>(nt - 1); }
    double c_at(std::size_t j) const { return c_min + (c_max - c_min) * static_cast<double>(j) / static_cast<double>(nc - 1); }
    double t_step() const { return (t_max - t_min) / static_cast<double>(nt - 1); }
    double c_step() const { return (c_max - c_min) / static_cast<double>(nc - 1); }
};

/// Node values stored row-major over c: value(i, j) = values[j * nt + i].
struct GridValues {
    GridSpec grid;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const { return values[j * grid.nt + i]; }
};

GridValues evaluate_grid(const GridSpec& grid, const std::function<double(Point)>& f);

using Polyline = std::vector<Point>;

/// Marching squares over grid cells. Each cell edge whose endpoint values straddle
/// `level` contributes exactly one linearly interpolated crossing; segments are
/// chained into polylines.
std::vector<Polyline> contour_lines(const GridValues& field, double level);

/// Convex hull (Andrew's monotone chain), counter-clockwise, no repeated endpoint.
class ConvexHull {
public:
    ConvexHull() = default;
    explicit ConvexHull(std::span<const Point> points);

    /// Coordinates are scaled by the hull's bounding box before orientation tests,
    /// so time and cost units can differ by orders of magnitude.
    bool contains(Point p) const;
    const std::vector<Point>& vertices() const noexcept { return m_vertices; }

private:
    std::vector<Point> m_vertices;
    double m_t0 = 0.0, m_c0 = 0.0, m_ts = 1.0, m_cs = 1.0;
};

}  // namespace evmstoch

#endif  // EVMSTOCH_GEOMETRY_HPP
