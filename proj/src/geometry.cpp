#include "evmstoch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <tuple>

namespace evmstoch {

GridValues evaluate_grid(const GridSpec& grid, const std::function<double(Point)>& f) {
    if (grid.nt < 2 || grid.nc < 2) throw std::invalid_argument("grid needs at least 2 nodes per axis");
    GridValues out{grid, std::vector<double>(grid.nt * grid.nc)};
    for (std::size_t j = 0; j < grid.nc; ++j)
        for (std::size_t i = 0; i < grid.nt; ++i) out.values[j * grid.nt + i] = f({grid.t_at(i), grid.c_at(j)});
    return out;
}

namespace {

// Edge identifiers: horizontal edge (i, j)-(i+1, j) and vertical edge (i, j)-(i, j+1).
struct EdgeKey {
    std::size_t i, j;
    bool vertical;
    bool operator<(const EdgeKey& o) const { return std::tie(i, j, vertical) < std::tie(o.i, o.j, o.vertical); }
    bool operator==(const EdgeKey& o) const { return i == o.i && j == o.j && vertical == o.vertical; }
};

bool above(double v, double level) { return v >= level; }

}  // namespace

std::vector<Polyline> contour_lines(const GridValues& field, double level) {
    const GridSpec& g = field.grid;
    auto crossing = [&](const EdgeKey& e) {
        const std::size_t i2 = e.vertical ? e.i : e.i + 1;
        const std::size_t j2 = e.vertical ? e.j + 1 : e.j;
        const double v1 = field.at(e.i, e.j), v2 = field.at(i2, j2);
        const double w = (v1 == v2) ? 0.5 : (level - v1) / (v2 - v1);
        const Point a{g.t_at(e.i), g.c_at(e.j)}, b{g.t_at(i2), g.c_at(j2)};
        return Point{a.t + w * (b.t - a.t), a.c + w * (b.c - a.c)};
    };
    auto straddles = [&](const EdgeKey& e) {
        const std::size_t i2 = e.vertical ? e.i : e.i + 1;
        const std::size_t j2 = e.vertical ? e.j + 1 : e.j;
        return above(field.at(e.i, e.j), level) != above(field.at(i2, j2), level);
    };

    // Segments per cell, keyed by the edges they join.
    std::vector<std::pair<EdgeKey, EdgeKey>> segments;
    for (std::size_t j = 0; j + 1 < g.nc; ++j) {
        for (std::size_t i = 0; i + 1 < g.nt; ++i) {
            const EdgeKey bottom{i, j, false}, top{i, j + 1, false}, left{i, j, true}, right{i + 1, j, true};
            std::vector<EdgeKey> hits;
            for (const EdgeKey& e : {bottom, right, top, left})
                if (straddles(e)) hits.push_back(e);
            if (hits.size() == 2) {
                segments.emplace_back(hits[0], hits[1]);
            } else if (hits.size() == 4) {
                // Saddle: disambiguate with the cell-centre average.
                const double centre =
                    0.25 * (field.at(i, j) + field.at(i + 1, j) + field.at(i, j + 1) + field.at(i + 1, j + 1));
                const bool corner_above = above(field.at(i, j), level);
                if (above(centre, level) == corner_above) {
                    segments.emplace_back(bottom, right);
                    segments.emplace_back(top, left);
                } else {
                    segments.emplace_back(bottom, left);
                    segments.emplace_back(top, right);
                }
            }
        }
    }

    // Chain segments through shared edges.
    std::multimap<EdgeKey, std::size_t> by_edge;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        by_edge.emplace(segments[s].first, s);
        by_edge.emplace(segments[s].second, s);
    }
    std::vector<bool> used(segments.size(), false);
    auto next_segment = [&](const EdgeKey& e, std::size_t from) -> std::ptrdiff_t {
        auto [lo, hi] = by_edge.equal_range(e);
        for (auto it = lo; it != hi; ++it)
            if (it->second != from && !used[it->second]) return static_cast<std::ptrdiff_t>(it->second);
        return -1;
    };

    std::vector<Polyline> lines;
    // Start from open ends first so that open polylines are emitted whole.
    std::vector<std::size_t> order;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        const bool open = by_edge.count(segments[s].first) == 1 || by_edge.count(segments[s].second) == 1;
        if (open) order.push_back(s);
    }
    for (std::size_t s = 0; s < segments.size(); ++s) order.push_back(s);

    for (std::size_t s0 : order) {
        if (used[s0]) continue;
        used[s0] = true;
        EdgeKey start = segments[s0].first, end = segments[s0].second;
        if (by_edge.count(segments[s0].second) == 1 && by_edge.count(segments[s0].first) != 1) std::swap(start, end);
        std::vector<EdgeKey> chain{start, end};
        std::size_t cur = s0;
        for (;;) {
            const std::ptrdiff_t nxt = next_segment(chain.back(), cur);
            if (nxt < 0) break;
            used[static_cast<std::size_t>(nxt)] = true;
            cur = static_cast<std::size_t>(nxt);
            const auto& seg = segments[cur];
            chain.push_back(seg.first == chain.back() ? seg.second : seg.first);
        }
        Polyline line;
        for (const EdgeKey& e : chain) line.push_back(crossing(e));
        lines.push_back(std::move(line));
    }
    return lines;
}

ConvexHull::ConvexHull(std::span<const Point> points) {
    if (points.empty()) return;
    double tmin = points[0].t, tmax = tmin, cmin = points[0].c, cmax = cmin;
    for (const Point& p : points) {
        tmin = std::min(tmin, p.t);
        tmax = std::max(tmax, p.t);
        cmin = std::min(cmin, p.c);
        cmax = std::max(cmax, p.c);
    }
    m_t0 = tmin;
    m_c0 = cmin;
    m_ts = tmax > tmin ? tmax - tmin : 1.0;
    m_cs = cmax > cmin ? cmax - cmin : 1.0;

    std::vector<Point> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.t < b.t || (a.t == b.t && a.c < b.c); });
    pts.erase(std::unique(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.t == b.t && a.c == b.c; }),
              pts.end());
    auto cross = [&](const Point& o, const Point& a, const Point& b) {
        const double ax = (a.t - o.t) / m_ts, ay = (a.c - o.c) / m_cs;
        const double bx = (b.t - o.t) / m_ts, by = (b.c - o.c) / m_cs;
        return ax * by - ay * bx;
    };
    if (pts.size() < 3) {
        m_vertices = pts;
        return;
    }
    std::vector<Point> hull(2 * pts.size());
    std::size_t k = 0;
    for (const Point& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i > 0; --i) {
        const Point& p = pts[i - 1];
        while (k >= lower && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    hull.resize(k - 1);
    m_vertices = std::move(hull);
}

bool ConvexHull::contains(Point p) const {
    const std::size_t n = m_vertices.size();
    if (n == 0) return false;
    if (n < 3) {
        for (const Point& v : m_vertices)
            if (v.t == p.t && v.c == p.c) return true;
        return false;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const Point& a = m_vertices[i];
        const Point& b = m_vertices[(i + 1) % n];
        const double ax = (b.t - a.t) / m_ts, ay = (b.c - a.c) / m_cs;
        const double px = (p.t - a.t) / m_ts, py = (p.c - a.c) / m_cs;
        if (ax * py - ay * px < -1e-12) return false;
    }
    return true;
}

}  // namespace evmstoch
