#include "evmstoch/classification.hpp"

namespace evmstoch {

DecisionBoundary decision_boundary(const ProbabilityFn& predictor, const GridSpec& grid, const ConvexHull& hull) {
    DecisionBoundary out;
    out.probability = evaluate_grid(grid, predictor);
    out.lines = contour_lines(out.probability, 0.5);
    const std::size_t cells_t = grid.nt - 1, cells_c = grid.nc - 1;
    out.trusted.assign(cells_t * cells_c, false);
    for (std::size_t j = 0; j < cells_c; ++j) {
        for (std::size_t i = 0; i < cells_t; ++i) {
            const Point centre{0.5 * (grid.t_at(i) + grid.t_at(i + 1)), 0.5 * (grid.c_at(j) + grid.c_at(j + 1))};
            const bool trusted = hull.contains(centre);
            out.trusted[j * cells_t + i] = trusted;
            if (!trusted) continue;
            ++out.cells_trusted;
            const GridValues& p = out.probability;
            const double mean = 0.25 * (p.at(i, j) + p.at(i + 1, j) + p.at(i, j + 1) + p.at(i + 1, j + 1));
            if (mean > 0.5) ++out.cells_over_run_likely;
        }
    }
    return out;
}

}  // namespace evmstoch
