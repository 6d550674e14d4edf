#include <algorithm>
#include <cmath>
#include <numbers>

#include "evmstoch/classification.hpp"
#include "evmstoch/error.hpp"

namespace evmstoch {

std::string to_string(Target target) { return target == Target::over_budget ? "over_budget" : "late"; }

LabeledSet label_dataset(std::span<const TriadRow> rows, Target target) {
    if (rows.empty()) throw ValidationError("cannot label an empty dataset");
    LabeledSet set;
    set.points.reserve(rows.size());
    std::size_t positives = 0;
    for (const TriadRow& r : rows) {
        if (r.triad.ev_level != rows.front().triad.ev_level)
            throw ValidationError("label_dataset expects rows from a single EV level");
        const int label = (target == Target::over_budget ? r.over_budget : r.late) ? 1 : 0;
        positives += static_cast<std::size_t>(label);
        set.points.push_back({{r.triad.t, r.triad.c}, label});
    }
    set.positive_fraction = static_cast<double>(positives) / static_cast<double>(rows.size());
    set.single_class = positives == 0 || positives == rows.size();
    return set;
}

QdaModel QdaModel::fit(std::span<const LabeledPoint> points) {
    QdaModel model;
    std::array<std::size_t, 2> counts{0, 0};
    for (const LabeledPoint& p : points) ++counts[p.label ? 1 : 0];
    for (int k = 0; k < 2; ++k)
        if (counts[k] < 3)
            throw ValidationError("QDA needs at least 3 points per class; class " + std::to_string(k) + " has " +
                                  std::to_string(counts[k]));

    for (int k = 0; k < 2; ++k) {
        GaussianClass& g = model.m_classes[k];
        g.prior = static_cast<double>(counts[k]) / static_cast<double>(points.size());
        for (const LabeledPoint& p : points)
            if ((p.label ? 1 : 0) == k) {
                g.mean.t += p.x.t;
                g.mean.c += p.x.c;
            }
        g.mean.t /= static_cast<double>(counts[k]);
        g.mean.c /= static_cast<double>(counts[k]);
        for (const LabeledPoint& p : points)
            if ((p.label ? 1 : 0) == k) {
                const double dt = p.x.t - g.mean.t, dc = p.x.c - g.mean.c;
                g.s_tt += dt * dt;
                g.s_tc += dt * dc;
                g.s_cc += dc * dc;
            }
        const double denom = static_cast<double>(counts[k] - 1);
        g.s_tt /= denom;
        g.s_tc /= denom;
        g.s_cc /= denom;

        // Condition number from the 2x2 eigenvalues.
        const double tr = g.s_tt + g.s_cc;
        const double det = g.s_tt * g.s_cc - g.s_tc * g.s_tc;
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
        const double lmax = tr / 2.0 + disc, lmin = tr / 2.0 - disc;
        if (!(tr > 0.0)) throw NumericalError("QDA: class " + std::to_string(k) + " has zero variance");
        if (!(lmin > 0.0) || lmax / lmin > 1e8) {
            const double ridge = 1e-6 * tr / 2.0;
            g.s_tt += ridge;
            g.s_cc += ridge;
            g.ridged = true;
        }
    }
    return model;
}

std::array<double, 2> QdaModel::predict(Point x) const {
    std::array<double, 2> logp{};
    for (int k = 0; k < 2; ++k) {
        const GaussianClass& g = m_classes[k];
        const double det = g.s_tt * g.s_cc - g.s_tc * g.s_tc;
        const double dt = x.t - g.mean.t, dc = x.c - g.mean.c;
        const double q = (g.s_cc * dt * dt - 2.0 * g.s_tc * dt * dc + g.s_tt * dc * dc) / det;
        logp[k] = std::log(g.prior) - 0.5 * std::log(det) - 0.5 * q - std::log(2.0 * std::numbers::pi);
    }
    const double m = std::max(logp[0], logp[1]);
    const double e0 = std::exp(logp[0] - m), e1 = std::exp(logp[1] - m);
    const double p1 = e1 / (e0 + e1);
    return {1.0 - p1, p1};
}

}  // namespace evmstoch
