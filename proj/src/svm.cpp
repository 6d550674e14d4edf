#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "evmstoch/classification.hpp"
#include "evmstoch/error.hpp"
#include "evmstoch/rng.hpp"
#include "evmstoch/stats.hpp"

namespace evmstoch {

namespace {

constexpr double kTau = 1e-12;

double rbf(Point a, Point b, double gamma) {
    const double dt = a.t - b.t, dc = a.c - b.c;
    return std::exp(-gamma * (dt * dt + dc * dc));
}

// Kernel rows Q_ij = y_i y_j K(z_i, z_j), cached in full when they fit in the budget,
// otherwise recomputed on demand with a small most-recently-used cache.
class KernelRows {
public:
    KernelRows(const std::vector<Point>& z, const std::vector<double>& y, double gamma)
        : m_z(z), m_y(y), m_gamma(gamma), m_rows(z.size()) {
        constexpr std::size_t kBudgetBytes = std::size_t{256} << 20;
        m_capacity = std::max<std::size_t>(2, kBudgetBytes / (sizeof(float) * std::max<std::size_t>(1, z.size())));
    }

    const std::vector<float>& row(std::size_t i) {
        if (m_rows[i].empty()) {
            if (m_live.size() >= m_capacity) {
                const std::size_t victim = m_live.front();
                m_live.erase(m_live.begin());
                std::vector<float>().swap(m_rows[victim]);
            }
            auto& r = m_rows[i];
            r.resize(m_z.size());
            for (std::size_t j = 0; j < m_z.size(); ++j)
                r[j] = static_cast<float>(m_y[i] * m_y[j] * rbf(m_z[i], m_z[j], m_gamma));
            m_live.push_back(i);
        }
        return m_rows[i];
    }

private:
    const std::vector<Point>& m_z;
    const std::vector<double>& m_y;
    double m_gamma;
    std::vector<std::vector<float>> m_rows;
    std::vector<std::size_t> m_live;
    std::size_t m_capacity;
};

struct DualSolution {
    std::vector<double> alpha;
    double rho = 0.0;
    double kkt = 0.0;
};

// SMO for min 0.5 a'Qa - e'a, 0 <= a <= C, y'a = 0, with the second-order working set
// selection of Fan, Chen & Lin (2005).
DualSolution solve_dual(const std::vector<Point>& z, const std::vector<double>& y, const SvmParams& params) {
    const std::size_t n = z.size();
    const double C = params.cost;
    KernelRows Q(z, y, params.gamma);
    std::vector<double> alpha(n, 0.0), grad(n, -1.0);
    const long max_iter = params.max_iterations > 0
                              ? params.max_iterations
                              : std::max<long>(10'000'000L, 100L * static_cast<long>(n));
    auto in_up = [&](std::size_t t) { return (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0); };
    auto in_low = [&](std::size_t t) { return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C); };

    double gap = std::numeric_limits<double>::infinity();
    long iter = 0;
    for (; iter < max_iter; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t i = -1;
        for (std::size_t t = 0; t < n; ++t)
            if (in_up(t) && -y[t] * grad[t] >= gmax) {
                gmax = -y[t] * grad[t];
                i = static_cast<std::ptrdiff_t>(t);
            }
        double gmax2 = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t j = -1;
        double obj_min = std::numeric_limits<double>::infinity();
        const std::vector<float>* qi = i >= 0 ? &Q.row(static_cast<std::size_t>(i)) : nullptr;
        for (std::size_t t = 0; t < n; ++t) {
            if (!in_low(t)) continue;
            gmax2 = std::max(gmax2, y[t] * grad[t]);
            if (i < 0) continue;
            const double b = gmax + y[t] * grad[t];
            if (b <= 0) continue;
            const auto iu = static_cast<std::size_t>(i);
            // K(z,z) = 1 for the RBF kernel and K_it = y_i y_t Q_it.
            double a = 2.0 - 2.0 * y[iu] * y[t] * (*qi)[t];
            if (a <= 0) a = kTau;
            const double obj = -(b * b) / a;
            if (obj <= obj_min) {
                obj_min = obj;
                j = static_cast<std::ptrdiff_t>(t);
            }
        }
        gap = gmax + gmax2;
        if (gap < params.tolerance || i < 0 || j < 0) break;

        const auto iu = static_cast<std::size_t>(i), ju = static_cast<std::size_t>(j);
        const std::vector<float>& Qi = Q.row(iu);
        const std::vector<float>& Qj = Q.row(ju);
        const double old_ai = alpha[iu], old_aj = alpha[ju];
        if (y[iu] != y[ju]) {
            double quad = 2.0 + 2.0 * Qi[ju];
            if (quad <= 0) quad = kTau;
            const double delta = (-grad[iu] - grad[ju]) / quad;
            const double diff = alpha[iu] - alpha[ju];
            alpha[iu] += delta;
            alpha[ju] += delta;
            if (diff > 0) {
                if (alpha[ju] < 0) {
                    alpha[ju] = 0;
                    alpha[iu] = diff;
                }
            } else if (alpha[iu] < 0) {
                alpha[iu] = 0;
                alpha[ju] = -diff;
            }
            if (diff > 0) {
                if (alpha[iu] > C) {
                    alpha[iu] = C;
                    alpha[ju] = C - diff;
                }
            } else if (alpha[ju] > C) {
                alpha[ju] = C;
                alpha[iu] = C + diff;
            }
        } else {
            double quad = 2.0 - 2.0 * Qi[ju];
            if (quad <= 0) quad = kTau;
            const double delta = (grad[iu] - grad[ju]) / quad;
            const double sum = alpha[iu] + alpha[ju];
            alpha[iu] -= delta;
            alpha[ju] += delta;
            if (sum > C) {
                if (alpha[iu] > C) {
                    alpha[iu] = C;
                    alpha[ju] = sum - C;
                }
            } else if (alpha[ju] < 0) {
                alpha[ju] = 0;
                alpha[iu] = sum;
            }
            if (sum > C) {
                if (alpha[ju] > C) {
                    alpha[ju] = C;
                    alpha[iu] = sum - C;
                }
            } else if (alpha[iu] < 0) {
                alpha[iu] = 0;
                alpha[ju] = sum;
            }
        }
        const double dai = alpha[iu] - old_ai, daj = alpha[ju] - old_aj;
        for (std::size_t t = 0; t < n; ++t) grad[t] += Qi[t] * dai + Qj[t] * daj;
    }
    if (iter >= max_iter)
        throw NumericalError("SVM solver did not converge after " + std::to_string(max_iter) +
                             " iterations; final KKT residual " + std::to_string(gap));

    // Bias from free variables, else the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * grad[t];
        if (alpha[t] >= C) {
            if (y[t] < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (alpha[t] <= 0) {
            if (y[t] > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    DualSolution sol;
    sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
    sol.alpha = std::move(alpha);
    sol.kkt = std::max(0.0, gap);
    return sol;
}

struct DecisionFunction {
    SvmModel::Standardizer scale;
    std::vector<Point> sv;
    std::vector<double> coef;
    std::vector<double> alpha;
    std::vector<std::size_t> index;
    double rho = 0.0;
    double kkt = 0.0;
    double gamma = 1.0;

    double operator()(Point x) const {
        const Point z = scale.apply(x);
        double f = -rho;
        for (std::size_t k = 0; k < sv.size(); ++k) f += coef[k] * rbf(sv[k], z, gamma);
        return f;
    }
};

DecisionFunction train_decision(std::span<const LabeledPoint> points, const SvmParams& params) {
    std::size_t pos = 0;
    for (const LabeledPoint& p : points) pos += p.label ? 1 : 0;
    if (pos == 0 || pos == points.size()) throw ValidationError("SVM needs both classes present");
    if (!(params.cost > 0.0) || !(params.gamma > 0.0)) throw ValidationError("SVM needs C > 0 and gamma > 0");

    DecisionFunction df;
    df.gamma = params.gamma;
    std::vector<double> t, c;
    for (const LabeledPoint& p : points) {
        t.push_back(p.x.t);
        c.push_back(p.x.c);
    }
    df.scale.mean_t = mean(t);
    df.scale.mean_c = mean(c);
    const double st = points.size() > 1 ? std::sqrt(variance(t)) : 0.0;
    const double sc = points.size() > 1 ? std::sqrt(variance(c)) : 0.0;
    df.scale.scale_t = st > 0 ? st : 1.0;
    df.scale.scale_c = sc > 0 ? sc : 1.0;

    std::vector<Point> z;
    std::vector<double> y;
    for (const LabeledPoint& p : points) {
        z.push_back(df.scale.apply(p.x));
        y.push_back(p.label ? 1.0 : -1.0);
    }
    const DualSolution sol = solve_dual(z, y, params);
    for (std::size_t k = 0; k < z.size(); ++k) {
        if (sol.alpha[k] <= 0.0) continue;
        df.sv.push_back(z[k]);
        df.coef.push_back(y[k] * sol.alpha[k]);
        df.alpha.push_back(sol.alpha[k]);
        df.index.push_back(k);
    }
    df.rho = sol.rho;
    df.kkt = sol.kkt;
    return df;
}

}  // namespace

std::pair<double, double> fit_platt(std::span<const double> f, std::span<const int> labels) {
    double prior1 = 0, prior0 = 0;
    for (int l : labels) (l ? prior1 : prior0) += 1;
    const double hi = (prior1 + 1.0) / (prior1 + 2.0), lo = 1.0 / (prior0 + 2.0);
    const std::size_t n = f.size();
    std::vector<double> target(n);
    for (std::size_t i = 0; i < n; ++i) target[i] = labels[i] ? hi : lo;

    auto objective = [&](double A, double B) {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double fab = f[i] * A + B;
            v += fab >= 0 ? target[i] * fab + std::log1p(std::exp(-fab)) : (target[i] - 1) * fab + std::log1p(std::exp(fab));
        }
        return v;
    };
    double A = 0.0, B = std::log((prior0 + 1.0) / (prior1 + 1.0));
    double fval = objective(A, B);
    for (int iter = 0; iter < 100; ++iter) {
        double h11 = 1e-12, h22 = 1e-12, h21 = 0, g1 = 0, g2 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double fab = f[i] * A + B;
            double p, q;
            if (fab >= 0) {
                p = std::exp(-fab) / (1.0 + std::exp(-fab));
                q = 1.0 / (1.0 + std::exp(-fab));
            } else {
                p = 1.0 / (1.0 + std::exp(fab));
                q = std::exp(fab) / (1.0 + std::exp(fab));
            }
            const double d2 = p * q;
            h11 += f[i] * f[i] * d2;
            h22 += d2;
            h21 += f[i] * d2;
            const double d1 = target[i] - p;
            g1 += f[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
        const double det = h11 * h22 - h21 * h21;
        const double dA = -(h22 * g1 - h21 * g2) / det;
        const double dB = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * dA + g2 * dB;
        double step = 1.0;
        while (step >= 1e-10) {
            const double nA = A + step * dA, nB = B + step * dB;
            const double nf = objective(nA, nB);
            if (nf < fval + 1e-4 * step * gd) {
                A = nA;
                B = nB;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < 1e-10) break;
    }
    return {A, B};
}

SvmModel SvmModel::fit(std::span<const LabeledPoint> points, const SvmParams& params) {
    const DecisionFunction df = train_decision(points, params);

    // Decision values for the Platt fit: held out by k-fold when each fold keeps both
    // classes, otherwise in-sample.
    const std::size_t n = points.size();
    std::vector<double> values(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = points[i].label ? 1 : 0;
    bool held_out = false;
    const int k = params.platt_folds;
    if (k >= 2 && n >= static_cast<std::size_t>(10 * k)) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        Engine engine = make_engine(derive_seed(params.seed, 0x506C617474ULL));
        std::shuffle(perm.begin(), perm.end(), engine);
        held_out = true;
        for (int fold = 0; fold < k && held_out; ++fold) {
            std::vector<LabeledPoint> train;
            std::vector<std::size_t> test;
            for (std::size_t r = 0; r < n; ++r) {
                if (static_cast<int>(r % static_cast<std::size_t>(k)) == fold) test.push_back(perm[r]);
                else train.push_back(points[perm[r]]);
            }
            std::size_t pos = 0;
            for (const LabeledPoint& p : train) pos += p.label ? 1 : 0;
            if (pos == 0 || pos == train.size()) {
                held_out = false;
                break;
            }
            const DecisionFunction sub = train_decision(train, params);
            for (std::size_t r : test) values[r] = sub(points[r].x);
        }
    }
    if (!held_out)
        for (std::size_t i = 0; i < n; ++i) values[i] = df(points[i].x);

    SvmModel model;
    model.m_params = params;
    model.m_scale = df.scale;
    model.m_sv = df.sv;
    model.m_coef = df.coef;
    model.m_alpha = df.alpha;
    model.m_sv_index = df.index;
    model.m_rho = df.rho;
    model.m_kkt = df.kkt;
    std::tie(model.m_platt_a, model.m_platt_b) = fit_platt(values, labels);
    return model;
}

double SvmModel::decision_value(Point x) const {
    const Point z = m_scale.apply(x);
    double f = -m_rho;
    for (std::size_t k = 0; k < m_sv.size(); ++k) f += m_coef[k] * rbf(m_sv[k], z, m_params.gamma);
    return f;
}

double SvmModel::probability(Point x) const {
    const double fab = decision_value(x) * m_platt_a + m_platt_b;
    // Clamp so the output stays strictly inside (0, 1).
    const double p = fab >= 0 ? std::exp(-fab) / (1.0 + std::exp(-fab)) : 1.0 / (1.0 + std::exp(fab));
    return std::clamp(p, 1e-12, 1.0 - 1e-12);
}

}  // namespace evmstoch
