#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include <boost/math/distributions/fisher_f.hpp>

#include "evmstoch/error.hpp"
#include "evmstoch/gam.hpp"
#include "evmstoch/stats.hpp"

namespace evmstoch {

// ---------------------------------------------------------------------------
// Natural spline basis

NaturalSplineBasis NaturalSplineBasis::fit(std::span<const double> x, int n_knots) {
    if (n_knots < 0) throw ValidationError("natural spline needs n_knots >= 0");
    std::vector<double> sorted(x.begin(), x.end());
    for (double v : sorted)
        if (!std::isfinite(v)) throw ValidationError("natural spline input has a non-finite value");
    std::sort(sorted.begin(), sorted.end());
    const auto distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    if (distinct < static_cast<std::size_t>(n_knots) + 2)
        throw ValidationError("natural spline with " + std::to_string(n_knots) + " interior knots needs at least " +
                              std::to_string(n_knots + 2) + " distinct values, got " + std::to_string(distinct));
    sorted.assign(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());

    NaturalSplineBasis basis;
    basis.m_knots.push_back(sorted.front());
    for (int k = 1; k <= n_knots; ++k)
        basis.m_knots.push_back(quantile_sorted(sorted, static_cast<double>(k) / static_cast<double>(n_knots + 1)));
    basis.m_knots.push_back(sorted.back());
    for (std::size_t k = 1; k < basis.m_knots.size(); ++k)
        if (!(basis.m_knots[k] > basis.m_knots[k - 1]))
            throw ValidationError("natural spline knots are not strictly increasing (tied quantiles)");
    const double lo = basis.m_knots.front(), width = basis.m_knots.back() - lo;
    for (double k : basis.m_knots) basis.m_unit.push_back((k - lo) / width);
    return basis;
}

void NaturalSplineBasis::evaluate(double x, std::span<double> row) const {
    const double lo = m_knots.front(), width = m_knots.back() - lo;
    const double u = (x - lo) / width;
    const std::size_t K = m_unit.size();
    auto cube = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
    auto d = [&](std::size_t k) { return (cube(u - m_unit[k]) - cube(u - m_unit[K - 1])) / (m_unit[K - 1] - m_unit[k]); };
    row[0] = u;
    const double last = d(K - 2);
    for (std::size_t k = 0; k + 2 < K; ++k) row[k + 1] = d(k) - last;
}

Eigen::MatrixXd NaturalSplineBasis::matrix(std::span<const double> x) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(dimension()));
    std::vector<double> row(dimension());
    for (std::size_t i = 0; i < x.size(); ++i) {
        evaluate(x[i], row);
        for (std::size_t k = 0; k < row.size(); ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Backfitting

std::string SmootherSpec::describe() const {
    std::ostringstream out;
    if (kind == Kind::natural_spline)
        out << "ns(" << n_knots << ")";
    else if (kind == Kind::none)
        out << "none";
    else
        out << "lo(" << span << ")";
    return out.str();
}

struct GamModel::Component {
    SmootherSpec spec;
    double center = 0.0;
    // Natural spline: coefficients for [1, basis].
    std::shared_ptr<NaturalSplineBasis> basis;
    Eigen::VectorXd coef;
    // Loess.
    LoessCurve curve;

    double operator()(double x) const {
        if (spec.kind == SmootherSpec::Kind::none) return 0.0;
        if (spec.kind == SmootherSpec::Kind::loess) return curve(x) - center;
        std::vector<double> row(basis->dimension());
        basis->evaluate(x, row);
        double v = coef(0);
        for (std::size_t k = 0; k < row.size(); ++k) v += coef(static_cast<Eigen::Index>(k + 1)) * row[k];
        return v - center;
    }
};

namespace {

// Linear smoother on one predictor with a fixed design.
class Smoother {
public:
    Smoother(std::span<const double> x, const SmootherSpec& spec, LoessSurface surface) : m_spec(spec) {
        if (spec.kind == SmootherSpec::Kind::natural_spline) {
            m_basis = std::make_shared<NaturalSplineBasis>(NaturalSplineBasis::fit(x, spec.n_knots));
            Eigen::MatrixXd design(static_cast<Eigen::Index>(x.size()), static_cast<Eigen::Index>(m_basis->dimension() + 1));
            design.col(0).setOnes();
            design.rightCols(static_cast<Eigen::Index>(m_basis->dimension())) = m_basis->matrix(x);
            m_qr = design.colPivHouseholderQr();
            if (m_qr.rank() < design.cols())
                throw NumericalError("natural spline design is rank deficient (" + spec.describe() + ")");
            m_q = m_qr.householderQ() * Eigen::MatrixXd::Identity(design.rows(), design.cols());
            m_trace = static_cast<double>(design.cols());
        } else if (spec.kind == SmootherSpec::Kind::none) {
            m_trace = 1.0;
        } else {
            m_loess = std::make_shared<LoessSmoother>(x, spec.span, surface);
            m_trace = m_loess->trace();
        }
    }

    std::vector<double> smooth(std::span<const double> r) const {
        if (m_loess) return m_loess->smooth(r);
        if (m_spec.kind == SmootherSpec::Kind::none) return std::vector<double>(r.size(), 0.0);
        const Eigen::Map<const Eigen::VectorXd> v(r.data(), static_cast<Eigen::Index>(r.size()));
        const Eigen::VectorXd s = m_q * (m_q.transpose() * v);
        return {s.data(), s.data() + s.size()};
    }

    std::shared_ptr<GamModel::Component> component(std::span<const double> r, double center) const {
        auto c = std::make_shared<GamModel::Component>();
        c->spec = m_spec;
        c->center = center;
        if (m_loess) {
            c->curve = m_loess->curve(r);
        } else if (m_spec.kind != SmootherSpec::Kind::none) {
            c->basis = m_basis;
            const Eigen::Map<const Eigen::VectorXd> v(r.data(), static_cast<Eigen::Index>(r.size()));
            c->coef = m_qr.solve(v);
        }
        return c;
    }

    // Trace of the centered operator (I - 11'/n) S; S reproduces constants.
    double edf() const { return m_trace - 1.0; }

private:
    SmootherSpec m_spec;
    std::shared_ptr<NaturalSplineBasis> m_basis;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> m_qr;
    Eigen::MatrixXd m_q;
    std::shared_ptr<LoessSmoother> m_loess;
    double m_trace = 0.0;
};

std::uint64_t fingerprint(std::span<const Point> x, std::span<const double> y) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xFF;
            h *= 1099511628211ULL;
        }
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        mix(x[i].t);
        mix(x[i].c);
        mix(y[i]);
    }
    return h;
}

}  // namespace

GamModel backfit_gam(std::span<const Point> x, std::span<const double> y, const std::array<SmootherSpec, 2>& specs,
                     const BackfitOptions& options) {
    const std::size_t n = x.size();
    if (n != y.size()) throw ValidationError("GAM: feature and response sizes differ");
    if (n < 10) throw ValidationError("GAM needs at least 10 rows, got " + std::to_string(n));
    for (double v : y)
        if (!std::isfinite(v)) throw ValidationError("GAM response has a non-finite value");

    std::array<std::vector<double>, 2> xs;
    for (const Point& p : x) {
        xs[0].push_back(p.t);
        xs[1].push_back(p.c);
    }
    const Smoother s0(xs[0], specs[0], options.loess_surface);
    const Smoother s1(xs[1], specs[1], options.loess_surface);
    const std::array<const Smoother*, 2> smoothers{&s0, &s1};

    GamModel model;
    model.m_specs = specs;
    model.m_intercept = mean(y);
    model.m_fingerprint = fingerprint(x, y);
    for (int j = 0; j < 2; ++j) {
        const auto [lo, hi] = std::minmax_element(xs[j].begin(), xs[j].end());
        model.m_lower[j] = *lo;
        model.m_upper[j] = *hi;
    }
    const double sd = std::sqrt(variance(y));
    const double scale = sd > 0.0 ? sd : 1.0;

    std::array<std::vector<double>, 2> f{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    std::array<std::vector<double>, 2> partial;
    std::array<double, 2> centers{0.0, 0.0};
    std::vector<double> r(n);
    std::vector<double> fitted(n, model.m_intercept);
    bool converged = false;
    double delta = 0.0;
    for (int cycle = 0; cycle < options.max_cycles; ++cycle) {
        for (int j = 0; j < 2; ++j) {
            const auto& other = f[1 - j];
            for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - model.m_intercept - other[i];
            std::vector<double> s = smoothers[j]->smooth(r);
            const double m = mean(s);
            for (double& v : s) v -= m;
            f[j] = std::move(s);
            partial[j] = r;
            centers[j] = m;
        }
        double rss = 0.0;
        delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double now = model.m_intercept + f[0][i] + f[1][i];
            delta = std::max(delta, std::abs(now - fitted[i]));
            fitted[i] = now;
            rss += (y[i] - now) * (y[i] - now);
        }
        model.m_rss_history.push_back(rss);
        model.m_delta_history.push_back(delta / scale);
        if (delta <= options.tolerance * scale) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "backfitting did not converge after " << options.max_cycles << " cycles; last relative delta " << delta / scale;
        throw NumericalError(msg.str());
    }
    for (int j = 0; j < 2; ++j) {
        model.m_parts[j] = smoothers[j]->component(partial[j], centers[j]);
        model.m_edf[j] = smoothers[j]->edf();
    }
    model.m_fitted = std::move(fitted);
    model.m_components = std::move(f);
    return model;
}

double GamModel::component(int j, double x) const { return (*m_parts.at(static_cast<std::size_t>(j)))(x); }

GamPrediction GamModel::predict(Point x) const {
    GamPrediction out;
    out.value = m_intercept + component(0, x.t) + component(1, x.c);
    out.extrapolated = x.t < m_lower[0] || x.t > m_upper[0] || x.c < m_lower[1] || x.c > m_upper[1];
    return out;
}

AnovaResult anova_compare(const GamModel& a, const GamModel& b) {
    if (a.size() != b.size() || a.data_fingerprint() != b.data_fingerprint())
        throw ValidationError("ANOVA needs both models fit on identical rows");
    AnovaResult out;
    out.rss_a = a.rss();
    out.rss_b = b.rss();
    out.df_a = a.total_df();
    out.df_b = b.total_df();
    const double n = static_cast<double>(a.size());
    const double ddf = out.df_b - out.df_a;
    const bool same_fit = std::abs(ddf) <= 1e-9 && out.rss_a == out.rss_b;
    if (same_fit) {
        out.clamped = true;
        return out;
    }
    if (!(ddf > 0.0))
        throw ValidationError("ANOVA ordering: model_a must have fewer degrees of freedom than model_b");
    if (!(n - out.df_b > 0.0)) throw ValidationError("ANOVA: model_b leaves no residual degrees of freedom");
    out.df_num = ddf;
    out.df_den = n - out.df_b;
    if (out.rss_b >= out.rss_a) {
        out.clamped = true;
        return out;
    }
    out.f = ((out.rss_a - out.rss_b) / out.df_num) / (out.rss_b / out.df_den);
    const boost::math::fisher_f_distribution<double> dist(out.df_num, out.df_den);
    out.p_value = boost::math::cdf(boost::math::complement(dist, out.f));
    return out;
}

// ---------------------------------------------------------------------------
// Families

std::array<SmootherSpec, 2> specs_from_params(const Params& params) {
    const std::string kind = params.at("smoother").get<std::string>();
    auto one = [&](const char* key) {
        const Params& v = params.at(key);
        if (v.is_null()) return SmootherSpec::omitted();
        return kind == "ns" ? SmootherSpec::spline(v.get<int>()) : SmootherSpec::lo(v.get<double>());
    };
    if (kind == "ns") return {one("knots_t"), one("knots_c")};
    if (kind == "lo") return {one("span_t"), one("span_c")};
    throw ValidationError("unknown smoother '" + kind + "'");
}

namespace {

Trainer gam_trainer(BackfitOptions options) {
    return [options](std::span<const Sample> data, const Params& params) {
        std::vector<Point> x;
        std::vector<double> y;
        for (const Sample& s : data) {
            x.push_back(s.x);
            y.push_back(s.y);
        }
        auto model = std::make_shared<const GamModel>(backfit_gam(x, y, specs_from_params(params), options));
        return Predictor([model](Point p) { return model->predict(p).value; });
    };
}

}  // namespace

ModelFamily gam_spline_family(int min_knots, int max_knots, BackfitOptions options) {
    ModelFamily family{"gam_ns", TaskKind::regression, {}, gam_trainer(options)};
    for (int total = 2 * min_knots; total <= 2 * max_knots; ++total)
        for (int kt = min_knots; kt <= max_knots; ++kt) {
            const int kc = total - kt;
            if (kc < min_knots || kc > max_knots) continue;
            family.grid.push_back({{"smoother", "ns"}, {"knots_t", kt}, {"knots_c", kc}});
        }
    return family;
}

ModelFamily gam_loess_family(std::vector<double> spans, BackfitOptions options) {
    ModelFamily family{"gam_lo", TaskKind::regression, {}, gam_trainer(options)};
    std::vector<std::pair<double, double>> pairs;
    for (double a : spans)
        for (double b : spans) pairs.emplace_back(a, b);
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& p, const auto& q) {
        const double sp = p.first + p.second, sq = q.first + q.second;
        if (std::abs(sp - sq) > 1e-12) return sp > sq;
        return p.first > q.first;
    });
    for (const auto& [a, b] : pairs) family.grid.push_back({{"smoother", "lo"}, {"span_t", a}, {"span_c", b}});
    return family;
}

}  // namespace evmstoch
