#include <doctest.h>

#include <cmath>
#include <random>

#include "evmstoch/error.hpp"
#include "evmstoch/gam.hpp"
#include "evmstoch/stats.hpp"

using namespace evmstoch;

namespace {

std::vector<double> uniform_draws(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> out(n);
    for (double& v : out) v = u(rng);
    return out;
}

// Plain least squares on [1, x] as an independent oracle.
std::pair<double, double> ols(std::span<const double> x, std::span<const double> y) {
    const double mx = mean(x), my = mean(y);
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return {my - sxy / sxx * mx, sxy / sxx};
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double a : v) m = std::max(m, std::abs(a));
    return m;
}

struct Synthetic {
    std::vector<Point> x;
    std::vector<double> y;
};

}  // namespace

TEST_CASE("natural spline basis spans linear functions") {
    const auto x = uniform_draws(200, 1, -3.0, 7.0);
    for (int knots : {0, 2, 5}) {
        const NaturalSplineBasis basis = NaturalSplineBasis::fit(x, knots);
        CHECK(basis.dimension() == static_cast<std::size_t>(knots + 1));
        Eigen::MatrixXd design(200, basis.dimension() + 1);
        design.col(0).setOnes();
        design.rightCols(static_cast<Eigen::Index>(basis.dimension())) = basis.matrix(x);
        Eigen::VectorXd y(200);
        for (int i = 0; i < 200; ++i) y(i) = 3.0 * x[static_cast<std::size_t>(i)] + 1.0;
        const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(y);
        CHECK((design * coef - y).cwiseAbs().maxCoeff() <= 1e-8);
        // Rank of the basis matrix on generic points equals its dimension.
        CHECK(design.colPivHouseholderQr().rank() == static_cast<Eigen::Index>(basis.dimension() + 1));
    }
}

TEST_CASE("natural spline fits are linear beyond the boundary knots") {
    const auto x = uniform_draws(300, 2, 0.0, 10.0);
    std::vector<double> y;
    for (double v : x) y.push_back(std::sin(v) + 0.1 * v * v);
    const NaturalSplineBasis basis = NaturalSplineBasis::fit(x, 4);
    const auto knots = basis.knots();
    CHECK(knots.size() == 6);
    for (std::size_t k = 1; k < knots.size(); ++k) CHECK(knots[k] > knots[k - 1]);
    Eigen::MatrixXd design(300, basis.dimension() + 1);
    design.col(0).setOnes();
    design.rightCols(static_cast<Eigen::Index>(basis.dimension())) = basis.matrix(x);
    const Eigen::VectorXd coef =
        design.colPivHouseholderQr().solve(Eigen::Map<const Eigen::VectorXd>(y.data(), 300));
    auto f = [&](double v) {
        std::vector<double> row(basis.dimension());
        basis.evaluate(v, row);
        double s = coef(0);
        for (std::size_t k = 0; k < row.size(); ++k) s += coef(static_cast<Eigen::Index>(k + 1)) * row[k];
        return s;
    };
    const double range = basis.upper() - basis.lower();
    const double h = range / 1000.0;
    for (double at : {basis.upper() + 0.5, basis.upper() + 5.0, basis.lower() - 0.5, basis.lower() - 5.0}) {
        const double slope = (f(at + h) - f(at - h)) / (2 * h);
        const double second = f(at + h) - 2 * f(at) + f(at - h);
        CHECK(std::abs(second) <= 1e-6 * std::max(1.0, std::abs(slope)) * h);
        CHECK(std::abs(second) <= 1e-8);
    }
}

TEST_CASE("natural spline rejects too few distinct values") {
    const std::vector<double> x{1, 1, 2, 2, 3, 3};
    CHECK_NOTHROW(NaturalSplineBasis::fit(x, 1));
    CHECK_THROWS_AS(NaturalSplineBasis::fit(x, 2), ValidationError);
    CHECK_THROWS_AS(NaturalSplineBasis::fit(x, -1), ValidationError);
}

TEST_CASE("loess reproduces constants and lines") {
    const auto x = uniform_draws(150, 3, 0.0, 5.0);
    for (LoessSurface surface : {LoessSurface::direct, LoessSurface::interpolate}) {
        const std::vector<double> sevens(150, 7.0);
        for (double v : LoessSmoother(x, 0.3, surface).smooth(sevens)) CHECK(v == doctest::Approx(7.0).epsilon(1e-12));

        std::vector<double> y;
        for (double v : x) y.push_back(2.0 - 0.5 * v);
        const auto [b0, b1] = ols(x, y);
        const LoessFit fit = loess_smooth(x, y, 50.0, surface);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(fit.fitted[i] - (b0 + b1 * x[i])) <= 1e-6);
        CHECK(std::abs(fit.curve(7.5) - (b0 + b1 * 7.5)) <= 1e-6);
    }
}

TEST_CASE("loess with a large span weights towards the global OLS line") {
    const auto x = uniform_draws(400, 4);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z;
    std::vector<double> y;
    for (double v : x) y.push_back(1.0 + 2.0 * v + 0.1 * z(rng));
    const auto [b0, b1] = ols(x, y);
    const LoessFit fit = loess_smooth(x, y, 1000.0);
    for (std::size_t i = 0; i < x.size(); i += 7) CHECK(std::abs(fit.fitted[i] - (b0 + b1 * x[i])) <= 1e-4);
}

TEST_CASE("loess span rule") {
    const auto x = uniform_draws(40, 5);
    const LoessSmoother a(x, 2.0);
    CHECK(a.neighbourhood_size() == 40);
    CHECK(a.distance_inflation() == 2.0);
    const LoessSmoother b(x, 0.3);
    CHECK(b.neighbourhood_size() == 12);
    CHECK(b.distance_inflation() == 1.0);
    const LoessSmoother c(x, 0.26);
    CHECK(c.neighbourhood_size() == 11);
    CHECK_THROWS_AS(LoessSmoother(x, 0.0), ValidationError);
    CHECK_THROWS_AS(LoessSmoother(std::vector<double>{1.0, 2.0}, 0.5), ValidationError);
}

TEST_CASE("loess falls back to a weighted mean without spread") {
    const std::vector<double> x(12, 3.0);
    std::vector<double> y;
    for (int i = 0; i < 12; ++i) y.push_back(i);
    for (LoessSurface surface : {LoessSurface::direct, LoessSurface::interpolate}) {
        const LoessFit fit = loess_smooth(x, y, 0.5, surface);
        for (double v : fit.fitted) {
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
            CHECK(v <= 11.0);
        }
    }
}

TEST_CASE("loess shifts with the response and has an exact trace") {
    const auto x = uniform_draws(60, 6, -1.0, 1.0);
    std::vector<double> y;
    for (double v : x) y.push_back(std::exp(v));
    for (LoessSurface surface : {LoessSurface::direct, LoessSurface::interpolate}) {
        const LoessSmoother s(x, 0.4, surface);
        const auto base = s.smooth(y);
        std::vector<double> shifted = y;
        for (double& v : shifted) v += 123.25;
        const auto moved = s.smooth(shifted);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(moved[i] - base[i] == doctest::Approx(123.25).epsilon(1e-12));

        // Oracle trace: apply the smoother to unit vectors.
        double trace = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            std::vector<double> e(x.size(), 0.0);
            e[i] = 1.0;
            trace += s.smooth(e)[i];
        }
        CHECK(s.trace() == doctest::Approx(trace).epsilon(1e-10));
        CHECK(s.trace() > 2.0);
    }
}

TEST_CASE("interpolated loess tracks the direct fit") {
    const auto x = uniform_draws(2000, 7, 0.0, 6.0);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> z;
    std::vector<double> y;
    for (double v : x) y.push_back(std::sin(v) + 0.2 * z(rng));
    for (double span : {0.1, 0.3, 0.7}) {
        const auto direct = loess_smooth(x, y, span, LoessSurface::direct).fitted;
        const LoessSmoother interp(x, span, LoessSurface::interpolate);
        const auto approx = interp.smooth(y);
        double worst = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(direct[i] - approx[i]));
        MESSAGE("span " << span << " vertices " << interp.vertex_count() << " max gap " << worst);
        CHECK(worst <= 0.02);
    }
}

TEST_CASE("backfitting recovers an additive linear truth") {
    const auto a = uniform_draws(300, 8, 0.0, 4.0);
    const auto b = uniform_draws(300, 9, -2.0, 2.0);
    Synthetic d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d.x.push_back({a[i], 0.3 * a[i] + b[i]});
        d.y.push_back(2.0 + a[i] + (0.3 * a[i] + b[i]));
    }
    for (const auto& specs : {std::array{SmootherSpec::spline(3), SmootherSpec::spline(3)},
                              std::array{SmootherSpec::lo(0.5), SmootherSpec::lo(0.5)}}) {
        const GamModel gam = backfit_gam(d.x, d.y, specs);
        CHECK(gam.intercept() == doctest::Approx(mean(d.y)).epsilon(1e-14));
        for (std::size_t i = 0; i < d.y.size(); ++i) CHECK(std::abs(gam.fitted()[i] - d.y[i]) <= 1e-6);
        // Each component is linear with unit slope.
        for (int j = 0; j < 2; ++j) {
            const double s = gam.component(j, 1.0) - gam.component(j, 0.0);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
            const double curv = gam.component(j, 1.5) - 2 * gam.component(j, 1.0) + gam.component(j, 0.5);
            CHECK(std::abs(curv) <= 1e-5);
        }
        // Centering.
        for (int j = 0; j < 2; ++j) CHECK(std::abs(mean(gam.training_components()[j])) <= 1e-6 * std::sqrt(variance(d.y)));
        CHECK(mean(gam.fitted()) == doctest::Approx(mean(d.y)).epsilon(1e-10));
    }
}

TEST_CASE("an irrelevant predictor gets a flat component") {
    const std::size_t n = 5000;
    const auto a = uniform_draws(n, 10, 0.0, 3.0);
    const auto b = uniform_draws(n, 11, 0.0, 3.0);
    std::mt19937_64 rng(12);
    std::normal_distribution<double> z;
    Synthetic d;
    for (std::size_t i = 0; i < n; ++i) {
        d.x.push_back({a[i], b[i]});
        d.y.push_back(std::sin(2.0 * a[i]) + a[i] + 0.3 * z(rng));
    }
    const double sd = std::sqrt(variance(d.y));
    for (const auto& specs : {std::array{SmootherSpec::spline(4), SmootherSpec::spline(4)},
                              std::array{SmootherSpec::lo(0.3), SmootherSpec::lo(0.3)}}) {
        const GamModel gam = backfit_gam(d.x, d.y, specs);
        const double flat = max_abs(gam.training_components()[1]);
        const double signal = max_abs(gam.training_components()[0]);
        MESSAGE(specs[0].describe() << ": max|f2| = " << flat << ", sd(y) = " << sd);
        CHECK(flat <= 0.05 * sd);
        CHECK(signal > 0.5 * sd);
    }
}

TEST_CASE("backfitting converges in about one cycle on uncorrelated predictors") {
    // Balanced grid design: t and c exactly uncorrelated.
    Synthetic d;
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 40; ++j) {
            const double t = i / 39.0, c = j / 39.0;
            d.x.push_back({t, c});
            d.y.push_back(std::cos(3.0 * t) + c * c);
        }
    const GamModel gam = backfit_gam(d.x, d.y, {SmootherSpec::spline(4), SmootherSpec::spline(4)});
    REQUIRE(gam.cycles() >= 2);
    CHECK(gam.delta_history()[1] < 1e-3);
}

TEST_CASE("backfitting RSS is nonincreasing") {
    const auto a = uniform_draws(800, 13, 0.0, 2.0);
    const auto b = uniform_draws(800, 14, 0.0, 2.0);
    std::mt19937_64 rng(15);
    std::normal_distribution<double> z;
    Synthetic d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i], c = 0.6 * a[i] + 0.4 * b[i];  // correlation about 0.83
        d.x.push_back({t, c});
        d.y.push_back(t * t - std::sin(3 * c) + 0.2 * z(rng));
    }
    const GamModel spline = backfit_gam(d.x, d.y, {SmootherSpec::spline(5), SmootherSpec::spline(5)});
    const auto& h = spline.rss_history();
    MESSAGE("spline cycles " << spline.cycles());
    for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k] <= h[k - 1] * (1.0 + 1e-12));

    const GamModel lo = backfit_gam(d.x, d.y, {SmootherSpec::lo(0.4), SmootherSpec::lo(0.4)});
    MESSAGE("loess cycles " << lo.cycles());
    CHECK(lo.rss() > 0.0);
    bool monotone = true;
    for (std::size_t k = 1; k < lo.rss_history().size(); ++k) monotone = monotone && lo.rss_history()[k] <= lo.rss_history()[k - 1] * (1.0 + 1e-12);
    CHECK(monotone);
}

TEST_CASE("backfitting reports non-convergence") {
    const auto a = uniform_draws(100, 16);
    Synthetic d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d.x.push_back({a[i], a[i] * a[i]});
        d.y.push_back(std::sin(5 * a[i]));
    }
    try {
        backfit_gam(d.x, d.y, {SmootherSpec::spline(3), SmootherSpec::spline(3)}, {.max_cycles = 1});
        FAIL("expected non-convergence");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("delta") != std::string::npos);
    }
    CHECK_THROWS_AS(backfit_gam(std::span<const Point>(d.x.data(), 5), std::span<const double>(d.y.data(), 5),
                                {SmootherSpec::spline(1), SmootherSpec::spline(1)}),
                    ValidationError);
}

TEST_CASE("gam_predict flags extrapolation") {
    const auto a = uniform_draws(200, 17, 1.0, 2.0);
    const auto b = uniform_draws(200, 18, 10.0, 20.0);
    Synthetic d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d.x.push_back({a[i], b[i]});
        d.y.push_back(3.0 * a[i] - 0.5 * b[i]);
    }
    const GamModel gam = backfit_gam(d.x, d.y, {SmootherSpec::spline(2), SmootherSpec::spline(2)});
    const GamPrediction in = gam.predict(d.x[5]);
    CHECK_FALSE(in.extrapolated);
    CHECK(std::abs(in.value - d.y[5]) <= 1e-6);
    const GamPrediction out = gam.predict({3.0, 25.0});
    CHECK(out.extrapolated);
    CHECK(out.value == doctest::Approx(3.0 * 3.0 - 0.5 * 25.0).epsilon(1e-6));
}

TEST_CASE("ANOVA between identical models is neutral") {
    const auto a = uniform_draws(100, 19);
    const auto b = uniform_draws(100, 20);
    Synthetic d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d.x.push_back({a[i], b[i]});
        d.y.push_back(a[i] * b[i]);
    }
    const GamModel m = backfit_gam(d.x, d.y, {SmootherSpec::spline(2), SmootherSpec::spline(2)});
    const AnovaResult r = anova_compare(m, m);
    CHECK(r.f == 0.0);
    CHECK(r.p_value == 1.0);
    CHECK(r.label.find("approximate") != std::string::npos);

    const GamModel small = backfit_gam(d.x, d.y, {SmootherSpec::spline(0), SmootherSpec::spline(0)});
    CHECK_THROWS_AS(anova_compare(m, small), ValidationError);
    std::vector<double> other = d.y;
    other[0] += 1.0;
    const GamModel moved = backfit_gam(d.x, other, {SmootherSpec::spline(3), SmootherSpec::spline(3)});
    CHECK_THROWS_AS(anova_compare(small, moved), ValidationError);
}

TEST_CASE("ANOVA detects a cubic signal") {
    const std::size_t n = 2000;
    const auto a = uniform_draws(n, 21, -2.0, 2.0);
    const auto b = uniform_draws(n, 22, -2.0, 2.0);
    std::mt19937_64 rng(23);
    std::normal_distribution<double> z(0.0, 0.1);
    Synthetic d;
    for (std::size_t i = 0; i < n; ++i) {
        d.x.push_back({a[i], b[i]});
        d.y.push_back(a[i] * a[i] * a[i] - a[i] + z(rng));
    }
    const GamModel lin = backfit_gam(d.x, d.y, {SmootherSpec::spline(0), SmootherSpec::spline(0)});
    const GamModel ns = backfit_gam(d.x, d.y, {SmootherSpec::spline(4), SmootherSpec::spline(4)});
    const AnovaResult r = anova_compare(lin, ns);
    CHECK(r.p_value < 1e-3);
    // Explicit F from the two RSS values.
    const double df_a = 1.0 + 1.0 + 1.0, df_b = 1.0 + 5.0 + 5.0;
    CHECK(r.df_a == doctest::Approx(df_a));
    CHECK(r.df_b == doctest::Approx(df_b));
    const double f = ((lin.rss() - ns.rss()) / (df_b - df_a)) / (ns.rss() / (static_cast<double>(n) - df_b));
    CHECK(r.f == doctest::Approx(f).epsilon(1e-12));
}

TEST_CASE("ANOVA is calibrated under the null") {
    int rejections = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        std::normal_distribution<double> z;
        Synthetic d;
        for (int i = 0; i < 200; ++i) {
            const double t = z(rng), c = z(rng);
            d.x.push_back({t, c});
            d.y.push_back(0.5 * t - c + z(rng));
        }
        const GamModel lin = backfit_gam(d.x, d.y, {SmootherSpec::spline(0), SmootherSpec::spline(0)});
        const GamModel ns = backfit_gam(d.x, d.y, {SmootherSpec::spline(3), SmootherSpec::spline(3)});
        rejections += anova_compare(lin, ns).p_value < 0.05 ? 1 : 0;
    }
    MESSAGE("null rejections " << rejections << "/100");
    CHECK(rejections >= 2);
    CHECK(rejections <= 10);
}

TEST_CASE("GAM beats the mean predictor when there is signal") {
    const std::size_t n = 1000;
    const auto a = uniform_draws(n, 24, 0.0, 3.0);
    const auto b = uniform_draws(n, 25, 0.0, 3.0);
    std::mt19937_64 rng(26);
    std::normal_distribution<double> z;
    std::vector<Sample> data;
    for (std::size_t i = 0; i < n; ++i) data.push_back({{a[i], b[i]}, std::sin(a[i]) + 0.5 * b[i] + 0.3 * z(rng)});
    const FoldPlan plan = kfold_split(n, 5, 3);
    const double base = cross_validate(data, mean_family(), {}, plan).mean;
    const ModelFamily ns = gam_spline_family(3, 3);
    const ModelFamily lo = gam_loess_family({0.5});
    CHECK(cross_validate(data, ns, ns.grid.front(), plan).mean < base);
    CHECK(cross_validate(data, lo, lo.grid.front(), plan).mean < base);
}

TEST_CASE("GAM family grids are ordered from simple to flexible") {
    const ModelFamily ns = gam_spline_family();
    CHECK(ns.grid.size() == 49);
    CHECK(ns.grid.front()["knots_t"] == 2);
    CHECK(ns.grid.front()["knots_c"] == 2);
    CHECK(ns.grid.back()["knots_t"] == 8);
    const ModelFamily lo = gam_loess_family();
    CHECK(lo.grid.size() == 100);
    CHECK(lo.grid.front()["span_t"] == 1.0);
    CHECK(lo.grid.back()["span_c"] == doctest::Approx(0.1));
    const auto specs = specs_from_params(lo.grid[3]);
    CHECK(specs[0].kind == SmootherSpec::Kind::loess);
    CHECK_THROWS_AS(specs_from_params(Params{{"smoother", "tp"}}), ValidationError);
}
