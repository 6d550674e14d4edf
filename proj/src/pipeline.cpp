#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "evmstoch/density.hpp"
#include "evmstoch/error.hpp"
#include "evmstoch/model_selection.hpp"
#include "evmstoch/pipeline.hpp"
#include "evmstoch/rng.hpp"
#include "evmstoch/simulation.hpp"
#include "evmstoch/stats.hpp"

namespace evmstoch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kLevelMatch = 1e-9;
constexpr std::size_t kChartPoints = 1500;
constexpr std::size_t kVariabilityPoints = 10000;
constexpr std::size_t kContourResolution = 120;
constexpr std::array<double, 3> kContourLevels{0.5, 0.75, 0.95};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

std::vector<Point> grid_nodes(const GridSpec& g) {
    std::vector<Point> nodes;
    nodes.reserve(g.nt * g.nc);
    for (std::size_t j = 0; j < g.nc; ++j)
        for (std::size_t i = 0; i < g.nt; ++i) nodes.push_back({g.t_at(i), g.c_at(j)});
    return nodes;
}

// Line through a cloud in standardized coordinates, fitted robustly (median slope of
// pairs half the sample apart, median intercept) so rare off-line runs do not tilt it.
class CloudLine {
public:
    explicit CloudLine(std::span<const Point> pts) {
        std::vector<double> t, c;
        for (const Point& p : pts) {
            t.push_back(p.t);
            c.push_back(p.c);
        }
        m_mt = quantile(t, 0.5);
        m_mc = quantile(c, 0.5);
        m_st = std::sqrt(variance(t));
        m_sc = std::sqrt(variance(c));
        if (!(m_st > 0.0)) m_st = 1.0;
        if (!(m_sc > 0.0)) m_sc = 1.0;
        std::vector<Point> z;
        for (const Point& p : pts) z.push_back({(p.t - m_mt) / m_st, (p.c - m_mc) / m_sc});
        std::sort(z.begin(), z.end(), [](Point x, Point y) { return x.t < y.t; });
        std::vector<double> slopes;
        const std::size_t half = z.size() / 2;
        for (std::size_t i = 0; i + half < z.size(); ++i)
            if (z[i + half].t > z[i].t) slopes.push_back((z[i + half].c - z[i].c) / (z[i + half].t - z[i].t));
        m_slope = slopes.empty() ? 0.0 : quantile(slopes, 0.5);
        std::vector<double> icpt;
        for (const Point& q : z) icpt.push_back(q.c - m_slope * q.t);
        m_intercept = quantile(icpt, 0.5);
        m_norm = std::sqrt(1.0 + m_slope * m_slope);
    }

    // (position along the line, signed distance from it).
    std::pair<double, double> project(Point p) const {
        const double zt = (p.t - m_mt) / m_st, zc = (p.c - m_mc) / m_sc - m_intercept;
        return {(zt + m_slope * zc) / m_norm, (zc - m_slope * zt) / m_norm};
    }

    std::vector<double> offsets(std::span<const Point> pts) const {
        std::vector<double> v;
        for (const Point& p : pts) v.push_back(std::abs(project(p).second));
        return v;
    }

private:
    double m_mt = 0, m_mc = 0, m_st = 1, m_sc = 1;
    double m_slope = 0, m_intercept = 0, m_norm = 1;
};

// No 2-D density exists: a constant coordinate, or at least 99% of the points on one line
// (a handful of off-line runs would otherwise make every bandwidth estimate singular).
bool collinear(std::span<const Point> pts) {
    double t_lo = pts.front().t, t_hi = t_lo, c_lo = pts.front().c, c_hi = c_lo;
    for (const Point& p : pts) {
        t_lo = std::min(t_lo, p.t);
        t_hi = std::max(t_hi, p.t);
        c_lo = std::min(c_lo, p.c);
        c_hi = std::max(c_hi, p.c);
    }
    if (t_lo == t_hi || c_lo == c_hi) return true;
    return quantile(CloudLine(pts).offsets(pts), 0.99) < 1e-6;
}

// 1-D Gaussian KDE along the line of a collinear cloud (normal-reference bandwidth,
// linear binning). Points off the line have density 0.
class LineDensity {
public:
    explicit LineDensity(std::span<const Point> pts) : m_line(pts) {
        std::vector<double> u;
        for (const Point& p : pts) u.push_back(m_line.project(p).first);
        m_tolerance = std::max(1e-6, 10.0 * quantile(m_line.offsets(pts), 0.99));
        const double sd = std::sqrt(variance(u));
        std::vector<double> sorted = u;
        std::sort(sorted.begin(), sorted.end());
        const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
        double spread = std::min(sd, iqr / 1.34);
        if (!(spread > 0.0)) spread = sd > 0.0 ? sd : 1.0;
        m_h = 0.9 * spread * std::pow(static_cast<double>(u.size()), -0.2);

        m_step = m_h / 10.0;
        m_lo = sorted.front() - 6.0 * m_h;
        const auto bins = static_cast<std::size_t>(std::ceil((sorted.back() + 6.0 * m_h - m_lo) / m_step)) + 2;
        std::vector<double> counts(bins, 0.0);
        for (double v : u) {
            const double f = (v - m_lo) / m_step;
            const auto i = static_cast<std::size_t>(f);
            counts[i] += 1.0 - (f - static_cast<double>(i));
            counts[i + 1] += f - static_cast<double>(i);
        }
        const long radius = 60;
        m_field.assign(bins, 0.0);
        const double norm = 1.0 / (static_cast<double>(u.size()) * m_h * std::sqrt(2.0 * std::numbers::pi));
        for (std::size_t i = 0; i < bins; ++i) {
            if (counts[i] == 0.0) continue;
            for (long d = -radius; d <= radius; ++d) {
                const long j = static_cast<long>(i) + d;
                if (j < 0 || j >= static_cast<long>(bins)) continue;
                const double z = static_cast<double>(d) / 10.0;
                m_field[static_cast<std::size_t>(j)] += norm * counts[i] * std::exp(-0.5 * z * z);
            }
        }
    }

    double operator()(Point x) const {
        const auto [u, v] = m_line.project(x);
        if (std::abs(v) > m_tolerance) return 0.0;
        const double f = (u - m_lo) / m_step;
        if (f < 0.0 || f >= static_cast<double>(m_field.size() - 1)) return 0.0;
        const auto i = static_cast<std::size_t>(f);
        const double w = f - static_cast<double>(i);
        return (1.0 - w) * m_field[i] + w * m_field[i + 1];
    }

private:
    CloudLine m_line;
    double m_tolerance = 0, m_h = 1, m_step = 0.1, m_lo = 0;
    std::vector<double> m_field;
};

json point_array(std::span<const Point> pts) {
    json a = json::array();
    for (const Point& p : pts) a.push_back({p.t, p.c});
    return a;
}

json polylines_json(const std::vector<Polyline>& lines) {
    json a = json::array();
    for (const Polyline& l : lines) a.push_back(point_array(l));
    return a;
}

json grid_json(const GridSpec& g) {
    return {{"t_min", g.t_min}, {"t_max", g.t_max}, {"c_min", g.c_min}, {"c_max", g.c_max}, {"nt", g.nt}, {"nc", g.nc}};
}

void validate_levels(const std::vector<double>& levels) {
    if (levels.empty()) throw ValidationError("at least one EV level is required");
    for (double l : levels)
        if (!(l > 0.0 && l <= 1.0)) throw ValidationError("EV levels must lie in (0, 1]");
}

// Rows for one EV level, either from a simulate output directory or simulated now.
struct LevelData {
    std::vector<TriadRow> rows;
    std::uint64_t seed = 0;
    std::uint64_t runs = 0;
    std::string source;
};

LevelData load_or_simulate(const ProjectSpec& spec, const RunConfig& config, double level,
                           const std::optional<fs::path>& data_dir) {
    LevelData data;
    data.seed = config.seed;
    data.runs = config.runs;
    if (data_dir) {
        const fs::path manifest_path = *data_dir / "manifest.json";
        if (!fs::exists(manifest_path)) throw IoError("no manifest.json in " + data_dir->string());
        const json manifest = read_json_file(manifest_path);
        if (manifest.at("fingerprint").get<std::string>() != hex64(spec.fingerprint()))
            throw ValidationError("triad data in " + data_dir->string() + " was generated for a different project");
        data.seed = manifest.at("seed").get<std::uint64_t>();
        data.runs = manifest.at("runs").get<std::uint64_t>();
        for (const json& entry : manifest.at("levels")) {
            if (std::abs(entry.at("ev_level").get<double>() - level) > kLevelMatch) continue;
            const fs::path file = *data_dir / entry.at("file").get<std::string>();
            std::ifstream in(file);
            if (!in) throw IoError("cannot open " + file.string());
            data.rows = read_triad_csv(in);
            for (TriadRow& r : data.rows) r.triad.ev_level = level;
            data.source = file.string();
            return data;
        }
    }
    if (data.runs == 0) throw ValidationError("run count must be positive");
    const TriadDataset ds = run_ensemble(spec, data.runs, data.seed, std::vector<double>{level});
    data.rows = ds.rows;
    data.source = "simulated on demand";
    return data;
}

// Model selection ------------------------------------------------------------

json choice_json(const ModelChoice& c) {
    return {{"family", c.family},
            {"params", c.params},
            {"nested_score", c.nested_score},
            {"candidates", c.candidates},
            {"single_class", c.single_class},
            {"positive_fraction", c.positive_fraction}};
}

ModelChoice choice_from_json(const json& j) {
    ModelChoice c;
    c.family = j.at("family").get<std::string>();
    c.params = j.at("params");
    c.nested_score = j.at("nested_score").get<double>();
    c.candidates = j.at("candidates");
    c.single_class = j.at("single_class").get<bool>();
    c.positive_fraction = j.at("positive_fraction").get<double>();
    return c;
}

std::vector<Sample> head(std::span<const Sample> data, std::size_t n) {
    return {data.begin(), data.begin() + static_cast<std::ptrdiff_t>(std::min(n, data.size()))};
}

ModelChoice select_family(std::span<const Sample> data, const std::vector<ModelFamily>& families,
                          const RunConfig& config, std::uint64_t seed, std::vector<std::string>& warnings) {
    ModelChoice best;
    best.candidates = json::object();
    double best_score = std::numeric_limits<double>::infinity();
    for (const ModelFamily& family : families) {
        try {
            const SelectionReport r = nested_cv(data, family,
                                                {.k_outer = config.k_outer, .k_inner = config.k_inner, .seed = seed});
            best.candidates[family.name] = to_json(r);
            if (r.outer_mean < best_score) {
                best_score = r.outer_mean;
                best.family = family.name;
                best.params = r.final_params();
                best.nested_score = r.outer_mean;
            }
        } catch (const Error& e) {
            best.candidates[family.name] = {{"failed", e.what()}};
            warnings.push_back(family.name + " skipped: " + e.what());
        }
    }
    if (best.family.empty()) {
        std::string why;
        for (const auto& [name, c] : best.candidates.items()) why += "; " + name + ": " + c.at("failed").get<std::string>();
        throw NumericalError("no model family could be fit" + why);
    }
    return best;
}

std::vector<ModelFamily> classifier_families(const ModelGrids& grids) {
    return {qda_family(), forest_family(grids.forest), svm_family(grids.svm)};
}

std::vector<ModelFamily> regression_families(const ModelGrids& grids, bool time_only) {
    std::vector<ModelFamily> families{gam_spline_family(grids.min_knots, grids.max_knots), gam_loess_family(grids.spans)};
    if (!time_only) return families;
    // Collinear predictors: the cost term is dropped, keeping the grid order over the time term.
    for (ModelFamily& f : families) {
        const char* key = f.name == "gam_ns" ? "knots_c" : "span_c";
        const Params first = f.grid.front().at(key);
        std::vector<Params> grid;
        for (Params p : f.grid) {
            if (p.at(key) != first) continue;
            p[key] = nullptr;
            grid.push_back(std::move(p));
        }
        f.grid = std::move(grid);
    }
    return families;
}

std::uint64_t selection_hash(const RunConfig& config) {
    const json j = to_json(config);
    const std::string key = json{{"grids", j.at("grids")},
                                 {"classifier_rows", config.classifier_rows},
                                 {"regression_rows", config.regression_rows},
                                 {"k_outer", config.k_outer},
                                 {"k_inner", config.k_inner}}
                                .dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : key) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

Predictor train_classifier(const ModelChoice& choice, std::span<const Sample> rows, const ModelGrids& grids) {
    if (choice.single_class) {
        const double p = choice.positive_fraction > 0.5 ? 1.0 : 0.0;
        return [p](Point) { return p; };
    }
    Params params = choice.params;
    for (const ModelFamily& f : classifier_families(grids)) {
        if (f.name != choice.family) continue;
        if (f.name == "svm_rbf") params["platt_folds"] = 5;  // held-out Platt fit for the deployed model
        return f.train(rows, params);
    }
    throw ValidationError("unknown classifier family '" + choice.family + "'");
}

struct Regressor {
    std::optional<GamModel> gam;
    double constant = 0.0;
    GamPrediction operator()(Point x) const { return gam ? gam->predict(x) : GamPrediction{constant, false}; }
};

Regressor train_regressor(const ModelChoice& choice, std::span<const Sample> rows) {
    Regressor r;
    if (choice.family == "constant") {
        r.constant = choice.params.at("value").get<double>();
        return r;
    }
    std::vector<Point> x;
    std::vector<double> y;
    for (const Sample& s : rows) {
        x.push_back(s.x);
        y.push_back(s.y);
    }
    r.gam = backfit_gam(x, y, specs_from_params(choice.params));
    return r;
}

bool constant_response(std::span<const Sample> rows) {
    for (const Sample& s : rows)
        if (s.y != rows.front().y) return false;
    return true;
}

bool degenerate_predictors(std::span<const Sample> rows, int knots) {
    std::vector<double> t, c;
    for (const Sample& s : rows) {
        t.push_back(s.x.t);
        c.push_back(s.x.c);
    }
    for (auto* v : {&t, &c}) {
        std::sort(v->begin(), v->end());
        if (static_cast<int>(std::unique(v->begin(), v->end()) - v->begin()) < knots + 2) return true;
    }
    return false;
}

json anova_json(const AnovaResult& r, const std::string& a, const std::string& b) {
    return {{"model_a", a},   {"model_b", b},         {"f", r.f},         {"p_value", r.p_value},
            {"df_a", r.df_a}, {"df_b", r.df_b},       {"rss_a", r.rss_a}, {"rss_b", r.rss_b},
            {"label", r.label}, {"clamped", r.clamped}};
}

}  // namespace

ModelGrids default_model_grids() {
    ModelGrids g;
    for (int min_node : {5, 25}) g.forest.push_back({.ntree = 200, .mtry = 1, .min_node = min_node, .seed = 1});
    for (double cost : {0.5, 2.0, 8.0})
        for (double gamma : {0.25, 1.0, 4.0}) g.svm.push_back({.cost = cost, .gamma = gamma, .platt_folds = 0});
    g.spans = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    return g;
}

json to_json(const RunConfig& c) {
    json forest = json::array(), svm = json::array();
    for (const ForestParams& p : c.grids.forest)
        forest.push_back({{"ntree", p.ntree}, {"mtry", p.mtry}, {"min_node", p.min_node}, {"seed", p.seed}});
    for (const SvmParams& p : c.grids.svm)
        svm.push_back({{"cost", p.cost},
                       {"gamma", p.gamma},
                       {"tolerance", p.tolerance},
                       {"platt_folds", p.platt_folds},
                       {"seed", p.seed}});
    json j{{"project_path", c.project_path.string()},
           {"runs", c.runs},
           {"seed", c.seed},
           {"ev_levels", c.ev_levels},
           {"grid_resolution", c.grid_resolution},
           {"grids",
            {{"forest", forest},
             {"svm", svm},
             {"min_knots", c.grids.min_knots},
             {"max_knots", c.grids.max_knots},
             {"spans", c.grids.spans}}},
           {"classifier_rows", c.classifier_rows},
           {"regression_rows", c.regression_rows},
           {"final_rows", c.final_rows},
           {"k_outer", c.k_outer},
           {"k_inner", c.k_inner},
           {"output_dir", c.output_dir.string()}};
    j["cache_dir"] = c.cache_dir ? json(c.cache_dir->string()) : json(nullptr);
    return j;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    c.project_path = j.at("project_path").get<std::string>();
    c.runs = j.at("runs").get<std::uint64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ev_levels = j.at("ev_levels").get<std::vector<double>>();
    c.grid_resolution = j.at("grid_resolution").get<std::size_t>();
    const json& g = j.at("grids");
    c.grids.forest.clear();
    for (const json& p : g.at("forest"))
        c.grids.forest.push_back({p.at("ntree").get<int>(), p.at("mtry").get<int>(), p.at("min_node").get<int>(),
                                  p.at("seed").get<std::uint64_t>()});
    c.grids.svm.clear();
    for (const json& p : g.at("svm")) {
        SvmParams s;
        s.cost = p.at("cost").get<double>();
        s.gamma = p.at("gamma").get<double>();
        s.tolerance = p.at("tolerance").get<double>();
        s.platt_folds = p.at("platt_folds").get<int>();
        s.seed = p.at("seed").get<std::uint64_t>();
        c.grids.svm.push_back(s);
    }
    c.grids.min_knots = g.at("min_knots").get<int>();
    c.grids.max_knots = g.at("max_knots").get<int>();
    c.grids.spans = g.at("spans").get<std::vector<double>>();
    c.classifier_rows = j.at("classifier_rows").get<std::size_t>();
    c.regression_rows = j.at("regression_rows").get<std::size_t>();
    c.final_rows = j.at("final_rows").get<std::size_t>();
    c.k_outer = j.at("k_outer").get<std::size_t>();
    c.k_inner = j.at("k_inner").get<std::size_t>();
    c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("cache_dir") && !j.at("cache_dir").is_null()) c.cache_dir = j.at("cache_dir").get<std::string>();
    return c;
}

std::string triad_file_name(double ev_level) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "triads_ev%.4f.csv", ev_level);
    return buf;
}

SimulateResult cmd_simulate(const RunConfig& config) {
    validate_levels(config.ev_levels);
    if (config.runs == 0) throw ValidationError("--runs must be positive");
    if (config.output_dir.empty()) throw ValidationError("an output directory is required");
    const ProjectSpec spec = load_project_file(config.project_path);
    const TriadDataset ds = run_ensemble(spec, config.runs, config.seed, config.ev_levels);
    ensure_directory(config.output_dir);

    SimulateResult result;
    json levels = json::array();
    for (double level : config.ev_levels) {
        const std::vector<TriadRow> rows = ds.at_level(level);
        const fs::path file = config.output_dir / triad_file_name(level);
        std::ostringstream csv;
        write_triad_csv(csv, rows);
        write_text(file, csv.str());
        result.files.push_back(file);
        levels.push_back({{"ev_level", level}, {"file", file.filename().string()}, {"rows", rows.size()}});
    }
    const json manifest{{"config", to_json(config)},
                        {"seed", config.seed},
                        {"runs", config.runs},
                        {"bac", spec.bac()},
                        {"pd", spec.planned_duration()},
                        {"fingerprint", hex64(spec.fingerprint())},
                        {"levels", levels}};
    result.manifest = config.output_dir / "manifest.json";
    write_text(result.manifest, manifest.dump(2) + "\n");
    return result;
}

ControlReport cmd_analyze(const RunConfig& config, const ObservedStatus& observed,
                          const std::optional<fs::path>& data_dir) {
    const ProjectSpec spec = load_project_file(config.project_path);
    const double bac = spec.bac();
    if (!(observed.ev > 0.0 && observed.ev < bac))
        throw ValidationError("EV must lie strictly between 0 and BAC (" + std::to_string(bac) + ")");
    const PiecewiseLinear pv = baseline_pv(spec);

    ControlReport report;
    report.config = to_json(config);
    report.spec_fingerprint = spec.fingerprint();
    report.bac = bac;
    report.pd = spec.planned_duration();
    report.ev_level = observed.ev / bac;
    report.status = evm_status(spec, pv, observed.at, observed.ac, observed.ev);

    const LevelData data = load_or_simulate(spec, config, report.ev_level, data_dir);
    if (data.rows.size() < 2) throw ValidationError("at least 2 triad rows are needed for the analysis");
    report.config["data_source"] = data.source;
    report.config["data_seed"] = data.seed;
    report.config["data_runs"] = data.runs;
    const Point status{observed.at, observed.ac};

    std::vector<Point> points;
    points.reserve(data.rows.size());
    for (const TriadRow& r : data.rows) points.push_back({r.triad.t, r.triad.c});

    // Density and anomaly -------------------------------------------------------
    json density_json;
    const bool identical = std::all_of(points.begin(), points.end(), [&](const Point& p) {
        return p.t == points.front().t && p.c == points.front().c;
    });
    auto set_variability = [&](std::span<const Point> ref, std::span<const double> ref_f, double level) {
        double t_lo = std::numeric_limits<double>::infinity(), t_hi = -t_lo, c_lo = t_lo, c_hi = -t_lo;
        for (std::size_t i = 0; i < ref.size(); ++i) {
            if (ref_f[i] < level) continue;
            t_lo = std::min(t_lo, ref[i].t);
            t_hi = std::max(t_hi, ref[i].t);
            c_lo = std::min(c_lo, ref[i].c);
            c_hi = std::max(c_hi, ref[i].c);
        }
        report.chart["variability"] = {{"t_lo", t_lo}, {"t_hi", t_hi}, {"c_lo", c_lo}, {"c_hi", c_hi}};
    };
    const ConfidenceRectangle rect = percentile_rectangle(points, 0.95);
    const json rect_json{{"t_lo", rect.t_lo}, {"t_hi", rect.t_hi}, {"c_lo", rect.c_lo}, {"c_hi", rect.c_hi}};
    if (identical) {
        const Point p0 = points.front();
        const bool same = std::abs(status.t - p0.t) <= 1e-9 * std::max(1.0, std::abs(p0.t)) &&
                          std::abs(status.c - p0.c) <= 1e-9 * std::max(1.0, std::abs(p0.c));
        report.p_anomaly = same ? 0.0 : 1.0;
        report.warnings.push_back("triad cloud is a single point; anomaly score is 0 on it and 1 elsewhere");
        density_json = {{"degenerate", "point"}, {"contours", json::array()}, {"rectangle_95", rect_json}};
        report.chart["variability"] = {{"t_lo", p0.t}, {"t_hi", p0.t}, {"c_lo", p0.c}, {"c_hi", p0.c}};
    } else if (collinear(points)) {
        auto [fit, ref] = split_fit_reference(points);
        const LineDensity line(fit);
        std::vector<double> ref_f;
        for (const Point& p : ref) ref_f.push_back(line(p));
        std::vector<double> sorted = ref_f;
        std::sort(sorted.begin(), sorted.end());
        const double f = line(status);
        report.p_anomaly = static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), f)) /
                           static_cast<double>(sorted.size());
        report.warnings.push_back("triad cloud is collinear; anomaly scored along the line (off-line statuses score 1)");
        density_json = {{"degenerate", "line"}, {"contours", json::array()}, {"rectangle_95", rect_json}};
        set_variability(ref, ref_f, quantile_sorted(sorted, 0.05));
    } else {
        auto [fit, ref] = split_fit_reference(points);
        const ScvResult scv = scv_bandwidth(fit);
        if (!scv.warning.empty()) report.warnings.push_back("bandwidth: " + scv.warning);
        KernelDensity kde(std::move(fit), scv.h);
        const std::vector<double> ref_f = kde.evaluate(ref);
        const DensityModel model(std::move(kde), ref_f);
        report.p_anomaly = model.anomaly_probability(status);

        const GridSpec dgrid = density_grid(points, scv.h, kContourResolution, 3.0);
        const GridValues field{dgrid, model.kde().evaluate(grid_nodes(dgrid))};
        json contours = json::array();
        for (double a : kContourLevels) {
            const double level = model.density_level_for_anomaly(a);
            contours.push_back({{"anomaly", a}, {"density_level", level}, {"lines", polylines_json(contour_lines(field, level))}});
        }
        density_json = {{"degenerate", false},
                        {"bandwidth", {scv.h.tt, scv.h.tc, scv.h.cc}},
                        {"scv_fell_back", scv.fell_back},
                        {"grid", grid_json(dgrid)},
                        {"contours", contours},
                        {"rectangle_95", rect_json}};
        // Marginal projection of the 95% HDR.
        set_variability(ref, ref_f, model.density_level_for_anomaly(0.95));
    }
    report.anomalous = report.p_anomaly > 0.95;
    report.chart["density"] = density_json;

    const ConvexHull cloud_hull(points);
    report.inside_training_hull = cloud_hull.contains(status);

    // Model selection (cached) ----------------------------------------------------
    const LabeledSet cost_set = label_dataset(data.rows, Target::over_budget);
    const LabeledSet time_set = label_dataset(data.rows, Target::late);
    const std::vector<Sample> cost_cls = to_samples(cost_set.points);
    const std::vector<Sample> time_cls = to_samples(time_set.points);
    std::vector<Sample> cost_reg, time_reg;
    for (const TriadRow& r : data.rows) {
        cost_reg.push_back({{r.triad.t, r.triad.c}, r.triad.final_c});
        time_reg.push_back({{r.triad.t, r.triad.c}, r.triad.final_t});
    }

    std::optional<fs::path> cache_file;
    if (config.cache_dir) {
        char level_buf[32];
        std::snprintf(level_buf, sizeof level_buf, "%.6f", report.ev_level);
        cache_file = *config.cache_dir / ("selection_" + hex64(spec.fingerprint()) + "_" + std::to_string(data.seed) + "_" +
                                          level_buf + "_" + hex64(selection_hash(config)) + ".json");
    }
    std::vector<std::string> selection_warnings;
    bool loaded = false;
    if (cache_file && fs::exists(*cache_file)) {
        const json cached = read_json_file(*cache_file);
        report.cost_classifier = choice_from_json(cached.at("cost_classifier"));
        report.time_classifier = choice_from_json(cached.at("time_classifier"));
        report.cost_regressor = choice_from_json(cached.at("cost_regressor"));
        report.time_regressor = choice_from_json(cached.at("time_regressor"));
        selection_warnings = cached.at("warnings").get<std::vector<std::string>>();
        loaded = true;
    }
    if (!loaded) {
        const std::uint64_t sel_seed = derive_seed(data.seed, 0x53454C454354ULL);
        auto classify = [&](const LabeledSet& set, const std::vector<Sample>& rows) {
            const std::vector<Sample> subset = head(rows, config.classifier_rows);
            std::size_t pos = 0;
            for (const Sample& s : subset) pos += s.y > 0.5 ? 1 : 0;
            ModelChoice choice;
            choice.positive_fraction = set.positive_fraction;
            if (set.single_class || pos == 0 || pos == subset.size()) {
                choice.single_class = true;
                choice.family = "constant";
                choice.params = {{"probability", set.positive_fraction > 0.5 ? 1.0 : 0.0}};
                choice.candidates = json::object();
                selection_warnings.push_back("single-class target; probability fixed");
                return choice;
            }
            choice = select_family(subset, classifier_families(config.grids), config, sel_seed, selection_warnings);
            choice.positive_fraction = set.positive_fraction;
            return choice;
        };
        auto regress = [&](const std::vector<Sample>& rows) {
            const std::vector<Sample> subset = head(rows, config.regression_rows);
            ModelChoice choice;
            if (constant_response(subset) || degenerate_predictors(subset, config.grids.max_knots)) {
                double m = 0.0;
                for (const Sample& s : subset) m += s.y;
                m /= static_cast<double>(subset.size());
                choice.family = "constant";
                choice.params = {{"value", m}};
                choice.candidates = json::object();
                selection_warnings.push_back("regression target or predictors degenerate; using the mean response");
                return choice;
            }
            std::vector<Point> xs;
            for (const Sample& s : subset) xs.push_back(s.x);
            const bool time_only = collinear(xs);
            if (time_only) {
                selection_warnings.push_back("time and cost are collinear; regression uses time only");
                return select_family(subset, regression_families(config.grids, true), config, sel_seed, selection_warnings);
            }
            try {
                return select_family(subset, regression_families(config.grids, false), config, sel_seed, selection_warnings);
            } catch (const NumericalError& e) {
                selection_warnings.push_back(std::string("additive fit failed (") + e.what() + "); regression uses time only");
                return select_family(subset, regression_families(config.grids, true), config, sel_seed, selection_warnings);
            }
        };
        report.cost_classifier = classify(cost_set, cost_cls);
        report.time_classifier = classify(time_set, time_cls);
        report.cost_regressor = regress(cost_reg);
        report.time_regressor = regress(time_reg);
        if (cache_file) {
            ensure_directory(*config.cache_dir);
            const json cached{{"fingerprint", hex64(spec.fingerprint())},
                              {"seed", data.seed},
                              {"ev_level", report.ev_level},
                              {"cost_classifier", choice_json(report.cost_classifier)},
                              {"time_classifier", choice_json(report.time_classifier)},
                              {"cost_regressor", choice_json(report.cost_regressor)},
                              {"time_regressor", choice_json(report.time_regressor)},
                              {"warnings", selection_warnings}};
            const fs::path tmp = cache_file->string() + ".tmp";
            write_text(tmp, cached.dump(1));
            std::error_code ec;
            fs::rename(tmp, *cache_file, ec);
            if (ec) throw IoError("cannot write cache file " + cache_file->string() + ": " + ec.message());
        }
    }
    report.warnings.insert(report.warnings.end(), selection_warnings.begin(), selection_warnings.end());
    report.cost_classifier.single_class = report.cost_classifier.single_class || cost_set.single_class;
    report.time_classifier.single_class = report.time_classifier.single_class || time_set.single_class;

    // Final models ------------------------------------------------------------------
    const std::vector<Sample> cost_final = head(cost_cls, config.final_rows);
    const std::vector<Sample> time_final = head(time_cls, config.final_rows);
    const Predictor p_cost = train_classifier(report.cost_classifier, cost_final, config.grids);
    const Predictor p_time = train_classifier(report.time_classifier, time_final, config.grids);
    const Regressor r_cost = train_regressor(report.cost_regressor, head(cost_reg, config.final_rows));
    const Regressor r_time = train_regressor(report.time_regressor, head(time_reg, config.final_rows));

    report.p_overcost = std::clamp(p_cost(status), 0.0, 1.0);
    report.p_delay = std::clamp(p_time(status), 0.0, 1.0);
    const GamPrediction cost_pred = r_cost(status);
    const GamPrediction time_pred = r_time(status);
    report.expected_final_cost = cost_pred.value;
    report.expected_overcost = cost_pred.value - bac;
    report.expected_final_duration = time_pred.value;
    report.expected_delay = time_pred.value - report.pd;
    report.cost_extrapolated = cost_pred.extrapolated;
    report.duration_extrapolated = time_pred.extrapolated;

    // ns vs lo comparison on the final rows (heuristic, reported only).
    auto compare = [&](ModelChoice& choice, const std::vector<Sample>& rows) {
        if (choice.family == "constant") return;
        const json& cands = choice.candidates;
        if (!cands.contains("gam_ns") || !cands.contains("gam_lo") || cands["gam_ns"].contains("failed") ||
            cands["gam_lo"].contains("failed"))
            return;
        try {
            ModelChoice ns = choice, lo = choice;
            ns.family = "gam_ns";
            ns.params = cands["gam_ns"].at("final_params");
            lo.family = "gam_lo";
            lo.params = cands["gam_lo"].at("final_params");
            const std::vector<Sample> subset = head(rows, config.final_rows);
            const Regressor a = train_regressor(ns, subset), b = train_regressor(lo, subset);
            const bool ns_smaller = a.gam->total_df() < b.gam->total_df();
            const AnovaResult r = ns_smaller ? anova_compare(*a.gam, *b.gam) : anova_compare(*b.gam, *a.gam);
            json out = anova_json(r, ns_smaller ? "gam_ns" : "gam_lo", ns_smaller ? "gam_lo" : "gam_ns");
            out["lower_rss"] = a.gam->rss() <= b.gam->rss() ? "gam_ns" : "gam_lo";
            choice.candidates["anova_ns_vs_lo"] = out;
        } catch (const Error& e) {
            choice.candidates["anova_ns_vs_lo"] = {{"failed", e.what()}};
        }
    };
    compare(report.cost_regressor, cost_reg);
    compare(report.time_regressor, time_reg);

    // Chart payload --------------------------------------------------------------------
    json pv_curve = json::array();
    for (const Breakpoint& b : pv.breakpoints()) pv_curve.push_back({b.time, b.value});
    report.chart["pv_curve"] = pv_curve;

    json sample = json::array();
    const std::size_t stride = std::max<std::size_t>(1, data.rows.size() / kChartPoints);
    for (std::size_t i = 0; i < data.rows.size(); i += stride) {
        const TriadRow& r = data.rows[i];
        sample.push_back({r.triad.t, r.triad.c, r.over_budget ? 1 : 0, r.late ? 1 : 0});
    }
    report.chart["points"] = sample;

    double t_lo = points.front().t, t_hi = t_lo, c_lo = points.front().c, c_hi = c_lo;
    for (const Point& p : points) {
        t_lo = std::min(t_lo, p.t);
        t_hi = std::max(t_hi, p.t);
        c_lo = std::min(c_lo, p.c);
        c_hi = std::max(c_hi, p.c);
    }
    const double pad_t = std::max(0.05 * (t_hi - t_lo), 1e-6 * std::max(1.0, std::abs(t_hi)));
    const double pad_c = std::max(0.05 * (c_hi - c_lo), 1e-6 * std::max(1.0, std::abs(c_hi)));
    const std::size_t res = std::max<std::size_t>(config.grid_resolution, 2);
    const GridSpec grid{t_lo - pad_t, t_hi + pad_t, c_lo - pad_c, c_hi + pad_c, res, res};
    report.chart["grid"] = grid_json(grid);

    std::vector<Point> final_points;
    for (const Sample& s : cost_final) final_points.push_back(s.x);
    const ConvexHull hull(final_points);
    report.chart["hull"] = point_array(hull.vertices());

    const DecisionBoundary cost_b = decision_boundary(p_cost, grid, hull);
    const DecisionBoundary time_b = decision_boundary(p_time, grid, hull);
    auto boundary_json = [](const DecisionBoundary& b) {
        return json{{"probability", b.probability.values},
                    {"lines", polylines_json(b.lines)},
                    {"trusted", b.trusted},
                    {"cells_trusted", b.cells_trusted},
                    {"cells_over_run_likely", b.cells_over_run_likely}};
    };
    report.chart["classification"] = {{"cost", boundary_json(cost_b)}, {"time", boundary_json(time_b)}};

    std::vector<double> cost_grid, time_grid;
    std::vector<bool> extrap;
    std::ostringstream grid_csv;
    grid_csv << "t,c,expected_final_cost,expected_final_duration,extrapolated\n";
    grid_csv.precision(9);
    for (std::size_t j = 0; j < grid.nc; ++j)
        for (std::size_t i = 0; i < grid.nt; ++i) {
            const Point x{grid.t_at(i), grid.c_at(j)};
            const GamPrediction a = r_cost(x), b = r_time(x);
            cost_grid.push_back(a.value);
            time_grid.push_back(b.value);
            extrap.push_back(a.extrapolated || b.extrapolated);
            grid_csv << x.t << ',' << x.c << ',' << a.value << ',' << b.value << ',' << ((a.extrapolated || b.extrapolated) ? 1 : 0)
                     << '\n';
        }
    report.chart["regression"] = {{"cost", cost_grid},
                                  {"time", time_grid},
                                  {"extrapolated", extrap},
                                  {"thresholds", {{"cost", bac}, {"time", report.pd}}}};

    // Classifier/regressor agreement on the trusted cells.
    std::size_t agree = 0, cells = 0;
    const std::size_t ct = grid.nt - 1;
    for (std::size_t j = 0; j + 1 < grid.nc; ++j)
        for (std::size_t i = 0; i < ct; ++i) {
            if (!cost_b.trusted[j * ct + i]) continue;
            auto corner_mean = [&](const std::vector<double>& v) {
                return 0.25 * (v[j * grid.nt + i] + v[j * grid.nt + i + 1] + v[(j + 1) * grid.nt + i] + v[(j + 1) * grid.nt + i + 1]);
            };
            const double p = corner_mean(cost_b.probability.values);
            const double oc = corner_mean(cost_grid) - bac;
            ++cells;
            agree += (p > 0.5) == (oc > 0.0) ? 1 : 0;
        }
    report.chart["consistency"] = {{"cells", cells}, {"agreement", cells ? static_cast<double>(agree) / static_cast<double>(cells) : 1.0}};

    if (!config.output_dir.empty()) {
        ensure_directory(config.output_dir);
        write_text(config.output_dir / "report.json", to_json(report).dump(1) + "\n");
        write_text(config.output_dir / "prediction_grid.csv", grid_csv.str());
    }
    return report;
}

json to_json(const ControlReport& r) {
    return {{"config", r.config},
            {"spec_fingerprint", hex64(r.spec_fingerprint)},
            {"bac", r.bac},
            {"pd", r.pd},
            {"ev_level", r.ev_level},
            {"status",
             {{"actual_time", r.status.actual_time},
              {"actual_cost", r.status.actual_cost},
              {"earned_value", r.status.earned_value},
              {"planned_value", r.status.planned_value},
              {"schedule_variance", r.status.schedule_variance},
              {"cost_variance", r.status.cost_variance},
              {"completion", r.status.completion}}},
            {"p_anomaly", r.p_anomaly},
            {"p_overcost", r.p_overcost},
            {"p_delay", r.p_delay},
            {"expected_final_cost", r.expected_final_cost},
            {"expected_overcost", r.expected_overcost},
            {"expected_final_duration", r.expected_final_duration},
            {"expected_delay", r.expected_delay},
            {"models",
             {{"cost_classifier", choice_json(r.cost_classifier)},
              {"time_classifier", choice_json(r.time_classifier)},
              {"cost_regressor", choice_json(r.cost_regressor)},
              {"time_regressor", choice_json(r.time_regressor)}}},
            {"trust",
             {{"inside_training_hull", r.inside_training_hull},
              {"cost_extrapolated", r.cost_extrapolated},
              {"duration_extrapolated", r.duration_extrapolated},
              {"anomalous", r.anomalous}}},
            {"warnings", r.warnings},
            {"chart", r.chart}};
}

ControlReport control_report_from_json(const json& j) {
    try {
        ControlReport r;
        r.config = j.at("config");
        r.spec_fingerprint = std::stoull(j.at("spec_fingerprint").get<std::string>(), nullptr, 16);
        r.bac = j.at("bac").get<double>();
        r.pd = j.at("pd").get<double>();
        r.ev_level = j.at("ev_level").get<double>();
        const json& s = j.at("status");
        r.status.actual_time = s.at("actual_time").get<double>();
        r.status.actual_cost = s.at("actual_cost").get<double>();
        r.status.earned_value = s.at("earned_value").get<double>();
        r.status.planned_value = s.at("planned_value").get<double>();
        r.status.schedule_variance = s.at("schedule_variance").get<double>();
        r.status.cost_variance = s.at("cost_variance").get<double>();
        r.status.completion = s.at("completion").get<double>();
        r.p_anomaly = j.at("p_anomaly").get<double>();
        r.p_overcost = j.at("p_overcost").get<double>();
        r.p_delay = j.at("p_delay").get<double>();
        r.expected_final_cost = j.at("expected_final_cost").get<double>();
        r.expected_overcost = j.at("expected_overcost").get<double>();
        r.expected_final_duration = j.at("expected_final_duration").get<double>();
        r.expected_delay = j.at("expected_delay").get<double>();
        const json& m = j.at("models");
        r.cost_classifier = choice_from_json(m.at("cost_classifier"));
        r.time_classifier = choice_from_json(m.at("time_classifier"));
        r.cost_regressor = choice_from_json(m.at("cost_regressor"));
        r.time_regressor = choice_from_json(m.at("time_regressor"));
        const json& t = j.at("trust");
        r.inside_training_hull = t.at("inside_training_hull").get<bool>();
        r.cost_extrapolated = t.at("cost_extrapolated").get<bool>();
        r.duration_extrapolated = t.at("duration_extrapolated").get<bool>();
        r.anomalous = t.at("anomalous").get<bool>();
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        r.chart = j.at("chart");
        return r;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed report: ") + e.what());
    }
}

}  // namespace evmstoch
