#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "evmstoch/error.hpp"
#include "evmstoch/pipeline.hpp"

namespace evmstoch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += ch;
        }
    }
    return out;
}

// Linear map from a data window onto a pixel rectangle (y grows downwards).
struct Frame {
    double x0, y0, w, h;  // pixels
    double t_min, t_max, v_min, v_max;

    double px(double t) const { return x0 + w * (t - t_min) / (t_max - t_min); }
    double py(double v) const { return y0 + h - h * (v - v_min) / (v_max - v_min); }
};

Frame make_frame(double x0, double y0, double w, double h, double t_min, double t_max, double v_min, double v_max) {
    if (!(t_max > t_min)) t_max = t_min + 1.0;
    if (!(v_max > v_min)) v_max = v_min + 1.0;
    return {x0, y0, w, h, t_min, t_max, v_min, v_max};
}

class SvgWriter {
public:
    SvgWriter(double width, double height, const std::string& title) {
        m_out << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << num(width) << R"(" height=")" << num(height)
              << R"(" viewBox="0 0 )" << num(width) << ' ' << num(height) << R"(" font-family="sans-serif" font-size="12">)"
              << '\n';
        m_out << "<title>" << escape(title) << "</title>\n";
        m_out << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
    }

    void raw(const std::string& s) { m_out << s << '\n'; }

    void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0,
              const std::string& extra = "") {
        m_out << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
              << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"" << extra << "/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& fill, const std::string& extra = "") {
        m_out << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(std::max(w, 0.0)) << "\" height=\""
              << num(std::max(h, 0.0)) << "\" fill=\"" << fill << "\"" << extra << "/>\n";
    }

    void circle(double x, double y, double r, const std::string& fill, const std::string& extra = "") {
        m_out << "<circle cx=\"" << num(x) << "\" cy=\"" << num(y) << "\" r=\"" << num(r) << "\" fill=\"" << fill << "\""
              << extra << "/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width,
                  const std::string& extra = "") {
        if (pts.empty()) return;
        m_out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"" << extra
              << " points=\"";
        for (const auto& [x, y] : pts) m_out << num(x) << ',' << num(y) << ' ';
        m_out << "\"/>\n";
    }

    void text(double x, double y, const std::string& s, const std::string& extra = "") {
        m_out << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\"" << extra << ">" << escape(s) << "</text>\n";
    }

    void annotation(double x, double y, const std::string& key, const std::string& s) {
        text(x, y, s, " class=\"annotation\" data-key=\"" + key + "\"");
    }

    std::string finish() {
        m_out << "</svg>\n";
        return m_out.str();
    }

private:
    std::ostringstream m_out;
};

void axes(SvgWriter& svg, const Frame& f, const std::string& x_label, const std::string& y_label) {
    svg.rect(f.x0, f.y0, f.w, f.h, "none", " stroke=\"#444\"");
    for (int k = 0; k <= 4; ++k) {
        const double t = f.t_min + (f.t_max - f.t_min) * k / 4.0;
        const double v = f.v_min + (f.v_max - f.v_min) * k / 4.0;
        svg.text(f.px(t), f.y0 + f.h + 14, num(t), " text-anchor=\"middle\" font-size=\"10\"");
        svg.text(f.x0 - 4, f.py(v) + 3, num(v), " text-anchor=\"end\" font-size=\"10\"");
    }
    svg.text(f.x0 + f.w / 2, f.y0 + f.h + 30, x_label, " text-anchor=\"middle\"");
    svg.text(f.x0 - 52, f.y0 + f.h / 2, y_label,
             " text-anchor=\"middle\" transform=\"rotate(-90 " + num(f.x0 - 52) + ' ' + num(f.y0 + f.h / 2) + ")\"");
}

std::string percent(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * p);
    return buf;
}

// Blue (0) through white (0.5) to red (1).
std::string diverging(double u) {
    u = std::clamp(u, 0.0, 1.0);
    int r, g, b;
    if (u < 0.5) {
        const double s = u / 0.5;
        r = static_cast<int>(std::lround(49 + s * (255 - 49)));
        g = static_cast<int>(std::lround(104 + s * (255 - 104)));
        b = static_cast<int>(std::lround(176 + s * (255 - 176)));
    } else {
        const double s = (u - 0.5) / 0.5;
        r = static_cast<int>(std::lround(255 + s * (202 - 255)));
        g = static_cast<int>(std::lround(255 + s * (0 - 255)));
        b = static_cast<int>(std::lround(255 + s * (32 - 255)));
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

GridSpec grid_from(const json& g) {
    return {g.at("t_min").get<double>(), g.at("t_max").get<double>(), g.at("c_min").get<double>(),
            g.at("c_max").get<double>(), g.at("nt").get<std::size_t>(), g.at("nc").get<std::size_t>()};
}

std::vector<std::pair<double, double>> to_pixels(const Frame& f, const json& line) {
    std::vector<std::pair<double, double>> out;
    for (const json& p : line) out.emplace_back(f.px(p[0].get<double>()), f.py(p[1].get<double>()));
    return out;
}

// Frame around the sampled cloud, with the status forced into view.
Frame cloud_frame(const ControlReport& r, double x0, double y0, double w, double h) {
    const GridSpec g = r.chart.contains("grid") ? grid_from(r.chart["grid"]) : GridSpec{};
    double t_lo = g.t_min, t_hi = g.t_max, c_lo = g.c_min, c_hi = g.c_max;
    t_lo = std::min(t_lo, r.status.actual_time);
    t_hi = std::max(t_hi, r.status.actual_time);
    c_lo = std::min(c_lo, r.status.actual_cost);
    c_hi = std::max(c_hi, r.status.actual_cost);
    return make_frame(x0, y0, w, h, t_lo, t_hi, c_lo, c_hi);
}

void status_marker(SvgWriter& svg, const Frame& f, const ControlReport& r) {
    const double x = f.px(r.status.actual_time), y = f.py(r.status.actual_cost);
    svg.circle(x, y, 5, "black", " class=\"status\" stroke=\"white\" stroke-width=\"1.5\"");
    svg.text(x + 7, y - 7, "status", " font-size=\"11\"");
}

void sample_points(SvgWriter& svg, const Frame& f, const json& points, int label_column) {
    for (const json& p : points) {
        const bool over = label_column >= 0 && p[static_cast<std::size_t>(label_column)].get<int>() == 1;
        svg.circle(f.px(p[0].get<double>()), f.py(p[1].get<double>()), 1.3, over ? "#ca0020" : "#0571b0",
                   " fill-opacity=\"0.35\"");
    }
}

void hull_outline(SvgWriter& svg, const Frame& f, const json& hull) {
    auto pts = to_pixels(f, hull);
    if (pts.empty()) return;
    pts.push_back(pts.front());
    svg.polyline(pts, "#555", 1.0, " class=\"hull\" stroke-dasharray=\"4 3\"");
}

// Cell heat map; untrusted cells are drawn nearly transparent.
void heat_map(SvgWriter& svg, const Frame& f, const GridSpec& g, const std::function<double(std::size_t, std::size_t)>& value,
              const std::function<bool(std::size_t, std::size_t)>& trusted) {
    for (std::size_t j = 0; j + 1 < g.nc; ++j)
        for (std::size_t i = 0; i + 1 < g.nt; ++i) {
            const double x1 = f.px(g.t_at(i)), x2 = f.px(g.t_at(i + 1));
            const double y1 = f.py(g.c_at(j + 1)), y2 = f.py(g.c_at(j));
            const bool ok = trusted(i, j);
            svg.rect(x1, y1, x2 - x1 + 0.3, y2 - y1 + 0.3, diverging(value(i, j)),
                     ok ? std::string(" class=\"cell\"") : std::string(" class=\"cell untrusted\" fill-opacity=\"0.12\""));
        }
}

double corner_mean(const std::vector<double>& v, const GridSpec& g, std::size_t i, std::size_t j) {
    return 0.25 * (v[j * g.nt + i] + v[j * g.nt + i + 1] + v[(j + 1) * g.nt + i] + v[(j + 1) * g.nt + i + 1]);
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string render_control_chart(const ControlReport& r) {
    const json& chart = r.chart;
    const json var = chart.value("variability", json{{"t_lo", 0.0}, {"t_hi", 0.0}, {"c_lo", 0.0}, {"c_hi", 0.0}});
    const double vt_lo = var["t_lo"].get<double>(), vt_hi = var["t_hi"].get<double>();
    const double vc_lo = var["c_lo"].get<double>(), vc_hi = var["c_hi"].get<double>();

    const double t_max = std::max({r.pd, r.status.actual_time, r.expected_final_duration, vt_hi}) * 1.08;
    const double v_max = std::max({r.bac, r.status.actual_cost, r.expected_final_cost, vc_hi}) * 1.08;
    const double width = 860, panel_h = 340;
    SvgWriter svg(width, 2 * panel_h + 170, "Earned value control chart");
    svg.text(width / 2, 22, "EV level " + percent(r.ev_level) + " of BAC", " text-anchor=\"middle\" font-size=\"15\"");

    std::vector<std::pair<double, double>> pv;
    // Cost panel.
    const Frame fc = make_frame(80, 40, 560, panel_h, 0.0, t_max, 0.0, v_max);
    axes(svg, fc, "time", "cost");
    for (const json& b : chart.value("pv_curve", json::array())) pv.emplace_back(fc.px(b[0].get<double>()), fc.py(b[1].get<double>()));
    svg.polyline(pv, "#1a9641", 2.0, " class=\"pv-curve\"");
    svg.line(fc.px(0), fc.py(r.bac), fc.px(t_max), fc.py(r.bac), "#999", 1.0, " stroke-dasharray=\"5 4\"");
    svg.text(fc.px(0) + 4, fc.py(r.bac) - 4, "BAC", " font-size=\"10\"");
    // Projected variability at the current EV level: cost range at AT, time range at EV.
    svg.rect(fc.px(r.status.actual_time) - 3, fc.py(vc_hi), 6, fc.py(vc_lo) - fc.py(vc_hi), "#fdae61",
             " class=\"variability-band\" data-axis=\"cost\" fill-opacity=\"0.6\"");
    svg.rect(fc.px(vt_lo), fc.py(r.status.earned_value) - 3, fc.px(vt_hi) - fc.px(vt_lo), 6, "#abd9e9",
             " class=\"variability-band\" data-axis=\"time\" fill-opacity=\"0.8\"");
    svg.circle(fc.px(r.status.actual_time), fc.py(r.status.earned_value), 5, "#1a9641", " class=\"ev-marker\"");
    svg.circle(fc.px(r.status.actual_time), fc.py(r.status.actual_cost), 5, "#d7191c", " class=\"ac-marker\"");
    svg.text(fc.px(r.status.actual_time) + 8, fc.py(r.status.earned_value) + 14, "EV", " font-size=\"11\"");
    svg.text(fc.px(r.status.actual_time) + 8, fc.py(r.status.actual_cost) - 6, "AC", " font-size=\"11\"");
    svg.circle(fc.px(r.expected_final_duration), fc.py(r.expected_final_cost), 4, "none",
               " class=\"expected-final\" stroke=\"#d7191c\" stroke-width=\"1.5\"");
    double y = 60;
    const double ax = 660;
    svg.annotation(ax, y, "p_anomaly", "p(Anomaly) = " + percent(r.p_anomaly));
    svg.annotation(ax, y += 20, "p_overcost", "p(OC) = " + percent(r.p_overcost));
    svg.annotation(ax, y += 20, "expected_overcost", "E[over-cost] = " + num(r.expected_overcost));
    svg.annotation(ax, y += 20, "variability_cost", "AC range: " + num(vc_lo) + " to " + num(vc_hi));
    svg.text(ax, y += 20, "E[final cost] = " + num(r.expected_final_cost), " font-size=\"11\" fill=\"#555\"");

    // Time panel: fraction of BAC earned against time.
    const double top = 40 + panel_h + 60;
    const Frame ft = make_frame(80, top, 560, panel_h, 0.0, t_max, 0.0, 1.08);
    axes(svg, ft, "time", "EV / BAC");
    pv.clear();
    for (const json& b : chart.value("pv_curve", json::array()))
        pv.emplace_back(ft.px(b[0].get<double>()), ft.py(r.bac > 0 ? b[1].get<double>() / r.bac : 0.0));
    svg.polyline(pv, "#1a9641", 2.0, " class=\"pv-curve\"");
    svg.line(ft.px(r.pd), ft.py(0), ft.px(r.pd), ft.py(1.08), "#999", 1.0, " stroke-dasharray=\"5 4\"");
    svg.text(ft.px(r.pd) + 4, ft.py(1.04), "PD", " font-size=\"10\"");
    svg.rect(ft.px(vt_lo), ft.py(r.ev_level) - 3, ft.px(vt_hi) - ft.px(vt_lo), 6, "#abd9e9",
             " class=\"variability-band\" data-axis=\"time\" fill-opacity=\"0.8\"");
    svg.circle(ft.px(r.status.actual_time), ft.py(r.ev_level), 5, "#1a9641", " class=\"ev-marker\"");
    svg.circle(ft.px(r.expected_final_duration), ft.py(1.0), 4, "none",
               " class=\"expected-final\" stroke=\"#2c7bb6\" stroke-width=\"1.5\"");
    y = top + 20;
    svg.annotation(ax, y, "p_anomaly", "p(Anomaly) = " + percent(r.p_anomaly));
    svg.annotation(ax, y += 20, "p_delay", "p(D) = " + percent(r.p_delay));
    svg.annotation(ax, y += 20, "expected_delay", "E[delay] = " + num(r.expected_delay));
    svg.annotation(ax, y += 20, "variability_time", "AT range: " + num(vt_lo) + " to " + num(vt_hi));
    svg.text(ax, y += 20, "E[final time] = " + num(r.expected_final_duration), " font-size=\"11\" fill=\"#555\"");

    y = top + panel_h + 60;
    std::string trust = r.inside_training_hull ? "status inside the simulated cloud" : "status outside the simulated cloud";
    if (r.cost_extrapolated || r.duration_extrapolated) trust += "; regression extrapolates";
    if (r.anomalous) trust += "; anomalous status";
    svg.text(80, y, trust, " class=\"trust\" font-size=\"11\"");
    return svg.finish();
}

std::string render_density_chart(const ControlReport& r) {
    SvgWriter svg(760, 620, "Triad density");
    const Frame f = cloud_frame(r, 90, 40, 560, 500);
    axes(svg, f, "time", "actual cost");
    sample_points(svg, f, r.chart.value("points", json::array()), -1);
    const json& density = r.chart.value("density", json::object());
    static const char* colours[] = {"#fdae61", "#f46d43", "#a50026"};
    std::size_t k = 0;
    for (const json& contour : density.value("contours", json::array())) {
        const std::string a = num(contour["anomaly"].get<double>());
        for (const json& line : contour["lines"])
            svg.polyline(to_pixels(f, line), colours[k % 3], 1.6, " class=\"contour\" data-anomaly=\"" + a + "\"");
        ++k;
    }
    if (density.contains("rectangle_95")) {
        const json& rc = density["rectangle_95"];
        const double x1 = f.px(rc["t_lo"].get<double>()), x2 = f.px(rc["t_hi"].get<double>());
        const double y1 = f.py(rc["c_hi"].get<double>()), y2 = f.py(rc["c_lo"].get<double>());
        svg.rect(x1, y1, x2 - x1, y2 - y1, "none", " class=\"percentile-rectangle\" stroke=\"#333\" stroke-dasharray=\"6 3\"");
    }
    status_marker(svg, f, r);
    svg.annotation(90, 575, "p_anomaly", "p(Anomaly) = " + percent(r.p_anomaly));
    svg.text(90, 595, "contours at anomaly 0.5, 0.75, 0.95; dashed box: 95% marginal percentiles", " font-size=\"10\"");
    return svg.finish();
}

std::string render_classification_chart(const ControlReport& r) {
    SvgWriter svg(1240, 620, "Classification boundaries");
    const json& cls = r.chart.value("classification", json::object());
    const GridSpec g = grid_from(r.chart.at("grid"));
    const std::array<std::pair<const char*, const char*>, 2> panels{{{"cost", "over budget"}, {"time", "late"}}};
    for (std::size_t k = 0; k < panels.size(); ++k) {
        const auto [key, title] = panels[k];
        if (!cls.contains(key)) continue;
        const json& b = cls[key];
        const Frame f = make_frame(90 + 610.0 * static_cast<double>(k), 50, 500, 480, g.t_min, g.t_max, g.c_min, g.c_max);
        const std::vector<double> prob = b["probability"].get<std::vector<double>>();
        const std::vector<bool> trusted = b["trusted"].get<std::vector<bool>>();
        heat_map(
            svg, f, g, [&](std::size_t i, std::size_t j) { return corner_mean(prob, g, i, j); },
            [&](std::size_t i, std::size_t j) { return trusted[j * (g.nt - 1) + i]; });
        axes(svg, f, "time", "actual cost");
        for (const json& line : b["lines"]) svg.polyline(to_pixels(f, line), "black", 1.8, " class=\"decision-boundary\"");
        hull_outline(svg, f, r.chart.value("hull", json::array()));
        if (r.status.actual_time >= g.t_min && r.status.actual_time <= g.t_max && r.status.actual_cost >= g.c_min &&
            r.status.actual_cost <= g.c_max)
            status_marker(svg, f, r);
        svg.text(f.x0 + f.w / 2, 34, std::string("p(") + title + ")", " text-anchor=\"middle\" font-size=\"14\"");
    }
    svg.annotation(90, 585, "p_overcost", "p(OC) = " + percent(r.p_overcost));
    svg.annotation(700, 585, "p_delay", "p(D) = " + percent(r.p_delay));
    svg.text(90, 605, "faded cells lie outside the training hull", " font-size=\"10\"");
    return svg.finish();
}

std::string render_regression_chart(const ControlReport& r) {
    SvgWriter svg(1240, 620, "Expected final cost and duration");
    const json& reg = r.chart.value("regression", json::object());
    const GridSpec g = grid_from(r.chart.at("grid"));
    const std::vector<bool> extrap = reg.value("extrapolated", std::vector<bool>{});
    const std::array<std::pair<const char*, double>, 2> panels{{{"cost", r.bac}, {"time", r.pd}}};
    for (std::size_t k = 0; k < panels.size(); ++k) {
        const auto [key, threshold] = panels[k];
        if (!reg.contains(key)) continue;
        const std::vector<double> v = reg[key].get<std::vector<double>>();
        double spread = 0.0;
        for (double x : v) spread = std::max(spread, std::abs(x - threshold));
        if (spread <= 0.0) spread = 1.0;
        const Frame f = make_frame(90 + 610.0 * static_cast<double>(k), 50, 500, 480, g.t_min, g.t_max, g.c_min, g.c_max);
        heat_map(
            svg, f, g, [&](std::size_t i, std::size_t j) { return 0.5 + 0.5 * (corner_mean(v, g, i, j) - threshold) / spread; },
            [&](std::size_t i, std::size_t j) {
                return !(extrap[j * g.nt + i] || extrap[j * g.nt + i + 1] || extrap[(j + 1) * g.nt + i] ||
                         extrap[(j + 1) * g.nt + i + 1]);
            });
        axes(svg, f, "time", "actual cost");
        hull_outline(svg, f, r.chart.value("hull", json::array()));
        if (r.status.actual_time >= g.t_min && r.status.actual_time <= g.t_max && r.status.actual_cost >= g.c_min &&
            r.status.actual_cost <= g.c_max)
            status_marker(svg, f, r);
        const std::string title = k == 0 ? "expected final cost (white = BAC " + num(threshold) + ")"
                                         : "expected final duration (white = PD " + num(threshold) + ")";
        svg.text(f.x0 + f.w / 2, 34, title, " text-anchor=\"middle\" font-size=\"14\"");
    }
    svg.annotation(90, 585, "expected_overcost", "E[over-cost] = " + num(r.expected_overcost));
    svg.annotation(700, 585, "expected_delay", "E[delay] = " + num(r.expected_delay));
    svg.text(90, 605, "faded cells need extrapolation beyond the training range", " font-size=\"10\"");
    return svg.finish();
}

ChartResult cmd_chart(const ControlReport& report, const fs::path& svg_path) {
    if (svg_path.empty()) throw ValidationError("an output SVG path is required");
    if (!report.chart.contains("grid")) throw ValidationError("report has no chart payload");
    if (svg_path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(svg_path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + svg_path.parent_path().string() + ": " + ec.message());
    }
    auto sibling = [&](const std::string& suffix, const std::string& ext) {
        fs::path p = svg_path;
        p.replace_filename(svg_path.stem().string() + suffix + ext);
        return p;
    };
    ChartResult result{svg_path, sibling("_density", ".svg"), sibling("_classification", ".svg"),
                       sibling("_regression", ".svg"), sibling("", ".json")};
    write_file(result.control_chart, render_control_chart(report));
    write_file(result.density_chart, render_density_chart(report));
    write_file(result.classification_chart, render_classification_chart(report));
    write_file(result.regression_chart, render_regression_chart(report));
    write_file(result.json, to_json(report).dump(1) + "\n");
    return result;
}

}  // namespace evmstoch
