#include "evmstoch/project.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "evmstoch/error.hpp"
#include "evmstoch/rng.hpp"

namespace evmstoch {

namespace {

std::uint64_t hash_bytes(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;  // FNV-1a prime
    }
    return h;
}

std::uint64_t hash_double(std::uint64_t h, double v) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    return hash_bytes(h, &bits, sizeof bits);
}

}  // namespace

ProjectSpec ProjectSpec::create(std::vector<Activity> activities,
                                std::vector<std::pair<std::string, std::string>> edges) {
    if (activities.empty()) throw ValidationError("project has no activities");

    ProjectSpec spec;
    std::map<std::string, std::size_t, std::less<>> index;
    for (std::size_t i = 0; i < activities.size(); ++i) {
        const Activity& a = activities[i];
        if (a.id.empty()) throw ValidationError("activity #" + std::to_string(i) + " has an empty id");
        if (!index.emplace(a.id, i).second) throw ValidationError("duplicate activity id '" + a.id + "'");
        if (!std::isfinite(a.mean_duration) || a.mean_duration <= 0.0)
            throw ValidationError("activity '" + a.id + "': mean_duration must be > 0");
        if (!std::isfinite(a.variance) || a.variance < 0.0)
            throw ValidationError("activity '" + a.id + "': variance must be >= 0");
        if (!std::isfinite(a.cost_rate) || a.cost_rate < 0.0)
            throw ValidationError("activity '" + a.id + "': cost_rate must be >= 0");
    }

    const std::size_t n = activities.size();
    std::set<std::pair<std::size_t, std::size_t>> seen;
    spec.m_preds.assign(n, {});
    for (const auto& [pred, succ] : edges) {
        auto p = index.find(pred);
        auto s = index.find(succ);
        if (p == index.end()) throw ValidationError("edge " + pred + "->" + succ + ": unknown activity '" + pred + "'");
        if (s == index.end()) throw ValidationError("edge " + pred + "->" + succ + ": unknown activity '" + succ + "'");
        if (p->second == s->second) throw ValidationError("edge " + pred + "->" + succ + ": self-loop");
        if (!seen.emplace(p->second, s->second).second)
            throw ValidationError("edge " + pred + "->" + succ + ": duplicate edge");
        spec.m_edges.emplace_back(p->second, s->second);
        spec.m_preds[s->second].push_back(p->second);
    }
    for (auto& preds : spec.m_preds) std::sort(preds.begin(), preds.end());

    // Kahn's algorithm; lowest declared index first among ready nodes.
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> succs(n);
    for (const auto& [p, s] : spec.m_edges) {
        ++indegree[s];
        succs[p].push_back(s);
    }
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indegree[i] == 0) ready.insert(i);
    while (!ready.empty()) {
        const std::size_t v = *ready.begin();
        ready.erase(ready.begin());
        spec.m_topo.push_back(v);
        for (std::size_t s : succs[v])
            if (--indegree[s] == 0) ready.insert(s);
    }
    if (spec.m_topo.size() != n) {
        std::string members;
        for (std::size_t i = 0; i < n; ++i)
            if (indegree[i] > 0) members += (members.empty() ? "" : ", ") + activities[i].id;
        throw ValidationError("precedence graph contains a cycle involving: " + members);
    }

    spec.m_activities = std::move(activities);

    // BAC summed in declaration order; simulated EV curves sum budgets in the same order.
    double bac = 0.0;
    std::vector<double> means;
    for (const Activity& a : spec.m_activities) {
        bac += a.budget();
        means.push_back(a.mean_duration);
    }
    if (!(bac > 0.0)) throw ValidationError("project budget (BAC) must be positive; every cost_rate is 0");
    spec.m_bac = bac;
    spec.m_pd = earliest_start_schedule(spec, means).finish;

    // Fingerprint over a canonical (id-sorted) view so declaration order does not matter.
    std::uint64_t h = 0xCBF29CE484222325ULL;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return spec.m_activities[a].id < spec.m_activities[b].id; });
    for (std::size_t i : order) {
        const Activity& a = spec.m_activities[i];
        h = hash_bytes(h, a.id.data(), a.id.size());
        h = hash_bytes(h, "\0", 1);
        h = hash_double(h, a.mean_duration);
        h = hash_double(h, a.variance);
        h = hash_double(h, a.cost_rate);
    }
    std::vector<std::string> edge_keys;
    for (const auto& [p, s] : spec.m_edges)
        edge_keys.push_back(spec.m_activities[p].id + '\0' + spec.m_activities[s].id);
    std::sort(edge_keys.begin(), edge_keys.end());
    for (const std::string& k : edge_keys) h = hash_bytes(h, k.data(), k.size() + 1);
    spec.m_fingerprint = splitmix64(h);
    return spec;
}

std::size_t ProjectSpec::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < m_activities.size(); ++i)
        if (m_activities[i].id == id) return i;
    throw ValidationError("unknown activity '" + std::string(id) + "'");
}

ProjectSpec load_project(std::string_view document) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("project document parse error: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError("project document must be a JSON object");
    if (!doc.contains("activities") || !doc["activities"].is_array())
        throw ValidationError("project document: missing 'activities' array");

    auto number = [](const json& obj, const char* key, const std::string& where) {
        if (!obj.contains(key) || !obj[key].is_number())
            throw ValidationError(where + ": field '" + key + "' must be a number");
        return obj[key].get<double>();
    };

    std::vector<Activity> activities;
    std::size_t i = 0;
    for (const json& a : doc["activities"]) {
        const std::string where = "activities[" + std::to_string(i++) + "]";
        if (!a.is_object()) throw ValidationError(where + ": must be an object");
        if (!a.contains("id") || !a["id"].is_string()) throw ValidationError(where + ": field 'id' must be a string");
        Activity act;
        act.id = a["id"].get<std::string>();
        act.mean_duration = number(a, "mean_duration", where + " ('" + act.id + "')");
        act.variance = number(a, "variance", where + " ('" + act.id + "')");
        act.cost_rate = number(a, "cost_rate", where + " ('" + act.id + "')");
        activities.push_back(std::move(act));
    }

    std::vector<std::pair<std::string, std::string>> edges;
    if (doc.contains("edges")) {
        if (!doc["edges"].is_array()) throw ValidationError("project document: 'edges' must be an array");
        std::size_t k = 0;
        for (const json& e : doc["edges"]) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
                throw ValidationError("edges[" + std::to_string(k) + "]: must be a [pred, succ] pair of ids");
            edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
            ++k;
        }
    }
    return ProjectSpec::create(std::move(activities), std::move(edges));
}

ProjectSpec load_project_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open project file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_project(buf.str());
}

Schedule earliest_start_schedule(const ProjectSpec& spec, std::span<const double> durations) {
    if (durations.size() != spec.size())
        throw ValidationError("expected " + std::to_string(spec.size()) + " durations, got " +
                              std::to_string(durations.size()));
    Schedule schedule;
    schedule.activities.resize(spec.size());
    for (std::size_t a : spec.topological_order()) {
        if (!(durations[a] > 0.0))
            throw ValidationError("duration of '" + spec.activities()[a].id + "' must be > 0");
        double start = 0.0;
        for (std::size_t p : spec.predecessors(a)) start = std::max(start, schedule.activities[p].finish);
        schedule.activities[a] = {start, start + durations[a]};
        schedule.finish = std::max(schedule.finish, start + durations[a]);
    }
    return schedule;
}

PiecewiseLinear accrual_curve(const Schedule& schedule, std::span<const double> rates) {
    std::vector<double> events{0.0};
    for (const Interval& iv : schedule.activities) {
        events.push_back(iv.start);
        events.push_back(iv.finish);
    }
    std::sort(events.begin(), events.end());
    events.erase(std::unique(events.begin(), events.end()), events.end());

    std::vector<Breakpoint> points;
    points.reserve(events.size());
    for (double tau : events) {
        double total = 0.0;
        for (std::size_t a = 0; a < schedule.activities.size(); ++a) {
            const Interval& iv = schedule.activities[a];
            const double duration = iv.finish - iv.start;
            const double elapsed = std::clamp(tau - iv.start, 0.0, duration);
            total += rates[a] * elapsed;
        }
        points.push_back({tau, total});
    }
    return PiecewiseLinear(std::move(points));
}

PiecewiseLinear baseline_pv(const ProjectSpec& spec) {
    std::vector<double> means, rates;
    for (const Activity& a : spec.activities()) {
        means.push_back(a.mean_duration);
        rates.push_back(a.cost_rate);
    }
    return accrual_curve(earliest_start_schedule(spec, means), rates);
}

EvmStatus evm_status(const ProjectSpec& spec, const PiecewiseLinear& pv, double actual_time,
                     double actual_cost, double earned_value) {
    if (!(actual_time >= 0.0)) throw ValidationError("actual time must be >= 0");
    if (!(actual_cost >= 0.0)) throw ValidationError("actual cost must be >= 0");
    if (!(earned_value >= 0.0 && earned_value <= spec.bac()))
        throw ValidationError("earned value must lie in [0, BAC]");
    EvmStatus s;
    s.actual_time = actual_time;
    s.actual_cost = actual_cost;
    s.earned_value = earned_value;
    s.planned_value = pv(actual_time);
    s.schedule_variance = earned_value - s.planned_value;
    s.cost_variance = earned_value - actual_cost;
    s.completion = earned_value / spec.bac();
    return s;
}

EvmStatus evm_status(const ProjectSpec& spec, double actual_time, double actual_cost, double earned_value) {
    return evm_status(spec, baseline_pv(spec), actual_time, actual_cost, earned_value);
}

}  // namespace evmstoch
