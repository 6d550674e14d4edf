#include "evmstoch/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>

#include "evmstoch/error.hpp"

namespace evmstoch {

std::vector<double> sample_durations(const ProjectSpec& spec, std::uint64_t seed) {
    Engine engine = make_engine(seed);
    std::vector<double> durations;
    durations.reserve(spec.size());
    for (const Activity& a : spec.activities()) {
        if (a.variance == 0.0) {
            durations.push_back(a.mean_duration);
            continue;
        }
        std::normal_distribution<double> normal(a.mean_duration, std::sqrt(a.variance));
        double d = normal(engine);
        int rejections = 0;
        while (d < kMinDuration) {
            if (++rejections > kMaxRejections)
                throw NumericalError("activity '" + a.id + "': " + std::to_string(kMaxRejections) +
                                     " consecutive non-positive duration draws");
            d = normal(engine);
        }
        durations.push_back(d);
    }
    return durations;
}

RunTrace simulate_with_durations(const ProjectSpec& spec, std::vector<double> durations) {
    RunTrace trace;
    trace.schedule = earliest_start_schedule(spec, durations);

    const auto& acts = spec.activities();
    std::vector<double> ac_rates, ev_rates;
    for (std::size_t a = 0; a < acts.size(); ++a) {
        ac_rates.push_back(acts[a].cost_rate);
        ev_rates.push_back(acts[a].budget() / durations[a]);
    }
    trace.ac_curve = accrual_curve(trace.schedule, ac_rates);

    // EV is built from budget * fraction-complete so that each activity contributes
    // exactly its budget once finished, and the final value reproduces BAC bit-for-bit.
    std::vector<Breakpoint> ev_points;
    for (const Breakpoint& bp : trace.ac_curve.breakpoints()) {
        double total = 0.0;
        for (std::size_t a = 0; a < acts.size(); ++a) {
            const Interval& iv = trace.schedule.activities[a];
            if (bp.time >= iv.finish) {
                total += acts[a].budget();
            } else if (bp.time > iv.start) {
                total += acts[a].budget() * ((bp.time - iv.start) / durations[a]);
            }
        }
        ev_points.push_back({bp.time, total});
    }
    trace.ev_curve = PiecewiseLinear(std::move(ev_points));

    trace.final_t = trace.schedule.finish;
    double cost = 0.0;
    for (std::size_t a = 0; a < acts.size(); ++a) cost += acts[a].cost_rate * durations[a];
    trace.final_c = cost;
    trace.durations = std::move(durations);
    return trace;
}

RunTrace simulate_run(const ProjectSpec& spec, std::uint64_t seed) {
    return simulate_with_durations(spec, sample_durations(spec, seed));
}

Triad extract_triad(const RunTrace& trace, double ev_level, double bac) {
    if (!(ev_level > 0.0 && ev_level <= 1.0)) throw ValidationError("ev_level must lie in (0, 1]");
    Triad triad;
    triad.ev_level = ev_level;
    triad.final_t = trace.final_t;
    triad.final_c = trace.final_c;
    if (ev_level == 1.0) {
        triad.t = trace.final_t;
        triad.c = trace.final_c;
        return triad;
    }
    const std::optional<double> t = trace.ev_curve.first_crossing(ev_level * bac);
    if (!t) throw NumericalError("earned value curve never reaches the requested level");
    triad.t = *t;
    triad.c = trace.ac_curve(*t);
    return triad;
}

std::vector<TriadRow> TriadDataset::at_level(double ev_level) const {
    std::vector<TriadRow> out;
    for (const TriadRow& r : rows)
        if (r.triad.ev_level == ev_level) out.push_back(r);
    return out;
}

TriadDataset run_ensemble(const ProjectSpec& spec, std::uint64_t n_runs, std::uint64_t seed,
                          std::span<const double> ev_levels, unsigned workers) {
    if (n_runs < 1) throw ValidationError("ensemble needs at least one run");
    if (ev_levels.empty()) throw ValidationError("at least one EV level is required");
    for (double l : ev_levels)
        if (!(l > 0.0 && l <= 1.0)) throw ValidationError("EV level " + std::to_string(l) + " outside (0, 1]");

    TriadDataset ds;
    ds.spec_fingerprint = spec.fingerprint();
    ds.seed = seed;
    ds.n_runs = n_runs;
    ds.ev_levels.assign(ev_levels.begin(), ev_levels.end());
    const std::size_t n_levels = ev_levels.size();
    ds.rows.resize(n_runs * n_levels);

    const double bac = spec.bac();
    const double pd = spec.planned_duration();
    auto do_run = [&](std::uint64_t i) {
        const RunTrace trace = simulate_run(spec, run_seed(seed, i));
        for (std::size_t l = 0; l < n_levels; ++l) {
            TriadRow& row = ds.rows[i * n_levels + l];
            row.run = i;
            row.triad = extract_triad(trace, ev_levels[l], bac);
            row.over_budget = trace.final_c > bac;
            row.late = trace.final_t > pd;
        }
    };

    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, n_runs));

    std::atomic<std::uint64_t> next{0};
    std::mutex error_mutex;
    std::optional<std::uint64_t> failed_run;
    std::string failure;
    auto worker = [&] {
        constexpr std::uint64_t kChunk = 256;
        for (;;) {
            const std::uint64_t begin = next.fetch_add(kChunk);
            if (begin >= n_runs) return;
            const std::uint64_t end = std::min(n_runs, begin + kChunk);
            for (std::uint64_t i = begin; i < end; ++i) {
                try {
                    do_run(i);
                } catch (const std::exception& e) {
                    std::lock_guard lock(error_mutex);
                    if (!failed_run || i < *failed_run) {
                        failed_run = i;
                        failure = e.what();
                    }
                    return;
                }
            }
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    if (failed_run) throw NumericalError("simulation run " + std::to_string(*failed_run) + " failed: " + failure);
    return ds;
}

void write_triad_csv(std::ostream& out, std::span<const TriadRow> rows) {
    out << "run,ev_level,t,c,final_t,final_c,over_budget,late\n";
    char buf[256];
    for (const TriadRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%d\n",
                      static_cast<unsigned long long>(r.run), r.triad.ev_level, r.triad.t, r.triad.c,
                      r.triad.final_t, r.triad.final_c, r.over_budget ? 1 : 0, r.late ? 1 : 0);
        out << buf;
    }
}

std::vector<TriadRow> read_triad_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("run,ev_level,t,c,final_t,final_c,over_budget,late", 0) != 0)
        throw ValidationError("triad CSV: unexpected header");
    std::vector<TriadRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        TriadRow r;
        unsigned long long run = 0;
        int over = 0, late = 0;
        if (std::sscanf(line.c_str(), "%llu,%lf,%lf,%lf,%lf,%lf,%d,%d", &run, &r.triad.ev_level, &r.triad.t,
                        &r.triad.c, &r.triad.final_t, &r.triad.final_c, &over, &late) != 8)
            throw ValidationError("triad CSV: malformed line " + std::to_string(lineno));
        r.run = run;
        r.over_budget = over != 0;
        r.late = late != 0;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace evmstoch
