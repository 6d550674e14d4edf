#ifndef EVMSTOCH_SIMULATION_HPP
#define EVMSTOCH_SIMULATION_HPP

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "evmstoch/curve.hpp"
#include "evmstoch/project.hpp"
#include "evmstoch/rng.hpp"

namespace evmstoch {

/// Draws below this are rejected and redrawn.
inline constexpr double kMinDuration = 1e-6;
inline constexpr int kMaxRejections = 1000;

/// Seed of run `run_index` in an ensemble; see derive_seed().
inline std::uint64_t run_seed(std::uint64_t ensemble_seed, std::uint64_t run_index) {
    return derive_seed(ensemble_seed, run_index);
}

/// One Normal(mean, variance) draw per activity, truncated at kMinDuration by rejection.
std::vector<double> sample_durations(const ProjectSpec& spec, std::uint64_t run_seed);

/// One simulated realization of the project.
struct RunTrace {
    std::vector<double> durations;
    Schedule schedule;
    PiecewiseLinear ac_curve;
    PiecewiseLinear ev_curve;
    double final_t = 0.0;
    double final_c = 0.0;
};

RunTrace simulate_with_durations(const ProjectSpec& spec, std::vector<double> durations);
RunTrace simulate_run(const ProjectSpec& spec, std::uint64_t run_seed);

struct Triad {
    double ev_level = 0.0;
    double t = 0.0;  // time at which EV first reaches ev_level * BAC
    double c = 0.0;  // actual cost at that time
    double final_t = 0.0;
    double final_c = 0.0;
};

Triad extract_triad(const RunTrace& trace, double ev_level, double bac);

struct TriadRow {
    std::uint64_t run = 0;
    Triad triad;
    bool over_budget = false;  // final_c > BAC
    bool late = false;         // final_t > PD
};

struct TriadDataset {
    std::uint64_t spec_fingerprint = 0;
    std::uint64_t seed = 0;
    std::uint64_t n_runs = 0;
    std::vector<double> ev_levels;
    std::vector<TriadRow> rows;  // ordered by run, then by position in ev_levels

    /// Rows at one level, in run order.
    std::vector<TriadRow> at_level(double ev_level) const;
};

/// Runs `n_runs` independent realizations. Run i uses run_seed(seed, i), so the
/// dataset does not depend on `workers` (0 = hardware concurrency).
TriadDataset run_ensemble(const ProjectSpec& spec, std::uint64_t n_runs, std::uint64_t seed,
                          std::span<const double> ev_levels, unsigned workers = 0);

/// CSV with header run,ev_level,t,c,final_t,final_c,over_budget,late; floats at 9
/// significant digits, booleans as 0/1.
void write_triad_csv(std::ostream& out, std::span<const TriadRow> rows);
std::vector<TriadRow> read_triad_csv(std::istream& in);

}  // namespace evmstoch

#endif  // EVMSTOCH_SIMULATION_HPP
