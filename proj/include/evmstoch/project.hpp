#ifndef EVMSTOCH_PROJECT_HPP
#define EVMSTOCH_PROJECT_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evmstoch/curve.hpp"

namespace evmstoch {

struct Activity {
    std::string id;
    double mean_duration = 0.0;  // time units
    double variance = 0.0;       // time units squared
    double cost_rate = 0.0;      // currency per time unit

    double budget() const noexcept { return mean_duration * cost_rate; }
};

struct Interval {
    double start = 0.0;
    double finish = 0.0;
};

struct Schedule {
    std::vector<Interval> activities;  // indexed like ProjectSpec::activities()
    double finish = 0.0;
};

/// Validated stochastic project: activities plus a finish-to-start precedence DAG.
/// Immutable once created.
class ProjectSpec {
public:
    static ProjectSpec create(std::vector<Activity> activities,
                              std::vector<std::pair<std::string, std::string>> edges);

    const std::vector<Activity>& activities() const noexcept { return m_activities; }
    const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return m_edges; }
    const std::vector<std::size_t>& predecessors(std::size_t activity) const { return m_preds[activity]; }
    const std::vector<std::size_t>& topological_order() const noexcept { return m_topo; }
    std::size_t size() const noexcept { return m_activities.size(); }
    std::size_t index_of(std::string_view id) const;

    double bac() const noexcept { return m_bac; }
    double planned_duration() const noexcept { return m_pd; }

    /// Stable 64-bit hash of the canonical content (ids, parameters, edges).
    std::uint64_t fingerprint() const noexcept { return m_fingerprint; }

private:
    ProjectSpec() = default;

    std::vector<Activity> m_activities;
    std::vector<std::pair<std::size_t, std::size_t>> m_edges;
    std::vector<std::vector<std::size_t>> m_preds;
    std::vector<std::size_t> m_topo;
    double m_bac = 0.0;
    double m_pd = 0.0;
    std::uint64_t m_fingerprint = 0;
};

/// Parses the JSON project document {activities: [...], edges: [[pred, succ], ...]}.
/// Throws ValidationError naming the offending element.
ProjectSpec load_project(std::string_view document);
ProjectSpec load_project_file(const std::filesystem::path& path);

/// Forward pass: start = max finish over predecessors (0 if none).
Schedule earliest_start_schedule(const ProjectSpec& spec, std::span<const double> durations);

/// Cumulative curve of activities accruing `rates[a]` per time unit uniformly over their
/// scheduled interval. Breakpoints sit at every start/finish event plus t = 0.
PiecewiseLinear accrual_curve(const Schedule& schedule, std::span<const double> rates);

/// Planned value from the mean-duration schedule; runs from (0, 0) to (PD, BAC).
PiecewiseLinear baseline_pv(const ProjectSpec& spec);

struct EvmStatus {
    double actual_time = 0.0;
    double actual_cost = 0.0;
    double earned_value = 0.0;
    double planned_value = 0.0;  // PV(AT)
    double schedule_variance = 0.0;  // EV - PV(AT)
    double cost_variance = 0.0;      // EV - AC
    double completion = 0.0;         // EV / BAC
};

EvmStatus evm_status(const ProjectSpec& spec, const PiecewiseLinear& pv, double actual_time,
                     double actual_cost, double earned_value);
EvmStatus evm_status(const ProjectSpec& spec, double actual_time, double actual_cost, double earned_value);

}  // namespace evmstoch

#endif  // EVMSTOCH_PROJECT_HPP
