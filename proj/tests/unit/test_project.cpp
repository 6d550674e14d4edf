#include <doctest.h>

#include <algorithm>
#include <random>

#include "evmstoch/error.hpp"
#include "evmstoch/project.hpp"

using namespace evmstoch;

namespace {

ProjectSpec case_study() { return load_project_file(EVMSTOCH_CASE_STUDY); }

// Cumulative planned value of the case study at t = 1..13.
constexpr double kPlannedPv[] = {2598, 5196, 7955, 10714, 11757, 12759, 13761,
                                15920, 18079, 20238, 22363, 23488, 24613};

}  // namespace

TEST_CASE("case study loads with its budget and duration") {
    const ProjectSpec spec = case_study();
    CHECK(spec.size() == 8);
    CHECK(spec.bac() == 24613.0);
    CHECK(spec.planned_duration() == 13.0);
}

TEST_CASE("single activity project") {
    const ProjectSpec spec = load_project(R"({"activities":[{"id":"X","mean_duration":1,"variance":0,"cost_rate":5}]})");
    CHECK(spec.bac() == 5.0);
    CHECK(spec.planned_duration() == 1.0);
}

TEST_CASE("validation errors name the offending element") {
    const char* act = R"("activities":[{"id":"A","mean_duration":1,"variance":0,"cost_rate":1},
                                       {"id":"B","mean_duration":1,"variance":0,"cost_rate":1}])";
    SUBCASE("two-node cycle") {
        try {
            load_project(std::string("{") + act + R"(,"edges":[["A","B"],["B","A"]]})");
            FAIL("expected a cycle error");
        } catch (const ValidationError& e) {
            CHECK(std::string(e.what()).find("cycle") != std::string::npos);
        }
    }
    SUBCASE("dangling edge") {
        CHECK_THROWS_WITH_AS(load_project(std::string("{") + act + R"(,"edges":[["A","Z"]]})"),
                             doctest::Contains("'Z'"), ValidationError);
    }
    SUBCASE("self loop and duplicate edge") {
        CHECK_THROWS_AS(load_project(std::string("{") + act + R"(,"edges":[["A","A"]]})"), ValidationError);
        CHECK_THROWS_AS(load_project(std::string("{") + act + R"(,"edges":[["A","B"],["A","B"]]})"), ValidationError);
    }
    SUBCASE("bad numbers") {
        CHECK_THROWS_WITH_AS(load_project(R"({"activities":[{"id":"Q","mean_duration":0,"variance":0,"cost_rate":1}]})"),
                             doctest::Contains("'Q'"), ValidationError);
        CHECK_THROWS_AS(load_project(R"({"activities":[{"id":"Q","mean_duration":1,"variance":-1,"cost_rate":1}]})"),
                        ValidationError);
        CHECK_THROWS_AS(load_project(R"({"activities":[{"id":"Q","mean_duration":1,"variance":0,"cost_rate":-2}]})"),
                        ValidationError);
    }
    SUBCASE("malformed document") {
        CHECK_THROWS_WITH_AS(load_project("{not json"), doctest::Contains("parse"), ValidationError);
        CHECK_THROWS_AS(load_project(R"({"edges":[]})"), ValidationError);
    }
}

TEST_CASE("earliest start schedule") {
    SUBCASE("case study with mean durations") {
        const ProjectSpec spec = case_study();
        std::vector<double> d;
        for (const Activity& a : spec.activities()) d.push_back(a.mean_duration);
        const Schedule s = earliest_start_schedule(spec, d);
        auto at = [&](const char* id) { return s.activities[spec.index_of(id)]; };
        CHECK(at("A1").start == 0);
        CHECK(at("A1").finish == 2);
        CHECK(at("A4").start == 2);
        CHECK(at("A4").finish == 5);
        CHECK(at("A7").start == 5);
        CHECK(at("A7").finish == 13);
        CHECK(at("A3").finish == 7);
        CHECK(at("A6").start == 7);
        CHECK(at("A6").finish == 11);
        CHECK(at("A8").start == 11);
        CHECK(at("A8").finish == 13);
        CHECK(at("A5").start == 4);
        CHECK(at("A5").finish == 10);
        CHECK(s.finish == 13);
    }
    SUBCASE("chain and parallel") {
        const ProjectSpec chain = load_project(R"({"activities":[{"id":"A","mean_duration":2,"variance":0,"cost_rate":1},
            {"id":"B","mean_duration":3,"variance":0,"cost_rate":1}],"edges":[["A","B"]]})");
        const std::vector<double> d{2, 3};
        const Schedule s = earliest_start_schedule(chain, d);
        CHECK(s.activities[1].start == 2);
        CHECK(s.activities[1].finish == 5);

        const ProjectSpec par = load_project(R"({"activities":[{"id":"A","mean_duration":4,"variance":0,"cost_rate":1},
            {"id":"B","mean_duration":7,"variance":0,"cost_rate":1}]})");
        const std::vector<double> d2{4, 7};
        CHECK(earliest_start_schedule(par, d2).finish == 7);
    }
    SUBCASE("missing duration") {
        const std::vector<double> d{1, 2};
        CHECK_THROWS_AS(earliest_start_schedule(case_study(), d), ValidationError);
    }
}

TEST_CASE("baseline PV reproduces the planned cumulative values exactly") {
    const ProjectSpec spec = case_study();
    const PiecewiseLinear pv = baseline_pv(spec);
    CHECK(pv(0.0) == 0.0);
    for (int t = 1; t <= 13; ++t) CHECK(pv(t) == kPlannedPv[t - 1]);
    CHECK(pv(5.5) == doctest::Approx(12258.0).epsilon(1e-12));
    CHECK(pv.nondecreasing());
    CHECK(pv.final_value() == spec.bac());
    CHECK(pv.end_time() == spec.planned_duration());
}

TEST_CASE("EVM status") {
    const ProjectSpec spec = case_study();
    const EvmStatus on_plan = evm_status(spec, 4, 10714, 10714);
    CHECK(on_plan.schedule_variance == 0.0);
    CHECK(on_plan.cost_variance == 0.0);
    CHECK(on_plan.completion == doctest::Approx(0.43530).epsilon(1e-4));
    CHECK(on_plan.completion == 10714.0 / 24613.0);

    const EvmStatus origin = evm_status(spec, 0, 0, 0);
    CHECK(origin.schedule_variance == 0.0);
    CHECK(origin.cost_variance == 0.0);
    CHECK(origin.completion == 0.0);

    CHECK(evm_status(spec, 4, 12000, 10714).cost_variance == -1286.0);

    CHECK_THROWS_AS(evm_status(spec, 4, 1, 30000), ValidationError);
    CHECK_THROWS_AS(evm_status(spec, -1, 1, 1), ValidationError);
}

TEST_CASE("schedule is monotone in durations and invariant to declaration order") {
    const ProjectSpec spec = case_study();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.5, 10.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> d(spec.size());
        for (double& v : d) v = u(rng);
        const double base = earliest_start_schedule(spec, d).finish;
        const std::size_t k = trial % spec.size();
        d[k] += u(rng);
        CHECK(earliest_start_schedule(spec, d).finish >= base);
    }

    // Reverse activities and edges; the schedule per id must not change.
    std::vector<Activity> acts(spec.activities().rbegin(), spec.activities().rend());
    std::vector<std::pair<std::string, std::string>> edges;
    for (auto it = spec.edges().rbegin(); it != spec.edges().rend(); ++it)
        edges.emplace_back(spec.activities()[it->first].id, spec.activities()[it->second].id);
    const ProjectSpec reversed = ProjectSpec::create(acts, edges);
    CHECK(reversed.fingerprint() == spec.fingerprint());
    CHECK(reversed.planned_duration() == spec.planned_duration());
    const PiecewiseLinear a = baseline_pv(spec), b = baseline_pv(reversed);
    for (double t = 0; t <= 13; t += 0.25) CHECK(a(t) == doctest::Approx(b(t)).epsilon(1e-12));
}
