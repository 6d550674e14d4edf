#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "evmstoch/error.hpp"
#include "evmstoch/model_selection.hpp"
#include "evmstoch/stats.hpp"

using namespace evmstoch;

namespace {

std::vector<Sample> gaussian_classes(std::size_t n, std::uint64_t seed, double prior1 = 0.5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::bernoulli_distribution coin(prior1);
    std::vector<Sample> out(n);
    for (Sample& s : out) {
        s.y = coin(rng) ? 1.0 : 0.0;
        s.x = {z(rng) + 1.5 * s.y, z(rng) + 1.0 * s.y};
    }
    return out;
}

ModelFamily majority_or_qda() {
    const ModelFamily qda = qda_family();
    const ModelFamily majority = majority_family();
    return {"majority_or_qda",
            TaskKind::classification,
            {{{"model", "majority"}}, {{"model", "qda"}}},
            [qda, majority](std::span<const Sample> data, const Params& p) {
                return p.at("model") == "qda" ? qda.train(data, {}) : majority.train(data, {});
            }};
}

}  // namespace

TEST_CASE("kfold_split sizes and determinism") {
    const FoldPlan a = kfold_split(100, 5, 3);
    CHECK(a.fold_sizes() == std::vector<std::size_t>{20, 20, 20, 20, 20});
    const FoldPlan b = kfold_split(7, 3, 3);
    CHECK(b.fold_sizes() == std::vector<std::size_t>{3, 2, 2});
    CHECK(kfold_split(100, 5, 3).assignment == a.assignment);
    CHECK(kfold_split(100, 5, 4).assignment != a.assignment);

    // Partition: every row in exactly one test fold, never in its own training set.
    std::set<std::size_t> seen;
    for (std::size_t f = 0; f < a.k; ++f) {
        const auto test = a.test_rows(f);
        const auto train = a.train_rows(f);
        CHECK(test.size() + train.size() == 100);
        for (std::size_t r : test) CHECK(seen.insert(r).second);
    }
    CHECK(seen.size() == 100);

    CHECK_THROWS_AS(kfold_split(3, 4, 1), ValidationError);
    CHECK_THROWS_AS(kfold_split(10, 1, 1), ValidationError);
}

TEST_CASE("stratified split keeps class counts per fold") {
    std::vector<int> labels(100, 0);
    for (std::size_t i = 0; i < 60; ++i) labels[(i * 37) % 100] = 1;
    const FoldPlan plan = stratified_kfold_split(labels, 5, 11);
    for (std::size_t f = 0; f < 5; ++f) {
        std::size_t pos = 0;
        const auto rows = plan.test_rows(f);
        for (std::size_t r : rows) pos += static_cast<std::size_t>(labels[r]);
        CHECK(pos >= 11);
        CHECK(pos <= 13);
        CHECK(rows.size() == 20);
    }
    // Odd counts: overall sizes still within one.
    std::vector<int> odd(23, 0);
    for (std::size_t i = 0; i < 9; ++i) odd[i] = 1;
    const auto sizes = stratified_kfold_split(odd, 5, 2).fold_sizes();
    CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
}

TEST_CASE("cross_validate baselines") {
    std::vector<Sample> constant(50, Sample{{1.0, 2.0}, 1.0});
    for (std::size_t i = 0; i < constant.size(); ++i) constant[i].x.t = static_cast<double>(i);
    CHECK(cross_validate(constant, majority_family(), {}, kfold_split(50, 5, 1)).mean == 0.0);

    // 70/30 labels with a majority predictor.
    std::vector<Sample> mix(1000);
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = {{static_cast<double>(i), 0.0}, i % 10 < 7 ? 1.0 : 0.0};
    const CvResult r = cross_validate(mix, majority_family(), {}, kfold_split(mix.size(), 5, 9));
    CHECK(r.fold_scores.size() == 5);
    CHECK(std::abs(r.mean - 0.30) <= 0.02);

    // Mean predictor: held-out MSE = sigma^2 (1 + 1/n_train).
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z(10.0, 3.0);
    std::vector<Sample> reg(10000);
    std::vector<double> y;
    for (Sample& s : reg) {
        s.y = z(rng);
        y.push_back(s.y);
    }
    const CvResult m = cross_validate(reg, mean_family(), {}, kfold_split(reg.size(), 5, 1));
    CHECK(std::abs(m.mean / variance(y) - 1.0) <= 0.05);
}

TEST_CASE("cross_validate names the failing fold") {
    std::vector<Sample> data = gaussian_classes(40, 2);
    ModelFamily failing = qda_family();
    failing.train = [](std::span<const Sample>, const Params&) -> Predictor { throw NumericalError("boom"); };
    try {
        cross_validate(data, failing, {}, kfold_split(40, 4, 1));
        FAIL("expected an error");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("fold 0") != std::string::npos);
    }
}

TEST_CASE("nested CV with a single setting equals plain CV") {
    const auto data = gaussian_classes(600, 13);
    NestedCvOptions opts{.k_outer = 5, .k_inner = 5, .seed = 17, .stratify = false};
    const SelectionReport report = nested_cv(data, qda_family(), opts);
    const CvResult plain = cross_validate(data, qda_family(), {}, kfold_split(data.size(), 5, 17));
    CHECK(report.outer_mean == doctest::Approx(plain.mean).epsilon(1e-12));
    for (std::size_t f = 0; f < 5; ++f) CHECK(report.folds[f].outer_error == doctest::Approx(plain.fold_scores[f]));
    CHECK(report.folds.size() == 5);
    std::size_t total = 0;
    for (const OuterFold& f : report.folds) {
        total += f.test_size;
        CHECK(f.train_size + f.test_size == data.size());
        CHECK(f.chosen == 0);
    }
    CHECK(total == data.size());
}

TEST_CASE("nested CV reaches the Bayes error when the grid holds the matched model") {
    const auto data = gaussian_classes(5000, 21);
    const double bayes = normal_cdf(-std::hypot(1.5, 1.0) / 2.0);
    const SelectionReport report = nested_cv(data, majority_or_qda(), {.seed = 4});
    CHECK(std::abs(report.outer_mean - bayes) <= 0.02);
    for (const OuterFold& f : report.folds) CHECK(f.chosen == 1);
    CHECK(report.final_choice == 1);

    const nlohmann::json j = to_json(report);
    CHECK(j["family"] == "majority_or_qda");
    CHECK(j["folds"].size() == 5);
    CHECK(j["final_params"]["model"] == "qda");
    std::ostringstream csv;
    write_selection_csv(csv, report);
    std::size_t lines = 0;
    for (char ch : csv.str()) lines += ch == '\n';
    CHECK(lines == 1 + 5 * 2);
}

TEST_CASE("ties go to the smallest grid index") {
    const std::vector<double> s{0.3, 0.2, 0.2, 0.5};
    CHECK(argmin_first(s) == 1);
    const std::vector<double> same{0.1, 0.1};
    CHECK(argmin_first(same) == 0);
}

TEST_CASE("nested CV on shuffled labels is honest") {
    auto data = gaussian_classes(3000, 31, 0.7);
    std::vector<double> labels;
    for (const Sample& s : data) labels.push_back(s.y);
    std::mt19937_64 rng(8);
    std::shuffle(labels.begin(), labels.end(), rng);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i].y = labels[i];
        pos += labels[i] > 0.5;
    }
    const double majority_rate = std::min(pos, data.size() - pos) / static_cast<double>(data.size());
    const SelectionReport report = nested_cv(data, majority_or_qda(), {.seed = 6});
    CHECK(std::abs(report.outer_mean - majority_rate) <= 0.03);
}

TEST_CASE("selection is optimistic on noise labels") {
    std::vector<SvmParams> grid;
    for (double c : {0.1, 1.0, 10.0})
        for (double g : {0.1, 1.0, 10.0}) grid.push_back({.cost = c, .gamma = g, .platt_folds = 0});
    const ModelFamily svm = svm_family(grid);
    double inner = 0.0, outer = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> z;
        std::vector<Sample> data(120);
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = {{z(rng), z(rng)}, static_cast<double>(i % 2)};
        const SelectionReport r = nested_cv(data, svm, {.seed = seed, .select_final = false});
        inner += r.inner_mean / 20.0;
        outer += r.outer_mean / 20.0;
    }
    MESSAGE("inner " << inner << " outer " << outer);
    CHECK(inner < outer);
}

TEST_CASE("nested CV rejects an empty grid") {
    ModelFamily f = qda_family();
    f.grid.clear();
    CHECK_THROWS_AS(nested_cv(gaussian_classes(50, 1), f), ValidationError);
}
