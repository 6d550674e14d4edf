#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "evmstoch/error.hpp"
#include "evmstoch/model_selection.hpp"
#include "evmstoch/rng.hpp"

namespace evmstoch {

namespace {

[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context) {
    const std::string msg = context + ": " + e.what();
    switch (e.kind()) {
        case ErrorKind::validation: throw ValidationError(msg);
        case ErrorKind::io: throw IoError(msg);
        case ErrorKind::numerical: throw NumericalError(msg);
    }
    throw Error(e.kind(), msg);
}

std::vector<Sample> gather(std::span<const Sample> data, std::span<const std::size_t> rows) {
    std::vector<Sample> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(data[r]);
    return out;
}

FoldPlan make_plan(std::span<const Sample> data, std::size_t k, std::uint64_t seed, bool stratified) {
    if (!stratified) return kfold_split(data.size(), k, seed);
    std::vector<int> labels(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) labels[i] = data[i].y > 0.5 ? 1 : 0;
    return stratified_kfold_split(labels, k, seed);
}

// Pooled held-out score; per-fold scores go to `folds`.
double run_folds(std::span<const Sample> data, const ModelFamily& family, const Params& params, const FoldPlan& plan,
                 std::vector<double>* folds) {
    double total = 0.0;
    for (std::size_t f = 0; f < plan.k; ++f) {
        const std::vector<Sample> train = gather(data, plan.train_rows(f));
        const std::vector<Sample> test = gather(data, plan.test_rows(f));
        Predictor predictor;
        try {
            predictor = family.train(train, params);
        } catch (const Error& e) {
            rethrow_with_context(e, family.name + " training failed in fold " + std::to_string(f));
        }
        const double s = score(predictor, test, family.task);
        if (folds) folds->push_back(s);
        total += s * static_cast<double>(test.size());
    }
    return total / static_cast<double>(data.size());
}

}  // namespace

std::vector<Sample> to_samples(std::span<const LabeledPoint> points) {
    std::vector<Sample> out;
    out.reserve(points.size());
    for (const LabeledPoint& p : points) out.push_back({p.x, static_cast<double>(p.label)});
    return out;
}

std::vector<std::size_t> FoldPlan::test_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i)
        if (assignment[i] == fold) rows.push_back(i);
    return rows;
}

std::vector<std::size_t> FoldPlan::train_rows(std::size_t fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i)
        if (assignment[i] != fold) rows.push_back(i);
    return rows;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assignment) ++sizes[a];
    return sizes;
}

FoldPlan kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("k-fold split needs k >= 2");
    if (k > n) throw ValidationError("k-fold split needs k <= n (k = " + std::to_string(k) + ", n = " + std::to_string(n) + ")");
    FoldPlan plan{n, k, seed, std::vector<std::size_t>(n)};
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Engine engine = make_engine(seed);
    std::shuffle(perm.begin(), perm.end(), engine);
    for (std::size_t r = 0; r < n; ++r) plan.assignment[perm[r]] = r % k;
    return plan;
}

FoldPlan stratified_kfold_split(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
    const std::size_t n = labels.size();
    if (k < 2) throw ValidationError("k-fold split needs k >= 2");
    if (k > n) throw ValidationError("k-fold split needs k <= n (k = " + std::to_string(k) + ", n = " + std::to_string(n) + ")");
    FoldPlan plan{n, k, seed, std::vector<std::size_t>(n)};
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i] ? 1 : 0].push_back(i);
    Engine engine = make_engine(seed);
    // Dealing continues across classes so overall fold sizes also stay within one.
    std::size_t next = 0;
    for (auto& rows : by_class) {
        std::shuffle(rows.begin(), rows.end(), engine);
        for (std::size_t r : rows) plan.assignment[r] = next++ % k;
    }
    return plan;
}

double score(const Predictor& predictor, std::span<const Sample> test, TaskKind task) {
    if (test.empty()) throw ValidationError("cannot score an empty test set");
    double total = 0.0;
    for (const Sample& s : test) {
        const double p = predictor(s.x);
        if (task == TaskKind::classification)
            total += ((p > 0.5) != (s.y > 0.5)) ? 1.0 : 0.0;
        else
            total += (p - s.y) * (p - s.y);
    }
    return total / static_cast<double>(test.size());
}

CvResult cross_validate(std::span<const Sample> data, const ModelFamily& family, const Params& params,
                        const FoldPlan& plan) {
    if (plan.n != data.size()) throw ValidationError("fold plan size does not match the data");
    CvResult result;
    result.mean = run_folds(data, family, params, plan, &result.fold_scores);
    return result;
}

std::size_t argmin_first(std::span<const double> scores) {
    if (scores.empty()) throw ValidationError("empty score list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
        if (scores[i] < scores[best]) best = i;
    return best;
}

SelectionReport nested_cv(std::span<const Sample> data, const ModelFamily& family, const NestedCvOptions& options) {
    if (family.grid.empty()) throw ValidationError("nested CV needs a nonempty parameter grid");
    const bool stratified = options.stratify && family.task == TaskKind::classification;
    SelectionReport report;
    report.family = family.name;
    report.task = family.task;
    report.grid = family.grid;

    const FoldPlan outer = make_plan(data, options.k_outer, options.seed, stratified);
    double outer_total = 0.0;
    for (std::size_t f = 0; f < outer.k; ++f) {
        const std::vector<std::size_t> train_rows = outer.train_rows(f);
        const std::vector<std::size_t> test_rows = outer.test_rows(f);
        const std::vector<Sample> train = gather(data, train_rows);
        const std::vector<Sample> test = gather(data, test_rows);

        // Inner rows index into `train`, which holds only outer-training rows.
        std::vector<char> in_test(data.size(), 0);
        for (std::size_t r : test_rows) in_test[r] = 1;
        for (std::size_t r : train_rows)
            if (in_test[r]) throw std::logic_error("outer test row leaked into the inner loop");

        OuterFold fold;
        fold.fold = f;
        fold.train_size = train.size();
        fold.test_size = test.size();
        const FoldPlan inner = make_plan(train, options.k_inner, derive_seed(options.seed, f + 1), stratified);
        for (const Params& params : family.grid)
            fold.inner_scores.push_back(run_folds(train, family, params, inner, nullptr));
        fold.chosen = argmin_first(fold.inner_scores);
        fold.inner_error = fold.inner_scores[fold.chosen];
        Predictor predictor;
        try {
            predictor = family.train(train, family.grid[fold.chosen]);
        } catch (const Error& e) {
            rethrow_with_context(e, family.name + " refit failed in outer fold " + std::to_string(f));
        }
        fold.outer_error = score(predictor, test, family.task);
        outer_total += fold.outer_error * static_cast<double>(test.size());
        report.inner_mean += fold.inner_error / static_cast<double>(outer.k);
        report.folds.push_back(std::move(fold));
    }
    report.outer_mean = outer_total / static_cast<double>(data.size());
    double ss = 0.0;
    for (const OuterFold& fold : report.folds) ss += (fold.outer_error - report.outer_mean) * (fold.outer_error - report.outer_mean);
    report.outer_sd = report.folds.size() > 1 ? std::sqrt(ss / static_cast<double>(report.folds.size() - 1)) : 0.0;

    if (options.select_final) {
        if (family.grid.size() == 1) {
            report.final_scores = {report.outer_mean};
        } else {
            const FoldPlan full = make_plan(data, options.k_inner, derive_seed(options.seed, 0), stratified);
            for (const Params& params : family.grid) report.final_scores.push_back(run_folds(data, family, params, full, nullptr));
        }
        report.final_choice = argmin_first(report.final_scores);
    }
    return report;
}

nlohmann::json to_json(const SelectionReport& report) {
    nlohmann::json j;
    j["family"] = report.family;
    j["task"] = report.task == TaskKind::classification ? "classification" : "regression";
    j["score"] = report.task == TaskKind::classification ? "error_rate" : "mse";
    j["grid"] = report.grid;
    j["outer_mean"] = report.outer_mean;
    j["outer_sd"] = report.outer_sd;
    j["inner_mean"] = report.inner_mean;
    j["folds"] = nlohmann::json::array();
    for (const OuterFold& f : report.folds)
        j["folds"].push_back({{"fold", f.fold},
                              {"train_size", f.train_size},
                              {"test_size", f.test_size},
                              {"inner_scores", f.inner_scores},
                              {"chosen", f.chosen},
                              {"inner_error", f.inner_error},
                              {"outer_error", f.outer_error}});
    if (!report.final_scores.empty()) {
        j["final_scores"] = report.final_scores;
        j["final_choice"] = report.final_choice;
        j["final_params"] = report.final_params();
    }
    return j;
}

void write_selection_csv(std::ostream& out, const SelectionReport& report) {
    out << "outer_fold,grid_index,params,inner_error,outer_error,chosen\n";
    for (const OuterFold& f : report.folds) {
        for (std::size_t g = 0; g < report.grid.size(); ++g) {
            std::string params = report.grid[g].dump();
            std::string quoted = "\"";
            for (char ch : params) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
            quoted += '"';
            out << f.fold << ',' << g << ',' << quoted << ',' << f.inner_scores[g] << ',';
            if (g == f.chosen) out << f.outer_error;
            out << ',' << (g == f.chosen ? 1 : 0) << '\n';
        }
    }
}

// Families ----------------------------------------------------------------

namespace {

std::vector<LabeledPoint> to_labeled(std::span<const Sample> data) {
    std::vector<LabeledPoint> out;
    out.reserve(data.size());
    for (const Sample& s : data) out.push_back({s.x, s.y > 0.5 ? 1 : 0});
    return out;
}

}  // namespace

ModelFamily qda_family() {
    return {"qda", TaskKind::classification, {Params::object()}, [](std::span<const Sample> data, const Params&) {
                auto model = std::make_shared<const QdaModel>(QdaModel::fit(to_labeled(data)));
                return Predictor([model](Point x) { return model->probability(x); });
            }};
}

ModelFamily forest_family(std::vector<ForestParams> grid) {
    ModelFamily family{"random_forest", TaskKind::classification, {}, {}};
    for (const ForestParams& p : grid)
        family.grid.push_back({{"ntree", p.ntree}, {"mtry", p.mtry}, {"min_node", p.min_node}, {"seed", p.seed}});
    family.train = [](std::span<const Sample> data, const Params& j) {
        ForestParams p{j.at("ntree").get<int>(), j.at("mtry").get<int>(), j.at("min_node").get<int>(),
                       j.at("seed").get<std::uint64_t>()};
        auto model = std::make_shared<const ForestModel>(ForestModel::fit(to_labeled(data), p));
        return Predictor([model](Point x) { return model->probability(x); });
    };
    return family;
}

ModelFamily svm_family(std::vector<SvmParams> grid) {
    ModelFamily family{"svm_rbf", TaskKind::classification, {}, {}};
    for (const SvmParams& p : grid)
        family.grid.push_back({{"cost", p.cost},
                               {"gamma", p.gamma},
                               {"tolerance", p.tolerance},
                               {"platt_folds", p.platt_folds},
                               {"seed", p.seed}});
    family.train = [](std::span<const Sample> data, const Params& j) {
        SvmParams p;
        p.cost = j.at("cost").get<double>();
        p.gamma = j.at("gamma").get<double>();
        p.tolerance = j.at("tolerance").get<double>();
        p.platt_folds = j.at("platt_folds").get<int>();
        p.seed = j.at("seed").get<std::uint64_t>();
        auto model = std::make_shared<const SvmModel>(SvmModel::fit(to_labeled(data), p));
        return Predictor([model](Point x) { return model->probability(x); });
    };
    return family;
}

ModelFamily majority_family() {
    return {"majority", TaskKind::classification, {Params::object()}, [](std::span<const Sample> data, const Params&) {
                std::size_t pos = 0;
                for (const Sample& s : data) pos += s.y > 0.5 ? 1 : 0;
                const double p = 2 * pos > data.size() ? 1.0 : 0.0;
                return Predictor([p](Point) { return p; });
            }};
}

ModelFamily mean_family() {
    return {"mean", TaskKind::regression, {Params::object()}, [](std::span<const Sample> data, const Params&) {
                if (data.empty()) throw ValidationError("mean predictor needs data");
                double m = 0.0;
                for (const Sample& s : data) m += s.y;
                m /= static_cast<double>(data.size());
                return Predictor([m](Point) { return m; });
            }};
}

}  // namespace evmstoch
