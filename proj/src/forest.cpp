#include <algorithm>
#include <numeric>

#include "evmstoch/classification.hpp"
#include "evmstoch/error.hpp"
#include "evmstoch/rng.hpp"

namespace evmstoch {

namespace {

constexpr int kFeatures = 2;

double feature(const Point& p, int f) { return f == 0 ? p.t : p.c; }

double leaf_vote(std::uint32_t c0, std::uint32_t c1) {
    if (c1 > c0) return 1.0;
    if (c1 < c0) return 0.0;
    return 0.5;
}

double gini_sum(double n0, double n1) {
    const double n = n0 + n1;
    return n > 0.0 ? n - (n0 * n0 + n1 * n1) / n : 0.0;  // n * Gini impurity
}

// Grows one tree on a bootstrap sample. `order[f]` holds sample slots sorted by feature f;
// node ranges are kept aligned across features by stable partitioning.
class TreeBuilder {
public:
    TreeBuilder(std::span<const LabeledPoint> data, std::vector<std::size_t> sample, const ForestParams& params,
                Engine& engine)
        : m_data(data), m_sample(std::move(sample)), m_params(params), m_engine(engine) {
        for (int f = 0; f < kFeatures; ++f) {
            auto& o = m_order[f];
            o.resize(m_sample.size());
            std::iota(o.begin(), o.end(), 0);
            std::stable_sort(o.begin(), o.end(), [&](std::size_t a, std::size_t b) {
                return feature(m_data[m_sample[a]].x, f) < feature(m_data[m_sample[b]].x, f);
            });
        }
        m_goes_left.resize(m_sample.size());
        m_buffer.resize(m_sample.size());
    }

    std::vector<ForestModel::Node> build() {
        grow(0, m_sample.size());
        return std::move(m_nodes);
    }

private:
    std::uint32_t grow(std::size_t lo, std::size_t hi) {
        const auto id = static_cast<std::uint32_t>(m_nodes.size());
        m_nodes.emplace_back();
        std::uint32_t c0 = 0, c1 = 0;
        for (std::size_t k = lo; k < hi; ++k) (label(m_order[0][k]) ? c1 : c0)++;
        m_nodes[id].count0 = c0;
        m_nodes[id].count1 = c1;
        m_nodes[id].vote = leaf_vote(c0, c1);

        const std::size_t n = hi - lo;
        if (c0 == 0 || c1 == 0 || n <= static_cast<std::size_t>(m_params.min_node)) return id;

        // Random feature order; the first mtry are candidates, further ones are tried only
        // when none of the candidates admits a split.
        std::array<int, kFeatures> feats{0, 1};
        std::shuffle(feats.begin(), feats.end(), m_engine);
        int best_feature = -1;
        double best_threshold = 0.0, best_score = 0.0;
        std::size_t best_left = 0;
        const double parent = gini_sum(c0, c1);
        for (int r = 0; r < kFeatures; ++r) {
            if (r >= m_params.mtry && best_feature >= 0) break;
            const int f = feats[r];
            const auto& o = m_order[f];
            double l0 = 0, l1 = 0;
            for (std::size_t k = lo; k + 1 < hi; ++k) {
                (label(o[k]) ? l1 : l0) += 1;
                const double v = value(o[k], f), v_next = value(o[k + 1], f);
                if (v == v_next) continue;
                const double decrease = parent - gini_sum(l0, l1) - gini_sum(c0 - l0, c1 - l1);
                if (decrease > best_score + 1e-12) {
                    best_score = decrease;
                    best_feature = f;
                    best_threshold = 0.5 * (v + v_next);
                    best_left = k + 1 - lo;
                }
            }
        }
        if (best_feature < 0) return id;

        const auto& ob = m_order[best_feature];
        for (std::size_t k = lo; k < hi; ++k) m_goes_left[ob[k]] = (k - lo) < best_left;
        for (int f = 0; f < kFeatures; ++f) {
            auto& o = m_order[f];
            std::size_t nl = lo, nr = 0;
            for (std::size_t k = lo; k < hi; ++k) {
                if (m_goes_left[o[k]])
                    o[nl++] = o[k];
                else
                    m_buffer[nr++] = o[k];
            }
            std::copy(m_buffer.begin(), m_buffer.begin() + static_cast<std::ptrdiff_t>(nr), o.begin() + static_cast<std::ptrdiff_t>(nl));
        }
        const std::size_t mid = lo + best_left;
        m_nodes[id].feature = best_feature;
        m_nodes[id].threshold = best_threshold;
        const std::uint32_t left = grow(lo, mid);
        const std::uint32_t right = grow(mid, hi);
        m_nodes[id].left = left;
        m_nodes[id].right = right;
        return id;
    }

    int label(std::size_t slot) const { return m_data[m_sample[slot]].label; }
    double value(std::size_t slot, int f) const { return feature(m_data[m_sample[slot]].x, f); }

    std::span<const LabeledPoint> m_data;
    std::vector<std::size_t> m_sample;
    const ForestParams& m_params;
    Engine& m_engine;
    std::array<std::vector<std::size_t>, kFeatures> m_order;
    std::vector<char> m_goes_left;
    std::vector<std::size_t> m_buffer;
    std::vector<ForestModel::Node> m_nodes;
};

double traverse(const std::vector<ForestModel::Node>& tree, Point x) {
    std::uint32_t id = 0;
    while (tree[id].feature >= 0) id = feature(x, tree[id].feature) <= tree[id].threshold ? tree[id].left : tree[id].right;
    return tree[id].vote;
}

}  // namespace

ForestModel ForestModel::fit(std::span<const LabeledPoint> points, const ForestParams& params) {
    if (points.size() < 2) throw ValidationError("random forest needs at least 2 points");
    if (params.ntree < 1) throw ValidationError("random forest needs ntree >= 1");
    if (params.mtry < 1 || params.mtry > kFeatures) throw ValidationError("random forest mtry must be 1 or 2");
    if (params.min_node < 1) throw ValidationError("random forest min_node must be >= 1");

    ForestModel model;
    model.m_params = params;
    const std::size_t n = points.size();
    std::vector<double> oob_votes(n, 0.0);
    std::vector<std::uint32_t> oob_counts(n, 0);
    std::vector<char> in_bag(n);
    for (int t = 0; t < params.ntree; ++t) {
        Engine engine = make_engine(derive_seed(params.seed, static_cast<std::uint64_t>(t)));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::vector<std::size_t> sample(n);
        std::fill(in_bag.begin(), in_bag.end(), 0);
        for (std::size_t& s : sample) {
            s = pick(engine);
            in_bag[s] = 1;
        }
        model.m_trees.push_back(TreeBuilder(points, std::move(sample), params, engine).build());
        for (std::size_t i = 0; i < n; ++i) {
            if (in_bag[i]) continue;
            oob_votes[i] += traverse(model.m_trees.back(), points[i].x);
            ++oob_counts[i];
        }
    }
    std::size_t evaluated = 0, wrong = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (oob_counts[i] == 0) continue;
        ++evaluated;
        const int predicted = oob_votes[i] / oob_counts[i] >= 0.5 ? 1 : 0;
        wrong += predicted != points[i].label;
    }
    model.m_oob_error = evaluated ? static_cast<double>(wrong) / static_cast<double>(evaluated) : 0.0;
    return model;
}

std::array<double, 2> ForestModel::predict(Point x) const {
    double votes = 0.0;
    for (const auto& tree : m_trees) votes += traverse(tree, x);
    const double p1 = votes / static_cast<double>(m_trees.size());
    return {1.0 - p1, p1};
}

double ForestModel::tree_vote(std::size_t tree, Point x) const { return traverse(m_trees.at(tree), x); }

}  // namespace evmstoch
