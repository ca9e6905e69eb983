#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusionlab/baselines.hpp"
#include "fusionlab/errors.hpp"
#include "fusionlab/rng.hpp"

namespace fusionlab {

namespace {

double gini(const std::array<std::uint32_t, 3>& counts) {
    double total = counts[0] + counts[1] + counts[2];
    if (total == 0.0) return 0.0;
    double sum_sq = 0.0;
    for (std::uint32_t c : counts) {
        double p = static_cast<double>(c) / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

struct TreeBuilder {
    const Matrix& x;
    const std::vector<int>& y;
    std::size_t max_depth;
    std::size_t n_features;
    SeededRng& rng;
    std::vector<TreeNode> nodes;

    std::int32_t build(std::vector<std::size_t>& samples, std::size_t depth) {
        std::array<std::uint32_t, 3> counts{};
        for (std::size_t i : samples) counts[static_cast<std::size_t>(y[i] - 1)]++;
        bool pure = (counts[0] == samples.size()) || (counts[1] == samples.size()) ||
                    (counts[2] == samples.size());

        if (depth >= max_depth || samples.size() < 2 || pure) {
            return make_leaf(counts);
        }

        // Draw the candidate features for this node (without replacement).
        std::vector<std::size_t> features(x.cols());
        std::iota(features.begin(), features.end(), 0);
        for (std::size_t i = 0; i < n_features; ++i) {
            std::size_t j = i + rng.next_below(features.size() - i);
            std::swap(features[i], features[j]);
        }
        features.resize(n_features);
        std::sort(features.begin(), features.end());  // lowest-index tie-breaking

        double parent_impurity = gini(counts);
        double best_score = parent_impurity - 1e-12;
        int best_feature = -1;
        double best_threshold = 0.0;

        std::vector<std::pair<double, int>> values(samples.size());
        for (std::size_t f : features) {
            for (std::size_t s = 0; s < samples.size(); ++s) {
                values[s] = {x(samples[s], f), y[samples[s]]};
            }
            std::sort(values.begin(), values.end());

            std::array<std::uint32_t, 3> left{};
            std::array<std::uint32_t, 3> right = counts;
            const double total = static_cast<double>(samples.size());
            for (std::size_t s = 0; s + 1 < values.size(); ++s) {
                std::size_t cls = static_cast<std::size_t>(values[s].second - 1);
                left[cls]++;
                right[cls]--;
                if (values[s].first == values[s + 1].first) continue;
                double n_left = static_cast<double>(s + 1);
                double weighted =
                    (n_left * gini(left) + (total - n_left) * gini(right)) / total;
                if (weighted < best_score) {
                    best_score = weighted;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (values[s].first + values[s + 1].first);
                }
            }
        }

        if (best_feature < 0) {
            return make_leaf(counts);  // no candidate feature separates the node
        }

        std::vector<std::size_t> left_samples, right_samples;
        for (std::size_t i : samples) {
            (x(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? left_samples
                                                                            : right_samples)
                .push_back(i);
        }

        std::int32_t node_id = static_cast<std::int32_t>(nodes.size());
        nodes.emplace_back();
        nodes[static_cast<std::size_t>(node_id)].feature = best_feature;
        nodes[static_cast<std::size_t>(node_id)].threshold = best_threshold;
        std::int32_t left_id = build(left_samples, depth + 1);
        std::int32_t right_id = build(right_samples, depth + 1);
        nodes[static_cast<std::size_t>(node_id)].left = left_id;
        nodes[static_cast<std::size_t>(node_id)].right = right_id;
        return node_id;
    }

    std::int32_t make_leaf(const std::array<std::uint32_t, 3>& counts) {
        std::int32_t id = static_cast<std::int32_t>(nodes.size());
        nodes.emplace_back();
        nodes[static_cast<std::size_t>(id)].votes = counts;
        return id;
    }
};

}  // namespace

int DecisionTree::vote(const double* row) const {
    std::size_t node = 0;
    while (nodes[node].feature >= 0) {
        node = static_cast<std::size_t>(row[nodes[node].feature] <= nodes[node].threshold
                                            ? nodes[node].left
                                            : nodes[node].right);
    }
    const auto& votes = nodes[node].votes;
    int best = 0;
    for (int c = 1; c < 3; ++c) {
        if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
    }
    return best + 1;
}

ForestModel forest_fit(const Matrix& x, const std::vector<int>& y, std::size_t n_trees,
                       std::size_t max_depth, std::uint64_t seed, bool bootstrap) {
    const std::size_t n = x.rows();
    if (n != y.size() || n == 0) throw ShapeError("forest_fit: rows vs labels mismatch");
    for (int cls : y) {
        if (cls < 1 || cls > 3) throw DataError("forest_fit: label outside {1,2,3}");
    }
    if (n_trees == 0) throw ConfigError("forest_fit: need at least one tree");

    ForestModel model;
    model.max_depth = max_depth;
    model.seed = seed;
    model.trees.reserve(n_trees);

    std::size_t n_features =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(x.cols()))));
    SeededRng root(seed);

    for (std::size_t t = 0; t < n_trees; ++t) {
        // The per-tree stream depends only on (seed, t), so trees could be
        // grown in parallel without changing the result.
        SeededRng tree_rng = root.derive("tree-" + std::to_string(t));
        std::vector<std::size_t> samples(n);
        if (bootstrap) {
            for (std::size_t i = 0; i < n; ++i) samples[i] = tree_rng.next_below(n);
        } else {
            std::iota(samples.begin(), samples.end(), 0);
        }

        TreeBuilder builder{x, y, max_depth, n_features, tree_rng, {}};
        builder.build(samples, 0);  // root lands in slot 0
        DecisionTree tree;
        tree.nodes = std::move(builder.nodes);
        model.trees.push_back(std::move(tree));
    }
    model.fitted = true;
    return model;
}

Matrix forest_predict_proba(const ForestModel& m, const Matrix& x) {
    if (!m.fitted) throw ContractError("forest: model not fitted");
    Matrix probs(x.rows(), 3);
    const double n_trees = static_cast<double>(m.trees.size());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (const auto& tree : m.trees) {
            probs(r, static_cast<std::size_t>(tree.vote(x.row_ptr(r)) - 1)) += 1.0;
        }
        for (std::size_t c = 0; c < 3; ++c) probs(r, c) /= n_trees;
    }
    return probs;
}

}  // namespace fusionlab
