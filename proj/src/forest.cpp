#include "latvis/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "latvis/rng.hpp"

namespace latvis {

namespace {

double gini(std::span<const int> counts, int total) {
    if (total == 0) return 0.0;
    double sum_sq = 0.0;
    for (int c : counts) {
        const double p = static_cast<double>(c) / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

int majority_class(std::span<const int> counts) {
    int best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i) {
        if (counts[i] > counts[best]) best = static_cast<int>(i);
    }
    return best;
}

struct TreeGrower {
    const std::vector<std::vector<double>>& X;
    const std::vector<ClassLabel>& y;
    int n_classes;
    int max_features;
    int min_samples_split;
    bool log_splits;
    Rng rng;

    DecisionTree tree;
    std::vector<int> idx;       // bootstrap sample, partitioned in place
    std::vector<int> feat_pool; // for subset sampling
    std::vector<std::pair<double, int>> sorted;  // (value, class) scratch

    void bootstrap() {
        const int n = static_cast<int>(X.size());
        idx.resize(static_cast<std::size_t>(n));
        tree.bootstrap_counts.assign(static_cast<std::size_t>(n), 0);
        for (int i = 0; i < n; ++i) {
            const int pick = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
            idx[static_cast<std::size_t>(i)] = pick;
            ++tree.bootstrap_counts[static_cast<std::size_t>(pick)];
        }
    }

    std::vector<int> sample_features() {
        const int d = static_cast<int>(X[0].size());
        feat_pool.resize(static_cast<std::size_t>(d));
        std::iota(feat_pool.begin(), feat_pool.end(), 0);
        const int m = std::min(max_features, d);
        for (int j = 0; j < m; ++j) {
            const int k = j + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(d - j)));
            std::swap(feat_pool[static_cast<std::size_t>(j)], feat_pool[static_cast<std::size_t>(k)]);
        }
        std::vector<int> subset(feat_pool.begin(), feat_pool.begin() + m);
        std::sort(subset.begin(), subset.end());
        return subset;
    }

    struct BestSplit {
        double gain = 0.0;
        int feature = -1;
        double threshold = 0.0;
    };

    // Scores every distinct-value boundary of every candidate feature.
    // Candidates are visited in ascending feature then threshold order and
    // replaced only on strictly larger gain, so ties resolve to the smallest
    // feature index and smallest threshold.
    BestSplit find_split(int begin, int end, std::span<const int> parent_counts,
                         int node_index) {
        const int n = end - begin;
        const double parent_gini = gini(parent_counts, n);
        BestSplit best;
        std::vector<int> left_counts(static_cast<std::size_t>(n_classes));
        for (int f : sample_features()) {
            sorted.clear();
            for (int i = begin; i < end; ++i) {
                const int inst = idx[static_cast<std::size_t>(i)];
                sorted.emplace_back(X[static_cast<std::size_t>(inst)][static_cast<std::size_t>(f)],
                                    y[static_cast<std::size_t>(inst)].index);
            }
            std::sort(sorted.begin(), sorted.end());
            if (sorted.front().first == sorted.back().first) continue;  // constant

            std::fill(left_counts.begin(), left_counts.end(), 0);
            std::vector<int> right_counts(parent_counts.begin(), parent_counts.end());
            for (int i = 0; i + 1 < n; ++i) {
                const auto& [value, cls] = sorted[static_cast<std::size_t>(i)];
                ++left_counts[static_cast<std::size_t>(cls)];
                --right_counts[static_cast<std::size_t>(cls)];
                const double next = sorted[static_cast<std::size_t>(i) + 1].first;
                if (value == next) continue;
                double thr = value + (next - value) / 2.0;
                if (thr >= next) thr = value;  // midpoint rounded up to next
                const int nl = i + 1, nr = n - nl;
                const double g = parent_gini - (static_cast<double>(nl) / n) * gini(left_counts, nl) -
                                 (static_cast<double>(nr) / n) * gini(right_counts, nr);
                if (log_splits) {
                    tree.split_log.push_back(SplitCandidate{node_index, f, thr, g, false});
                }
                if (g > best.gain) {
                    best.gain = g;
                    best.feature = f;
                    best.threshold = thr;
                }
            }
        }
        return best;
    }

    void grow() {
        bootstrap();
        struct Task {
            int node;
            int begin;
            int end;
        };
        tree.nodes.emplace_back();
        std::vector<Task> stack{{0, 0, static_cast<int>(idx.size())}};
        while (!stack.empty()) {
            const Task t = stack.back();
            stack.pop_back();
            std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
            for (int i = t.begin; i < t.end; ++i) {
                ++counts[static_cast<std::size_t>(y[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].index)];
            }
            const int n = t.end - t.begin;
            const bool pure =
                std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) <= 1;
            BestSplit split;
            if (!pure && n >= min_samples_split) {
                split = find_split(t.begin, t.end, counts, t.node);
            }
            if (split.feature < 0 || split.gain <= 0.0) {
                tree.nodes[static_cast<std::size_t>(t.node)].feature = -1;
                tree.nodes[static_cast<std::size_t>(t.node)].counts = std::move(counts);
                continue;
            }
            if (log_splits) {
                // Mark the winning candidate row for this node.
                for (auto it = tree.split_log.rbegin(); it != tree.split_log.rend(); ++it) {
                    if (it->node != t.node) break;
                    if (it->feature == split.feature && it->threshold == split.threshold &&
                        it->gain == split.gain) {
                        it->chosen = true;
                        break;
                    }
                }
            }
            const auto mid = std::stable_partition(
                idx.begin() + t.begin, idx.begin() + t.end, [&](int inst) {
                    return X[static_cast<std::size_t>(inst)][static_cast<std::size_t>(split.feature)] <=
                           split.threshold;
                });
            const int split_at = static_cast<int>(mid - idx.begin());
            const int left_id = static_cast<int>(tree.nodes.size());
            const int right_id = left_id + 1;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            TreeNode& node = tree.nodes[static_cast<std::size_t>(t.node)];
            node.feature = split.feature;
            node.threshold = split.threshold;
            node.left = left_id;
            node.right = right_id;
            stack.push_back(Task{right_id, split_at, t.end});
            stack.push_back(Task{left_id, t.begin, split_at});
        }
    }
};

}  // namespace

int DecisionTree::leaf_for(std::span<const double> x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const TreeNode& n = nodes[static_cast<std::size_t>(i)];
        i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return i;
}

int DecisionTree::predict(std::span<const double> x) const {
    return majority_class(nodes[static_cast<std::size_t>(leaf_for(x))].counts);
}

RandomForest RandomForest::fit(const std::vector<std::vector<double>>& X,
                               const std::vector<ClassLabel>& y, ForestParams params) {
    if (X.empty() || X.size() != y.size()) {
        throw std::invalid_argument("forest fit: need matching nonempty X and y");
    }
    if (X.size() < 2) throw std::invalid_argument("forest fit: need at least 2 instances");
    const int d = static_cast<int>(X[0].size());
    if (d < 1) throw std::invalid_argument("forest fit: need at least 1 feature");
    for (const auto& row : X) {
        if (static_cast<int>(row.size()) != d) {
            throw std::invalid_argument("forest fit: ragged feature matrix");
        }
    }
    int n_classes = 0;
    for (ClassLabel label : y) {
        if (label.index < 0) throw std::invalid_argument("forest fit: negative label");
        n_classes = std::max(n_classes, label.index + 1);
    }
    if (params.n_classes > 0) {
        if (params.n_classes < n_classes) {
            throw std::invalid_argument("forest fit: label exceeds declared class count");
        }
        n_classes = params.n_classes;
    }
    params.n_classes = n_classes;
    if (params.n_trees < 1) throw std::invalid_argument("forest fit: n_trees must be >= 1");
    if (params.max_features == 0) {
        params.max_features = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
    }
    params.max_features = std::clamp(params.max_features, 1, d);

    RandomForest f;
    f.params_ = params;
    f.n_classes_ = n_classes;
    f.n_features_ = d;
    f.trees_.reserve(static_cast<std::size_t>(params.n_trees));
    for (int t = 0; t < params.n_trees; ++t) {
        TreeGrower grower{X,
                          y,
                          n_classes,
                          params.max_features,
                          params.min_samples_split,
                          params.log_splits,
                          Rng::derive(params.seed, static_cast<std::uint64_t>(t)),
                          {},
                          {},
                          {},
                          {}};
        grower.grow();
        f.trees_.push_back(std::move(grower.tree));
    }
    return f;
}

ProbabilityVector RandomForest::predict_proba(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != n_features_) {
        throw std::invalid_argument("predict_proba: dimension mismatch");
    }
    std::vector<int> votes(static_cast<std::size_t>(n_classes_), 0);
    for (const DecisionTree& t : trees_) ++votes[static_cast<std::size_t>(t.predict(x))];
    ProbabilityVector p;
    p.values.resize(static_cast<std::size_t>(n_classes_));
    const double inv = 1.0 / static_cast<double>(trees_.size());
    for (std::size_t i = 0; i < p.values.size(); ++i) p.values[i] = votes[i] * inv;
    return p;
}

ClassLabel RandomForest::predict(std::span<const double> x) const {
    const ProbabilityVector p = predict_proba(x);
    int best = 0;
    for (int i = 1; i < n_classes_; ++i) {
        if (p.values[static_cast<std::size_t>(i)] > p.values[static_cast<std::size_t>(best)]) best = i;
    }
    return ClassLabel{best};
}

RandomForest::OobResult RandomForest::oob_score(const std::vector<std::vector<double>>& X,
                                                const std::vector<ClassLabel>& y) const {
    if (X.size() != y.size()) throw std::invalid_argument("oob_score: size mismatch");
    for (const DecisionTree& t : trees_) {
        if (t.bootstrap_counts.size() != X.size()) {
            throw std::invalid_argument("oob_score: forest was not fit on this data");
        }
    }
    OobResult r;
    int correct = 0;
    std::vector<int> votes(static_cast<std::size_t>(n_classes_));
    for (std::size_t i = 0; i < X.size(); ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        int oob_trees = 0;
        for (const DecisionTree& t : trees_) {
            if (t.bootstrap_counts[i] != 0) continue;
            ++votes[static_cast<std::size_t>(t.predict(X[i]))];
            ++oob_trees;
        }
        if (oob_trees == 0) {
            ++r.excluded;
            continue;
        }
        ++r.evaluated;
        if (majority_class(votes) == y[i].index) ++correct;
    }
    r.accuracy = r.evaluated > 0 ? static_cast<double>(correct) / r.evaluated : 0.0;
    return r;
}

Json RandomForest::to_json() const {
    Json trees = Json::array();
    for (const DecisionTree& t : trees_) {
        Json nodes = Json::array();
        for (const TreeNode& n : t.nodes) {
            nodes.push_back(Json::array({n.feature, n.threshold, n.left, n.right, n.counts}));
        }
        trees.push_back(Json{{"nodes", std::move(nodes)},
                             {"bootstrap_counts", t.bootstrap_counts}});
    }
    return Json{{"format", "latvis-forest-1"},
                {"params",
                 Json{{"n_trees", params_.n_trees},
                      {"max_features", params_.max_features},
                      {"min_samples_split", params_.min_samples_split},
                      {"seed", params_.seed}}},
                {"n_classes", n_classes_},
                {"n_features", n_features_},
                {"trees", std::move(trees)}};
}

RandomForest RandomForest::from_json(const Json& j) {
    if (j.at("format").get<std::string>() != "latvis-forest-1") {
        throw std::invalid_argument("unknown forest format");
    }
    RandomForest f;
    const Json& p = j.at("params");
    f.params_.n_trees = p.at("n_trees").get<int>();
    f.params_.max_features = p.at("max_features").get<int>();
    f.params_.min_samples_split = p.at("min_samples_split").get<int>();
    f.params_.seed = p.at("seed").get<std::uint64_t>();
    f.n_classes_ = j.at("n_classes").get<int>();
    f.params_.n_classes = f.n_classes_;
    f.n_features_ = j.at("n_features").get<int>();
    for (const Json& jt : j.at("trees")) {
        DecisionTree t;
        for (const Json& jn : jt.at("nodes")) {
            TreeNode n;
            n.feature = jn.at(0).get<int>();
            n.threshold = jn.at(1).get<double>();
            n.left = jn.at(2).get<int>();
            n.right = jn.at(3).get<int>();
            n.counts = jn.at(4).get<std::vector<int>>();
            t.nodes.push_back(std::move(n));
        }
        t.bootstrap_counts = jt.at("bootstrap_counts").get<std::vector<int>>();
        f.trees_.push_back(std::move(t));
    }
    return f;
}

}  // namespace latvis
