#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "latvis/core_types.hpp"

namespace latvis {

struct ForestParams {
    int n_trees = 100;
    int max_features = 0;       // 0 means ceil(sqrt(d))
    int min_samples_split = 2;
    int n_classes = 0;          // 0 means max training label + 1
    std::uint64_t seed = 0;
    bool log_splits = false;    // keep per-node candidate scores for audits

    friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

/// Split nodes hold feature >= 0; leaves hold feature == -1 and a class-count
/// histogram over the bootstrap instances that reached them.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;     // x[feature] <= threshold goes left
    int left = -1;
    int right = -1;
    std::vector<int> counts;    // leaves only

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// One scored candidate at a split node; recorded only under log_splits.
struct SplitCandidate {
    int node = 0;
    int feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
    bool chosen = false;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;          // nodes[0] is the root
    std::vector<int> bootstrap_counts;    // per training instance; 0 = out-of-bag
    std::vector<SplitCandidate> split_log;

    int leaf_for(std::span<const double> x) const;
    /// Majority class of the reached leaf, smallest index on ties.
    int predict(std::span<const double> x) const;
};

class RandomForest {
public:
    static RandomForest fit(const std::vector<std::vector<double>>& X,
                            const std::vector<ClassLabel>& y, ForestParams params);

    /// Fraction of trees hard-voting each class; entries are multiples of
    /// 1/n_trees and sum to 1.
    ProbabilityVector predict_proba(std::span<const double> x) const;
    ClassLabel predict(std::span<const double> x) const;

    struct OobResult {
        double accuracy = 0.0;  // over evaluated instances
        int evaluated = 0;      // instances with at least one OOB tree
        int excluded = 0;       // instances in-bag for every tree
    };
    /// Aggregates votes per instance only from trees whose bootstrap missed
    /// it. X and y must be the training data the forest was fit on.
    OobResult oob_score(const std::vector<std::vector<double>>& X,
                        const std::vector<ClassLabel>& y) const;

    int n_classes() const { return n_classes_; }
    int n_features() const { return n_features_; }
    const ForestParams& params() const { return params_; }
    const std::vector<DecisionTree>& trees() const { return trees_; }

    Json to_json() const;
    static RandomForest from_json(const Json& j);

private:
    ForestParams params_;
    int n_classes_ = 0;
    int n_features_ = 0;
    std::vector<DecisionTree> trees_;
};

}  // namespace latvis
