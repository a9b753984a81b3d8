#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "latvis/forest.hpp"
#include "latvis/rng.hpp"

using namespace latvis;

namespace {

struct Labeled {
    std::vector<std::vector<double>> X;
    std::vector<ClassLabel> y;
};

// Four gaussian clusters at (+-1, +-1); label = quadrant parity.
Labeled xor_blobs(int per_cluster, double sigma, std::uint64_t seed) {
    Labeled d;
    Rng rng(seed);
    for (int cx : {-1, 1}) {
        for (int cy : {-1, 1}) {
            const int label = (cx > 0) != (cy > 0) ? 1 : 0;
            for (int i = 0; i < per_cluster; ++i) {
                d.X.push_back({cx + sigma * rng.next_normal(), cy + sigma * rng.next_normal()});
                d.y.push_back(ClassLabel{label});
            }
        }
    }
    return d;
}

// Two separable clusters along the x axis.
Labeled two_blobs(int per_cluster, double sigma, std::uint64_t seed) {
    Labeled d;
    Rng rng(seed);
    for (int label = 0; label < 2; ++label) {
        const double cx = label == 0 ? -1.0 : 1.0;
        for (int i = 0; i < per_cluster; ++i) {
            d.X.push_back({cx + sigma * rng.next_normal(), sigma * rng.next_normal()});
            d.y.push_back(ClassLabel{label});
        }
    }
    return d;
}

double accuracy(const RandomForest& f, const Labeled& d, const std::vector<int>& idx) {
    int hits = 0;
    for (int i : idx) {
        if (f.predict(d.X[static_cast<std::size_t>(i)]) == d.y[static_cast<std::size_t>(i)]) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(idx.size());
}

// Interleaved k-fold cross validation, shuffled once up front.
double cv_accuracy(const Labeled& d, int k, ForestParams params, std::uint64_t seed) {
    std::vector<int> order(d.X.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(seed);
    rng.shuffle(order);

    double total = 0.0;
    for (int fold = 0; fold < k; ++fold) {
        Labeled train;
        std::vector<int> test;
        std::vector<std::size_t> test_src;
        for (std::size_t i = 0; i < order.size(); ++i) {
            const std::size_t src = static_cast<std::size_t>(order[i]);
            if (static_cast<int>(i) % k == fold) {
                test_src.push_back(src);
            } else {
                train.X.push_back(d.X[src]);
                train.y.push_back(d.y[src]);
            }
        }
        params.seed = seed + static_cast<std::uint64_t>(fold);
        const RandomForest f = RandomForest::fit(train.X, train.y, params);
        int hits = 0;
        for (std::size_t src : test_src) {
            if (f.predict(d.X[src]) == d.y[src]) ++hits;
        }
        total += static_cast<double>(hits) / static_cast<double>(test_src.size());
    }
    return total / k;
}

// Hand-walked routing: follow split nodes until a leaf, then majority vote
// with the smallest class index winning ties.
int walk_tree(const DecisionTree& tree, std::span<const double> x) {
    int ni = 0;
    while (tree.nodes[static_cast<std::size_t>(ni)].feature >= 0) {
        const TreeNode& nd = tree.nodes[static_cast<std::size_t>(ni)];
        ni = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    const std::vector<int>& counts = tree.nodes[static_cast<std::size_t>(ni)].counts;
    int best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c) {
        if (counts[c] > counts[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    }
    return best;
}

}  // namespace

TEST_CASE("identical seed and data rebuild the identical forest") {
    const Labeled d = xor_blobs(30, 0.25, 5);
    ForestParams params;
    params.n_trees = 15;
    params.seed = 99;
    const RandomForest a = RandomForest::fit(d.X, d.y, params);
    const RandomForest b = RandomForest::fit(d.X, d.y, params);
    CHECK(a.to_json() == b.to_json());

    params.seed = 100;
    const RandomForest c = RandomForest::fit(d.X, d.y, params);
    CHECK(a.to_json() != c.to_json());
}

TEST_CASE("xor-patterned blobs are memorized and generalized") {
    const Labeled d = xor_blobs(50, 0.25, 7);
    ForestParams params;
    params.n_trees = 40;
    params.seed = 11;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);

    std::vector<int> all(d.X.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    CHECK(accuracy(f, d, all) == 1.0);  // fully grown trees memorize

    CHECK(cv_accuracy(d, 5, params, 13) >= 0.90);
}

TEST_CASE("a single-label training set yields degenerate leaves") {
    Labeled d;
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        d.X.push_back({rng.next_unit(), rng.next_unit()});
        d.y.push_back(ClassLabel{2});
    }
    ForestParams params;
    params.n_trees = 8;
    params.n_classes = 4;
    params.seed = 1;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);
    for (const DecisionTree& t : f.trees()) {
        CHECK(t.nodes.size() == 1);
        CHECK(t.nodes[0].feature == -1);
    }
    const ProbabilityVector p = f.predict_proba(std::vector<double>{0.5, 0.5});
    CHECK(p.values == std::vector<double>{0.0, 0.0, 1.0, 0.0});
}

TEST_CASE("probabilities are tree-vote fractions") {
    const Labeled d = xor_blobs(25, 0.4, 21);
    ForestParams params;
    params.n_trees = 10;
    params.seed = 4;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);

    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<double> x = {rng.next_unit() * 4 - 2, rng.next_unit() * 4 - 2};
        const ProbabilityVector p = f.predict_proba(x);

        double sum = 0.0;
        std::vector<int> votes(p.values.size(), 0);
        for (const DecisionTree& t : f.trees()) ++votes[static_cast<std::size_t>(t.predict(x))];
        for (std::size_t c = 0; c < p.values.size(); ++c) {
            sum += p.values[c];
            CHECK(p.values[c] ==
                  doctest::Approx(votes[c] / static_cast<double>(params.n_trees)).epsilon(1e-12));
            const double scaled = p.values[c] * params.n_trees;
            CHECK(std::abs(scaled - std::round(scaled)) <= 1e-9);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

        // Plurality of the individual votes matches the argmax, and predict
        // agrees with predict_proba.
        int best = 0;
        for (std::size_t c = 1; c < votes.size(); ++c) {
            if (votes[c] > votes[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
        }
        CHECK(f.predict(x) == ClassLabel{best});
    }
}

TEST_CASE("tree prediction matches a hand-walked route") {
    const Labeled d = xor_blobs(30, 0.3, 17);
    ForestParams params;
    params.n_trees = 6;
    params.seed = 23;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);

    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<double> x = {rng.next_unit() * 4 - 2, rng.next_unit() * 4 - 2};
        for (const DecisionTree& t : f.trees()) {
            CHECK(t.predict(x) == walk_tree(t, x));
            const int leaf = t.leaf_for(x);
            CHECK(t.nodes[static_cast<std::size_t>(leaf)].feature == -1);
            CHECK_FALSE(t.nodes[static_cast<std::size_t>(leaf)].counts.empty());
        }
    }
}

TEST_CASE("chosen splits dominate their sampled rivals") {
    const Labeled d = xor_blobs(15, 0.3, 29);
    ForestParams params;
    params.n_trees = 5;
    params.seed = 37;
    params.log_splits = true;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);

    bool saw_contested_node = false;
    for (const DecisionTree& t : f.trees()) {
        std::map<int, std::vector<const SplitCandidate*>> per_node;
        for (const SplitCandidate& c : t.split_log) per_node[c.node].push_back(&c);
        for (const auto& [node, candidates] : per_node) {
            const SplitCandidate* chosen = nullptr;
            double best_rival = -1.0;
            for (const SplitCandidate* c : candidates) {
                if (c->chosen) {
                    REQUIRE(chosen == nullptr);  // exactly one winner per node
                    chosen = c;
                } else {
                    best_rival = std::max(best_rival, c->gain);
                }
            }
            REQUIRE(chosen != nullptr);
            if (best_rival >= 0.0) {
                saw_contested_node = true;
                CHECK(chosen->gain >= best_rival - 1e-12);
            }
        }
    }
    CHECK(saw_contested_node);
}

TEST_CASE("out-of-bag bookkeeping matches the bootstrap for one tree") {
    const Labeled d = two_blobs(60, 0.4, 41);
    ForestParams params;
    params.n_trees = 1;
    params.seed = 8;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);
    const std::vector<int>& counts = f.trees()[0].bootstrap_counts;
    REQUIRE(counts.size() == d.X.size());

    const int oob = static_cast<int>(std::count(counts.begin(), counts.end(), 0));
    const RandomForest::OobResult r = f.oob_score(d.X, d.y);
    CHECK(r.evaluated == oob);
    CHECK(r.excluded == static_cast<int>(d.X.size()) - oob);

    int total_draws = 0;
    for (int c : counts) total_draws += c;
    CHECK(total_draws == static_cast<int>(d.X.size()));  // bootstrap size = n
}

TEST_CASE("the per-tree out-of-bag fraction sits near its expectation") {
    const int n = 500;
    const Labeled d = two_blobs(n / 2, 0.3, 43);
    ForestParams params;
    params.n_trees = 30;
    params.seed = 10;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);

    double mean_fraction = 0.0;
    for (const DecisionTree& t : f.trees()) {
        const auto oob = std::count(t.bootstrap_counts.begin(), t.bootstrap_counts.end(), 0);
        mean_fraction += static_cast<double>(oob) / n;
    }
    mean_fraction /= params.n_trees;

    const double expected = std::pow(1.0 - 1.0 / n, n);  // ~ 1/e
    CHECK(std::abs(mean_fraction - expected) <= 0.05);
}

TEST_CASE("out-of-bag accuracy tracks cross-validated accuracy") {
    const Labeled d = two_blobs(150, 0.5, 47);
    ForestParams params;
    params.n_trees = 30;
    params.seed = 12;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);
    const RandomForest::OobResult oob = f.oob_score(d.X, d.y);
    REQUIRE(oob.evaluated > 0);

    const double cv = cv_accuracy(d, 5, params, 53);
    CHECK(std::abs(oob.accuracy - cv) <= 0.10);
}

TEST_CASE("fit validates its inputs") {
    CHECK_THROWS(RandomForest::fit({}, {}, ForestParams{}));

    Labeled d = two_blobs(5, 0.3, 3);
    std::vector<ClassLabel> short_y(d.y.begin(), d.y.end() - 1);
    CHECK_THROWS(RandomForest::fit(d.X, short_y, ForestParams{}));

    ForestParams narrow;
    narrow.n_classes = 1;  // labels reach 1, so one class cannot hold them
    CHECK_THROWS(RandomForest::fit(d.X, d.y, narrow));
}

TEST_CASE("prediction validates the feature dimension") {
    const Labeled d = two_blobs(20, 0.3, 3);
    ForestParams params;
    params.n_trees = 3;
    params.seed = 2;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);
    CHECK_THROWS(f.predict_proba(std::vector<double>{0.5}));
    CHECK_THROWS(f.predict(std::vector<double>{0.5, 0.5, 0.5}));
}

TEST_CASE("a widened class space pads the probability vector") {
    const Labeled d = two_blobs(20, 0.3, 13);
    ForestParams params;
    params.n_trees = 5;
    params.n_classes = 6;
    params.seed = 3;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);
    CHECK(f.n_classes() == 6);
    const ProbabilityVector p = f.predict_proba(d.X[0]);
    REQUIRE(p.values.size() == 6);
    for (std::size_t c = 2; c < 6; ++c) CHECK(p.values[c] == 0.0);
}

TEST_CASE("serialization round-trips the whole forest") {
    const Labeled d = xor_blobs(20, 0.3, 61);
    ForestParams params;
    params.n_trees = 7;
    params.seed = 19;
    const RandomForest f = RandomForest::fit(d.X, d.y, params);

    const Json j = f.to_json();
    const RandomForest back = RandomForest::from_json(j);
    CHECK(back.to_json() == j);
    CHECK(back.n_classes() == f.n_classes());
    CHECK(back.n_features() == f.n_features());
    CHECK(back.params().n_trees == params.n_trees);

    Rng rng(71);
    for (int trial = 0; trial < 50; ++trial) {
        const std::vector<double> x = {rng.next_unit() * 4 - 2, rng.next_unit() * 4 - 2};
        CHECK(back.predict_proba(x).values == f.predict_proba(x).values);
    }
}
