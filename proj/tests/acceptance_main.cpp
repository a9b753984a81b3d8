// Acceptance gate: eight end-to-end criteria, each printed as a single
// PASS/FAIL line with its wall time. Every criterion re-derives its expected
// values independently of the code under test (local brute-force oracles,
// naive reference descriptors, finite differences, held-out folds), so a
// green run certifies behavior, not implementation details.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "latvis/adversarial.hpp"
#include "latvis/class_matrix.hpp"
#include "latvis/core_types.hpp"
#include "latvis/features.hpp"
#include "latvis/forest.hpp"
#include "latvis/harness.hpp"
#include "latvis/image.hpp"
#include "latvis/lateral_engine.hpp"
#include "latvis/predictors.hpp"
#include "latvis/rng.hpp"
#include "naive_features.hpp"

namespace {

using namespace latvis;
using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string note;     // key measurements, or the first failures
    double seconds = 0.0;
};

// Accumulates failure messages; empty means the criterion holds so far.
struct Checker {
    std::vector<std::string> failures;

    void require(bool ok, const std::string& msg) {
        if (!ok && failures.size() < 6) failures.push_back(msg);
        if (!ok && failures.size() == 6) failures.push_back("...");
    }
    bool ok() const { return failures.empty(); }
    std::string text() const {
        std::string out;
        for (const std::string& f : failures) {
            if (!out.empty()) out += "; ";
            out += f;
        }
        return out;
    }
};

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof buf, pattern, args);
    va_end(args);
    return std::string(buf);
}

double elapsed_s(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Criterion 1: golden fixture replay.

Outcome criterion_golden() {
    const auto t0 = Clock::now();
    Checker c;
    const std::vector<GoldenOutcome> outcomes = replay_golden("data/golden_cases.json");

    const std::vector<int> expected = {1, 127, 94, 150, 183, 71, 30, 123};
    c.require(outcomes.size() == expected.size(),
              fmt("expected %zu cases, got %zu", expected.size(), outcomes.size()));
    std::size_t matrix_sum_cases = 0;
    for (std::size_t i = 0; i < outcomes.size() && i < expected.size(); ++i) {
        const GoldenOutcome& o = outcomes[i];
        c.require(o.pass, fmt("case %s failed (expected %d, actual %d)", o.name.c_str(),
                              o.expected, o.actual));
        c.require(o.actual == expected[i],
                  fmt("case %zu: actual %d, pinned %d", i, o.actual, expected[i]));
        if (o.rule == FinalRule::MatrixSum) ++matrix_sum_cases;
    }
    c.require(matrix_sum_cases >= 1, "no case exercised the matrix-sum path");

    // The matrix-sum cases carry pinned winning scores; match them as a set.
    std::vector<double> want_scores = {247.76, 241.99, 246.28, 289.66};
    std::vector<bool> used(outcomes.size(), false);
    for (double want : want_scores) {
        bool found = false;
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            if (used[i] || outcomes[i].rule != FinalRule::MatrixSum) continue;
            if (std::abs(outcomes[i].final_score - want) <= 0.005) {
                used[i] = true;
                found = true;
                break;
            }
        }
        c.require(found, fmt("no matrix-sum case scored %.2f", want));
    }

    Outcome out;
    out.seconds = elapsed_s(t0);
    c.require(out.seconds < 1.0, fmt("took %.2fs, budget 1s", out.seconds));
    out.pass = c.ok();
    out.note = out.pass ? fmt("%zu/%zu cases exact, %zu via matrix-sum", outcomes.size(),
                              expected.size(), matrix_sum_cases)
                        : c.text();
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 2: randomized property suite over the evidence-matrix pipeline
// and the feedback analysis. Oracles are local re-derivations.

// Mirrors the documented argmax rule: advance only past the tolerance, then
// flag how many entries share the winning score.
Perception brute_argmax(const std::vector<double>& e) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < e.size(); ++i) {
        if (e[i] > e[best] + kTieTolerance) best = i;
    }
    int tied = 0;
    for (double v : e) {
        if (std::abs(v - e[best]) <= kTieTolerance) ++tied;
    }
    return Perception{ClassLabel{static_cast<int>(best)}, e[best], tied >= 2};
}

ClassMatrix random_normalized(int n, Rng& rng) {
    ClassMatrix m;
    m.entries.resize(static_cast<std::size_t>(n));
    for (double& v : m.entries) {
        v = rng.next_unit() < 0.15 ? 0.0 : rng.next_unit() * 3.0;
    }
    return normalize(m);
}

ProbabilityVector random_distribution(int n, Rng& rng) {
    ProbabilityVector p;
    p.values.resize(static_cast<std::size_t>(n));
    double sum = 0.0;
    for (double& v : p.values) {
        v = 0.01 + rng.next_unit();
        sum += v;
    }
    for (double& v : p.values) v /= sum;
    return p;
}

Outcome criterion_matrix_properties() {
    const auto t0 = Clock::now();
    Checker c;
    long instances = 0;

    // Normalization: exact-100 maximum, range, argmax agreement, idempotence.
    {
        Rng rng(401);
        for (int trial = 0; trial < 3000; ++trial) {
            const int n = 1 + static_cast<int>(rng.next_below(12));
            ClassMatrix raw;
            raw.entries.resize(static_cast<std::size_t>(n));
            const bool all_zero = trial % 97 == 0;
            for (double& v : raw.entries) {
                v = all_zero || rng.next_unit() < 0.1 ? 0.0 : rng.next_unit() * 50.0;
            }
            const ClassMatrix norm = normalize(raw);
            ++instances;

            c.require(norm.scale == MatrixScale::Normalized0to100, "normalize: wrong scale");
            double max = 0.0, raw_max = 0.0;
            for (double v : raw.entries) raw_max = std::max(raw_max, v);
            for (std::size_t i = 0; i < norm.entries.size(); ++i) {
                const double v = norm.entries[i];
                c.require(v >= 0.0 && v <= 100.0, "normalize: entry outside [0,100]");
                if ((raw.entries[i] == 0.0) != (v == 0.0)) {
                    c.require(false, "normalize: zero pattern changed");
                }
                max = std::max(max, v);
            }
            if (raw_max == 0.0) {
                c.require(norm.entries == raw.entries, "normalize: all-zero changed");
            } else {
                c.require(max == 100.0, "normalize: max not exactly 100");
                if (n >= 2) {
                    const Perception got = constituent_perception(norm);
                    // The raw argmax scan uses the same tolerance rule on the
                    // raw scale; scaling by a positive constant keeps strict
                    // orderings, so the winners must agree on clearly
                    // separated inputs. Skip raw near-ties, where the two
                    // scales can legitimately disagree about tie flags.
                    const Perception raw_view = brute_argmax(raw.entries);
                    if (!raw_view.confused) {
                        c.require(got.label == raw_view.label, "normalize: argmax moved");
                    }
                }
                const ClassMatrix twice = normalize(norm);
                c.require(twice == norm, "normalize: not idempotent");
            }
        }
    }

    // Accumulation: matches a local per-class sum; permutation changes the
    // result by float reassociation only.
    {
        Rng rng(402);
        for (int trial = 0; trial < 2000; ++trial) {
            const int n = 2 + static_cast<int>(rng.next_below(9));
            const int m = 1 + static_cast<int>(rng.next_below(24));
            std::vector<PartPrediction> preds;
            std::vector<double> expect(static_cast<std::size_t>(n), 0.0);
            for (int i = 0; i < m; ++i) {
                if (rng.next_unit() < 0.1) {
                    preds.push_back(PartPrediction::unrecognized(PartKind::Back));
                    continue;
                }
                const int label = static_cast<int>(rng.next_below(n));
                const double p = rng.next_unit();
                preds.push_back(PartPrediction{PartKind::Back, ClassLabel{label}, p, true});
                expect[static_cast<std::size_t>(label)] += p;
            }
            const ClassMatrix got = accumulate(preds, n);
            ++instances;
            c.require(got.scale == MatrixScale::Raw, "accumulate: wrong scale");
            for (int k = 0; k < n; ++k) {
                c.require(std::abs(got.entries[k] - expect[k]) <= 1e-12,
                          "accumulate: sum mismatch");
            }
            std::vector<PartPrediction> shuffled = preds;
            rng.shuffle(shuffled);
            const ClassMatrix again = accumulate(shuffled, n);
            for (int k = 0; k < n; ++k) {
                c.require(std::abs(got.entries[k] - again.entries[k]) <= 1e-9,
                          "accumulate: order dependence");
            }
        }
    }

    // A single recognized prediction always yields a clean 100-point verdict
    // for its class.
    {
        Rng rng(403);
        for (int trial = 0; trial < 2000; ++trial) {
            const int n = 2 + static_cast<int>(rng.next_below(11));
            const int label = static_cast<int>(rng.next_below(n));
            const double p = 0.1 + 0.9 * rng.next_unit();
            const std::vector<PartPrediction> preds = {
                PartPrediction{PartKind::Beak, ClassLabel{label}, p, true}};
            const Perception got = constituent_perception(normalize(accumulate(preds, n)));
            ++instances;
            c.require(got.label.index == label, "single prediction: wrong label");
            c.require(got.score == 100.0, "single prediction: score not 100");
            c.require(!got.confused, "single prediction: spurious tie");
        }
    }

    // Forced agreeing pairs must resolve by majority with the documented
    // precedence, carry no matrix, and score 0.
    {
        Rng rng(404);
        for (int trial = 0; trial < 2000; ++trial) {
            const int n = 3 + static_cast<int>(rng.next_below(6));
            int a = static_cast<int>(rng.next_below(n));
            int b = static_cast<int>(rng.next_below(n - 1));
            if (b >= a) ++b;  // distinct pair
            int deep_l = 0, rf_l = 0, hlp_l = 0, want = 0;
            switch (trial % 4) {
                case 0: deep_l = a; rf_l = a; hlp_l = b; want = a; break;  // deep==rf
                case 1: deep_l = a; rf_l = b; hlp_l = a; want = a; break;  // deep==hlp
                case 2: deep_l = b; rf_l = a; hlp_l = a; want = a; break;  // rf==hlp
                default: deep_l = a; rf_l = a; hlp_l = a; want = a; break; // unanimous
            }
            const ClassMatrix cm_c = random_normalized(n, rng);
            const ClassMatrix cm_a = random_normalized(n, rng);
            const ProbabilityVector h = random_distribution(n, rng);
            const Perception deep{ClassLabel{deep_l}, rng.next_unit(), rng.next_unit() < 0.3};
            const Perception rf{ClassLabel{rf_l}, rng.next_unit(), rng.next_unit() < 0.3};
            const Perception hlp{ClassLabel{hlp_l}, rng.next_unit(), rng.next_unit() < 0.3};
            const AnalysisResult res = analyze_feedback(cm_c, deep, hlp, h, cm_a, rf);
            ++instances;
            c.require(res.rule == FinalRule::Majority, "majority: wrong rule");
            c.require(res.final.label.index == want, "majority: wrong precedence winner");
            c.require(res.final.score == 0.0 && !res.final.confused,
                      "majority: verdict not score-free");
            c.require(!res.cm_f.has_value(), "majority: carried a final matrix");
        }
    }

    // Derived perceptions: replay the full analysis against a local oracle
    // covering both the majority and the entrywise-sum path.
    long majority_seen = 0, fallback_seen = 0;
    {
        Rng rng(405);
        for (int trial = 0; trial < 2000; ++trial) {
            const int n = 3 + static_cast<int>(rng.next_below(4));
            const ClassMatrix cm_c = random_normalized(n, rng);
            const ClassMatrix cm_a = random_normalized(n, rng);
            const ProbabilityVector h = random_distribution(n, rng);
            if (std::none_of(cm_c.entries.begin(), cm_c.entries.end(),
                             [](double v) { return v > 0.0; }) ||
                std::none_of(cm_a.entries.begin(), cm_a.entries.end(),
                             [](double v) { return v > 0.0; })) {
                continue;  // all-zero matrices have no meaningful perception
            }
            const Perception deep = constituent_perception(cm_c);
            const Perception rf = constituent_perception(cm_a);
            const Perception hlp = holistic_perception(h);
            const AnalysisResult res = analyze_feedback(cm_c, deep, hlp, h, cm_a, rf);
            ++instances;

            if (deep.label == rf.label || deep.label == hlp.label || rf.label == hlp.label) {
                ++majority_seen;
                const int want = (deep.label == rf.label || deep.label == hlp.label)
                                     ? deep.label.index
                                     : rf.label.index;
                c.require(res.rule == FinalRule::Majority, "analysis: expected majority");
                c.require(res.final.label.index == want, "analysis: majority winner");
                continue;
            }
            ++fallback_seen;
            std::vector<double> brute(static_cast<std::size_t>(n));
            for (int k = 0; k < n; ++k) {
                brute[k] = cm_c.entries[k] + cm_a.entries[k] + 100.0 * h.values[k];
            }
            const Perception want = brute_argmax(brute);
            c.require(res.rule == FinalRule::MatrixSum, "analysis: expected matrix-sum");
            c.require(res.final.label == want.label, "analysis: recount label");
            c.require(std::abs(res.final.score - want.score) <= 1e-9,
                      "analysis: recount score");
            c.require(res.final.confused == want.confused, "analysis: recount tie flag");
            c.require(res.cm_f.has_value(), "analysis: missing final matrix");
            if (res.cm_f) {
                for (int k = 0; k < n; ++k) {
                    c.require(std::abs(res.cm_f->entries[k] - brute[k]) <= 1e-9,
                              "analysis: final matrix entries");
                }
            }
        }
        c.require(majority_seen >= 100 && fallback_seen >= 100,
                  "analysis: a path went underexercised");
    }

    Outcome out;
    out.seconds = elapsed_s(t0);
    c.require(instances >= 10000, fmt("only %ld instances", instances));
    c.require(out.seconds < 30.0, fmt("took %.1fs, budget 30s", out.seconds));
    out.pass = c.ok();
    out.note = out.pass ? fmt("%ld instances (majority %ld, matrix-sum %ld)", instances,
                              majority_seen, fallback_seen)
                        : c.text();
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 3: descriptors against the naive references.

GrayImage random_gray(int side, Rng& rng, double lo, double hi) {
    GrayImage img(side, side);
    for (double& p : img.pixels) p = lo + (hi - lo) * rng.next_unit();
    return img;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return 1e18;
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

Outcome criterion_descriptors() {
    const auto t0 = Clock::now();
    Checker c;
    const FeatureVariantSet set = FeatureVariantSet::defaults();
    Rng rng(2023);

    double worst_sift = 0.0, worst_hog = 0.0, worst_gain = 0.0;
    for (int i = 0; i < 100; ++i) {
        const GrayImage img = random_gray(64, rng, 0.0, 1.0);
        for (const SiftParams& p : set.sift) {
            const std::vector<double> got = sift_descriptor(img, p);
            const std::vector<double> want = naive::sift_reference(img, p);
            const double diff = max_abs_diff(got, want);
            worst_sift = std::max(worst_sift, diff);
            c.require(got.size() == want.size(), "sift: length mismatch");
            c.require(diff <= 1e-6, fmt("sift patch %d: diff %.3g", p.patch_size, diff));
            for (double v : got) {
                c.require(v <= p.max_bin_value + 1e-9, "sift: bin above cap");
            }
        }
        for (const HogParams& p : set.hog) {
            const std::vector<double> got = hog_descriptor(img, p);
            const std::vector<double> want = naive::hog_reference(img, p);
            const double diff = max_abs_diff(got, want);
            worst_hog = std::max(worst_hog, diff);
            c.require(got.size() == want.size(), "hog: length mismatch");
            c.require(diff <= 1e-6, fmt("hog %d/%d: diff %.3g", p.resize_to, p.cell_size, diff));
        }
        if (!c.ok()) break;
    }

    // Gain invariance: block normalization divides any multiplicative
    // brightness factor back out.
    for (int i = 0; i < 25 && c.ok(); ++i) {
        const GrayImage base = random_gray(48, rng, 0.05, 0.45);
        for (const HogParams& p : set.hog) {
            const std::vector<double> ref = hog_descriptor(base, p);
            for (double gain : {0.5, 2.0}) {
                GrayImage scaled = base;
                for (double& v : scaled.pixels) v *= gain;
                const double diff = max_abs_diff(hog_descriptor(scaled, p), ref);
                worst_gain = std::max(worst_gain, diff);
                c.require(diff <= 1e-6, fmt("hog gain %.1f: diff %.3g", gain, diff));
            }
        }
    }

    Outcome out;
    out.seconds = elapsed_s(t0);
    c.require(out.seconds < 60.0, fmt("took %.1fs, budget 60s", out.seconds));
    out.pass = c.ok();
    out.note = out.pass ? fmt("100 images x 6 variants; max diff sift %.2g hog %.2g gain %.2g",
                              worst_sift, worst_hog, worst_gain)
                        : c.text();
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 4: forest determinism and out-of-bag behavior.

struct LabeledData {
    std::vector<std::vector<double>> X;
    std::vector<ClassLabel> y;
};

LabeledData gaussian_blobs(int per_class, int n_classes, int dims, double separation,
                           double sigma, Rng& rng) {
    LabeledData d;
    for (int c = 0; c < n_classes; ++c) {
        for (int i = 0; i < per_class; ++i) {
            std::vector<double> x(static_cast<std::size_t>(dims));
            for (int k = 0; k < dims; ++k) {
                const double center = k < 2 ? c * separation : 0.0;
                x[static_cast<std::size_t>(k)] = center + sigma * rng.next_normal();
            }
            d.X.push_back(std::move(x));
            d.y.push_back(ClassLabel{c});
        }
    }
    return d;
}

LabeledData xor_blobs(int per_cluster, double sigma, Rng& rng) {
    LabeledData d;
    const double cx[4] = {-1.0, 1.0, -1.0, 1.0};
    const double cy[4] = {-1.0, -1.0, 1.0, 1.0};
    for (int q = 0; q < 4; ++q) {
        const int label = (cx[q] > 0.0) != (cy[q] > 0.0) ? 1 : 0;
        for (int i = 0; i < per_cluster; ++i) {
            d.X.push_back({cx[q] + sigma * rng.next_normal(), cy[q] + sigma * rng.next_normal()});
            d.y.push_back(ClassLabel{label});
        }
    }
    return d;
}

// Striding k-fold accuracy with a fresh forest per fold.
double cv_accuracy(const LabeledData& d, int k, ForestParams params) {
    int hits = 0, total = 0;
    for (int fold = 0; fold < k; ++fold) {
        LabeledData train;
        std::vector<std::size_t> test;
        for (std::size_t i = 0; i < d.X.size(); ++i) {
            if (static_cast<int>(i % static_cast<std::size_t>(k)) == fold) {
                test.push_back(i);
            } else {
                train.X.push_back(d.X[i]);
                train.y.push_back(d.y[i]);
            }
        }
        ForestParams p = params;
        p.seed = params.seed + static_cast<std::uint64_t>(fold) + 1;
        const RandomForest forest = RandomForest::fit(train.X, train.y, p);
        for (std::size_t i : test) {
            if (forest.predict(d.X[i]) == d.y[i]) ++hits;
            ++total;
        }
    }
    return static_cast<double>(hits) / total;
}

Outcome criterion_forest() {
    const auto t0 = Clock::now();
    Checker c;
    Rng rng(7101);

    // Same params, same seed: identical serialized model and predictions.
    const LabeledData det = gaussian_blobs(80, 3, 6, 2.5, 0.9, rng);
    ForestParams dp;
    dp.n_trees = 25;
    dp.seed = 5;
    const RandomForest fa = RandomForest::fit(det.X, det.y, dp);
    const RandomForest fb = RandomForest::fit(det.X, det.y, dp);
    c.require(fa.to_json().dump() == fb.to_json().dump(), "rebuild: serialization differs");
    ForestParams dp2 = dp;
    dp2.seed = 6;
    const RandomForest fc = RandomForest::fit(det.X, det.y, dp2);
    c.require(fa.to_json().dump() != fc.to_json().dump(), "rebuild: seed ignored");
    for (int i = 0; i < 20; ++i) {
        std::vector<double> probe(6);
        for (double& v : probe) v = rng.next_normal() * 2.0;
        c.require(fa.predict(probe) == fb.predict(probe), "rebuild: predictions differ");
    }

    // Out-of-bag exclusion rate approaches (1 - 1/n)^n.
    const LabeledData big = gaussian_blobs(250, 2, 4, 1.2, 1.0, rng);
    const int n = static_cast<int>(big.X.size());
    ForestParams op;
    op.n_trees = 30;
    op.seed = 9;
    const RandomForest of = RandomForest::fit(big.X, big.y, op);
    double mean_oob_fraction = 0.0;
    for (const DecisionTree& tree : of.trees()) {
        int zeros = 0;
        for (int count : tree.bootstrap_counts) {
            if (count == 0) ++zeros;
        }
        mean_oob_fraction += static_cast<double>(zeros) / n;
    }
    mean_oob_fraction /= static_cast<double>(of.trees().size());
    const double expected_fraction = std::pow(1.0 - 1.0 / n, n);
    c.require(std::abs(mean_oob_fraction - expected_fraction) <= 0.05,
              fmt("oob fraction %.4f vs expected %.4f", mean_oob_fraction, expected_fraction));

    // OOB accuracy tracks held-out accuracy on the same data.
    ForestParams cp;
    cp.n_trees = 40;
    cp.seed = 11;
    const RandomForest cf = RandomForest::fit(big.X, big.y, cp);
    const RandomForest::OobResult oob = cf.oob_score(big.X, big.y);
    c.require(oob.excluded == 0, "oob: instances never out of bag at 40 trees");
    const double cv = cv_accuracy(big, 5, cp);
    c.require(std::abs(oob.accuracy - cv) <= 0.10,
              fmt("oob %.3f vs cv %.3f", oob.accuracy, cv));

    // A forest separates the non-linear XOR arrangement.
    const LabeledData xd = xor_blobs(100, 0.35, rng);
    ForestParams xp;
    xp.n_trees = 60;
    xp.seed = 13;
    const double xor_cv = cv_accuracy(xd, 5, xp);
    c.require(xor_cv >= 0.90, fmt("xor cv %.3f below 0.90", xor_cv));

    Outcome out;
    out.seconds = elapsed_s(t0);
    c.require(out.seconds < 120.0, fmt("took %.1fs, budget 120s", out.seconds));
    out.pass = c.ok();
    out.note = out.pass ? fmt("oob frac %.3f (exp %.3f), oob %.3f vs cv %.3f, xor %.3f",
                              mean_oob_fraction, expected_fraction, oob.accuracy, cv, xor_cv)
                        : c.text();
    return out;
}

// ---------------------------------------------------------------------------
// Criterion 5: gradient fidelity and attack budgets.

Outcome criterion_gradients_attacks() {
    const auto t0 = Clock::now();
    Checker c;

    // Analytic input gradients against central finite differences. Components
    // are compared relative to their own magnitude with a floor, so a sign or
    // scale bug on any meaningful component trips the gate.
    double worst_rel = 0.0;
    {
        Rng rng(881);
        for (int trial = 0; trial < 20; ++trial) {
            const int dim = 3 + static_cast<int>(rng.next_below(8));
            const int classes = 2 + static_cast<int>(rng.next_below(5));
            const int hidden = trial % 2 == 0 ? 0 : 4 + static_cast<int>(rng.next_below(6));
            Rng init(900 + static_cast<std::uint64_t>(trial));
            const ToyNet net = ToyNet::init(dim, hidden, classes, init);
            std::vector<double> x(static_cast<std::size_t>(dim));
            for (double& v : x) v = 0.1 + 0.8 * rng.next_unit();
            const ClassLabel y{static_cast<int>(rng.next_below(classes))};

            const std::vector<double> analytic = net.input_gradient(x, y);
            const double h = 1e-5;
            for (int k = 0; k < dim; ++k) {
                std::vector<double> lo = x, hi = x;
                lo[static_cast<std::size_t>(k)] -= h;
                hi[static_cast<std::size_t>(k)] += h;
                const double fd = (net.loss(hi, y) - net.loss(lo, y)) / (2.0 * h);
                const double rel =
                    std::abs(analytic[static_cast<std::size_t>(k)] - fd) /
                    std::max(std::abs(fd), 1e-2);
                worst_rel = std::max(worst_rel, rel);
                c.require(rel <= 1e-4, fmt("net %d dim %d: rel err %.3g", trial, k, rel));
            }
        }
    }

    // Every named attack respects its L-inf budget and the pixel range.
    {
        Rng rng(882);
        for (const char* name : {"fgsm-m", "fgsm-s", "itr-m", "itr-s"}) {
            const AttackParams params = AttackParams::by_name(name);
            for (int trial = 0; trial < 10; ++trial) {
                const int side = 4;
                Rng init(930 + static_cast<std::uint64_t>(trial));
                const auto net = std::make_shared<const ToyNet>(
                    ToyNet::init(side * side, trial % 2 == 0 ? 0 : 5, 3, init));
                const NativeToyNet model(net);
                NativeImage x(side, side);
                for (double& v : x.pixels) v = 255.0 * rng.next_unit();
                x.pixels[0] = 0.0;
                x.pixels[1] = 255.0;
                const ClassLabel y{static_cast<int>(rng.next_below(3))};
                const NativeImage adv = run_attack(x, y, model, params);
                double linf = 0.0;
                for (std::size_t i = 0; i < adv.pixels.size(); ++i) {
                    linf = std::max(linf, std::abs(adv.pixels[i] - x.pixels[i]));
                    c.require(adv.pixels[i] >= 0.0 && adv.pixels[i] <= 255.0,
                              fmt("%s: pixel outside [0,255]", name));
                }
                c.require(linf <= params.budget() + 1e-9,
                          fmt("%s: linf %.3f over budget %.3f", name, linf, params.budget()));
            }
        }
    }

    // The single-step attack on a linear model must raise the loss every
    // time the gradient is nonzero; pixels are kept away from the clip
    // boundary so the convexity bound applies in full.
    int increased = 0, attempted = 0;
    {
        Rng rng(883);
        const double eps = 50.0;
        for (int trial = 0; trial < 200; ++trial) {
            Rng init(960 + static_cast<std::uint64_t>(trial));
            const auto net = std::make_shared<const ToyNet>(ToyNet::init(16, 0, 4, init));
            const NativeToyNet model(net);
            NativeImage x(4, 4);
            for (double& v : x.pixels) v = 60.0 + 135.0 * rng.next_unit();
            const ClassLabel y{static_cast<int>(rng.next_below(4))};
            const std::vector<double> g = model.gradient(x.pixels, y);
            double l1 = 0.0;
            for (double v : g) l1 += std::abs(v);
            if (l1 <= 1e-12) continue;
            ++attempted;
            const double before = model.loss(x.pixels, y);
            const NativeImage adv = fgsm(x, y, model, eps);
            const double after = model.loss(adv.pixels, y);
            if (after > before) ++increased;
            // Convexity of the linear-softmax loss gives a sharp lower bound.
            c.require(after >= before + eps * l1 - 1e-9,
                      fmt("fgsm: gain %.3g below convexity bound %.3g", after - before,
                          eps * l1));
        }
        c.require(attempted == 200, fmt("only %d usable linear cases", attempted));
        c.require(increased == attempted,
                  fmt("loss increased in %d/%d cases", increased, attempted));
    }

    Outcome out;
    out.seconds = elapsed_s(t0);
    c.require(out.seconds < 60.0, fmt("took %.1fs, budget 60s", out.seconds));
    out.pass = c.ok();
    out.note = out.pass ? fmt("20 nets fd-checked (worst rel %.2g), 4 attacks in budget, "
                              "fgsm raised loss %d/%d",
                              worst_rel, increased, attempted)
                        : c.text();
    return out;
}

// ---------------------------------------------------------------------------
// Criteria 6-8: the cross-validated experiment.

ExperimentConfig acceptance_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.synthetic.n_classes = 8;
    cfg.synthetic.image_size = 32;
    cfg.synthetic_images = 1600;
    cfg.k_folds = 10;
    cfg.seed = seed;
    cfg.forest.n_trees = 40;
    cfg.conditions = {condition_from_name("OrigImgs"), condition_from_name("Itr-M"),
                      condition_from_name("Itr-S")};
    return cfg;
}

struct ExperimentArtifacts {
    Outcome outcome;
    std::optional<ExperimentResult> seed1;
};

ExperimentArtifacts criterion_experiment() {
    Checker c;
    ExperimentArtifacts art;
    const auto t0 = Clock::now();
    std::string measurements;

    for (std::uint64_t seed : {std::uint64_t{1}, std::uint64_t{2}, std::uint64_t{3}}) {
        const auto run0 = Clock::now();
        ExperimentResult result = run_experiment(acceptance_config(seed));
        const double run_s = elapsed_s(run0);
        c.require(run_s <= 600.0, fmt("seed %llu: run took %.0fs, budget 600s",
                                      static_cast<unsigned long long>(seed), run_s));

        const ConditionStats* clean = result.report.row("OrigImgs");
        const ConditionStats* itr_m = result.report.row("Itr-M");
        const ConditionStats* itr_s = result.report.row("Itr-S");
        c.require(clean && itr_m && itr_s, "missing report rows");
        if (clean && itr_m && itr_s) {
            c.require(clean->holistic_mean >= 95.0,
                      fmt("seed %llu: holistic clean %.2f below 95",
                          static_cast<unsigned long long>(seed), clean->holistic_mean));
            c.require(clean->lateral_mean >= clean->holistic_mean - 5.0,
                      fmt("seed %llu: lateral clean %.2f trails holistic %.2f by over 5",
                          static_cast<unsigned long long>(seed), clean->lateral_mean,
                          clean->holistic_mean));
            c.require(itr_m->lateral_mean >= itr_m->holistic_mean + 10.0,
                      fmt("seed %llu: attacked lateral %.2f not 10 over holistic %.2f",
                          static_cast<unsigned long long>(seed), itr_m->lateral_mean,
                          itr_m->holistic_mean));
            c.require(itr_s->holistic_mean <= itr_m->holistic_mean + 1e-9,
                      fmt("seed %llu: severe attack hurt holistic less than moderate",
                          static_cast<unsigned long long>(seed)));
            c.require(itr_s->lateral_mean <= itr_m->lateral_mean + 1e-9,
                      fmt("seed %llu: severe attack hurt lateral less than moderate",
                          static_cast<unsigned long long>(seed)));
            measurements += fmt("%ss%llu clean %.1f/%.1f itr-m %.1f/%.1f",
                                measurements.empty() ? "" : " ",
                                static_cast<unsigned long long>(seed), clean->holistic_mean,
                                clean->lateral_mean, itr_m->holistic_mean,
                                itr_m->lateral_mean);
        }
        if (seed == 1) art.seed1 = std::move(result);
    }

    art.outcome.seconds = elapsed_s(t0);
    art.outcome.pass = c.ok();
    art.outcome.note = art.outcome.pass ? "holistic/lateral means: " + measurements : c.text();
    return art;
}

Outcome criterion_inhibit_share(const std::optional<ExperimentResult>& seed1) {
    const auto t0 = Clock::now();
    Checker c;
    double decisions = 0.0, inhibit = 0.0, zero_extraction = 0.0;
    if (!seed1) {
        c.require(false, "no experiment result to audit");
    } else {
        const Json& audits = seed1->summary.at("audits");
        decisions = audits.at("clean_decisions").get<double>();
        inhibit = audits.at("clean_inhibit").get<double>();
        zero_extraction = audits.at("clean_inhibit_zero_extraction").get<double>();
        c.require(decisions == 1600.0, fmt("clean decisions %.0f, expected 1600", decisions));
        c.require(inhibit >= 0.5 * decisions,
                  fmt("inhibit on %.0f/%.0f clean decisions", inhibit, decisions));
        c.require(inhibit == zero_extraction,
                  fmt("%.0f inhibits but %.0f with zero extractions", inhibit,
                      zero_extraction));
    }
    Outcome out;
    out.seconds = elapsed_s(t0);
    out.pass = c.ok();
    out.note = out.pass ? fmt("%.0f/%.0f clean decisions inhibited, all without feature work",
                              inhibit, decisions)
                        : c.text();
    return out;
}

Outcome criterion_reproducibility(const std::optional<ExperimentResult>& seed1) {
    const auto t0 = Clock::now();
    Checker c;
    std::size_t traces_compared = 0;
    if (!seed1) {
        c.require(false, "no experiment result to compare against");
    } else {
        const auto run0 = Clock::now();
        const ExperimentResult again = run_experiment(acceptance_config(1));
        c.require(elapsed_s(run0) <= 600.0, "rerun exceeded the 600s budget");

        c.require(seed1->report.render_text() == again.report.render_text(),
                  "text reports differ");
        c.require(seed1->report.render_csv() == again.report.render_csv(),
                  "csv reports differ");
        c.require(seed1->summary.dump() == again.summary.dump(), "summaries differ");
        c.require(seed1->traces.size() == again.traces.size(), "trace condition counts differ");
        for (std::size_t ci = 0; ci < seed1->traces.size() && ci < again.traces.size(); ++ci) {
            const ConditionTraces& ta = seed1->traces[ci];
            const ConditionTraces& tb = again.traces[ci];
            c.require(ta.condition == tb.condition && ta.per_fold.size() == tb.per_fold.size(),
                      "trace layout differs");
            for (std::size_t f = 0; f < ta.per_fold.size() && f < tb.per_fold.size(); ++f) {
                c.require(ta.per_fold[f].size() == tb.per_fold[f].size(),
                          "per-fold trace counts differ");
                for (std::size_t i = 0;
                     i < ta.per_fold[f].size() && i < tb.per_fold[f].size(); ++i) {
                    const DecisionTrace& a = ta.per_fold[f][i];
                    const DecisionTrace& b = tb.per_fold[f][i];
                    if (!(a == b) || Json(a).dump() != Json(b).dump()) {
                        c.require(false, fmt("trace %s/%s diverges", ta.condition.c_str(),
                                             a.image_id.c_str()));
                    }
                    ++traces_compared;
                }
            }
        }
    }
    Outcome out;
    out.seconds = elapsed_s(t0);
    out.pass = c.ok();
    out.note = out.pass ? fmt("reports, summary and %zu traces byte-identical across reruns",
                              traces_compared)
                        : c.text();
    return out;
}

}  // namespace

int main() {
    struct Row {
        const char* what;
        std::function<Outcome()> run;
    };

    std::optional<ExperimentResult> seed1;
    const std::vector<Row> rows = {
        {"golden decision fixtures replay exactly", criterion_golden},
        {"evidence-matrix and feedback-analysis properties hold", criterion_matrix_properties},
        {"descriptors match naive references", criterion_descriptors},
        {"forests rebuild identically and out-of-bag tracks held-out accuracy",
         criterion_forest},
        {"net gradients match finite differences and attacks stay in budget",
         criterion_gradients_attacks},
        {"lateralized engine holds up under attack where the baseline collapses",
         [&seed1]() {
             ExperimentArtifacts art = criterion_experiment();
             seed1 = std::move(art.seed1);
             return art.outcome;
         }},
        {"clean decisions settle in the context phase without feature work",
         [&seed1]() { return criterion_inhibit_share(seed1); }},
        {"identical configs reproduce byte-identical reports and traces",
         [&seed1]() { return criterion_reproducibility(seed1); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Outcome o;
        try {
            o = rows[i].run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.note = std::string("threw: ") + e.what();
        }
        if (!o.pass) ++failures;
        std::printf("%s criterion-%zu: %s [%s] (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1,
                    rows[i].what, o.note.c_str(), o.seconds);
        std::fflush(stdout);
    }
    if (failures > 0) {
        std::printf("acceptance: %d of %zu criteria failed\n", failures, rows.size());
        return 1;
    }
    std::printf("acceptance: all %zu criteria passed\n", rows.size());
    return 0;
}
