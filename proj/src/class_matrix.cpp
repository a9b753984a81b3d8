#include "latvis/class_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace latvis {

namespace {

Perception argmax_perception(std::span<const double> entries) {
    // Smallest index wins ties; confused records that a tie happened at all.
    std::size_t best = 0;
    for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i] > entries[best] + kTieTolerance) best = i;
    }
    int tied = 0;
    for (double v : entries) {
        if (std::abs(v - entries[best]) <= kTieTolerance) ++tied;
    }
    return Perception{ClassLabel{static_cast<int>(best)}, entries[best], tied >= 2};
}

}  // namespace

ClassMatrix accumulate(std::span<const PartPrediction> predictions, int n_classes) {
    if (n_classes < 1) throw std::invalid_argument("accumulate: n_classes must be >= 1");
    ClassMatrix m;
    m.entries.assign(static_cast<std::size_t>(n_classes), 0.0);
    m.scale = MatrixScale::Raw;
    for (const PartPrediction& p : predictions) {
        if (p.label.index < 0 || p.label.index >= n_classes) {
            throw std::invalid_argument("accumulate: label " +
                                        std::to_string(p.label.index) +
                                        " outside [0," + std::to_string(n_classes) + ")");
        }
        m.entries[static_cast<std::size_t>(p.label.index)] += p.probability;
    }
    return m;
}

ClassMatrix normalize(const ClassMatrix& m) {
    double max = 0.0;
    for (double v : m.entries) {
        if (!(v >= 0.0)) throw std::invalid_argument("normalize: negative or NaN entry");
        max = std::max(max, v);
    }
    ClassMatrix out;
    out.entries = m.entries;
    out.scale = MatrixScale::Normalized0to100;
    if (max > 0.0) {
        // k alone can leave max * k one ulp off 100; the contract is exact.
        const double k = 100.0 / max;
        for (double& v : out.entries) {
            v = v == max ? 100.0 : std::min(v * k, 100.0);
        }
    }
    return out;
}

Perception constituent_perception(const ClassMatrix& m) {
    if (m.n_classes() < 2) {
        throw std::invalid_argument("constituent_perception: need >= 2 classes");
    }
    return argmax_perception(m.entries);
}

Perception holistic_perception(const ProbabilityVector& p) {
    p.validate();
    if (p.values.empty()) {
        throw std::invalid_argument("holistic_perception: empty vector");
    }
    return argmax_perception(p.values);
}

ClassMatrix combine_final(const ClassMatrix& cm_c, const ClassMatrix& cm_a,
                          const ProbabilityVector& holistic) {
    const int n = cm_c.n_classes();
    if (cm_a.n_classes() != n || holistic.n_classes() != n) {
        throw std::invalid_argument("combine_final: dimension mismatch");
    }
    if (cm_c.scale != MatrixScale::Normalized0to100 ||
        cm_a.scale != MatrixScale::Normalized0to100) {
        throw std::invalid_argument("combine_final: matrices must be normalized");
    }
    ClassMatrix out;
    out.entries.resize(static_cast<std::size_t>(n));
    out.scale = MatrixScale::Raw;
    for (std::size_t i = 0; i < out.entries.size(); ++i) {
        out.entries[i] = cm_c.entries[i] + cm_a.entries[i] + 100.0 * holistic.values[i];
    }
    return out;
}

Perception final_prediction(const ClassMatrix& cm_f) {
    if (cm_f.n_classes() < 2) {
        throw std::invalid_argument("final_prediction: need >= 2 classes");
    }
    return argmax_perception(cm_f.entries);
}

std::vector<ScoreEntry> top_entries(std::span<const double> entries, std::size_t k) {
    std::vector<ScoreEntry> rows;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i] > 0.0) {
            rows.push_back(ScoreEntry{ClassLabel{static_cast<int>(i)}, entries[i]});
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const ScoreEntry& a, const ScoreEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.label.index < b.label.index;
    });
    if (rows.size() > k) rows.resize(k);
    return rows;
}

}  // namespace latvis
