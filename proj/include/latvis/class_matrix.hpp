#pragma once

#include <span>
#include <vector>

#include "latvis/core_types.hpp"

namespace latvis {

enum class MatrixScale { Raw, Normalized0to100 };

/// Per-class accumulated evidence. Raw entries are plain probability sums;
/// normalized entries are scaled so the maximum is exactly 100 (all-zero
/// matrices stay all-zero).
struct ClassMatrix {
    std::vector<double> entries;
    MatrixScale scale = MatrixScale::Raw;

    int n_classes() const { return static_cast<int>(entries.size()); }
    friend bool operator==(const ClassMatrix&, const ClassMatrix&) = default;
};

/// Two scores within this absolute distance count as tied. Entries are sums
/// of at most a few dozen probabilities, so 1e-9 separates genuine ties from
/// float rounding.
inline constexpr double kTieTolerance = 1e-9;

/// Sum each prediction's probability into its class slot. Unrecognized
/// predictions carry probability 0 and therefore contribute nothing.
/// Throws std::invalid_argument on an out-of-range label.
ClassMatrix accumulate(std::span<const PartPrediction> predictions, int n_classes);

/// Scale entries by 100/max so the largest becomes exactly 100. An all-zero
/// matrix passes through unchanged. Throws on a negative entry.
ClassMatrix normalize(const ClassMatrix& m);

/// Argmax verdict over matrix entries: smallest index wins ties, and the
/// confused flag records that a tie happened (within kTieTolerance).
Perception constituent_perception(const ClassMatrix& m);

/// Argmax verdict over a probability vector, same tie rule.
Perception holistic_perception(const ProbabilityVector& p);

/// Entrywise cm_c + cm_a + 100*holistic. All three summands then share the
/// 0-100 scale. Result is left un-renormalized (argmax is scale-invariant).
/// Throws on dimension mismatch or non-normalized matrix arguments.
ClassMatrix combine_final(const ClassMatrix& cm_c, const ClassMatrix& cm_a,
                          const ProbabilityVector& holistic);

/// Argmax verdict over a combined final matrix; same contract as
/// constituent_perception.
Perception final_prediction(const ClassMatrix& cm_f);

/// Entries with score > 0, descending by score, ties by ascending class
/// index, at most k rows. Used for trace narration.
std::vector<ScoreEntry> top_entries(std::span<const double> entries, std::size_t k);

}  // namespace latvis
