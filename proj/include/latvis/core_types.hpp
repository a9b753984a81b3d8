#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace latvis {

using Json = nlohmann::ordered_json;

/// 0-based class index. External files may carry 1-based ids ("class-17");
/// they are converted at ingest and back at narration time.
struct ClassLabel {
    int index = 0;
    friend auto operator<=>(const ClassLabel&, const ClassLabel&) = default;
};

/// Human-readable 1-based name, e.g. index 0 -> "class-1".
std::string class_name(ClassLabel label);
ClassLabel class_from_name(const std::string& name);

/// The eleven constituent parts, plus Face (configural crop) and WholeImage
/// (holistic input). Everything in the pipeline is keyed by one of these.
enum class PartKind {
    Back,
    Beak,
    Belly,
    Breast,
    Crown,
    Eye,
    Forehead,
    Nape,
    Tail,
    Throat,
    Wing,
    Face,
    WholeImage,
};

inline constexpr std::array<PartKind, 13> kAllParts = {
    PartKind::Back,  PartKind::Beak,     PartKind::Belly, PartKind::Breast,
    PartKind::Crown, PartKind::Eye,      PartKind::Forehead, PartKind::Nape,
    PartKind::Tail,  PartKind::Throat,   PartKind::Wing,  PartKind::Face,
    PartKind::WholeImage,
};

inline constexpr std::array<PartKind, 11> kConstituentParts = {
    PartKind::Back,  PartKind::Beak,   PartKind::Belly,    PartKind::Breast,
    PartKind::Crown, PartKind::Eye,    PartKind::Forehead, PartKind::Nape,
    PartKind::Tail,  PartKind::Throat, PartKind::Wing,
};

/// Parts that receive a crop: the 11 constituents plus Face.
inline constexpr std::array<PartKind, 12> kCropParts = {
    PartKind::Back,  PartKind::Beak,   PartKind::Belly,    PartKind::Breast,
    PartKind::Crown, PartKind::Eye,    PartKind::Forehead, PartKind::Nape,
    PartKind::Tail,  PartKind::Throat, PartKind::Wing,     PartKind::Face,
};

std::string_view part_name(PartKind part);
std::optional<PartKind> part_from_name(std::string_view name);

/// One model's (class, probability) verdict for one part of one image.
/// An unrecognized part always carries probability 0.
struct PartPrediction {
    PartKind part = PartKind::WholeImage;
    ClassLabel label;
    double probability = 0.0;
    bool recognized = true;

    static PartPrediction unrecognized(PartKind p) {
        return PartPrediction{p, ClassLabel{0}, 0.0, false};
    }
    friend bool operator==(const PartPrediction&, const PartPrediction&) = default;
};

/// Per-class scores in [0,1]. Softmax outputs sum to 1; sparse confidence
/// tables (one score per reported class) are also valid and need not sum
/// to anything in particular.
struct ProbabilityVector {
    std::vector<double> values;

    int n_classes() const { return static_cast<int>(values.size()); }
    /// Entries finite and inside [0,1]; throws std::invalid_argument otherwise.
    void validate() const;
    bool is_distribution(double tol = 1e-6) const;
    friend bool operator==(const ProbabilityVector&, const ProbabilityVector&) = default;
};

/// A CLP/HLP style verdict: winning class, its score, and whether the
/// maximum was shared by two or more classes.
struct Perception {
    ClassLabel label;
    double score = 0.0;
    bool confused = false;
    friend bool operator==(const Perception&, const Perception&) = default;
};

/// Emitted by the context phase, exactly once per image.
enum class PhaseSignal { Inhibit, Excite };

std::string_view signal_name(PhaseSignal s);

/// One row of a top-k score listing inside a trace.
struct ScoreEntry {
    ClassLabel label;
    double score = 0.0;
    friend bool operator==(const ScoreEntry&, const ScoreEntry&) = default;
};

/// A perception plus the narration context around it: which scale the score
/// lives on and the leading per-class entries behind it.
struct PerceptionTrace {
    Perception perception;
    std::string scale;            // "normalized-0-100" or "probability"
    std::vector<ScoreEntry> top;  // descending score, ties by class index
    friend bool operator==(const PerceptionTrace&, const PerceptionTrace&) = default;
};

/// How the final label was reached.
enum class FinalRule { InhibitAgreement, Majority, MatrixSum };

std::string_view rule_name(FinalRule r);

/// Full record of one decision: both phases' perceptions, the signal, the
/// matrices behind them, and the final label. This is the interpretability
/// artifact; matrices and listed scores are rounded to two decimals when the
/// trace is built, internal math stays full precision.
struct DecisionTrace {
    std::string image_id;
    int n_classes = 0;

    PerceptionTrace context_clp;
    PerceptionTrace context_hlp;
    std::vector<double> cm_c;  // normalized 0-100
    bool confident = false;
    PhaseSignal signal = PhaseSignal::Excite;

    // Absent whenever signal == Inhibit.
    std::optional<PerceptionTrace> attention_clp;
    std::optional<std::vector<double>> cm_a;
    std::size_t attention_feature_extractions = 0;

    FinalRule rule = FinalRule::InhibitAgreement;
    ClassLabel final_label;
    bool final_confused = false;
    // Present only on the MatrixSum path. Entries are plain sums of the two
    // normalized matrices and the rescaled holistic vector; no renormalization
    // happens before the final argmax (argmax is scale-invariant).
    std::optional<std::vector<double>> cm_f;

    friend bool operator==(const DecisionTrace&, const DecisionTrace&) = default;
};

// Canonical JSON for every type above. Field names are stable; DecisionTrace
// JSON is the wire format read by external tooling.
void to_json(Json& j, const ClassLabel& v);
void from_json(const Json& j, ClassLabel& v);
void to_json(Json& j, const PartPrediction& v);
void from_json(const Json& j, PartPrediction& v);
void to_json(Json& j, const ProbabilityVector& v);
void from_json(const Json& j, ProbabilityVector& v);
void to_json(Json& j, const Perception& v);
void from_json(const Json& j, Perception& v);
void to_json(Json& j, const ScoreEntry& v);
void from_json(const Json& j, ScoreEntry& v);
void to_json(Json& j, const PerceptionTrace& v);
void from_json(const Json& j, PerceptionTrace& v);
void to_json(Json& j, const DecisionTrace& v);
void from_json(const Json& j, DecisionTrace& v);

}  // namespace latvis
