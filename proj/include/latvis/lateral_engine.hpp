#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "latvis/class_matrix.hpp"
#include "latvis/core_types.hpp"
#include "latvis/dataprep.hpp"
#include "latvis/features.hpp"
#include "latvis/image.hpp"
#include "latvis/predictors.hpp"

namespace latvis {

/// The two predictor populations plus the holistic model. Context predictors
/// cover the crop parts (face included by default, toggleable); attention
/// predictors cover the same parts with feature-based forests.
struct PredictorBank {
    std::map<PartKind, std::shared_ptr<Predictor>> context;
    std::shared_ptr<Predictor> holistic;
    std::map<PartKind, std::shared_ptr<ForestPredictor>> attention;
    bool include_face = true;

    /// Common class count; throws if the bank is empty or inconsistent.
    int n_classes() const;
};

/// Produces the feature vector for one part crop. Overriding lets a caller
/// interpose a cache; every call counts as one attention feature extraction
/// regardless of how the override satisfies it.
using FeatureFn = std::function<std::vector<double>(const PartQuery&)>;

struct EngineConfig {
    FeatureVariantSet variants = FeatureVariantSet::defaults();
    int crop_resize = 64;       // square side every part crop is resampled to
    bool parallel = false;      // run attention on a worker thread
    std::size_t trace_top_k = 3;
    FeatureFn features;         // null: compute from the crop directly
};

class CancellationSource;

/// Read side of a single-writer cancellation flag. Default token never fires.
class CancellationToken {
  public:
    CancellationToken() = default;
    bool cancelled() const { return flag_ && flag_->load(std::memory_order_acquire); }

  private:
    friend class CancellationSource;
    explicit CancellationToken(std::shared_ptr<const std::atomic<bool>> flag)
        : flag_(std::move(flag)) {}
    std::shared_ptr<const std::atomic<bool>> flag_;
};

class CancellationSource {
  public:
    CancellationSource() : flag_(std::make_shared<std::atomic<bool>>(false)) {}
    void cancel() { flag_->store(true, std::memory_order_release); }
    CancellationToken token() const { return CancellationToken{flag_}; }

  private:
    std::shared_ptr<std::atomic<bool>> flag_;
};

struct ContextOutcome {
    Perception clp;
    Perception hlp;
    ClassMatrix cm_c;            // normalized 0-100
    ProbabilityVector holistic;  // full vector, retained for the fallback sum
    bool confident = false;
    PhaseSignal signal = PhaseSignal::Excite;
};

struct AttentionOutcome {
    bool cancelled = false;
    std::optional<ClassMatrix> cm_a;  // absent when cancelled
    Perception clp;
    std::size_t feature_extractions = 0;
};

/// Context phase: one prediction per crop part plus the holistic model.
/// A missing box, failed crop, or declining predictor contributes an
/// unrecognized part (probability 0); nothing here is fatal.
ContextOutcome run_context(const GrayImage& image, const std::string& image_id,
                           const PredictorBank& bank, const std::map<PartKind, PartBox>& boxes,
                           const EngineConfig& cfg);

/// Attention phase: per part, crop -> features -> forest probabilities.
/// Polls the token between parts and abandons promptly once it fires;
/// a cancelled outcome carries no matrix.
AttentionOutcome run_attention(const GrayImage& image, const std::string& image_id,
                               const PredictorBank& bank,
                               const std::map<PartKind, PartBox>& boxes, const EngineConfig& cfg,
                               CancellationToken cancel = {});

struct AnalysisResult {
    FinalRule rule = FinalRule::Majority;
    Perception final;
    std::optional<ClassMatrix> cm_f;  // present only on the MatrixSum path
};

/// Feedback analysis for the Excite path: any two of {deep CLP, RF CLP, HLP}
/// sharing a label decides by majority (tie-broken labels participate);
/// otherwise the three evidence sources are summed entrywise and the final
/// label is the argmax of that sum.
AnalysisResult analyze_feedback(const ClassMatrix& cm_c, const Perception& deep_clp,
                                const Perception& hlp, const ProbabilityVector& holistic,
                                const ClassMatrix& cm_a, const Perception& rf_clp);

/// Full two-phase decision. Inhibit short-circuits to the agreed class with
/// zero attention work; Excite runs the attention phase (on a worker thread
/// in parallel mode, gated on the context verdict so cancellation is always
/// observed before any extraction) and applies analyze_feedback. The trace
/// records both phases; outcomes are identical in both execution modes.
DecisionTrace decide(const GrayImage& image, const std::string& image_id,
                     const PredictorBank& bank, const std::map<PartKind, PartBox>& boxes,
                     const EngineConfig& cfg);

}  // namespace latvis
