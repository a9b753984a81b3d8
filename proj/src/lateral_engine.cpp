#include "latvis/lateral_engine.hpp"

#include <cmath>
#include <exception>
#include <future>
#include <stdexcept>
#include <thread>

namespace latvis {

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::vector<double> round2_all(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = round2(v[i]);
    return out;
}

Perception round2_perception(Perception p) {
    p.score = round2(p.score);
    return p;
}

PerceptionTrace narrate(const Perception& p, std::string scale, const std::vector<double>& scores,
                        std::size_t k) {
    PerceptionTrace t{round2_perception(p), std::move(scale), top_entries(scores, k)};
    for (ScoreEntry& e : t.top) e.score = round2(e.score);
    return t;
}

/// Crop for one part, or nullopt when the box is missing or degenerate.
std::optional<GrayImage> part_crop(const GrayImage& image,
                                   const std::map<PartKind, PartBox>& boxes, PartKind part,
                                   int resize_to) {
    const auto it = boxes.find(part);
    if (it == boxes.end()) return std::nullopt;
    return crop(image, it->second, resize_to);
}

}  // namespace

int PredictorBank::n_classes() const {
    int n = 0;
    const auto take = [&n](int m) {
        if (n == 0) n = m;
        if (m != n) throw std::invalid_argument("predictor bank mixes class counts");
    };
    if (holistic) take(holistic->n_classes());
    for (const auto& [part, p] : context) {
        if (p) take(p->n_classes());
    }
    for (const auto& [part, p] : attention) {
        if (p) take(p->n_classes());
    }
    if (n == 0) throw std::invalid_argument("predictor bank is empty");
    return n;
}

ContextOutcome run_context(const GrayImage& image, const std::string& image_id,
                           const PredictorBank& bank, const std::map<PartKind, PartBox>& boxes,
                           const EngineConfig& cfg) {
    const int n = bank.n_classes();
    std::vector<PartPrediction> preds;
    preds.reserve(kCropParts.size());
    for (const PartKind part : kCropParts) {
        if (part == PartKind::Face && !bank.include_face) continue;
        const auto it = bank.context.find(part);
        const auto cropped = part_crop(image, boxes, part, cfg.crop_resize);
        std::optional<ProbabilityVector> probs;
        if (it != bank.context.end() && it->second && cropped) {
            probs = it->second->predict(PartQuery{image_id, part, &*cropped});
        }
        preds.push_back(top1(part, probs));
    }

    ContextOutcome out;
    out.cm_c = normalize(accumulate(preds, n));
    out.clp = constituent_perception(out.cm_c);

    out.holistic = ProbabilityVector{std::vector<double>(static_cast<std::size_t>(n), 0.0)};
    if (bank.holistic) {
        if (auto p = bank.holistic->predict(PartQuery{image_id, PartKind::WholeImage, &image})) {
            out.holistic = std::move(*p);
        }
    }
    out.hlp = holistic_perception(out.holistic);

    out.confident = out.clp.label == out.hlp.label && !out.clp.confused;
    out.signal = out.confident ? PhaseSignal::Inhibit : PhaseSignal::Excite;
    return out;
}

AttentionOutcome run_attention(const GrayImage& image, const std::string& image_id,
                               const PredictorBank& bank,
                               const std::map<PartKind, PartBox>& boxes, const EngineConfig& cfg,
                               CancellationToken cancel) {
    AttentionOutcome out;
    const int n = bank.n_classes();
    std::vector<PartPrediction> preds;
    preds.reserve(bank.attention.size());
    for (const auto& [part, forest] : bank.attention) {
        if (cancel.cancelled()) {
            out.cancelled = true;
            return out;
        }
        const auto cropped = part_crop(image, boxes, part, cfg.crop_resize);
        std::optional<ProbabilityVector> probs;
        if (forest && cropped) {
            const PartQuery query{image_id, part, &*cropped};
            const std::vector<double> feats =
                cfg.features ? cfg.features(query) : part_features(*cropped, cfg.variants);
            ++out.feature_extractions;
            probs = forest->predict_features(feats);
        }
        preds.push_back(top1(part, probs));
    }
    out.cm_a = normalize(accumulate(preds, n));
    out.clp = constituent_perception(*out.cm_a);
    return out;
}

AnalysisResult analyze_feedback(const ClassMatrix& cm_c, const Perception& deep_clp,
                                const Perception& hlp, const ProbabilityVector& holistic,
                                const ClassMatrix& cm_a, const Perception& rf_clp) {
    const auto majority = [](ClassLabel label) {
        return AnalysisResult{FinalRule::Majority, Perception{label, 0.0, false}, std::nullopt};
    };
    if (deep_clp.label == rf_clp.label) return majority(deep_clp.label);
    if (deep_clp.label == hlp.label) return majority(deep_clp.label);
    if (rf_clp.label == hlp.label) return majority(rf_clp.label);

    ClassMatrix cm_f = combine_final(cm_c, cm_a, holistic);
    const Perception final = final_prediction(cm_f);
    return AnalysisResult{FinalRule::MatrixSum, final, std::move(cm_f)};
}

DecisionTrace decide(const GrayImage& image, const std::string& image_id,
                     const PredictorBank& bank, const std::map<PartKind, PartBox>& boxes,
                     const EngineConfig& cfg) {
    DecisionTrace trace;
    trace.image_id = image_id;
    trace.n_classes = bank.n_classes();

    ContextOutcome ctx;
    AttentionOutcome att;

    if (!cfg.parallel) {
        ctx = run_context(image, image_id, bank, boxes, cfg);
        if (ctx.signal == PhaseSignal::Excite) {
            att = run_attention(image, image_id, bank, boxes, cfg);
        } else {
            att.cancelled = true;
        }
    } else {
        // The worker's first checkpoint is the context verdict itself, so an
        // Inhibit is always observed before any feature work starts.
        CancellationSource cancel;
        std::promise<PhaseSignal> verdict;
        std::future<PhaseSignal> verdict_future = verdict.get_future();
        std::exception_ptr worker_error;
        std::thread worker([&] {
            try {
                if (verdict_future.get() == PhaseSignal::Inhibit) {
                    att.cancelled = true;
                    return;
                }
                att = run_attention(image, image_id, bank, boxes, cfg, cancel.token());
            } catch (...) {
                worker_error = std::current_exception();
            }
        });
        try {
            ctx = run_context(image, image_id, bank, boxes, cfg);
        } catch (...) {
            verdict.set_value(PhaseSignal::Inhibit);
            cancel.cancel();
            worker.join();
            throw;
        }
        verdict.set_value(ctx.signal);
        if (ctx.signal == PhaseSignal::Inhibit) cancel.cancel();
        worker.join();
        if (worker_error) std::rethrow_exception(worker_error);
    }

    trace.context_clp = narrate(ctx.clp, "normalized-0-100", ctx.cm_c.entries, cfg.trace_top_k);
    trace.context_hlp = narrate(ctx.hlp, "probability", ctx.holistic.values, cfg.trace_top_k);
    trace.cm_c = round2_all(ctx.cm_c.entries);
    trace.confident = ctx.confident;
    trace.signal = ctx.signal;

    if (ctx.signal == PhaseSignal::Inhibit) {
        trace.attention_feature_extractions = 0;
        trace.rule = FinalRule::InhibitAgreement;
        trace.final_label = ctx.clp.label;
        trace.final_confused = false;
        return trace;
    }

    if (!att.cm_a) throw std::logic_error("attention phase cancelled despite Excite");
    trace.attention_clp =
        narrate(att.clp, "normalized-0-100", att.cm_a->entries, cfg.trace_top_k);
    trace.cm_a = round2_all(att.cm_a->entries);
    trace.attention_feature_extractions = att.feature_extractions;

    const AnalysisResult analysis =
        analyze_feedback(ctx.cm_c, ctx.clp, ctx.hlp, ctx.holistic, *att.cm_a, att.clp);
    trace.rule = analysis.rule;
    trace.final_label = analysis.final.label;
    trace.final_confused = analysis.final.confused;
    if (analysis.cm_f) trace.cm_f = round2_all(analysis.cm_f->entries);
    return trace;
}

}  // namespace latvis
