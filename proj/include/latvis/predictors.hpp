#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "latvis/core_types.hpp"
#include "latvis/features.hpp"
#include "latvis/forest.hpp"
#include "latvis/image.hpp"
#include "latvis/rng.hpp"

namespace latvis {

/// What a predictor is asked about: one part of one image. crop is null when
/// the caller has no pixels for the part (missing box, table-only source).
struct PartQuery {
    std::string image_id;
    PartKind part = PartKind::WholeImage;
    const GrayImage* crop = nullptr;
};

/// A probability source for (image, part) queries. nullopt means the part
/// was not recognized; the engine turns that into a zero contribution.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::optional<ProbabilityVector> predict(const PartQuery& q) const = 0;
    virtual int n_classes() const = 0;
};

/// Collapse a full vector to the engine's (class, probability) form:
/// argmax with smallest-index tie rule, or the unrecognized marker.
PartPrediction top1(PartKind part, const std::optional<ProbabilityVector>& probs);

/// File-backed probabilities keyed by (image id, part). Stands in for any
/// externally produced model outputs. Unknown keys answer unrecognized.
class TablePredictor : public Predictor {
public:
    TablePredictor(int n_classes) : n_classes_(n_classes) {}

    void set(const std::string& image_id, PartKind part,
             std::optional<ProbabilityVector> probs);
    std::optional<ProbabilityVector> predict(const PartQuery& q) const override;
    int n_classes() const override { return n_classes_; }
    std::size_t size() const { return rows_.size(); }

    /// CSV with header image_id,part,p_0,...,p_{n-1}; unrecognized rows are
    /// image_id,part,UNRECOGNIZED. Full rows must sum to 1 within 1e-6.
    static TablePredictor load_csv(const std::filesystem::path& path);
    void save_csv(const std::filesystem::path& path) const;

private:
    int n_classes_;
    std::map<std::pair<std::string, PartKind>, std::optional<ProbabilityVector>> rows_;
};

/// Small dense softmax classifier over flattened [0,1] pixels. hidden == 0
/// selects a plain linear-softmax model; otherwise one ReLU hidden layer.
/// Exists to give the attacks a differentiable target.
struct ToyNet {
    int input_dim = 0;
    int hidden_dim = 0;  // 0 = linear mode
    int n_classes = 0;
    std::vector<double> w1, b1;  // hidden x input (absent in linear mode)
    std::vector<double> w2, b2;  // classes x hidden (or classes x input)

    static ToyNet init(int input_dim, int hidden_dim, int n_classes, Rng& rng);

    std::vector<double> logits(std::span<const double> x) const;
    ProbabilityVector forward(std::span<const double> x) const;
    /// Cross-entropy of the true class, computed via logsumexp.
    double loss(std::span<const double> x, ClassLabel y) const;
    /// d(loss)/dx by hand-derived backprop (softmax -> linear -> ReLU).
    std::vector<double> input_gradient(std::span<const double> x, ClassLabel y) const;

    struct TrainStats {
        double final_loss = 0.0;
        double train_accuracy = 0.0;
    };
    /// Mini-batch SGD. Throws on divergence (NaN loss).
    TrainStats train(const std::vector<std::vector<double>>& X,
                     const std::vector<ClassLabel>& y, int epochs, double lr,
                     int batch_size, Rng& rng);

    double accuracy(const std::vector<std::vector<double>>& X,
                    const std::vector<ClassLabel>& y) const;

    /// Versioned checkpoint: "TOYNET1" magic, one-line JSON header, raw
    /// little-endian doubles.
    void save(const std::filesystem::path& path) const;
    static ToyNet load(const std::filesystem::path& path);

    /// FNV-1a over the parameter bit patterns; identifies the exact model in
    /// attack manifests.
    std::string checksum() const;
};

/// Loss surface over images on the native 0-255 scale; the attack code only
/// sees this interface.
class DifferentiableModel {
public:
    virtual ~DifferentiableModel() = default;
    virtual int input_dim() const = 0;
    virtual int n_classes() const = 0;
    virtual double loss(std::span<const double> x_native, ClassLabel y) const = 0;
    virtual std::vector<double> gradient(std::span<const double> x_native,
                                         ClassLabel y) const = 0;
    virtual std::string checksum() const = 0;
};

/// ToyNet consumes [0,1]; this adapter divides inputs by 255 and chain-rules
/// the gradient back onto the native scale.
class NativeToyNet : public DifferentiableModel {
public:
    explicit NativeToyNet(std::shared_ptr<const ToyNet> net) : net_(std::move(net)) {}
    int input_dim() const override { return net_->input_dim; }
    int n_classes() const override { return net_->n_classes; }
    double loss(std::span<const double> x_native, ClassLabel y) const override;
    std::vector<double> gradient(std::span<const double> x_native,
                                 ClassLabel y) const override;
    std::string checksum() const override { return net_->checksum(); }
    const ToyNet& net() const { return *net_; }

private:
    std::shared_ptr<const ToyNet> net_;
};

/// Predictor view of a ToyNet: resizes the query crop to the net's square
/// input side and runs the forward pass.
class ToyNetPredictor : public Predictor {
public:
    ToyNetPredictor(std::shared_ptr<const ToyNet> net, int input_side);
    std::optional<ProbabilityVector> predict(const PartQuery& q) const override;
    int n_classes() const override { return net_->n_classes; }
    std::shared_ptr<const ToyNet> net() const { return net_; }
    int input_side() const { return input_side_; }

private:
    std::shared_ptr<const ToyNet> net_;
    int input_side_;
};

/// Predictor view of a RandomForest over descriptor features. The engine
/// extracts features itself (it owns the instrumentation counter); predict()
/// also works standalone by extracting internally.
class ForestPredictor : public Predictor {
public:
    ForestPredictor(RandomForest forest, FeatureVariantSet variants);
    std::optional<ProbabilityVector> predict(const PartQuery& q) const override;
    std::optional<ProbabilityVector> predict_features(std::span<const double> features) const;
    int n_classes() const override { return forest_.n_classes(); }
    const RandomForest& forest() const { return forest_; }
    const FeatureVariantSet& variants() const { return variants_; }

private:
    RandomForest forest_;
    FeatureVariantSet variants_;
};

}  // namespace latvis
