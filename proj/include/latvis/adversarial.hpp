#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "latvis/core_types.hpp"
#include "latvis/image.hpp"
#include "latvis/predictors.hpp"

namespace latvis {

/// Raised when an attack is pointed at a probability source that exposes no
/// gradient (e.g. a file-backed table).
struct UnsupportedModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when the ids handed to attack_dataset overlap the training split.
struct SplitLeakageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AttackParams {
    enum class Kind { Fgsm, Iterative };
    Kind kind = Kind::Fgsm;
    double epsilon = 0.0;  // L-inf budget, native 0-255 pixel units
    double alpha = 1.0;    // per-step size (iterative only)
    int iterations = 1;    // iterative only

    // The four named settings used throughout the experiments.
    static AttackParams fgsm_moderate() { return {Kind::Fgsm, 50.0, 1.0, 1}; }
    static AttackParams fgsm_severe() { return {Kind::Fgsm, 150.0, 1.0, 1}; }
    static AttackParams itr_moderate() { return {Kind::Iterative, 18.0, 1.0, 10}; }
    static AttackParams itr_severe() { return {Kind::Iterative, 50.0, 1.0, 10}; }
    static AttackParams by_name(const std::string& name);  // "fgsm-m" etc.

    std::string name() const;
    /// Tightest guaranteed L-inf bound: epsilon, or alpha*iterations when
    /// that binds first.
    double budget() const;
    void validate() const;
};

/// x' = clip(x + epsilon * sign(grad L), 0, 255); sign(0) contributes no
/// perturbation.
NativeImage fgsm(const NativeImage& x, ClassLabel y, const DifferentiableModel& model,
                 double epsilon);

/// Repeated alpha-size sign steps, each result clipped to [0,255] and
/// projected into the epsilon L-inf ball around the original image.
NativeImage iterative_attack(const NativeImage& x, ClassLabel y,
                             const DifferentiableModel& model, double epsilon,
                             double alpha, int iterations);

NativeImage run_attack(const NativeImage& x, ClassLabel y, const DifferentiableModel& model,
                       const AttackParams& params);

struct AttackInput {
    std::string image_id;
    ClassLabel label;
    NativeImage image;
};

struct AttackedDataset {
    std::map<std::string, NativeImage> images;
    Json manifest;  // params, per-image L-inf, loss deltas, model checksum
};

/// Attacks every test image. train_ids are the ids the model saw during
/// training; any overlap with the test ids is a hard SplitLeakageError.
AttackedDataset attack_dataset(const std::vector<AttackInput>& test_split,
                               const std::vector<std::string>& train_ids,
                               const DifferentiableModel& model, const AttackParams& params,
                               std::uint64_t seed);

}  // namespace latvis
