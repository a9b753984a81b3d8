#include "latvis/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace latvis {

AttackParams AttackParams::by_name(const std::string& name) {
    if (name == "fgsm-m") return fgsm_moderate();
    if (name == "fgsm-s") return fgsm_severe();
    if (name == "itr-m") return itr_moderate();
    if (name == "itr-s") return itr_severe();
    throw std::invalid_argument("unknown attack name: " + name);
}

std::string AttackParams::name() const {
    if (kind == Kind::Fgsm) {
        if (epsilon == 50.0) return "fgsm-m";
        if (epsilon == 150.0) return "fgsm-s";
        return "fgsm-e" + std::to_string(static_cast<int>(epsilon));
    }
    if (epsilon == 18.0 && alpha == 1.0 && iterations == 10) return "itr-m";
    if (epsilon == 50.0 && alpha == 1.0 && iterations == 10) return "itr-s";
    return "itr-e" + std::to_string(static_cast<int>(epsilon));
}

double AttackParams::budget() const {
    if (kind == Kind::Fgsm) return epsilon;
    return std::min(epsilon, alpha * iterations);
}

void AttackParams::validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("attack: epsilon must be > 0");
    if (kind == Kind::Iterative) {
        if (!(alpha > 0.0)) throw std::invalid_argument("attack: alpha must be > 0");
        if (iterations < 1) throw std::invalid_argument("attack: iterations must be >= 1");
    }
}

namespace {

double sign(double v) {
    if (v > 0.0) return 1.0;
    if (v < 0.0) return -1.0;
    return 0.0;
}

void check_model(const NativeImage& x, const DifferentiableModel& model) {
    if (static_cast<int>(x.pixels.size()) != model.input_dim()) {
        throw std::invalid_argument("attack: image size does not match model input");
    }
}

}  // namespace

NativeImage fgsm(const NativeImage& x, ClassLabel y, const DifferentiableModel& model,
                 double epsilon) {
    check_model(x, model);
    const std::vector<double> g = model.gradient(x.pixels, y);
    NativeImage out = x;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        out.pixels[i] = std::clamp(out.pixels[i] + epsilon * sign(g[i]), 0.0, 255.0);
    }
    return out;
}

NativeImage iterative_attack(const NativeImage& x, ClassLabel y,
                             const DifferentiableModel& model, double epsilon,
                             double alpha, int iterations) {
    check_model(x, model);
    NativeImage cur = x;
    for (int t = 0; t < iterations; ++t) {
        const std::vector<double> g = model.gradient(cur.pixels, y);
        for (std::size_t i = 0; i < cur.pixels.size(); ++i) {
            double v = cur.pixels[i] + alpha * sign(g[i]);
            v = std::clamp(v, 0.0, 255.0);
            // Project into the epsilon ball around the original pixel.
            v = std::clamp(v, x.pixels[i] - epsilon, x.pixels[i] + epsilon);
            cur.pixels[i] = v;
        }
    }
    return cur;
}

NativeImage run_attack(const NativeImage& x, ClassLabel y, const DifferentiableModel& model,
                       const AttackParams& params) {
    params.validate();
    if (params.kind == AttackParams::Kind::Fgsm) {
        return fgsm(x, y, model, params.epsilon);
    }
    return iterative_attack(x, y, model, params.epsilon, params.alpha, params.iterations);
}

AttackedDataset attack_dataset(const std::vector<AttackInput>& test_split,
                               const std::vector<std::string>& train_ids,
                               const DifferentiableModel& model, const AttackParams& params,
                               std::uint64_t seed) {
    params.validate();
    std::unordered_set<std::string> train_set(train_ids.begin(), train_ids.end());
    for (const AttackInput& t : test_split) {
        if (train_set.count(t.image_id) > 0) {
            throw SplitLeakageError("attack_dataset: test id '" + t.image_id +
                                    "' appears in the training split");
        }
    }

    AttackedDataset out;
    Json per_image = Json::array();
    for (const AttackInput& t : test_split) {
        const double loss_before = model.loss(t.image.pixels, t.label);
        NativeImage adv = run_attack(t.image, t.label, model, params);
        double linf = 0.0;
        for (std::size_t i = 0; i < adv.pixels.size(); ++i) {
            linf = std::max(linf, std::abs(adv.pixels[i] - t.image.pixels[i]));
        }
        const double loss_after = model.loss(adv.pixels, t.label);
        per_image.push_back(Json{{"image_id", t.image_id},
                                 {"linf", linf},
                                 {"loss_before", loss_before},
                                 {"loss_after", loss_after},
                                 {"loss_increased", loss_after >= loss_before}});
        out.images.emplace(t.image_id, std::move(adv));
    }
    out.manifest = Json{{"attack", params.name()},
                        {"kind", params.kind == AttackParams::Kind::Fgsm ? "fgsm" : "iterative"},
                        {"epsilon", params.epsilon},
                        {"alpha", params.alpha},
                        {"iterations", params.iterations},
                        {"budget", params.budget()},
                        {"seed", seed},
                        {"model_checksum", model.checksum()},
                        {"n_images", test_split.size()},
                        {"images", std::move(per_image)}};
    return out;
}

}  // namespace latvis
