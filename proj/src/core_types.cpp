#include "latvis/core_types.hpp"

#include <cmath>
#include <stdexcept>

namespace latvis {

std::string class_name(ClassLabel label) {
    return "class-" + std::to_string(label.index + 1);
}

ClassLabel class_from_name(const std::string& name) {
    const std::string prefix = "class-";
    if (name.rfind(prefix, 0) != 0) {
        throw std::invalid_argument("bad class name: " + name);
    }
    const int one_based = std::stoi(name.substr(prefix.size()));
    if (one_based < 1) {
        throw std::invalid_argument("class ids are 1-based: " + name);
    }
    return ClassLabel{one_based - 1};
}

namespace {

constexpr std::array<std::string_view, 13> kPartNames = {
    "back", "beak",   "belly",  "breast", "crown", "eye", "forehead",
    "nape", "tail",   "throat", "wing",   "face",  "whole_image",
};

}  // namespace

std::string_view part_name(PartKind part) {
    return kPartNames[static_cast<std::size_t>(part)];
}

std::optional<PartKind> part_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kPartNames.size(); ++i) {
        if (kPartNames[i] == name) return static_cast<PartKind>(i);
    }
    return std::nullopt;
}

void ProbabilityVector::validate() const {
    for (double v : values) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw std::invalid_argument("probability entry outside [0,1]");
        }
    }
}

bool ProbabilityVector::is_distribution(double tol) const {
    double sum = 0.0;
    for (double v : values) {
        if (!std::isfinite(v) || v < 0.0) return false;
        sum += v;
    }
    return std::abs(sum - 1.0) <= tol;
}

std::string_view signal_name(PhaseSignal s) {
    return s == PhaseSignal::Inhibit ? "inhibit" : "excite";
}

std::string_view rule_name(FinalRule r) {
    switch (r) {
        case FinalRule::InhibitAgreement: return "inhibit-agreement";
        case FinalRule::Majority: return "majority";
        case FinalRule::MatrixSum: return "matrix-sum";
    }
    return "unknown";
}

namespace {

PhaseSignal signal_from_name(const std::string& s) {
    if (s == "inhibit") return PhaseSignal::Inhibit;
    if (s == "excite") return PhaseSignal::Excite;
    throw std::invalid_argument("bad signal name: " + s);
}

FinalRule rule_from_name(const std::string& s) {
    if (s == "inhibit-agreement") return FinalRule::InhibitAgreement;
    if (s == "majority") return FinalRule::Majority;
    if (s == "matrix-sum") return FinalRule::MatrixSum;
    throw std::invalid_argument("bad rule name: " + s);
}

}  // namespace

void to_json(Json& j, const ClassLabel& v) { j = v.index; }
void from_json(const Json& j, ClassLabel& v) { v.index = j.get<int>(); }

void to_json(Json& j, const PartPrediction& v) {
    j = Json{{"part", part_name(v.part)},
             {"label", v.label.index},
             {"probability", v.probability},
             {"recognized", v.recognized}};
}

void from_json(const Json& j, PartPrediction& v) {
    const auto part = part_from_name(j.at("part").get<std::string>());
    if (!part) throw std::invalid_argument("bad part name in prediction");
    v.part = *part;
    v.label.index = j.at("label").get<int>();
    v.probability = j.at("probability").get<double>();
    v.recognized = j.at("recognized").get<bool>();
}

void to_json(Json& j, const ProbabilityVector& v) { j = v.values; }
void from_json(const Json& j, ProbabilityVector& v) {
    v.values = j.get<std::vector<double>>();
}

void to_json(Json& j, const Perception& v) {
    j = Json{{"label", v.label.index},
             {"class", class_name(v.label)},
             {"score", v.score},
             {"confused", v.confused}};
}

void from_json(const Json& j, Perception& v) {
    v.label.index = j.at("label").get<int>();
    v.score = j.at("score").get<double>();
    v.confused = j.at("confused").get<bool>();
}

void to_json(Json& j, const ScoreEntry& v) {
    j = Json{{"label", v.label.index},
             {"class", class_name(v.label)},
             {"score", v.score}};
}

void from_json(const Json& j, ScoreEntry& v) {
    v.label.index = j.at("label").get<int>();
    v.score = j.at("score").get<double>();
}

void to_json(Json& j, const PerceptionTrace& v) {
    j = Json{{"perception", v.perception}, {"scale", v.scale}, {"top", v.top}};
}

void from_json(const Json& j, PerceptionTrace& v) {
    v.perception = j.at("perception").get<Perception>();
    v.scale = j.at("scale").get<std::string>();
    v.top = j.at("top").get<std::vector<ScoreEntry>>();
}

void to_json(Json& j, const DecisionTrace& v) {
    Json context = Json{{"clp", v.context_clp},
                        {"hlp", v.context_hlp},
                        {"cm_c", v.cm_c},
                        {"confident", v.confident},
                        {"signal", signal_name(v.signal)}};
    Json attention;
    if (v.attention_clp) {
        attention = Json{{"clp", *v.attention_clp},
                         {"cm_a", v.cm_a ? Json(*v.cm_a) : Json(nullptr)},
                         {"feature_extractions", v.attention_feature_extractions}};
    } else {
        attention = nullptr;
    }
    Json final_obj = Json{{"label", v.final_label.index},
                          {"class", class_name(v.final_label)},
                          {"rule", rule_name(v.rule)},
                          {"confused", v.final_confused},
                          {"cm_f", v.cm_f ? Json(*v.cm_f) : Json(nullptr)}};
    j = Json{{"image_id", v.image_id},
             {"n_classes", v.n_classes},
             {"context", context},
             {"attention", attention},
             {"final", final_obj}};
}

void from_json(const Json& j, DecisionTrace& v) {
    v.image_id = j.at("image_id").get<std::string>();
    v.n_classes = j.at("n_classes").get<int>();
    const Json& ctx = j.at("context");
    v.context_clp = ctx.at("clp").get<PerceptionTrace>();
    v.context_hlp = ctx.at("hlp").get<PerceptionTrace>();
    v.cm_c = ctx.at("cm_c").get<std::vector<double>>();
    v.confident = ctx.at("confident").get<bool>();
    v.signal = signal_from_name(ctx.at("signal").get<std::string>());
    const Json& att = j.at("attention");
    if (att.is_null()) {
        v.attention_clp.reset();
        v.cm_a.reset();
        v.attention_feature_extractions = 0;
    } else {
        v.attention_clp = att.at("clp").get<PerceptionTrace>();
        if (att.at("cm_a").is_null()) {
            v.cm_a.reset();
        } else {
            v.cm_a = att.at("cm_a").get<std::vector<double>>();
        }
        v.attention_feature_extractions =
            att.at("feature_extractions").get<std::size_t>();
    }
    const Json& fin = j.at("final");
    v.final_label.index = fin.at("label").get<int>();
    v.rule = rule_from_name(fin.at("rule").get<std::string>());
    v.final_confused = fin.at("confused").get<bool>();
    if (fin.at("cm_f").is_null()) {
        v.cm_f.reset();
    } else {
        v.cm_f = fin.at("cm_f").get<std::vector<double>>();
    }
}

}  // namespace latvis
