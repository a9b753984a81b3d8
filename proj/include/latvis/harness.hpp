#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "latvis/adversarial.hpp"
#include "latvis/core_types.hpp"
#include "latvis/dataprep.hpp"
#include "latvis/lateral_engine.hpp"

namespace latvis {

/// Stratified k-fold split. Folds partition the ids; sizes differ by at
/// most one overall and per class.
struct FoldPlan {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::string>> test_ids;
    std::vector<std::vector<std::string>> train_ids;
};

/// Deterministic given seed: per-class shuffle, then a round-robin deal with
/// a cursor that carries across classes. Requires 2 <= k <= |ids|.
FoldPlan make_folds(const std::vector<std::pair<std::string, int>>& labeled_ids, int k,
                    std::uint64_t seed);

struct NetConfig {
    int hidden = 16;     // 0 selects the linear model
    int epochs = 40;
    double lr = 0.05;
    int batch = 32;
    int input_side = 16;
};

/// One report row: the clean set or a named attack.
struct Condition {
    std::string name;                   // "OrigImgs", "FGSM-M", ...
    std::optional<AttackParams> attack; // absent for the clean condition
};

Condition condition_from_name(const std::string& name);

struct ExperimentConfig {
    SyntheticSpec synthetic;            // used unless dataset_path is set
    int synthetic_images = 1600;
    std::optional<std::filesystem::path> dataset_path;

    int k_folds = 10;
    std::uint64_t seed = 1;
    bool parallel_decide = false;
    int crop_resize = 64;
    std::size_t trace_top_k = 3;
    bool include_face = true;

    NetConfig holistic{0, 40, 0.05, 32, 32};  // linear on the whole image
    NetConfig parts{16, 40, 0.05, 32, 16};
    ForestParams forest;

    std::vector<Condition> conditions;  // defaults to all five rows

    static ExperimentConfig from_json(const Json& j);
    static ExperimentConfig from_file(const std::filesystem::path& path);
    Json to_json() const;
};

struct ConditionStats {
    std::string condition;
    std::vector<double> holistic_fold_acc;  // percent, one entry per fold
    std::vector<double> lateral_fold_acc;
    double holistic_mean = 0.0, holistic_std = 0.0;
    double lateral_mean = 0.0, lateral_std = 0.0;
};

struct AccuracyReport {
    std::vector<ConditionStats> rows;
    std::string render_text() const;
    std::string render_csv() const;
    const ConditionStats* row(const std::string& condition) const;
};

struct ConditionTraces {
    std::string condition;
    std::vector<std::vector<DecisionTrace>> per_fold;
};

struct ExperimentResult {
    AccuracyReport report;
    std::vector<ConditionTraces> traces;
    Json summary;  // config echo, per-image outcomes, audit results
};

/// A trained predictor population for one train split.
struct TrainedBank {
    PredictorBank bank;
    std::shared_ptr<const ToyNet> holistic_net;
    std::map<PartKind, std::shared_ptr<const ToyNet>> part_nets;
    std::vector<PartKind> parts;  // canonical order, as present in the data
    int label_space = 0;          // max(2, dataset classes)
};

/// Trains the holistic net, one part net and one attention forest per part
/// present in the dataset, using only train_ids. All randomness derives from
/// cfg.seed and stream_base, so the same split trains the same bank. The
/// feature hook (when set) supplies descriptor rows, letting callers share a
/// cache with evaluation.
TrainedBank train_bank(const Dataset& data, const std::vector<std::string>& train_ids,
                       const ExperimentConfig& cfg, std::uint64_t stream_base,
                       const FeatureFn& features = {});

/// Full cross-validated experiment: per fold, train the part/holistic nets
/// and the attention forests on the train split, regenerate attacks against
/// that fold's holistic model, evaluate the lateralized engine and the
/// holistic-only baseline per condition. Audits (split leakage by checksum,
/// report-vs-trace recount) run inside and throw on violation.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes report.txt, report.csv, summary.json and traces/<condition>-fold<n>.jsonl.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& out_dir);

/// One golden coordination case replayed through the analysis stage.
struct GoldenOutcome {
    std::string name;
    int expected = 0;  // 1-based class numbers, as in the fixture file
    int actual = 0;
    FinalRule rule = FinalRule::Majority;
    double final_score = 0.0;  // winning CM_f entry on the MatrixSum path
    bool pass = false;
};

std::vector<GoldenOutcome> replay_golden(const std::filesystem::path& cases_json);

/// Re-derives every decision in a trace file from its recorded matrices and
/// compares against the recorded final label.
struct TraceReplay {
    std::size_t checked = 0;
    std::vector<std::string> mismatches;  // image ids
};

TraceReplay replay_trace_file(const std::filesystem::path& jsonl);

/// Loads the dataset named by the config (synthesizing it if no path is set).
Dataset resolve_dataset(const ExperimentConfig& cfg);

}  // namespace latvis
