#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latvis/digest.hpp"
#include "latvis/harness.hpp"

namespace latvis {
namespace {

std::string json_digest(const Json& j) {
    const std::string s = j.dump();
    return hex_digest(fnv1a64(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
}

void save_bank(const TrainedBank& trained, const ExperimentConfig& cfg,
               const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    trained.holistic_net->save(dir / "holistic.toynet");
    Json parts = Json::array();
    for (const PartKind part : trained.parts) {
        const std::string stem{part_name(part)};
        trained.part_nets.at(part)->save(dir / ("part-" + stem + ".toynet"));
        const Json fj = trained.bank.attention.at(part)->forest().to_json();
        std::ofstream out(dir / ("forest-" + stem + ".json"));
        out << fj.dump() << "\n";
        parts.push_back(Json{{"part", stem},
                             {"net", "part-" + stem + ".toynet"},
                             {"forest", "forest-" + stem + ".json"},
                             {"net_checksum", trained.part_nets.at(part)->checksum()},
                             {"forest_checksum", json_digest(fj)}});
    }
    const Json bank{{"format", "latvis-bank-1"},
                    {"label_space", trained.label_space},
                    {"include_face", cfg.include_face},
                    {"crop_resize", cfg.crop_resize},
                    {"holistic",
                     Json{{"file", "holistic.toynet"},
                          {"input_side", cfg.holistic.input_side},
                          {"checksum", trained.holistic_net->checksum()}}},
                    {"parts_input_side", cfg.parts.input_side},
                    {"parts", std::move(parts)}};
    std::ofstream out(dir / "bank.json");
    out << bank.dump(2) << "\n";
}

struct LoadedBank {
    PredictorBank bank;
    std::shared_ptr<const ToyNet> holistic_net;
    int crop_resize = 64;
    int holistic_input_side = 32;
};

LoadedBank load_bank(const std::filesystem::path& dir) {
    std::ifstream in(dir / "bank.json");
    if (!in) throw std::runtime_error("cannot read " + (dir / "bank.json").string());
    Json j;
    in >> j;
    if (j.at("format").get<std::string>() != "latvis-bank-1") {
        throw std::runtime_error("unknown bank format");
    }
    LoadedBank out;
    out.crop_resize = j.at("crop_resize").get<int>();
    out.holistic_input_side = j.at("holistic").at("input_side").get<int>();
    out.bank.include_face = j.at("include_face").get<bool>();
    out.holistic_net = std::make_shared<const ToyNet>(
        ToyNet::load(dir / j.at("holistic").at("file").get<std::string>()));
    out.bank.holistic =
        std::make_shared<ToyNetPredictor>(out.holistic_net, out.holistic_input_side);
    const int parts_side = j.at("parts_input_side").get<int>();
    for (const Json& p : j.at("parts")) {
        const auto part = part_from_name(p.at("part").get<std::string>());
        if (!part) throw std::runtime_error("bank names unknown part");
        auto net = std::make_shared<const ToyNet>(
            ToyNet::load(dir / p.at("net").get<std::string>()));
        out.bank.context[*part] = std::make_shared<ToyNetPredictor>(std::move(net), parts_side);
        std::ifstream fin(dir / p.at("forest").get<std::string>());
        if (!fin) throw std::runtime_error("cannot read forest for part " +
                                           p.at("part").get<std::string>());
        Json fj;
        fin >> fj;
        out.bank.attention[*part] = std::make_shared<ForestPredictor>(
            RandomForest::from_json(fj), FeatureVariantSet::defaults());
    }
    return out;
}

int cmd_synth(const std::string& out_dir, int images, std::uint64_t seed, int classes,
              double noise, int size) {
    SyntheticSpec spec;
    spec.n_classes = classes;
    spec.noise_sigma = noise;
    spec.image_size = size;
    spec.seed = seed;
    const SyntheticDataset data = generate_synthetic(spec, images);
    write_dataset(data, out_dir);
    std::printf("wrote %d images, %d classes -> %s\n", images, classes, out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_dir,
              const std::string& manifest, std::uint64_t seed, bool seed_set,
              const std::vector<std::string>& exclude) {
    ExperimentConfig cfg =
        manifest.empty() ? ExperimentConfig{} : ExperimentConfig::from_file(manifest);
    if (seed_set) cfg.seed = seed;
    const Dataset data = load_dataset(data_dir);
    const std::set<std::string> skip(exclude.begin(), exclude.end());
    std::vector<std::string> train_ids;
    for (const DatasetImage& img : data.images) {
        if (!skip.count(img.id)) train_ids.push_back(img.id);
    }
    const TrainedBank trained = train_bank(data, train_ids, cfg, 0);
    save_bank(trained, cfg, out_dir);
    std::printf("trained holistic + %zu part predictors on %zu images -> %s\n",
                trained.parts.size(), train_ids.size(), out_dir.c_str());
    return 0;
}

int cmd_attack(const std::string& data_dir, const std::string& models_dir,
               const std::string& attack_name, const std::vector<std::string>& test_ids,
               const std::string& out_dir, std::uint64_t seed) {
    const Dataset data = load_dataset(data_dir);
    const LoadedBank loaded = load_bank(models_dir);
    const AttackParams params = AttackParams::by_name(attack_name);

    const std::set<std::string> test(test_ids.begin(), test_ids.end());
    std::vector<AttackInput> inputs;
    std::vector<std::string> train_ids;
    for (const DatasetImage& img : data.images) {
        if (test.count(img.id)) {
            inputs.push_back(AttackInput{img.id, img.label, to_native(luminance(img.image))});
        } else {
            train_ids.push_back(img.id);
        }
    }
    if (inputs.size() != test.size()) {
        throw std::runtime_error("some requested test ids are not in the dataset");
    }
    const NativeToyNet model(loaded.holistic_net);
    const AttackedDataset attacked = attack_dataset(inputs, train_ids, model, params, seed);

    std::filesystem::create_directories(out_dir);
    for (const auto& [id, img] : attacked.images) {
        write_pgm_native(std::filesystem::path(out_dir) / (id + ".pgm"), img);
    }
    std::ofstream mf(std::filesystem::path(out_dir) / "manifest.json");
    mf << attacked.manifest.dump(2) << "\n";
    std::printf("attacked %zu images with %s -> %s\n", attacked.images.size(),
                params.name().c_str(), out_dir.c_str());
    return 0;
}

int cmd_decide(const std::string& data_dir, const std::string& models_dir,
               const std::string& image_id, const std::string& attacked_dir, bool parallel) {
    const Dataset data = load_dataset(data_dir);
    const LoadedBank loaded = load_bank(models_dir);
    const DatasetImage* img = nullptr;
    for (const DatasetImage& d : data.images) {
        if (d.id == image_id) {
            img = &d;
            break;
        }
    }
    if (!img) throw std::runtime_error("image id not in dataset: " + image_id);

    GrayImage g;
    if (attacked_dir.empty()) {
        g = luminance(img->image);
    } else {
        g = from_native(
            read_pgm_native(std::filesystem::path(attacked_dir) / (image_id + ".pgm")));
    }
    EngineConfig engine;
    engine.crop_resize = loaded.crop_resize;
    engine.parallel = parallel;
    const DecisionTrace trace = decide(g, image_id, loaded.bank, img->boxes, engine);
    std::cout << Json(trace).dump(2) << "\n";
    return 0;
}

int cmd_run(const std::string& manifest_path, std::string out_dir, std::uint64_t seed,
            bool seed_set, int jobs) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot read manifest " + manifest_path);
    Json manifest;
    in >> manifest;
    ExperimentConfig cfg = ExperimentConfig::from_json(manifest);
    if (seed_set) cfg.seed = seed;
    if (jobs > 1) cfg.parallel_decide = true;
    if (out_dir.empty()) out_dir = manifest.value("out_dir", std::string("runs/latest"));

    const ExperimentResult result = run_experiment(cfg);
    write_experiment(result, out_dir);
    std::cout << result.report.render_text();
    std::printf("artifacts -> %s\n", out_dir.c_str());
    return 0;
}

int cmd_replay(const std::string& golden, const std::vector<std::string>& trace_files) {
    bool failed = false;
    if (!golden.empty()) {
        for (const GoldenOutcome& g : replay_golden(golden)) {
            std::printf("%-8s expected class-%-3d got class-%-3d via %-16s %s\n",
                        g.name.c_str(), g.expected, g.actual,
                        std::string(rule_name(g.rule)).c_str(), g.pass ? "PASS" : "FAIL");
            failed = failed || !g.pass;
        }
    }
    for (const std::string& f : trace_files) {
        const TraceReplay r = replay_trace_file(f);
        std::printf("%s: %zu decisions replayed, %zu mismatches\n", f.c_str(), r.checked,
                    r.mismatches.size());
        for (const std::string& id : r.mismatches) std::printf("  mismatch: %s\n", id.c_str());
        failed = failed || !r.mismatches.empty();
    }
    return failed ? 1 : 0;
}

int cmd_report(const std::string& run_dir) {
    const std::filesystem::path dir(run_dir);
    std::ifstream in(dir / "summary.json");
    if (!in) throw std::runtime_error("cannot read " + (dir / "summary.json").string());
    Json summary;
    in >> summary;

    AccuracyReport report;
    bool recount_ok = true;
    for (const Json& cond : summary.at("conditions")) {
        ConditionStats row;
        row.condition = cond.at("condition").get<std::string>();
        for (const Json& fold : cond.at("folds")) {
            int hol = 0, lat = 0;
            for (const Json& o : fold.at("outcomes")) {
                const int label = o.at("label").get<int>();
                hol += o.at("holistic").get<int>() == label ? 1 : 0;
                lat += o.at("final").get<int>() == label ? 1 : 0;
            }
            if (hol != fold.at("holistic_correct").get<int>() ||
                lat != fold.at("lateral_correct").get<int>()) {
                recount_ok = false;
            }
            const double total = fold.at("total").get<double>();
            row.holistic_fold_acc.push_back(100.0 * hol / total);
            row.lateral_fold_acc.push_back(100.0 * lat / total);
        }
        row.holistic_mean = cond.at("holistic_mean").get<double>();
        row.holistic_std = cond.at("holistic_std").get<double>();
        row.lateral_mean = cond.at("lateral_mean").get<double>();
        row.lateral_std = cond.at("lateral_std").get<double>();
        report.rows.push_back(std::move(row));
    }

    std::ifstream csv_in(dir / "report.csv");
    const std::string stored((std::istreambuf_iterator<char>(csv_in)),
                             std::istreambuf_iterator<char>());
    const bool csv_ok = stored == report.render_csv();

    std::cout << report.render_text();
    if (!recount_ok || !csv_ok) {
        std::fprintf(stderr, "report audit failed: recount %s, csv %s\n",
                     recount_ok ? "ok" : "MISMATCH", csv_ok ? "ok" : "MISMATCH");
        return 2;
    }
    std::printf("audit ok: per-image recount and stored CSV both match\n");
    return 0;
}

}  // namespace
}  // namespace latvis

int main(int argc, char** argv) {
    using namespace latvis;
    CLI::App app{"Two-phase multi-predictor image classifier and experiment harness"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate the procedural multi-part dataset");
    std::string synth_out;
    int synth_images = 1600, synth_classes = 8, synth_size = 32;
    double synth_noise = 8.0;
    std::uint64_t synth_seed = 1;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--images", synth_images, "Number of images");
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--classes", synth_classes, "Number of classes");
    synth->add_option("--noise", synth_noise, "Gaussian noise sigma (native units)");
    synth->add_option("--size", synth_size, "Square image side");

    // train
    auto* train = app.add_subcommand("train", "Train a predictor bank on a dataset");
    std::string train_data, train_out, train_manifest;
    std::uint64_t train_seed = 1;
    std::vector<std::string> train_exclude;
    train->add_option("--data", train_data, "Dataset directory")->required();
    train->add_option("--out", train_out, "Model output directory")->required();
    train->add_option("--manifest", train_manifest, "Config manifest (JSON)");
    auto* train_seed_opt = train->add_option("--seed", train_seed, "Training seed");
    train->add_option("--exclude", train_exclude, "Ids to hold out")->delimiter(',');

    // attack
    auto* attack = app.add_subcommand("attack", "Emit adversarial copies of test images");
    std::string attack_data, attack_models, attack_name, attack_out;
    std::vector<std::string> attack_test;
    std::uint64_t attack_seed = 1;
    attack->add_option("--data", attack_data, "Dataset directory")->required();
    attack->add_option("--models", attack_models, "Trained model directory")->required();
    attack->add_option("--attack", attack_name, "fgsm-m|fgsm-s|itr-m|itr-s")->required();
    attack->add_option("--test", attack_test, "Test image ids")->required()->delimiter(',');
    attack->add_option("--out", attack_out, "Output directory")->required();
    attack->add_option("--seed", attack_seed, "Attack seed");

    // decide
    auto* decide_cmd = app.add_subcommand("decide", "Run one image and print its trace");
    std::string decide_data, decide_models, decide_image, decide_attacked;
    bool decide_parallel = false;
    decide_cmd->add_option("--data", decide_data, "Dataset directory")->required();
    decide_cmd->add_option("--models", decide_models, "Trained model directory")->required();
    decide_cmd->add_option("--image", decide_image, "Image id")->required();
    decide_cmd->add_option("--attacked", decide_attacked, "Attacked image directory");
    decide_cmd->add_flag("--parallel", decide_parallel, "Run attention on a worker thread");

    // run
    auto* run = app.add_subcommand("run", "Run the full cross-validated experiment");
    std::string run_manifest, run_out;
    std::uint64_t run_seed = 0;
    int run_jobs = 1;
    run->add_option("--manifest", run_manifest, "Experiment manifest (JSON)")->required();
    run->add_option("--out", run_out, "Output directory (overrides manifest)");
    auto* run_seed_opt = run->add_option("--seed", run_seed, "Seed override");
    run->add_option("--jobs", run_jobs, "Worker threads per decision (>1 enables parallel)");

    // replay
    auto* replay = app.add_subcommand("replay", "Replay golden cases and trace files");
    std::string replay_golden_path = "data/golden_cases.json";
    std::vector<std::string> replay_traces;
    replay->add_option("--golden", replay_golden_path, "Golden case fixture file");
    replay->add_option("--traces", replay_traces, "Trace .jsonl files")->delimiter(',');

    // report
    auto* report = app.add_subcommand("report", "Re-render and audit a run's report");
    std::string report_run;
    report->add_option("--run", report_run, "Run output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_out, synth_images, synth_seed, synth_classes, synth_noise,
                             synth_size);
        }
        if (train->parsed()) {
            return cmd_train(train_data, train_out, train_manifest, train_seed,
                             train_seed_opt->count() > 0, train_exclude);
        }
        if (attack->parsed()) {
            return cmd_attack(attack_data, attack_models, attack_name, attack_test, attack_out,
                              attack_seed);
        }
        if (decide_cmd->parsed()) {
            return cmd_decide(decide_data, decide_models, decide_image, decide_attacked,
                              decide_parallel);
        }
        if (run->parsed()) {
            return cmd_run(run_manifest, run_out, run_seed, run_seed_opt->count() > 0, run_jobs);
        }
        if (replay->parsed()) return cmd_replay(replay_golden_path, replay_traces);
        if (report->parsed()) return cmd_report(report_run);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
