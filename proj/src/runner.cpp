#include "amint/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>

#include "amint/baselines.hpp"
#include "amint/checkpoint.hpp"
#include "amint/train.hpp"

namespace amint {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Streams step and epoch metrics to CSV as training runs; a fixed format
// keeps reruns byte-identical.
class MetricsWriter {
public:
    MetricsWriter(const fs::path& steps_path, const fs::path& epochs_path) {
        steps_.open(steps_path, std::ios::binary);
        epochs_.open(epochs_path, std::ios::binary);
        if (!steps_ || !epochs_)
            throw data_error("cannot open metrics files under " +
                             steps_path.parent_path().string());
        steps_ << "epoch,step,audited_raw,mint_raw,audited_normed,mint_normed,reg,total\n";
        epochs_ << "epoch,mint_fit_acc,mint_eval_acc,audited_val_acc,mean_total,"
                   "mean_audited_raw,mean_mint_raw\n";
    }

    TrainHooks hooks() {
        TrainHooks h;
        h.on_step = [this](const StepMetrics& m) {
            char line[256];
            std::snprintf(line, sizeof(line), "%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                          m.epoch, m.step, m.audited_raw, m.mint_raw, m.audited_normed,
                          m.mint_normed, m.reg, m.total);
            steps_ << line;
        };
        h.on_epoch = [this](const EpochRecord& r) {
            char line[256];
            std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.epoch,
                          r.mint_fit_acc, r.mint_eval_acc, r.audited_val_acc, r.mean_total,
                          r.mean_audited_raw, r.mean_mint_raw);
            epochs_ << line;
        };
        return h;
    }

    void close() {
        steps_.close();
        epochs_.close();
        if (steps_.fail() || epochs_.fail()) throw data_error("failed writing metrics files");
    }

private:
    std::ofstream steps_, epochs_;
};

struct EvalSets {
    Tensor mint_images;                // EVAL members ++ EVAL externals
    std::vector<float> mint_labels;    // 1 for members, 0 for externals
    Tensor test_images;                // official test split
    std::vector<int> test_labels;
};

EvalSets build_eval_sets(const DatasetHandle& handle, const SplitResult& split) {
    EvalSets out;
    auto members_eval = filter_mint(split.members, MintSplit::EVAL);
    auto externals_eval = filter_mint(split.externals, MintSplit::EVAL);
    auto ids = ids_of(members_eval);
    auto ext_ids = ids_of(externals_eval);
    ids.insert(ids.end(), ext_ids.begin(), ext_ids.end());
    out.mint_images = gather_images(handle.train_pool, ids);
    out.mint_labels.assign(members_eval.size(), 1.0f);
    out.mint_labels.resize(ids.size(), 0.0f);

    std::vector<int64_t> test_ids(static_cast<size_t>(handle.test.count()));
    for (size_t i = 0; i < test_ids.size(); ++i) test_ids[i] = static_cast<int64_t>(i);
    out.test_images = gather_images(handle.test, test_ids);
    out.test_labels = gather_labels(handle.test, test_ids);
    return out;
}

json rule_to_json(const ThresholdRule& rule) {
    return {{"threshold", rule.threshold},
            {"calibration_accuracy", rule.calibration_accuracy},
            {"degenerate", rule.degenerate}};
}

// One experiment's mutable state, so the method loop can share the lazily
// built audited-only model.
struct ExperimentContext {
    const ExperimentConfig& cfg;
    const DatasetHandle& handle;
    const BackboneSpec& spec;
    TapSetup setup;
    const SplitResult& split;
    TrainConfig train;
    fs::path out;

    std::unique_ptr<EnhancedModel> audited_model;
    double audited_test_acc = 0.0;

    void ensure_audited_model(EvalSets& sets) {
        if (audited_model) return;
        if (!cfg.audited_checkpoint.empty()) {
            fs::path p = cfg.audited_checkpoint;
            if (!fs::exists(p))
                throw data_error("audited checkpoint " + p.string() +
                                 " not found; auto-training is disabled when the path is set");
            audited_model = load_enhanced(p);
        } else {
            MetricsWriter writer(out / "train_audited_steps.csv", out / "train_audited_epochs.csv");
            auto trained =
                train_audited_only(spec, handle.train_pool, split.members, train, setup,
                                   writer.hooks());
            writer.close();
            audited_model = std::make_unique<EnhancedModel>(std::move(trained.first));
            save_enhanced(out / "audited_model.ckpt", *audited_model,
                          derive_seed(train.seed, "model-init"));
        }
        audited_test_acc = audited_accuracy(*audited_model, sets.test_images, sets.test_labels);
    }
};

MetricRecord run_active_stage(ExperimentContext& ctx, EvalSets& sets) {
    uint64_t init_seed = derive_seed(ctx.cfg.seed, "model-init");
    EnhancedModel model(ctx.spec, ctx.setup, ctx.cfg.head, init_seed);
    MetricsWriter writer(ctx.out / "train_active_steps.csv", ctx.out / "train_active_epochs.csv");
    train_active(model, ctx.handle.train_pool, ctx.split, ctx.train, writer.hooks());
    writer.close();
    save_enhanced(ctx.out / "active_model.ckpt", model, init_seed);

    MetricRecord rec;
    rec.method = Method::ACTIVE;
    rec.setup = ctx.cfg.setup;
    rec.dataset = ctx.cfg.dataset;
    rec.seed = ctx.cfg.seed;
    rec.mint_acc = mint_accuracy(model, sets.mint_images, sets.mint_labels);
    rec.audited_acc = audited_accuracy(model, sets.test_images, sets.test_labels);
    return rec;
}

MetricRecord run_passive_stage(ExperimentContext& ctx, EvalSets& sets) {
    ctx.ensure_audited_model(sets);
    MetricsWriter writer(ctx.out / "train_passive_steps.csv", ctx.out / "train_passive_epochs.csv");
    auto trained = train_passive_mint(*ctx.audited_model, ctx.handle.train_pool, ctx.split,
                                      ctx.cfg.head, ctx.train, writer.hooks());
    writer.close();
    MintHead& head = trained.first;
    const TapConfig& taps = ctx.audited_model->tap_config();
    MapShape shape_a = tap_output_shape(ctx.audited_model->spec(), taps.taps[0]);
    MapShape shape_b = tap_output_shape(ctx.audited_model->spec(), taps.taps[1]);
    save_mint_head(ctx.out / "passive_head.ckpt", head, shape_a.c, shape_b.c,
                   derive_seed(ctx.train.seed, "passive-dropout"));

    MetricRecord rec;
    rec.method = Method::PASSIVE;
    rec.setup = ctx.cfg.setup;
    rec.dataset = ctx.cfg.dataset;
    rec.seed = ctx.cfg.seed;
    rec.mint_acc = mint_accuracy(*ctx.audited_model, head, sets.mint_images, sets.mint_labels);
    rec.audited_acc = ctx.audited_test_acc;
    return rec;
}

MetricRecord run_attack_stage(ExperimentContext& ctx, EvalSets& sets, Method method, json& rules) {
    ctx.ensure_audited_model(sets);

    // Calibration uses only records whose membership label matches what the
    // audited-only model actually trained on, so the validation carve is
    // excluded on the member side.
    auto members_fit = filter_mint(ctx.split.members, MintSplit::FIT);
    auto carve = audited_validation_carve(members_fit, ctx.split.members.size(), ctx.train.seed);
    const std::vector<int64_t>& val_ids = carve.second;
    std::vector<SplitRecord> fit_records;
    for (const auto& r : members_fit)
        if (!std::binary_search(val_ids.begin(), val_ids.end(), r.id)) fit_records.push_back(r);
    for (const auto& r : filter_mint(ctx.split.externals, MintSplit::FIT)) fit_records.push_back(r);
    std::vector<SplitRecord> eval_records = filter_mint(ctx.split.members, MintSplit::EVAL);
    for (const auto& r : filter_mint(ctx.split.externals, MintSplit::EVAL))
        eval_records.push_back(r);

    auto score = [&](const std::vector<SplitRecord>& records) {
        return method == Method::MIA_LOSS
                   ? score_loss_attack(*ctx.audited_model, ctx.handle.train_pool, records)
                   : score_confidence_attack(*ctx.audited_model, ctx.handle.train_pool, records);
    };
    std::vector<AttackScore> fit_scores = score(fit_records);
    std::vector<AttackScore> eval_scores = score(eval_records);
    const std::string tag = to_string(method);
    write_scores_csv(ctx.out / (tag + "_fit.csv"), fit_scores);
    write_scores_csv(ctx.out / (tag + "_eval.csv"), eval_scores);

    AttackOutcome outcome = run_threshold_attack(fit_scores, eval_scores);
    rules[tag] = rule_to_json(outcome.rule);

    MetricRecord rec;
    rec.method = method;
    rec.setup = "n/a";
    rec.dataset = ctx.cfg.dataset;
    rec.seed = ctx.cfg.seed;
    rec.mint_acc = outcome.eval_accuracy;
    rec.audited_acc = ctx.audited_test_acc;
    return rec;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::path out = cfg.out_dir;
    fs::create_directories(out);

    fs::path ds_dir = resolve_data_root(cfg) / cfg.dataset;
    if (!fs::exists(ds_dir))
        throw data_error("dataset directory " + ds_dir.string() +
                         " not found; generate it with amint-datagen");
    DatasetHandle handle = load_dataset(cfg.dataset, ds_dir);
    const Dataset& pool = handle.train_pool;

    BackboneSpec spec;
    if (cfg.backbone_blocks) {
        spec.blocks = *cfg.backbone_blocks;
        spec.input_h = pool.height;
        spec.input_w = pool.width;
        spec.input_c = pool.channels;
    } else {
        spec = BackboneSpec::desk_default(pool.height, pool.width, pool.channels);
    }
    spec.num_classes = pool.num_classes;
    spec.validate();
    TapSetup setup = tap_setup_from_string(cfg.setup);

    SplitPlan plan = cfg.split;
    plan.seed = derive_seed(cfg.seed, "split");
    SplitResult split = make_split(handle, plan);
    if (cfg.member_count > 0)
        split.members =
            subsample(pool, split.members, cfg.member_count,
                      derive_seed(cfg.seed, "subsample-members"))
                .records;
    if (cfg.external_count > 0)
        split.externals =
            subsample(pool, split.externals, cfg.external_count,
                      derive_seed(cfg.seed, "subsample-externals"))
                .records;
    save_split_manifest(out / "split.csv", split);

    TrainConfig train = cfg.train;
    train.seed = derive_seed(cfg.seed, "train");

    RunManifest manifest;
    manifest.toolkit_version = kToolkitVersion;
    manifest.status = "running";
    manifest.config_echo = config_to_json(cfg);
    manifest.seeds = {{"master", cfg.seed},
                      {"split", plan.seed},
                      {"subsample-members", derive_seed(cfg.seed, "subsample-members")},
                      {"subsample-externals", derive_seed(cfg.seed, "subsample-externals")},
                      {"train", train.seed},
                      {"model-init", derive_seed(cfg.seed, "model-init")}};
    manifest.dataset_checksums = handle.file_checksums;
    save_manifest(out / "manifest.json", manifest);

    ExperimentContext ctx{cfg, handle, spec, setup, split, train, out, nullptr, 0.0};
    EvalSets sets = build_eval_sets(handle, split);

    std::vector<MetricRecord> records;
    json rules = json::object();
    for (Method method : cfg.methods) {
        auto t0 = std::chrono::steady_clock::now();
        switch (method) {
            case Method::ACTIVE: records.push_back(run_active_stage(ctx, sets)); break;
            case Method::PASSIVE: records.push_back(run_passive_stage(ctx, sets)); break;
            case Method::MIA_LOSS:
            case Method::MIA_CONF:
                records.push_back(run_attack_stage(ctx, sets, method, rules));
                break;
        }
        manifest.timings.push_back({to_string(method), seconds_since(t0)});
    }
    if (!rules.empty()) {
        std::ofstream rf(out / "attack_rules.json", std::ios::binary);
        rf << rules.dump(2) << "\n";
        if (!rf) throw data_error("failed writing attack_rules.json");
    }

    write_results_csv(out / "results.csv", records);
    manifest.status = "complete";
    save_manifest(out / "manifest.json", manifest);
    return {out, records};
}

ExperimentReport run_report(const fs::path& results_dir, const fs::path& out_dir) {
    if (!fs::is_directory(results_dir))
        throw config_error("results directory " + results_dir.string() + " does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(results_dir))
        if (entry.is_regular_file() && entry.path().filename() == "results.csv")
            files.push_back(entry.path());
    if (files.empty())
        throw config_error("no results files under " + results_dir.string());
    std::sort(files.begin(), files.end());

    std::vector<MetricRecord> all;
    for (const auto& f : files) {
        auto part = read_results_csv(f);
        all.insert(all.end(), part.begin(), part.end());
    }
    ExperimentReport report = build_report(std::move(all));

    fs::create_directories(out_dir);
    std::ofstream txt(out_dir / "report.txt", std::ios::binary);
    txt << report.full_text();
    if (!txt) throw data_error("failed writing report.txt");
    write_results_csv(out_dir / "results_all.csv", report.records);
    return report;
}

std::string to_string(ReproScale s) { return s == ReproScale::SMOKE ? "smoke" : "desk"; }

ReproScale repro_scale_from_string(const std::string& s) {
    if (s == "smoke") return ReproScale::SMOKE;
    if (s == "desk") return ReproScale::DESK;
    throw config_error("unknown scale: " + s + " (expected smoke|desk)");
}

ExperimentConfig reproduce_base_config(ReproScale scale, const std::string& dataset,
                                       const std::string& data_root) {
    ExperimentConfig cfg;
    cfg.dataset = dataset;
    cfg.dataset_root = data_root;
    if (scale == ReproScale::SMOKE) {
        cfg.member_count = 1000;
        cfg.external_count = 1000;
        cfg.train.max_epochs = 3;
        cfg.train.early_stop_patience = 2;
    } else {
        cfg.member_count = 10000;
        cfg.external_count = 10000;
        cfg.train.max_epochs = 8;
        cfg.train.early_stop_patience = 2;
    }
    return cfg;
}

ReproduceResult run_reproduce(ReproScale scale, const fs::path& out_dir, uint64_t master_seed,
                              int jobs, const std::string& data_root) {
    if (jobs < 1) throw config_error("reproduce: jobs must be at least 1");
    fs::create_directories(out_dir);

    struct Stage {
        std::string name;
        ExperimentConfig cfg;
    };
    std::vector<Stage> stages;
    for (uint64_t i = 0; i < 3; ++i) {
        uint64_t seed = master_seed + i;
        std::string suffix = "-s" + std::to_string(i);
        for (const char* setup : {"entry", "middle", "output"}) {
            ExperimentConfig cfg = reproduce_base_config(scale, "mnist", data_root);
            cfg.seed = seed;
            cfg.setup = setup;
            cfg.methods = {Method::ACTIVE};
            stages.push_back({"mnist-active-" + std::string(setup) + suffix, cfg});
        }
        {
            ExperimentConfig cfg = reproduce_base_config(scale, "mnist", data_root);
            cfg.seed = seed;
            cfg.methods = {Method::PASSIVE, Method::MIA_LOSS, Method::MIA_CONF};
            stages.push_back({"mnist-victim" + suffix, cfg});
        }
        {
            ExperimentConfig cfg = reproduce_base_config(scale, "cifar10", data_root);
            cfg.seed = seed;
            cfg.methods = {Method::ACTIVE};
            stages.push_back({"cifar10-active-entry" + suffix, cfg});
        }
        {
            ExperimentConfig cfg = reproduce_base_config(scale, "cifar10", data_root);
            cfg.seed = seed;
            cfg.methods = {Method::MIA_LOSS, Method::MIA_CONF};
            stages.push_back({"cifar10-victim" + suffix, cfg});
        }
    }

    RunManifest manifest;
    manifest.toolkit_version = kToolkitVersion;
    manifest.status = "running";
    manifest.config_echo = {{"scale", to_string(scale)},
                            {"master_seed", master_seed},
                            {"jobs", jobs}};
    for (const auto& stage : stages) manifest.seeds[stage.name] = stage.cfg.seed;
    save_manifest(out_dir / "manifest.json", manifest);

    for (auto& stage : stages) {
        stage.cfg.out_dir = (out_dir / "runs" / stage.name).string();
        auto t0 = std::chrono::steady_clock::now();
        try {
            run_experiment(stage.cfg);
        } catch (const config_error& e) {
            throw config_error("reproduce stage " + stage.name + ": " + e.what());
        } catch (const std::exception& e) {
            throw data_error("reproduce stage " + stage.name + ": " + e.what());
        }
        manifest.timings.push_back({stage.name, seconds_since(t0)});
        save_manifest(out_dir / "manifest.json", manifest);
    }

    ExperimentReport report = run_report(out_dir / "runs", out_dir);
    manifest.status = "complete";
    save_manifest(out_dir / "manifest.json", manifest);
    return {out_dir, report};
}

}  // namespace amint
