#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "amint/config.hpp"
#include "amint/eval.hpp"

namespace amint {

struct RunResult {
    std::filesystem::path out_dir;
    std::vector<MetricRecord> records;
};

// Executes every method listed in cfg.methods against one dataset, split, and
// master seed, leaving the full artifact set under cfg.out_dir: manifest.json
// (written with status "running" before work starts, finalized "complete"),
// split.csv, per-stage step and epoch CSVs, checkpoints, attack score dumps,
// and results.csv with one row per method. Passive and attack stages share
// one audited-only model: loaded from cfg.audited_checkpoint when that is set
// (a missing file is then an error, auto-training is disabled), otherwise
// trained once here. An external checkpoint must come from a run with the
// same master seed and split, or the attack calibration records will not
// match what the model actually trained on.
RunResult run_experiment(const ExperimentConfig& cfg);

// Scans results_dir recursively for results.csv files, aggregates every
// record, and writes report.txt plus results_all.csv under out_dir. File
// discovery order never affects the output.
ExperimentReport run_report(const std::filesystem::path& results_dir,
                            const std::filesystem::path& out_dir);

// SMOKE: 1,000/1,000 member/external records, 3 fixed epochs. DESK:
// 10,000/10,000 with early stopping.
enum class ReproScale { SMOKE, DESK };

std::string to_string(ReproScale s);
ReproScale repro_scale_from_string(const std::string& s);

// The scale's standard training configuration applied to one dataset.
ExperimentConfig reproduce_base_config(ReproScale scale, const std::string& dataset,
                                       const std::string& data_root);

struct ReproduceResult {
    std::filesystem::path out_dir;
    ExperimentReport report;
};

// End-to-end comparison pipeline at the chosen scale, three seeds per cell
// (master_seed, +1, +2): on mnist the three-setup active grid plus passive
// and both threshold attacks, on cifar10 the active/attack comparison, then
// the aggregated report under out_dir. Any stage failure is rethrown with the
// stage name prefixed. jobs is validated but stages run sequentially in this
// process.
ReproduceResult run_reproduce(ReproScale scale, const std::filesystem::path& out_dir,
                              uint64_t master_seed, int jobs, const std::string& data_root = "");

}  // namespace amint
