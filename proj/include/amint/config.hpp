#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "amint/data.hpp"
#include "amint/eval.hpp"
#include "amint/nets.hpp"
#include "amint/train.hpp"

namespace amint {

// One experiment = one dataset, one tap setup, one method list, one master
// seed. Stage seeds (split, subsample, training, model init) are derived from
// the master seed, so the file plus the dataset pins the whole run.
struct ExperimentConfig {
    std::string dataset;       // mnist | cifar10
    std::string dataset_root;  // empty: resolve via AMINT_DATA_ROOT, then ./data
    uint64_t seed = 1;
    std::string out_dir;
    size_t member_count = 0;    // 0: use every available member record
    size_t external_count = 0;  // 0: use every available external record
    std::string setup = "entry";
    std::vector<Method> methods{Method::ACTIVE};
    // Path to an existing audited-only checkpoint for the passive and attack
    // stages. Empty: those stages train the audited-only model themselves.
    std::string audited_checkpoint;
    SplitPlan split;  // split.seed is ignored in the file; derived from seed
    std::optional<std::vector<ConvBlockSpec>> backbone_blocks;  // absent: desk default
    MintHeadSpec head;
    TrainConfig train;  // train.seed likewise derived from the master seed

    void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

// Resolves the directory holding dataset roots: the config's dataset_root if
// set, else $AMINT_DATA_ROOT, else ./data.
std::filesystem::path resolve_data_root(const ExperimentConfig& cfg);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

// Written to the output directory before any training starts (status
// "running") and rewritten once the run finishes (status "complete"). The
// config echo plus the resolved seeds and dataset checksums pin a re-run.
struct RunManifest {
    std::string toolkit_version;
    std::string status;  // running | complete
    nlohmann::json config_echo;
    std::map<std::string, uint64_t> seeds;
    std::vector<std::pair<std::string, uint32_t>> dataset_checksums;
    std::vector<StageTiming> timings;
};

void save_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest load_manifest(const std::filesystem::path& path);

}  // namespace amint
