#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "amint/data.hpp"
#include "amint/nets.hpp"
#include "amint/objective.hpp"
#include "amint/optim.hpp"

namespace amint {

enum class OptimizerKind { ADAM };

struct TrainConfig {
    double learning_rate = 1e-3;
    int max_epochs = 3;
    int early_stop_patience = 2;  // consecutive non-improving epochs tolerated
    int batch_size = 64;
    uint64_t seed = 1;
    LossWeights weights;
    OptimizerKind optimizer = OptimizerKind::ADAM;

    void validate() const;
};

struct StepMetrics {
    int epoch = 0;
    int step = 0;  // global step index within the run
    double audited_raw = 0.0;
    double mint_raw = 0.0;
    double audited_normed = 0.0;
    double mint_normed = 0.0;
    double reg = 0.0;
    double total = 0.0;
};

// Mint columns are zero for audited-only runs; audited_val_acc is zero for
// passive runs (the frozen backbone is not re-measured each epoch).
struct EpochRecord {
    int epoch = 0;
    double mint_fit_acc = 0.0;
    double mint_eval_acc = 0.0;
    double audited_val_acc = 0.0;
    double mean_total = 0.0;
    double mean_audited_raw = 0.0;
    double mean_mint_raw = 0.0;
};

struct TrainState {
    int epoch = 0;  // completed epochs
    std::vector<EpochRecord> history;
    double best_criterion = 0.0;
    int best_epoch = -1;  // -1 when no epoch ran
    bool early_stopped = false;
    std::string best_checkpoint;  // filled by the runner once the snapshot is saved
};

// The deterministic validation carve shared by every training path: from the
// MINT-fit member ids, holds out round(10%) of the full member count, chosen
// by the training seed. Returns (training ids, validation ids), both sorted.
// Exposed so downstream stages can tell which member records the trained
// model never saw.
std::pair<std::vector<int64_t>, std::vector<int64_t>> audited_validation_carve(
    const std::vector<SplitRecord>& members_fit, size_t member_count, uint64_t seed);

struct TrainHooks {
    std::function<void(const StepMetrics&)> on_step;
    std::function<void(const EpochRecord&)> on_epoch;
    // Chance-control hook: when set, the membership labels of every training
    // batch are re-shuffled from this stream, destroying the signal while
    // keeping batches balanced.
    Rng* shuffle_membership = nullptr;
};

// Joint training per Eq.-1 semantics: each step routes a balanced mixed batch
// so members reach both the class logits and the MINT head while externals
// reach the head only; the two raw losses update their normalizers before the
// combined objective is formed, and one optimizer step covers every trainable
// parameter. Members flagged for MINT evaluation stay out of the MINT loss but
// keep flowing through the audited loss via a small side stream, so their
// membership traces are real at evaluation time. A validation share of D
// (default 10%, carved deterministically from the MINT-fit members) is
// excluded from all training losses and scores audited_val_acc. Early stopping
// tracks the mean of mint_eval_acc and audited_val_acc with the configured
// patience and restores the best snapshot before returning. With lambda2 == 0
// the MINT path is skipped entirely; with lambda1 == 0 the audited path is.
TrainState train_active(EnhancedModel& model, const Dataset& ds, const SplitResult& split,
                        const TrainConfig& cfg, const TrainHooks& hooks = {});

// Standard supervised training of the backbone and classifier on the member
// records (minus the same deterministic validation carve). The MINT head of
// the returned model stays at initialization; only shared and audited-path
// parameters are optimized. Early stopping tracks audited_val_acc.
std::pair<EnhancedModel, TrainState> train_audited_only(const BackboneSpec& spec, const Dataset& ds,
                                                        const std::vector<SplitRecord>& members,
                                                        const TrainConfig& cfg,
                                                        const TapSetup setup = TapSetup::ENTRY,
                                                        const TrainHooks& hooks = {});

// Post-hoc membership head over activation maps extracted from a frozen,
// already-trained model at the model's own tap points. Only head parameters
// are optimized; the frozen parameters are verified bit-identical afterwards.
// The validation carve is a pure function of the member id set and the seed,
// so passive training run with the same seed as the audited-only run excludes
// exactly the member records that model never saw. Early stopping tracks
// mint_eval_acc.
std::pair<MintHead, TrainState> train_passive_mint(EnhancedModel& frozen, const Dataset& ds,
                                                   const SplitResult& split,
                                                   const MintHeadSpec& head_spec,
                                                   const TrainConfig& cfg,
                                                   const TrainHooks& hooks = {});

// Per-parameter-group gradient norms under (a) a members-only audited loss
// and (b) an externals-only MINT loss, each from a zeroed state.
struct RoutingReport {
    double audited_pass_shared = 0.0;
    double audited_pass_audited = 0.0;
    double audited_pass_mint = 0.0;
    double mint_pass_shared = 0.0;
    double mint_pass_audited = 0.0;
    double mint_pass_mint = 0.0;
};

RoutingReport gradient_routing_audit(EnhancedModel& model, const MixedBatch& batch);

// Throws invariant_error when current parameter values differ from snapshot.
void verify_params_unchanged(const std::vector<ParamRef>& params,
                             const std::vector<Tensor>& snapshot, const std::string& what);

}  // namespace amint
