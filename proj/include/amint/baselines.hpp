#pragma once

#include <filesystem>
#include <vector>

#include "amint/data.hpp"
#include "amint/nets.hpp"

namespace amint {

struct AttackScore {
    int64_t sample_id = 0;
    double score = 0.0;  // higher = more member-like
    bool true_membership = false;
};

enum class ThresholdDirection { SCORE_ABOVE_IS_MEMBER };

struct ThresholdRule {
    double threshold = 0.0;
    ThresholdDirection direction = ThresholdDirection::SCORE_ABOVE_IS_MEMBER;
    double calibration_accuracy = 0.5;
    bool degenerate = false;  // calibration scores were single-valued
};

// Per-sample scores for the loss-threshold attack: minus the sample's own
// cross-entropy, so members (low loss) score high. Runs against the plain
// audited path; attacks never see the membership head. Output sorted by
// sample_id.
std::vector<AttackScore> score_loss_attack(EnhancedModel& model, const Dataset& ds,
                                           const std::vector<SplitRecord>& records);

// Confidence-threshold attack: the maximum softmax probability per sample.
std::vector<AttackScore> score_confidence_attack(EnhancedModel& model, const Dataset& ds,
                                                 const std::vector<SplitRecord>& records);

// Threshold maximizing balanced accuracy over the calibration scores, swept
// over midpoints between adjacent distinct scores (plus an accept-everything
// candidate); ties break toward the smaller threshold. Membership is
// predicted for scores strictly above the threshold. Single-valued scores
// yield a degenerate rule with accuracy 0.5.
ThresholdRule calibrate_threshold(const std::vector<AttackScore>& calibration);

// Balanced accuracy of the rule on held-out scores.
double evaluate_attack(const ThresholdRule& rule, const std::vector<AttackScore>& eval_scores);

struct AttackOutcome {
    ThresholdRule rule;
    double eval_accuracy = 0.0;
};

// Calibrate on FIT scores, evaluate on EVAL scores, enforcing id disjointness
// between the two sets.
AttackOutcome run_threshold_attack(const std::vector<AttackScore>& fit_scores,
                                   const std::vector<AttackScore>& eval_scores);

void write_scores_csv(const std::filesystem::path& path, const std::vector<AttackScore>& scores);
std::vector<AttackScore> read_scores_csv(const std::filesystem::path& path);

}  // namespace amint
