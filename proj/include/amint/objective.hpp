#pragma once

#include <vector>

#include "amint/tensor.hpp"

namespace amint {

struct LossWeights {
    double lambda1 = 1.0;
    double lambda2 = 10.0;  // small-regime ratio lambda2/lambda1 = 10
    double l2_coeff = 1e-4;

    void validate() const;
};

// Running mean of |loss| used to keep the two task losses on one scale. The
// value is a constant with respect to differentiation: gradients of a
// normalized term are the raw gradients scaled by 1/ema_abs.
struct LossNormalizer {
    double ema_abs = 0.0;
    double momentum = 0.99;
    double floor = 1e-8;
    bool initialized = false;

    void update(double raw);
    double value() const { return initialized ? ema_abs : 1.0; }
};

struct MultiTaskLossOutput {
    double total = 0.0;
    double audited_raw = 0.0;
    double mint_raw = 0.0;
    double audited_normed = 0.0;
    double mint_normed = 0.0;
    double reg = 0.0;
};

// Mean softmax cross-entropy over the member sub-batch; also emits the logit
// gradient of the mean loss (softmax minus one-hot, divided by batch).
double audited_loss(const Tensor& logits, const std::vector<int>& labels);
double audited_loss_grad(const Tensor& logits, const std::vector<int>& labels, Tensor& dlogits);

// Mean binary cross-entropy over the mixed batch. Probabilities are clamped
// to [1e-7, 1-1e-7] before the log; the gradient is zero where the clamp is
// active.
double mint_loss(const Tensor& probs, const std::vector<float>& labels);
double mint_loss_grad(const Tensor& probs, const std::vector<float>& labels, Tensor& dprobs);

// Eq.-1 combination with already-updated normalizers:
// total = l1*aud/||aud|| + l2*mint/||mint|| + l2_coeff*sum w^2.
MultiTaskLossOutput combine(double audited_raw, double mint_raw, const LossNormalizer& norm_audited,
                            const LossNormalizer& norm_mint, const LossWeights& weights,
                            double param_sum_squares);

}  // namespace amint
