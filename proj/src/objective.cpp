#include "amint/objective.hpp"

#include <algorithm>
#include <cmath>

#include "amint/common.hpp"

namespace amint {

void LossWeights::validate() const {
    if (!(lambda1 >= 0.0) || !std::isfinite(lambda1))
        throw config_error("LossWeights: lambda1 must be nonnegative and finite");
    if (!(lambda2 >= 0.0) || !std::isfinite(lambda2))
        throw config_error("LossWeights: lambda2 must be nonnegative and finite");
    if (lambda1 == 0.0 && lambda2 == 0.0)
        throw config_error("LossWeights: at least one of lambda1 and lambda2 must be positive");
    if (!(l2_coeff >= 0.0) || !std::isfinite(l2_coeff))
        throw config_error("LossWeights: l2_coeff must be nonnegative and finite");
}

void LossNormalizer::update(double raw) {
    if (!std::isfinite(raw)) throw numeric_error("LossNormalizer: non-finite loss value");
    double a = std::abs(raw);
    if (!initialized) {
        ema_abs = std::max(a, floor);
        initialized = true;
        return;
    }
    ema_abs = std::max(momentum * ema_abs + (1.0 - momentum) * a, floor);
}

namespace {

void check_member_batch(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.shape().size() != 2) throw dim_error("audited_loss: logits must be [N,K]");
    if (labels.empty()) throw config_error("audited_loss: empty member sub-batch");
    if (static_cast<size_t>(logits.dim(0)) != labels.size())
        throw dim_error("audited_loss: logits/labels size mismatch");
    for (int l : labels)
        if (l < 0 || l >= logits.dim(1)) throw config_error("audited_loss: label out of range");
}

// Per-row log-softmax denominator, numerically stable.
double row_logsumexp(const float* row, int k) {
    float m = row[0];
    for (int i = 1; i < k; ++i) m = std::max(m, row[i]);
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += std::exp(static_cast<double>(row[i]) - m);
    return m + std::log(s);
}

constexpr double kProbClamp = 1e-7;

}  // namespace

double audited_loss(const Tensor& logits, const std::vector<int>& labels) {
    check_member_batch(logits, labels);
    int n = logits.dim(0), k = logits.dim(1);
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
        const float* row = logits.data() + static_cast<size_t>(r) * k;
        total += row_logsumexp(row, k) - row[labels[static_cast<size_t>(r)]];
    }
    return total / n;
}

double audited_loss_grad(const Tensor& logits, const std::vector<int>& labels, Tensor& dlogits) {
    check_member_batch(logits, labels);
    int n = logits.dim(0), k = logits.dim(1);
    dlogits.resize({n, k});
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
        const float* row = logits.data() + static_cast<size_t>(r) * k;
        double lse = row_logsumexp(row, k);
        total += lse - row[labels[static_cast<size_t>(r)]];
        float* drow = dlogits.data() + static_cast<size_t>(r) * k;
        for (int i = 0; i < k; ++i)
            drow[i] = static_cast<float>(std::exp(static_cast<double>(row[i]) - lse) / n);
        drow[labels[static_cast<size_t>(r)]] -= 1.0f / static_cast<float>(n);
    }
    return total / n;
}

namespace {

void check_mint_batch(const Tensor& probs, const std::vector<float>& labels) {
    if (probs.shape().size() != 1) throw dim_error("mint_loss: probabilities must be [N]");
    if (labels.empty()) throw config_error("mint_loss: empty batch");
    if (static_cast<size_t>(probs.dim(0)) != labels.size())
        throw dim_error("mint_loss: probs/labels size mismatch");
    for (float t : labels)
        if (t != 0.0f && t != 1.0f) throw config_error("mint_loss: labels must be binary");
}

}  // namespace

double mint_loss(const Tensor& probs, const std::vector<float>& labels) {
    check_mint_batch(probs, labels);
    size_t n = labels.size();
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double p = std::clamp(static_cast<double>(probs[i]), kProbClamp, 1.0 - kProbClamp);
        total += labels[i] > 0.5f ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(n);
}

double mint_loss_grad(const Tensor& probs, const std::vector<float>& labels, Tensor& dprobs) {
    check_mint_batch(probs, labels);
    size_t n = labels.size();
    dprobs.resize({static_cast<int>(n)});
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double p_raw = probs[i];
        double p = std::clamp(p_raw, kProbClamp, 1.0 - kProbClamp);
        bool clamped = p != p_raw;
        if (labels[i] > 0.5f) {
            total += -std::log(p);
            dprobs[i] = clamped ? 0.0f : static_cast<float>(-1.0 / (p * static_cast<double>(n)));
        } else {
            total += -std::log(1.0 - p);
            dprobs[i] = clamped ? 0.0f : static_cast<float>(1.0 / ((1.0 - p) * static_cast<double>(n)));
        }
    }
    return total / static_cast<double>(n);
}

MultiTaskLossOutput combine(double audited_raw, double mint_raw, const LossNormalizer& norm_audited,
                            const LossNormalizer& norm_mint, const LossWeights& weights,
                            double param_sum_squares) {
    weights.validate();
    MultiTaskLossOutput out;
    out.audited_raw = audited_raw;
    out.mint_raw = mint_raw;
    out.audited_normed = audited_raw / norm_audited.value();
    out.mint_normed = mint_raw / norm_mint.value();
    out.reg = weights.l2_coeff * param_sum_squares;
    out.total = weights.lambda1 * out.audited_normed + weights.lambda2 * out.mint_normed + out.reg;
    if (!std::isfinite(out.total)) throw numeric_error("combine: non-finite total loss");
    return out;
}

}  // namespace amint
