#include "amint/optim.hpp"

#include <cmath>

#include "amint/common.hpp"

namespace amint {

Adam::Adam(std::vector<ParamRef> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.value->shape());
        v_.emplace_back(p.value->shape());
    }
}

void Adam::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
    float inv_bc1 = static_cast<float>(1.0 / bc1), inv_bc2 = static_cast<float>(1.0 / bc2);
    float lr = static_cast<float>(cfg_.lr), eps = static_cast<float>(cfg_.eps);
    for (size_t i = 0; i < params_.size(); ++i) {
        float* w = params_[i].value->data();
        const float* g = params_[i].grad->data();
        float* m = m_[i].data();
        float* v = v_[i].data();
        size_t n = params_[i].value->numel();
        for (size_t j = 0; j < n; ++j) {
            m[j] = b1 * m[j] + (1.0f - b1) * g[j];
            v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
            float mhat = m[j] * inv_bc1;
            float vhat = v[j] * inv_bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void add_l2_gradient(const std::vector<ParamRef>& params, double coeff) {
    if (coeff == 0.0) return;
    float c2 = static_cast<float>(2.0 * coeff);
    for (const auto& p : params) {
        float* g = p.grad->data();
        const float* w = p.value->data();
        for (size_t j = 0; j < p.value->numel(); ++j) g[j] += c2 * w[j];
    }
}

std::vector<Tensor> snapshot_values(const std::vector<ParamRef>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(*p.value);
    return out;
}

void restore_values(const std::vector<ParamRef>& params, const std::vector<Tensor>& snapshot) {
    if (params.size() != snapshot.size()) throw dim_error("restore_values: size mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i].value->same_shape(snapshot[i]))
            throw dim_error("restore_values: shape mismatch at " + params[i].name);
        *params[i].value = snapshot[i];
    }
}

}  // namespace amint
