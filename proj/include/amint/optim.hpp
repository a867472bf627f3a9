#pragma once

#include <vector>

#include "amint/layers.hpp"
#include "amint/tensor.hpp"

namespace amint {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over a fixed parameter list. Moment buffers are keyed by position, so
// the list must not change between steps.
class Adam {
public:
    Adam(std::vector<ParamRef> params, AdamConfig cfg);
    void step();
    int64_t steps_taken() const { return t_; }

private:
    std::vector<ParamRef> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
};

// Adds the gradient of coeff * sum w^2 onto every parameter's grad buffer.
void add_l2_gradient(const std::vector<ParamRef>& params, double coeff);

// Deep copies of parameter values, for best-epoch snapshots.
std::vector<Tensor> snapshot_values(const std::vector<ParamRef>& params);
void restore_values(const std::vector<ParamRef>& params, const std::vector<Tensor>& snapshot);

}  // namespace amint
