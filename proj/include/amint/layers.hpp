#pragma once

#include <memory>
#include <string>
#include <vector>

#include "amint/rng.hpp"
#include "amint/tensor.hpp"

namespace amint {

// Named view of one trainable tensor and its gradient buffer.
struct ParamRef {
    std::string name;
    Tensor* value = nullptr;
    Tensor* grad = nullptr;
};

// A layer owns its parameters, gradients, and whatever forward-pass caches its
// backward pass needs. The surrounding Sequential owns the activations, so
// backward receives both the layer's input x and its output y.
class Layer {
public:
    virtual ~Layer() = default;
    virtual void forward(const Tensor& x, Tensor& y, bool training) = 0;
    // Gradients are overwritten, not accumulated; dy may be modified in place.
    virtual void backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor& dx,
                          bool need_dx) = 0;
    virtual void collect_params(const std::string& prefix, std::vector<ParamRef>& out) {}
    virtual void init(Rng& rng) {}
};

// 3x3 stride-1 same-padding convolution over NHWC, optional fused ReLU.
// Weights are stored patch-major ([9*in_ch, out_ch]) for im2col GEMMs.
class Conv3x3 : public Layer {
public:
    Conv3x3(int in_ch, int out_ch, bool relu);
    void forward(const Tensor& x, Tensor& y, bool training) override;
    void backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor& dx, bool need_dx) override;
    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void init(Rng& rng) override;

    int in_ch() const { return in_ch_; }
    int out_ch() const { return out_ch_; }

private:
    int in_ch_, out_ch_;
    bool relu_;
    Tensor w_, b_, gw_, gb_;
    Tensor cols_;  // cached im2col of the last forward input
};

// 2x2 stride-2 max pooling; odd trailing rows/columns are dropped.
class MaxPool2 : public Layer {
public:
    void forward(const Tensor& x, Tensor& y, bool training) override;
    void backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor& dx, bool need_dx) override;

private:
    std::vector<int> argmax_;
};

// [N,H,W,C] -> [N,C] mean over the spatial grid.
class GlobalAvgPool : public Layer {
public:
    void forward(const Tensor& x, Tensor& y, bool training) override;
    void backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor& dx, bool need_dx) override;
};

class Linear : public Layer {
public:
    Linear(int in_features, int out_features, bool relu);
    void forward(const Tensor& x, Tensor& y, bool training) override;
    void backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor& dx, bool need_dx) override;
    void collect_params(const std::string& prefix, std::vector<ParamRef>& out) override;
    void init(Rng& rng) override;

private:
    int in_f_, out_f_;
    bool relu_;
    Tensor w_, b_, gw_, gb_;
};

// Inverted dropout; identity when not training. Draws from an external stream
// so the whole model shares one seeded source.
class Dropout : public Layer {
public:
    Dropout(double rate, Rng* rng);
    void forward(const Tensor& x, Tensor& y, bool training) override;
    void backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor& dx, bool need_dx) override;

private:
    double rate_;
    Rng* rng_;
    std::vector<float> mask_;
    bool masked_ = false;
};

class Sigmoid : public Layer {
public:
    void forward(const Tensor& x, Tensor& y, bool training) override;
    void backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor& dx, bool need_dx) override;
};

// Extra gradient added to one layer's output during the backward sweep, on
// top of whatever flows down from the layers above it.
struct GradInjection {
    int layer_index = 0;
    const Tensor* grad = nullptr;
};

// Straight-line stack that owns per-layer activations, so intermediate maps
// can be read out (taps) and extra gradients injected at interior layers.
class Sequential {
public:
    void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
    size_t size() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }

    const Tensor& forward(const Tensor& x, bool training);
    // Activation of layer i from the last forward.
    const Tensor& activation(size_t i) const { return acts_.at(i); }
    const Tensor& output() const { return acts_.back(); }

    // dy_last may be empty when injections alone drive the sweep.
    void backward(const Tensor& dy_last, const std::vector<GradInjection>& injections,
                  Tensor& dx, bool need_dx);
    void backward(const Tensor& dy_last, Tensor& dx, bool need_dx) {
        backward(dy_last, {}, dx, need_dx);
    }

    void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
    void init(Rng& rng);

private:
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<Tensor> acts_;
    Tensor input_;  // copy of the last forward input, needed by layer 0's backward
    bool ran_ = false;
};

// Row manipulation helpers for routing sub-batches between paths.
Tensor gather_rows(const Tensor& x, const std::vector<int>& rows);
void scatter_add_rows(const Tensor& src, const std::vector<int>& rows, Tensor& dst);
Tensor concat_cols(const Tensor& a, const Tensor& b);
void split_cols(const Tensor& dcat, Tensor& da, Tensor& db);

}  // namespace amint
