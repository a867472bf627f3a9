#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "amint/common.hpp"

namespace amint {

// Dense row-major float32 tensor. Image batches use NHWC layout.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) { resize(std::move(shape)); }
    Tensor(std::initializer_list<int> shape) { resize(std::vector<int>(shape)); }

    void resize(std::vector<int> shape) {
        shape_ = std::move(shape);
        size_t n = 1;
        for (int d : shape_) {
            if (d < 0) throw dim_error("Tensor: negative dimension");
            n *= static_cast<size_t>(d);
        }
        data_.assign(n, 0.0f);
    }

    // Reshape without touching data; element count must match.
    void reshape(std::vector<int> shape) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        if (n != data_.size()) throw dim_error("Tensor::reshape: element count mismatch");
        shape_ = std::move(shape);
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(size_t i) const { return shape_.at(i); }
    size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](size_t i) { return data_[i]; }
    float operator[](size_t i) const { return data_[i]; }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0f); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    std::vector<int> shape_;
    std::vector<float> data_;
};

// C = A(MxK) * B(KxN), row-major. When accumulate is set, C += A*B.
void gemm(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate = false);

// C = A^T(MxK from KxM... ) helpers with explicit transpose flags.
// trans_a/trans_b refer to the logical operands: op(A) is MxK, op(B) is KxN.
void gemm_ex(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
             const float* b, int ldb, float* c, int ldc, float alpha = 1.0f, float beta = 0.0f);

double sum_squares(const Tensor& t);

}  // namespace amint
