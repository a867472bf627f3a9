#include "amint/tensor.hpp"

#include <cblas.h>

namespace amint {

void gemm(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0f, a, k, b, n,
                accumulate ? 1.0f : 0.0f, c, n);
}

void gemm_ex(bool trans_a, bool trans_b, int m, int n, int k, const float* a, int lda,
             const float* b, int ldb, float* c, int ldc, float alpha, float beta) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

double sum_squares(const Tensor& t) {
    double s = 0.0;
    const float* p = t.data();
    for (size_t i = 0; i < t.numel(); ++i) s += static_cast<double>(p[i]) * p[i];
    return s;
}

}  // namespace amint
