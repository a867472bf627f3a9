#include <doctest.h>

#include <cmath>
#include <vector>

#include "amint/rng.hpp"
#include "amint/tensor.hpp"
#include "test_util.hpp"

using namespace amint;

namespace {

// Independent triple-loop reference for op(A)*op(B) in double precision.
std::vector<double> naive_gemm(bool ta, bool tb, int m, int n, int k, const std::vector<float>& a,
                               const std::vector<float>& b, double alpha = 1.0,
                               const std::vector<double>* c0 = nullptr, double beta = 0.0) {
    std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                double av = ta ? a[static_cast<size_t>(p) * m + i] : a[static_cast<size_t>(i) * k + p];
                double bv = tb ? b[static_cast<size_t>(j) * k + p] : b[static_cast<size_t>(p) * n + j];
                acc += av * bv;
            }
            double prev = c0 ? (*c0)[static_cast<size_t>(i) * n + j] : 0.0;
            c[static_cast<size_t>(i) * n + j] = alpha * acc + beta * prev;
        }
    return c;
}

std::vector<float> random_mat(Rng& rng, size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = rng.next_float() * 2.0f - 1.0f;
    return v;
}

void check_close(const std::vector<float>& got, const std::vector<double>& want, double tol) {
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
        double scale = std::max(1.0, std::abs(want[i]));
        CHECK(std::abs(got[i] - want[i]) <= tol * scale);
    }
}

}  // namespace

TEST_CASE("gemm matches a triple-loop reference") {
    Rng rng(31);
    const int m = 7, k = 11, n = 5;
    auto a = random_mat(rng, static_cast<size_t>(m) * k);
    auto b = random_mat(rng, static_cast<size_t>(k) * n);
    std::vector<float> c(static_cast<size_t>(m) * n, 0.0f);
    gemm(a.data(), b.data(), c.data(), m, k, n);
    check_close(c, naive_gemm(false, false, m, n, k, a, b), 1e-5);

    // Accumulating form adds on top of existing C.
    std::vector<double> prev(c.begin(), c.end());
    gemm(a.data(), b.data(), c.data(), m, k, n, true);
    check_close(c, naive_gemm(false, false, m, n, k, a, b, 1.0, &prev, 1.0), 1e-5);
}

TEST_CASE("gemm_ex handles every transpose combination") {
    Rng rng(32);
    const int m = 6, n = 9, k = 4;
    for (int ta = 0; ta < 2; ++ta)
        for (int tb = 0; tb < 2; ++tb) {
            auto a = random_mat(rng, static_cast<size_t>(m) * k);
            auto b = random_mat(rng, static_cast<size_t>(k) * n);
            std::vector<float> c(static_cast<size_t>(m) * n, 0.0f);
            int lda = ta ? m : k;
            int ldb = tb ? k : n;
            gemm_ex(ta != 0, tb != 0, m, n, k, a.data(), lda, b.data(), ldb, c.data(), n);
            check_close(c, naive_gemm(ta != 0, tb != 0, m, n, k, a, b), 1e-5);
        }
}

TEST_CASE("gemm_ex applies alpha and beta") {
    Rng rng(33);
    const int m = 3, n = 4, k = 5;
    auto a = random_mat(rng, static_cast<size_t>(m) * k);
    auto b = random_mat(rng, static_cast<size_t>(k) * n);
    std::vector<float> c(static_cast<size_t>(m) * n, 2.0f);
    std::vector<double> prev(c.begin(), c.end());
    gemm_ex(false, false, m, n, k, a.data(), k, b.data(), n, c.data(), n, 0.5f, 3.0f);
    check_close(c, naive_gemm(false, false, m, n, k, a, b, 0.5, &prev, 3.0), 1e-5);
}

TEST_CASE("tensor shape plumbing") {
    Tensor t({2, 3, 4});
    CHECK(t.numel() == 24);
    CHECK(t.dim(1) == 3);
    t.fill(1.5f);
    CHECK(t[23] == 1.5f);
    t.reshape({4, 6});
    CHECK(t.dim(0) == 4);
    CHECK_THROWS_AS(t.reshape({5, 5}), dim_error);
    CHECK_THROWS_AS(Tensor({2, -1}), dim_error);

    Tensor u({4, 6}), v({6, 4});
    CHECK(t.same_shape(u));
    CHECK(!t.same_shape(v));
}

TEST_CASE("sum_squares on a hand-computed case") {
    Tensor t({3});
    t[0] = 1.0f;
    t[1] = 2.0f;
    t[2] = 3.0f;
    CHECK(sum_squares(t) == doctest::Approx(14.0).epsilon(1e-12));
}
