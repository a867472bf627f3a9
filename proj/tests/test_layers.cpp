#include <doctest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "amint/layers.hpp"
#include "amint/rng.hpp"
#include "test_util.hpp"

using namespace amint;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, float scale = 1.0f) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.numel(); ++i) t[i] = (rng.next_float() * 2.0f - 1.0f) * scale;
    return t;
}

// Direct double-precision 3x3 stride-1 pad-1 convolution, NHWC, weights in
// the layer's patch-major layout [(ky*3+kx)*C+c, o].
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, bool relu) {
    int n = x.dim(0), h = x.dim(1), wd = x.dim(2), c = x.dim(3), oc = b.dim(0);
    Tensor y({n, h, wd, oc});
    for (int ni = 0; ni < n; ++ni)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < wd; ++xx)
                for (int o = 0; o < oc; ++o) {
                    double acc = b[static_cast<size_t>(o)];
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            int sy = yy + ky - 1, sx = xx + kx - 1;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                            for (int ci = 0; ci < c; ++ci) {
                                double xv = x[((static_cast<size_t>(ni) * h + sy) * wd + sx) * c + ci];
                                double wv = w[static_cast<size_t>(((ky * 3 + kx) * c + ci)) * oc + o];
                                acc += xv * wv;
                            }
                        }
                    if (relu && acc < 0.0) acc = 0.0;
                    y[((static_cast<size_t>(ni) * h + yy) * wd + xx) * oc + o] =
                        static_cast<float>(acc);
                }
    return y;
}

// Direct gradients of sum(dy * conv(x)) for the same geometry.
void naive_conv_grads(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& gw, Tensor& gb,
                      Tensor& dx) {
    int n = x.dim(0), h = x.dim(1), wd = x.dim(2), c = x.dim(3), oc = dy.dim(3);
    gw.resize(w.shape());
    gb.resize({oc});
    dx.resize(x.shape());
    std::vector<double> gw_acc(w.numel(), 0.0), gb_acc(static_cast<size_t>(oc), 0.0),
        dx_acc(x.numel(), 0.0);
    for (int ni = 0; ni < n; ++ni)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < wd; ++xx)
                for (int o = 0; o < oc; ++o) {
                    double g = dy[((static_cast<size_t>(ni) * h + yy) * wd + xx) * oc + o];
                    gb_acc[static_cast<size_t>(o)] += g;
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            int sy = yy + ky - 1, sx = xx + kx - 1;
                            if (sy < 0 || sy >= h || sx < 0 || sx >= wd) continue;
                            for (int ci = 0; ci < c; ++ci) {
                                size_t xi = ((static_cast<size_t>(ni) * h + sy) * wd + sx) * c + ci;
                                size_t wi = static_cast<size_t>((ky * 3 + kx) * c + ci) * oc + o;
                                gw_acc[wi] += g * x[xi];
                                dx_acc[xi] += g * w[wi];
                            }
                        }
                }
    for (size_t i = 0; i < gw_acc.size(); ++i) gw[i] = static_cast<float>(gw_acc[i]);
    for (size_t i = 0; i < gb_acc.size(); ++i) gb[i] = static_cast<float>(gb_acc[i]);
    for (size_t i = 0; i < dx_acc.size(); ++i) dx[i] = static_cast<float>(dx_acc[i]);
}

void check_close(const Tensor& got, const Tensor& want, double tol) {
    REQUIRE(got.shape() == want.shape());
    for (size_t i = 0; i < got.numel(); ++i) {
        double scale = std::max(1.0, std::abs(static_cast<double>(want[i])));
        CHECK(std::abs(got[i] - want[i]) <= tol * scale);
    }
}

std::vector<ParamRef> params_of(Layer& l) {
    std::vector<ParamRef> out;
    l.collect_params("p", out);
    return out;
}

}  // namespace

TEST_CASE("conv forward and backward match a direct reference") {
    Rng rng(101);
    for (bool relu : {false, true}) {
        Conv3x3 conv(3, 2, relu);
        Rng init(55);
        conv.init(init);
        auto ps = params_of(conv);
        Tensor& w = *ps[0].value;
        Tensor& b = *ps[1].value;
        for (size_t i = 0; i < b.numel(); ++i) b[i] = 0.1f * static_cast<float>(i + 1);

        Tensor x = random_tensor({2, 5, 4, 3}, rng);
        Tensor y;
        conv.forward(x, y, true);
        check_close(y, naive_conv(x, w, b, relu), 1e-5);

        Tensor dy = random_tensor({2, 5, 4, 2}, rng);
        // The reference applies the ReLU mask the same way the layer does.
        Tensor dy_masked = dy;
        if (relu)
            for (size_t i = 0; i < y.numel(); ++i)
                if (y[i] <= 0.0f) dy_masked[i] = 0.0f;
        Tensor gw_ref, gb_ref, dx_ref;
        naive_conv_grads(x, w, dy_masked, gw_ref, gb_ref, dx_ref);

        Tensor dx;
        Tensor dy_copy = dy;
        conv.backward(x, y, dy_copy, dx, true);
        check_close(*ps[0].grad, gw_ref, 1e-4);
        check_close(*ps[1].grad, gb_ref, 1e-4);
        check_close(dx, dx_ref, 1e-4);
    }
}

TEST_CASE("max pool picks the max and routes gradient to it") {
    Tensor x({1, 4, 4, 1});
    for (int i = 0; i < 16; ++i) x[static_cast<size_t>(i)] = static_cast<float>((i * 7) % 16);
    MaxPool2 pool;
    Tensor y;
    pool.forward(x, y, true);
    REQUIRE(y.shape() == std::vector<int>{1, 2, 2, 1});
    // Windows of x: {0,7,12,3}, {14,5,10,1}, {8,15,4,11}, {2,9,6,13}.
    CHECK(y[0] == 12.0f);
    CHECK(y[1] == 14.0f);
    CHECK(y[2] == 15.0f);
    CHECK(y[3] == 13.0f);

    Tensor dy({1, 2, 2, 1});
    dy[0] = 1.0f;
    dy[1] = 2.0f;
    dy[2] = 3.0f;
    dy[3] = 4.0f;
    Tensor dx;
    pool.backward(x, y, dy, dx, true);
    double total = 0.0;
    for (size_t i = 0; i < dx.numel(); ++i) total += dx[i];
    CHECK(total == 10.0);
    CHECK(dx[4] == 1.0f);   // 12 at row 1, col 0
    CHECK(dx[2] == 2.0f);   // 14 at row 0, col 2
    CHECK(dx[9] == 3.0f);   // 15 at row 2, col 1
    CHECK(dx[11] == 4.0f);  // 13 at row 2, col 3

    SUBCASE("odd trailing row and column are dropped") {
        Tensor x5({1, 5, 5, 2});
        Tensor y5;
        pool.forward(x5, y5, true);
        CHECK(y5.shape() == std::vector<int>{1, 2, 2, 2});
    }
}

TEST_CASE("global average pool averages and spreads gradient evenly") {
    Tensor x({1, 2, 2, 2});
    for (int i = 0; i < 8; ++i) x[static_cast<size_t>(i)] = static_cast<float>(i);
    GlobalAvgPool gap;
    Tensor y;
    gap.forward(x, y, true);
    REQUIRE(y.shape() == std::vector<int>{1, 2});
    CHECK(y[0] == doctest::Approx((0 + 2 + 4 + 6) / 4.0));
    CHECK(y[1] == doctest::Approx((1 + 3 + 5 + 7) / 4.0));

    Tensor dy({1, 2});
    dy[0] = 4.0f;
    dy[1] = 8.0f;
    Tensor dx;
    gap.backward(x, y, dy, dx, true);
    for (int p = 0; p < 4; ++p) {
        CHECK(dx[static_cast<size_t>(2 * p)] == 1.0f);
        CHECK(dx[static_cast<size_t>(2 * p + 1)] == 2.0f);
    }
}

TEST_CASE("linear layer matches a direct reference") {
    Rng rng(77);
    Linear lin(4, 3, false);
    Rng init(8);
    lin.init(init);
    auto ps = params_of(lin);
    Tensor x = random_tensor({5, 4}, rng);
    Tensor y;
    lin.forward(x, y, true);
    for (int r = 0; r < 5; ++r)
        for (int o = 0; o < 3; ++o) {
            double acc = (*ps[1].value)[static_cast<size_t>(o)];
            for (int i = 0; i < 4; ++i)
                acc += static_cast<double>(x[static_cast<size_t>(r) * 4 + i]) *
                       (*ps[0].value)[static_cast<size_t>(i) * 3 + o];
            CHECK(y[static_cast<size_t>(r) * 3 + o] == doctest::Approx(acc).epsilon(1e-5));
        }

    Tensor dy = random_tensor({5, 3}, rng);
    Tensor dy_copy = dy, dx;
    lin.backward(x, y, dy_copy, dx, true);
    for (int i = 0; i < 4; ++i)
        for (int o = 0; o < 3; ++o) {
            double acc = 0.0;
            for (int r = 0; r < 5; ++r)
                acc += static_cast<double>(x[static_cast<size_t>(r) * 4 + i]) *
                       dy[static_cast<size_t>(r) * 3 + o];
            CHECK((*ps[0].grad)[static_cast<size_t>(i) * 3 + o] ==
                  doctest::Approx(acc).epsilon(1e-4));
        }
    for (int r = 0; r < 5; ++r)
        for (int i = 0; i < 4; ++i) {
            double acc = 0.0;
            for (int o = 0; o < 3; ++o)
                acc += static_cast<double>(dy[static_cast<size_t>(r) * 3 + o]) *
                       (*ps[0].value)[static_cast<size_t>(i) * 3 + o];
            CHECK(dx[static_cast<size_t>(r) * 4 + i] == doctest::Approx(acc).epsilon(1e-4));
        }
}

TEST_CASE("dropout is identity in eval mode and a scaled mask in training") {
    Rng stream(12);
    Dropout drop(0.25, &stream);
    Rng rng(13);
    Tensor x = random_tensor({64, 32}, rng);

    Tensor y_eval;
    drop.forward(x, y_eval, false);
    for (size_t i = 0; i < x.numel(); ++i) CHECK(y_eval[i] == x[i]);

    Tensor y;
    drop.forward(x, y, true);
    int zeros = 0;
    for (size_t i = 0; i < x.numel(); ++i) {
        if (y[i] == 0.0f)
            ++zeros;
        else
            CHECK(y[i] == doctest::Approx(x[i] / 0.75f).epsilon(1e-6));
    }
    double drop_rate = static_cast<double>(zeros) / static_cast<double>(x.numel());
    CHECK(drop_rate > 0.2);
    CHECK(drop_rate < 0.3);

    Tensor dy({64, 32});
    dy.fill(1.0f);
    Tensor dx;
    drop.backward(x, y, dy, dx, true);
    for (size_t i = 0; i < x.numel(); ++i) {
        if (y[i] == 0.0f && x[i] != 0.0f)
            CHECK(dx[i] == 0.0f);
        else if (x[i] != 0.0f)
            CHECK(dx[i] == doctest::Approx(1.0f / 0.75f));
    }
}

TEST_CASE("sigmoid squashes and differentiates correctly") {
    Sigmoid sig;
    Tensor x({3});
    x[0] = 0.0f;
    x[1] = 2.0f;
    x[2] = -2.0f;
    Tensor y;
    sig.forward(x, y, true);
    CHECK(y[0] == doctest::Approx(0.5));
    CHECK(y[1] == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
    CHECK(y[2] == doctest::Approx(1.0 / (1.0 + std::exp(2.0))));

    Tensor dy({3});
    dy.fill(1.0f);
    Tensor dx;
    sig.backward(x, y, dy, dx, true);
    for (int i = 0; i < 3; ++i)
        CHECK(dx[static_cast<size_t>(i)] ==
              doctest::Approx(y[static_cast<size_t>(i)] * (1.0f - y[static_cast<size_t>(i)])));
}

TEST_CASE("sequential chains shapes and injected gradients add up") {
    // Stack: Linear(4->3) then Linear(3->2). An injection at the first
    // layer's output must produce the same first-layer gradients as running
    // the top-driven backward and an isolated injected backward separately.
    auto make_stack = [](uint64_t seed) {
        auto s = std::make_unique<Sequential>();
        s->add(std::make_unique<Linear>(4, 3, false));
        s->add(std::make_unique<Linear>(3, 2, false));
        Rng init(seed);
        s->init(init);
        return s;
    };
    auto s1 = make_stack(3);
    auto s2 = make_stack(3);

    Rng rng(9);
    Tensor x = random_tensor({6, 4}, rng);
    s1->forward(x, true);
    s2->forward(x, true);

    Tensor dy_top({6, 2});
    dy_top.fill(0.5f);
    Tensor inj({6, 3});
    for (size_t i = 0; i < inj.numel(); ++i) inj[i] = 0.01f * static_cast<float>(i);

    Tensor dx_joint;
    s1->backward(dy_top, {GradInjection{0, &inj}}, dx_joint, true);
    std::vector<ParamRef> p1;
    s1->collect_params("s", p1);
    Tensor g_joint = *p1[0].grad;

    // Split computation: top-driven sweep, then injection-only sweep.
    Tensor dx_a;
    s2->backward(dy_top, dx_a, true);
    std::vector<ParamRef> p2;
    s2->collect_params("s", p2);
    Tensor g_top = *p2[0].grad;
    Tensor zero_top({6, 2});
    Tensor dx_b;
    s2->backward(zero_top, {GradInjection{0, &inj}}, dx_b, true);
    Tensor g_inj = *p2[0].grad;

    REQUIRE(g_joint.shape() == g_top.shape());
    for (size_t i = 0; i < g_joint.numel(); ++i)
        CHECK(g_joint[i] == doctest::Approx(g_top[i] + g_inj[i]).epsilon(1e-5));
    for (size_t i = 0; i < dx_joint.numel(); ++i)
        CHECK(dx_joint[i] == doctest::Approx(dx_a[i] + dx_b[i]).epsilon(1e-5));
}

TEST_CASE("row gather, scatter, and column concat round-trip") {
    Tensor x({4, 3});
    for (size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(i);
    Tensor g = gather_rows(x, {2, 0});
    CHECK(g.shape() == std::vector<int>{2, 3});
    CHECK(g[0] == 6.0f);
    CHECK(g[3] == 0.0f);
    CHECK_THROWS_AS(gather_rows(x, {4}), dim_error);

    Tensor dst({4, 3});
    scatter_add_rows(g, {2, 0}, dst);
    CHECK(dst[6] == 6.0f);
    CHECK(dst[0] == 0.0f);
    scatter_add_rows(g, {2, 0}, dst);
    CHECK(dst[6] == 12.0f);

    Tensor a({2, 2}), b({2, 3});
    for (size_t i = 0; i < a.numel(); ++i) a[i] = static_cast<float>(i);
    for (size_t i = 0; i < b.numel(); ++i) b[i] = 10.0f + static_cast<float>(i);
    Tensor cat = concat_cols(a, b);
    CHECK(cat.shape() == std::vector<int>{2, 5});
    CHECK(cat[0] == 0.0f);
    CHECK(cat[2] == 10.0f);
    CHECK(cat[5] == 2.0f);
    CHECK(cat[7] == 13.0f);

    Tensor da({2, 2}), db({2, 3});
    split_cols(cat, da, db);
    for (size_t i = 0; i < a.numel(); ++i) CHECK(da[i] == a[i]);
    for (size_t i = 0; i < b.numel(); ++i) CHECK(db[i] == b[i]);
}
