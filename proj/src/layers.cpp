#include "amint/layers.hpp"

#include <cmath>
#include <cstring>

namespace amint {

namespace {

void check_nhwc(const Tensor& x, int ch, const char* who) {
    if (x.shape().size() != 4 || x.dim(3) != ch)
        throw dim_error(std::string(who) + ": expected NHWC input with " + std::to_string(ch) +
                        " channels");
}

float uniform_limit(int fan_in) { return std::sqrt(6.0f / static_cast<float>(fan_in)); }

void init_uniform(Tensor& w, int fan_in, Rng& rng) {
    float lim = uniform_limit(fan_in);
    for (size_t i = 0; i < w.numel(); ++i) w[i] = (rng.next_float() * 2.0f - 1.0f) * lim;
}

// im2col for 3x3 stride-1 pad-1 over NHWC: cols is [N*H*W, 9*C], one row per
// output pixel, patch entries ordered (ky, kx, c).
void im2col_3x3(const Tensor& x, Tensor& cols) {
    int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    cols.resize({n * h * w, 9 * c});
    const float* src = x.data();
    float* dst = cols.data();
    size_t row_stride = static_cast<size_t>(9) * c;
    for (int ni = 0; ni < n; ++ni)
        for (int y = 0; y < h; ++y)
            for (int ky = 0; ky < 3; ++ky) {
                int yy = y + ky - 1;
                float* out_row = dst + (static_cast<size_t>(ni) * h + y) * w * row_stride +
                                 static_cast<size_t>(ky) * 3 * c;
                if (yy < 0 || yy >= h) continue;  // cols was zeroed on resize
                const float* in_row = src + (static_cast<size_t>(ni) * h + yy) * w * c;
                for (int xpos = 0; xpos < w; ++xpos) {
                    float* cell = out_row + static_cast<size_t>(xpos) * row_stride;
                    for (int kx = 0; kx < 3; ++kx) {
                        int xx = xpos + kx - 1;
                        if (xx < 0 || xx >= w) continue;
                        std::memcpy(cell + static_cast<size_t>(kx) * c, in_row + static_cast<size_t>(xx) * c,
                                    sizeof(float) * static_cast<size_t>(c));
                    }
                }
            }
}

// Transpose of im2col: scatter-adds column gradients back onto the image.
void col2im_3x3(const Tensor& cols, Tensor& dx, int n, int h, int w, int c) {
    dx.resize({n, h, w, c});
    const float* src = cols.data();
    float* dst = dx.data();
    size_t row_stride = static_cast<size_t>(9) * c;
    for (int ni = 0; ni < n; ++ni)
        for (int y = 0; y < h; ++y)
            for (int ky = 0; ky < 3; ++ky) {
                int yy = y + ky - 1;
                if (yy < 0 || yy >= h) continue;
                const float* in_row = src + (static_cast<size_t>(ni) * h + y) * w * row_stride +
                                      static_cast<size_t>(ky) * 3 * c;
                float* out_row = dst + (static_cast<size_t>(ni) * h + yy) * w * c;
                for (int xpos = 0; xpos < w; ++xpos) {
                    const float* cell = in_row + static_cast<size_t>(xpos) * row_stride;
                    for (int kx = 0; kx < 3; ++kx) {
                        int xx = xpos + kx - 1;
                        if (xx < 0 || xx >= w) continue;
                        float* out = out_row + static_cast<size_t>(xx) * c;
                        const float* in = cell + static_cast<size_t>(kx) * c;
                        for (int i = 0; i < c; ++i) out[i] += in[i];
                    }
                }
            }
}

void relu_mask_inplace(const Tensor& y, Tensor& dy) {
    const float* yv = y.data();
    float* dv = dy.data();
    for (size_t i = 0; i < y.numel(); ++i)
        if (yv[i] <= 0.0f) dv[i] = 0.0f;
}

}  // namespace

// ---------------------------------------------------------------- Conv3x3

Conv3x3::Conv3x3(int in_ch, int out_ch, bool relu) : in_ch_(in_ch), out_ch_(out_ch), relu_(relu) {
    if (in_ch <= 0 || out_ch <= 0) throw dim_error("Conv3x3: channel counts must be positive");
    w_.resize({9 * in_ch, out_ch});
    b_.resize({out_ch});
    gw_.resize({9 * in_ch, out_ch});
    gb_.resize({out_ch});
}

void Conv3x3::forward(const Tensor& x, Tensor& y, bool) {
    check_nhwc(x, in_ch_, "Conv3x3");
    int n = x.dim(0), h = x.dim(1), w = x.dim(2);
    im2col_3x3(x, cols_);
    y.resize({n, h, w, out_ch_});
    gemm(cols_.data(), w_.data(), y.data(), n * h * w, 9 * in_ch_, out_ch_);
    float* yv = y.data();
    const float* bv = b_.data();
    size_t rows = static_cast<size_t>(n) * h * w;
    for (size_t r = 0; r < rows; ++r) {
        float* row = yv + r * out_ch_;
        for (int o = 0; o < out_ch_; ++o) row[o] += bv[o];
    }
    if (relu_)
        for (size_t i = 0; i < y.numel(); ++i) yv[i] = yv[i] > 0.0f ? yv[i] : 0.0f;
}

void Conv3x3::backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor& dx, bool need_dx) {
    int n = x.dim(0), h = x.dim(1), w = x.dim(2);
    int rows = n * h * w;
    if (relu_) relu_mask_inplace(y, dy);

    // gw = cols^T * dy ; gb = column sums of dy.
    gemm_ex(true, false, 9 * in_ch_, out_ch_, rows, cols_.data(), 9 * in_ch_, dy.data(), out_ch_,
            gw_.data(), out_ch_);
    gb_.zero();
    const float* dv = dy.data();
    float* gbv = gb_.data();
    for (int r = 0; r < rows; ++r) {
        const float* row = dv + static_cast<size_t>(r) * out_ch_;
        for (int o = 0; o < out_ch_; ++o) gbv[o] += row[o];
    }
    if (!need_dx) return;

    // dcols = dy * w^T, then scatter back to image layout.
    Tensor dcols({rows, 9 * in_ch_});
    gemm_ex(false, true, rows, 9 * in_ch_, out_ch_, dy.data(), out_ch_, w_.data(), out_ch_,
            dcols.data(), 9 * in_ch_);
    col2im_3x3(dcols, dx, n, h, w, in_ch_);
}

void Conv3x3::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w", &w_, &gw_});
    out.push_back({prefix + ".b", &b_, &gb_});
}

void Conv3x3::init(Rng& rng) {
    init_uniform(w_, 9 * in_ch_, rng);
    b_.zero();
}

// ---------------------------------------------------------------- MaxPool2

void MaxPool2::forward(const Tensor& x, Tensor& y, bool) {
    int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    int oh = h / 2, ow = w / 2;
    if (oh == 0 || ow == 0) throw dim_error("MaxPool2: spatial size too small");
    y.resize({n, oh, ow, c});
    argmax_.assign(y.numel(), 0);
    const float* src = x.data();
    float* dst = y.data();
    for (int ni = 0; ni < n; ++ni)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ci = 0; ci < c; ++ci) {
                    float best = -1e30f;
                    int best_idx = 0;
                    for (int ky = 0; ky < 2; ++ky)
                        for (int kx = 0; kx < 2; ++kx) {
                            int idx = ((ni * h + 2 * oy + ky) * w + 2 * ox + kx) * c + ci;
                            if (src[idx] > best) {
                                best = src[idx];
                                best_idx = idx;
                            }
                        }
                    size_t oidx = ((static_cast<size_t>(ni) * oh + oy) * ow + ox) * c + ci;
                    dst[oidx] = best;
                    argmax_[oidx] = best_idx;
                }
}

void MaxPool2::backward(const Tensor& x, const Tensor&, Tensor& dy, Tensor& dx, bool need_dx) {
    if (!need_dx) return;
    dx.resize(x.shape());
    float* dst = dx.data();
    const float* src = dy.data();
    for (size_t i = 0; i < dy.numel(); ++i) dst[static_cast<size_t>(argmax_[i])] += src[i];
}

// ---------------------------------------------------------- GlobalAvgPool

void GlobalAvgPool::forward(const Tensor& x, Tensor& y, bool) {
    int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    y.resize({n, c});
    const float* src = x.data();
    float* dst = y.data();
    float inv = 1.0f / static_cast<float>(h * w);
    for (int ni = 0; ni < n; ++ni) {
        float* row = dst + static_cast<size_t>(ni) * c;
        for (int p = 0; p < h * w; ++p) {
            const float* px = src + (static_cast<size_t>(ni) * h * w + p) * c;
            for (int ci = 0; ci < c; ++ci) row[ci] += px[ci];
        }
        for (int ci = 0; ci < c; ++ci) row[ci] *= inv;
    }
}

void GlobalAvgPool::backward(const Tensor& x, const Tensor&, Tensor& dy, Tensor& dx, bool need_dx) {
    if (!need_dx) return;
    int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    dx.resize(x.shape());
    float inv = 1.0f / static_cast<float>(h * w);
    const float* src = dy.data();
    float* dst = dx.data();
    for (int ni = 0; ni < n; ++ni)
        for (int p = 0; p < h * w; ++p) {
            float* px = dst + (static_cast<size_t>(ni) * h * w + p) * c;
            const float* row = src + static_cast<size_t>(ni) * c;
            for (int ci = 0; ci < c; ++ci) px[ci] = row[ci] * inv;
        }
}

// ------------------------------------------------------------------ Linear

Linear::Linear(int in_features, int out_features, bool relu)
    : in_f_(in_features), out_f_(out_features), relu_(relu) {
    if (in_f_ <= 0 || out_f_ <= 0) throw dim_error("Linear: feature counts must be positive");
    w_.resize({in_f_, out_f_});
    b_.resize({out_f_});
    gw_.resize({in_f_, out_f_});
    gb_.resize({out_f_});
}

void Linear::forward(const Tensor& x, Tensor& y, bool) {
    if (x.shape().size() != 2 || x.dim(1) != in_f_)
        throw dim_error("Linear: expected [N," + std::to_string(in_f_) + "] input");
    int n = x.dim(0);
    y.resize({n, out_f_});
    gemm(x.data(), w_.data(), y.data(), n, in_f_, out_f_);
    float* yv = y.data();
    const float* bv = b_.data();
    for (int r = 0; r < n; ++r) {
        float* row = yv + static_cast<size_t>(r) * out_f_;
        for (int o = 0; o < out_f_; ++o) row[o] += bv[o];
    }
    if (relu_)
        for (size_t i = 0; i < y.numel(); ++i) yv[i] = yv[i] > 0.0f ? yv[i] : 0.0f;
}

void Linear::backward(const Tensor& x, const Tensor& y, Tensor& dy, Tensor& dx, bool need_dx) {
    int n = x.dim(0);
    if (relu_) relu_mask_inplace(y, dy);
    gemm_ex(true, false, in_f_, out_f_, n, x.data(), in_f_, dy.data(), out_f_, gw_.data(), out_f_);
    gb_.zero();
    const float* dv = dy.data();
    float* gbv = gb_.data();
    for (int r = 0; r < n; ++r) {
        const float* row = dv + static_cast<size_t>(r) * out_f_;
        for (int o = 0; o < out_f_; ++o) gbv[o] += row[o];
    }
    if (!need_dx) return;
    dx.resize({n, in_f_});
    gemm_ex(false, true, n, in_f_, out_f_, dy.data(), out_f_, w_.data(), out_f_, dx.data(), in_f_);
}

void Linear::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w", &w_, &gw_});
    out.push_back({prefix + ".b", &b_, &gb_});
}

void Linear::init(Rng& rng) {
    init_uniform(w_, in_f_, rng);
    b_.zero();
}

// ----------------------------------------------------------------- Dropout

Dropout::Dropout(double rate, Rng* rng) : rate_(rate), rng_(rng) {
    if (rate < 0.0 || rate >= 1.0) throw dim_error("Dropout: rate must lie in [0,1)");
}

void Dropout::forward(const Tensor& x, Tensor& y, bool training) {
    y.resize(x.shape());
    if (!training || rate_ == 0.0) {
        std::memcpy(y.data(), x.data(), sizeof(float) * x.numel());
        masked_ = false;
        return;
    }
    mask_.resize(x.numel());
    float keep = static_cast<float>(1.0 - rate_);
    float scale = 1.0f / keep;
    for (size_t i = 0; i < x.numel(); ++i) {
        mask_[i] = rng_->next_float() < keep ? scale : 0.0f;
        y[i] = x[i] * mask_[i];
    }
    masked_ = true;
}

void Dropout::backward(const Tensor&, const Tensor&, Tensor& dy, Tensor& dx, bool need_dx) {
    if (!need_dx) return;
    dx.resize(dy.shape());
    if (!masked_) {
        std::memcpy(dx.data(), dy.data(), sizeof(float) * dy.numel());
        return;
    }
    for (size_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * mask_[i];
}

// ----------------------------------------------------------------- Sigmoid

void Sigmoid::forward(const Tensor& x, Tensor& y, bool) {
    y.resize(x.shape());
    for (size_t i = 0; i < x.numel(); ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

void Sigmoid::backward(const Tensor&, const Tensor& y, Tensor& dy, Tensor& dx, bool need_dx) {
    if (!need_dx) return;
    dx.resize(dy.shape());
    for (size_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * y[i] * (1.0f - y[i]);
}

// -------------------------------------------------------------- Sequential

const Tensor& Sequential::forward(const Tensor& x, bool training) {
    if (layers_.empty()) throw dim_error("Sequential: no layers");
    acts_.resize(layers_.size());
    input_ = x;
    const Tensor* cur = &input_;
    for (size_t i = 0; i < layers_.size(); ++i) {
        layers_[i]->forward(*cur, acts_[i], training);
        cur = &acts_[i];
    }
    ran_ = true;
    return acts_.back();
}

void Sequential::backward(const Tensor& dy_last, const std::vector<GradInjection>& injections,
                          Tensor& dx, bool need_dx) {
    if (!ran_) throw dim_error("Sequential: backward before forward");
    Tensor grad;
    if (dy_last.empty()) {
        grad.resize(acts_.back().shape());
    } else {
        grad = dy_last;
    }
    for (const auto& inj : injections)
        if (inj.layer_index == static_cast<int>(layers_.size()) - 1) {
            if (!inj.grad->same_shape(grad))
                throw dim_error("Sequential: injection shape mismatch at top layer");
            for (size_t i = 0; i < grad.numel(); ++i) grad[i] += (*inj.grad)[i];
        }
    for (size_t li = layers_.size(); li-- > 0;) {
        const Tensor& x_in = li == 0 ? input_ : acts_[li - 1];
        bool want_dx = li > 0 || need_dx;
        Tensor down;
        layers_[li]->backward(x_in, acts_[li], grad, down, want_dx);
        if (li == 0) {
            if (need_dx) dx = std::move(down);
            break;
        }
        grad = std::move(down);
        for (const auto& inj : injections)
            if (inj.layer_index == static_cast<int>(li) - 1) {
                if (!inj.grad->same_shape(grad))
                    throw dim_error("Sequential: injection shape mismatch");
                for (size_t i = 0; i < grad.numel(); ++i) grad[i] += (*inj.grad)[i];
            }
    }
}

void Sequential::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    for (size_t i = 0; i < layers_.size(); ++i)
        layers_[i]->collect_params(prefix + ".l" + std::to_string(i), out);
}

void Sequential::init(Rng& rng) {
    for (auto& l : layers_) l->init(rng);
}

// ------------------------------------------------------------ row helpers

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
    if (x.shape().empty()) throw dim_error("gather_rows: empty tensor");
    size_t stride = x.numel() / static_cast<size_t>(x.dim(0));
    std::vector<int> shape = x.shape();
    shape[0] = static_cast<int>(rows.size());
    Tensor out(shape);
    for (size_t i = 0; i < rows.size(); ++i) {
        int r = rows[i];
        if (r < 0 || r >= x.dim(0)) throw dim_error("gather_rows: row out of range");
        std::memcpy(out.data() + i * stride, x.data() + static_cast<size_t>(r) * stride,
                    sizeof(float) * stride);
    }
    return out;
}

void scatter_add_rows(const Tensor& src, const std::vector<int>& rows, Tensor& dst) {
    size_t stride = dst.numel() / static_cast<size_t>(dst.dim(0));
    if (src.numel() != stride * rows.size()) throw dim_error("scatter_add_rows: size mismatch");
    for (size_t i = 0; i < rows.size(); ++i) {
        float* out = dst.data() + static_cast<size_t>(rows[i]) * stride;
        const float* in = src.data() + i * stride;
        for (size_t j = 0; j < stride; ++j) out[j] += in[j];
    }
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(0) != b.dim(0))
        throw dim_error("concat_cols: expects two [N,*] tensors with equal N");
    int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    Tensor out({n, ca + cb});
    for (int r = 0; r < n; ++r) {
        std::memcpy(out.data() + static_cast<size_t>(r) * (ca + cb),
                    a.data() + static_cast<size_t>(r) * ca, sizeof(float) * static_cast<size_t>(ca));
        std::memcpy(out.data() + static_cast<size_t>(r) * (ca + cb) + ca,
                    b.data() + static_cast<size_t>(r) * cb, sizeof(float) * static_cast<size_t>(cb));
    }
    return out;
}

void split_cols(const Tensor& dcat, Tensor& da, Tensor& db) {
    int n = dcat.dim(0), ca = da.dim(1), cb = db.dim(1);
    if (dcat.dim(1) != ca + cb || da.dim(0) != n || db.dim(0) != n)
        throw dim_error("split_cols: shape mismatch");
    for (int r = 0; r < n; ++r) {
        std::memcpy(da.data() + static_cast<size_t>(r) * ca,
                    dcat.data() + static_cast<size_t>(r) * (ca + cb), sizeof(float) * static_cast<size_t>(ca));
        std::memcpy(db.data() + static_cast<size_t>(r) * cb,
                    dcat.data() + static_cast<size_t>(r) * (ca + cb) + ca,
                    sizeof(float) * static_cast<size_t>(cb));
    }
}

}  // namespace amint
