#include "amint/nets.hpp"

#include <algorithm>
#include <cmath>

namespace amint {

void BackboneSpec::validate() const {
    if (blocks.size() < 3) throw config_error("BackboneSpec: need at least 3 blocks");
    for (const auto& b : blocks) {
        if (b.layers_per_block < 2)
            throw config_error("BackboneSpec: every block needs at least 2 layers");
        if (b.channels <= 0) throw config_error("BackboneSpec: channel counts must be positive");
    }
    if (num_classes < 2) throw config_error("BackboneSpec: need at least 2 classes");
    if (input_h <= 0 || input_w <= 0 || input_c <= 0)
        throw config_error("BackboneSpec: input shape must be positive");
}

BackboneSpec BackboneSpec::desk_default(int input_h, int input_w, int input_c) {
    BackboneSpec s;
    s.blocks = {{2, 16, true}, {2, 32, true}, {2, 64, true}};
    s.num_classes = 10;
    s.input_h = input_h;
    s.input_w = input_w;
    s.input_c = input_c;
    return s;
}

std::string to_string(TapSetup s) {
    switch (s) {
        case TapSetup::ENTRY: return "entry";
        case TapSetup::MIDDLE: return "middle";
        case TapSetup::OUTPUT: return "output";
    }
    return "?";
}

TapSetup tap_setup_from_string(const std::string& s) {
    if (s == "entry") return TapSetup::ENTRY;
    if (s == "middle") return TapSetup::MIDDLE;
    if (s == "output") return TapSetup::OUTPUT;
    throw config_error("unknown tap setup: " + s + " (expected entry|middle|output)");
}

TapConfig resolve_taps(const BackboneSpec& spec, TapSetup setup) {
    spec.validate();
    int nb = static_cast<int>(spec.blocks.size());
    TapConfig cfg;
    cfg.setup = setup;
    auto last_layer = [&](int b) { return spec.blocks[static_cast<size_t>(b)].layers_per_block - 1; };
    switch (setup) {
        case TapSetup::ENTRY:
            cfg.taps = {{{0, last_layer(0) - 1}, {0, last_layer(0)}}};
            break;
        case TapSetup::OUTPUT:
            cfg.taps = {{{nb - 1, last_layer(nb - 1) - 1}, {nb - 1, last_layer(nb - 1)}}};
            break;
        case TapSetup::MIDDLE: {
            int b1, b2;
            if (nb == 3) {
                b1 = 0;
                b2 = 1;
            } else {
                b1 = std::clamp((nb - 1) / 3, 1, nb - 2);
                b2 = std::clamp((2 * (nb - 1) + 2) / 3, b1 + 1, nb - 2);
            }
            cfg.taps = {{{b1, last_layer(b1)}, {b2, last_layer(b2)}}};
            break;
        }
    }
    if (cfg.taps[0] >= cfg.taps[1]) throw config_error("tap resolution: taps must be depth-ordered");
    return cfg;
}

void MintHeadSpec::validate() const {
    if (per_path_conv_channels.empty())
        throw config_error("MintHeadSpec: need at least one conv layer per path");
    for (int c : per_path_conv_channels)
        if (c <= 0) throw config_error("MintHeadSpec: conv channels must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw config_error("MintHeadSpec: dropout must lie in [0,1)");
    if (hidden_dim <= 0) throw config_error("MintHeadSpec: hidden_dim must be positive");
}

MapShape tap_output_shape(const BackboneSpec& spec, std::pair<int, int> tap) {
    int h = spec.input_h, w = spec.input_w;
    for (int b = 0; b < tap.first; ++b)
        if (spec.blocks[static_cast<size_t>(b)].pool_after_block) {
            h /= 2;
            w /= 2;
        }
    return {h, w, spec.blocks[static_cast<size_t>(tap.first)].channels};
}

MintHead::MintHead(const MintHeadSpec& spec, int channels_a, int channels_b, uint64_t dropout_seed)
    : spec_(spec), dropout_rng_(std::make_unique<Rng>(dropout_seed)) {
    spec_.validate();
    if (channels_a <= 0 || channels_b <= 0)
        throw config_error("MintHead: input map channel counts must be positive");
    auto build_path = [&](Sequential& path, int ch_in) {
        for (int ch_out : spec_.per_path_conv_channels) {
            path.add(std::make_unique<Conv3x3>(ch_in, ch_out, true));
            ch_in = ch_out;
        }
        path.add(std::make_unique<GlobalAvgPool>());
        return ch_in;
    };
    int fa = build_path(path_a_, channels_a);
    int fb = build_path(path_b_, channels_b);
    trunk_.add(std::make_unique<Linear>(fa + fb, spec_.hidden_dim, true));
    trunk_.add(std::make_unique<Dropout>(spec_.dropout, dropout_rng_.get()));
    trunk_.add(std::make_unique<Linear>(spec_.hidden_dim, 1, false));
    trunk_.add(std::make_unique<Sigmoid>());
}

Tensor MintHead::forward(const AADPair& aad, bool training) {
    Tensor pa = path_a_.forward(aad.map_a, training);
    Tensor pb = path_b_.forward(aad.map_b, training);
    Tensor cat = concat_cols(pa, pb);
    Tensor out = trunk_.forward(cat, training);
    out.reshape({out.dim(0)});
    return out;
}

void MintHead::backward(const Tensor& dprobs, AADPair* dmaps) {
    Tensor dy = dprobs;
    dy.reshape({dy.dim(0), 1});
    Tensor d_cat;
    trunk_.backward(dy, d_cat, true);
    Tensor d_pa({d_cat.dim(0), path_a_.output().dim(1)});
    Tensor d_pb({d_cat.dim(0), path_b_.output().dim(1)});
    split_cols(d_cat, d_pa, d_pb);
    bool need_input = dmaps != nullptr;
    Tensor d_in_a, d_in_b;
    path_a_.backward(d_pa, d_in_a, need_input);
    path_b_.backward(d_pb, d_in_b, need_input);
    if (need_input) {
        dmaps->map_a = std::move(d_in_a);
        dmaps->map_b = std::move(d_in_b);
    }
}

void MintHead::collect_params(const std::string& prefix, std::vector<ParamRef>& out) {
    path_a_.collect_params(prefix + ".path_a", out);
    path_b_.collect_params(prefix + ".path_b", out);
    trunk_.collect_params(prefix + ".trunk", out);
}

std::vector<ParamRef> MintHead::params() {
    std::vector<ParamRef> out;
    collect_params("mint", out);
    return out;
}

void MintHead::init(Rng& rng) {
    path_a_.init(rng);
    path_b_.init(rng);
    trunk_.init(rng);
}

void MintHead::zero_grads() {
    for (auto& p : params()) p.grad->zero();
}

EnhancedModel::EnhancedModel(const BackboneSpec& spec, TapSetup setup,
                             const MintHeadSpec& head_spec, uint64_t init_seed)
    : spec_(spec), head_spec_(head_spec), taps_(resolve_taps(spec, setup)),
      head_(head_spec, tap_output_shape(spec, taps_.taps[0]).c,
            tap_output_shape(spec, taps_.taps[1]).c, derive_seed(init_seed, "dropout")) {
    build(init_seed);
}

void EnhancedModel::build(uint64_t init_seed) {
    auto deepest = taps_.taps[0] < taps_.taps[1] ? taps_.taps[1] : taps_.taps[0];
    auto [tb, tl] = deepest;
    int in_ch = spec_.input_c;
    int shared_index = 0;
    bool in_shared = true;
    for (int b = 0; b < static_cast<int>(spec_.blocks.size()); ++b) {
        const auto& blk = spec_.blocks[static_cast<size_t>(b)];
        for (int l = 0; l < blk.layers_per_block; ++l) {
            auto conv = std::make_unique<Conv3x3>(in_ch, blk.channels, true);
            if (in_shared) {
                shared_.add(std::move(conv));
                if (b == taps_.taps[0].first && l == taps_.taps[0].second) tap_a_index_ = shared_index;
                if (b == tb && l == tl) in_shared = false;
                ++shared_index;
            } else {
                audited_tail_.add(std::move(conv));
            }
            in_ch = blk.channels;
        }
        if (blk.pool_after_block) {
            auto pool = std::make_unique<MaxPool2>();
            (in_shared ? shared_ : audited_tail_).add(std::move(pool));
            if (in_shared) ++shared_index;
        }
    }
    audited_tail_.add(std::make_unique<GlobalAvgPool>());
    audited_tail_.add(std::make_unique<Linear>(in_ch, spec_.num_classes, false));

    Rng init_rng(derive_seed(init_seed, "init"));
    shared_.init(init_rng);
    audited_tail_.init(init_rng);
    head_.init(init_rng);
}

Tensor EnhancedModel::forward_audited(const Tensor& images, bool training) {
    const Tensor& mid = shared_.forward(images, training);
    return audited_tail_.forward(mid, training);
}

AADPair EnhancedModel::extract_aad(const Tensor& images, bool training) {
    shared_.forward(images, training);
    AADPair out;
    out.map_a = shared_.activation(static_cast<size_t>(tap_a_index_));
    out.map_b = shared_.output();
    return out;
}

Tensor EnhancedModel::forward_mint(const AADPair& aad, bool training) {
    return head_.forward(aad, training);
}

EnhancedModel::JointOut EnhancedModel::joint_forward(const Tensor& union_images,
                                                     const std::vector<int>& audited_rows,
                                                     const std::vector<int>& mint_rows,
                                                     bool training) {
    const Tensor& shared_out = shared_.forward(union_images, training);
    audited_rows_ = audited_rows;
    mint_rows_ = mint_rows;
    JointOut out;
    if (!audited_rows.empty()) {
        Tensor aud_in = gather_rows(shared_out, audited_rows);
        out.logits = audited_tail_.forward(aud_in, training);
    }
    if (!mint_rows.empty()) {
        AADPair aad;
        aad.map_a = gather_rows(shared_.activation(static_cast<size_t>(tap_a_index_)), mint_rows);
        aad.map_b = gather_rows(shared_out, mint_rows);
        out.mint_probs = head_.forward(aad, training);
    }
    joint_ran_ = true;
    return out;
}

void EnhancedModel::joint_backward(const Tensor& dlogits, const Tensor& dmint_probs) {
    if (!joint_ran_) throw dim_error("joint_backward before joint_forward");
    Tensor d_shared(shared_.output().shape());

    if (!dlogits.empty()) {
        if (audited_rows_.empty()) throw dim_error("joint_backward: no audited rows were routed");
        Tensor dy = dlogits;
        Tensor d_aud_in;
        audited_tail_.backward(dy, d_aud_in, true);
        scatter_add_rows(d_aud_in, audited_rows_, d_shared);
    }

    std::vector<GradInjection> injections;
    Tensor d_map_a_full;
    if (!dmint_probs.empty()) {
        if (mint_rows_.empty()) throw dim_error("joint_backward: no mint rows were routed");
        AADPair dmaps;
        head_.backward(dmint_probs, &dmaps);
        scatter_add_rows(dmaps.map_b, mint_rows_, d_shared);
        d_map_a_full.resize(shared_.activation(static_cast<size_t>(tap_a_index_)).shape());
        scatter_add_rows(dmaps.map_a, mint_rows_, d_map_a_full);
        injections.push_back({tap_a_index_, &d_map_a_full});
    }

    Tensor unused;
    shared_.backward(d_shared, injections, unused, false);
    joint_ran_ = false;
}

std::vector<ParamRef> EnhancedModel::shared_params() {
    std::vector<ParamRef> out;
    shared_.collect_params("shared", out);
    return out;
}

std::vector<ParamRef> EnhancedModel::audited_only_params() {
    std::vector<ParamRef> out;
    audited_tail_.collect_params("audited", out);
    return out;
}

std::vector<ParamRef> EnhancedModel::mint_params() {
    std::vector<ParamRef> out;
    head_.collect_params("mint", out);
    return out;
}

std::vector<ParamRef> EnhancedModel::all_params() {
    std::vector<ParamRef> out = shared_params();
    auto a = audited_only_params();
    auto m = mint_params();
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), m.begin(), m.end());
    return out;
}

void EnhancedModel::zero_grads() {
    for (auto& p : all_params()) p.grad->zero();
}

double EnhancedModel::param_sum_squares() {
    double total = 0.0;
    for (auto& p : all_params()) total += sum_squares(*p.value);
    return total;
}

}  // namespace amint
