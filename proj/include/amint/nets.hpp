#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "amint/layers.hpp"
#include "amint/rng.hpp"
#include "amint/tensor.hpp"

namespace amint {

struct ConvBlockSpec {
    int layers_per_block = 2;
    int channels = 0;
    bool pool_after_block = true;
};

// Plain conv backbone: per block, layers_per_block 3x3 stride-1 conv+ReLU
// layers, then an optional 2x2 max pool; global average pooling and a linear
// classifier on top.
struct BackboneSpec {
    std::vector<ConvBlockSpec> blocks;
    int num_classes = 10;
    int input_h = 28, input_w = 28, input_c = 1;

    void validate() const;
    static BackboneSpec desk_default(int input_h, int input_w, int input_c);
};

enum class TapSetup { ENTRY, MIDDLE, OUTPUT };

std::string to_string(TapSetup s);
TapSetup tap_setup_from_string(const std::string& s);

struct TapConfig {
    TapSetup setup = TapSetup::ENTRY;
    // (block_index, layer_index) pairs ordered by depth.
    std::array<std::pair<int, int>, 2> taps{};
};

// Entry: last two layers of the first block. Output: last two layers of the
// last block. Middle: last layers of two distinct blocks, interior when the
// spec has four or more blocks.
TapConfig resolve_taps(const BackboneSpec& spec, TapSetup setup);

struct AADPair {
    Tensor map_a;  // batched N x H1 x W1 x C1
    Tensor map_b;  // batched N x H2 x W2 x C2
};

struct MintHeadSpec {
    std::vector<int> per_path_conv_channels{256};
    double dropout = 0.4;
    int hidden_dim = 64;

    void validate() const;
};

// Membership head over a pair of tapped activation maps: per-path conv stack
// with global average pooling, concatenation, then linear / dropout / linear /
// sigmoid. Standalone so the passive pipeline can train one against a frozen
// backbone.
class MintHead {
public:
    MintHead(const MintHeadSpec& spec, int channels_a, int channels_b, uint64_t dropout_seed);

    const MintHeadSpec& spec() const { return spec_; }

    // Membership probabilities, shape [N].
    Tensor forward(const AADPair& aad, bool training);

    // Backward for the last forward. dprobs has shape [N]; parameter gradients
    // are overwritten. When dmaps is given, gradients with respect to the two
    // input maps are written into it.
    void backward(const Tensor& dprobs, AADPair* dmaps = nullptr);

    void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
    std::vector<ParamRef> params();  // prefix "mint"
    void init(Rng& rng);
    void zero_grads();
    Rng& dropout_rng() { return *dropout_rng_; }

private:
    MintHeadSpec spec_;
    std::unique_ptr<Rng> dropout_rng_;
    Sequential path_a_, path_b_, trunk_;
};

// The joint architecture: shared layers (up to and including the deepest
// tap), the audited-only remainder ending in class logits, and the MINT head
// consuming the two tapped activation maps.
class EnhancedModel {
public:
    EnhancedModel(const BackboneSpec& spec, TapSetup setup, const MintHeadSpec& head_spec,
                  uint64_t init_seed);

    const BackboneSpec& spec() const { return spec_; }
    const TapConfig& tap_config() const { return taps_; }
    const MintHeadSpec& head_spec() const { return head_spec_; }

    // Full audited path, one batch in, logits out. Does not touch the head.
    Tensor forward_audited(const Tensor& images, bool training = false);

    // Tapped activations for a batch, equal to the values forward_audited
    // produces internally at the tap layers.
    AADPair extract_aad(const Tensor& images, bool training = false);

    // Head alone on already-extracted maps. Output shape [N].
    Tensor forward_mint(const AADPair& aad, bool training = false);

    // -------- joint training-step plumbing (single shared traversal) --------
    // Forward the union batch through the shared stack, then route: rows in
    // audited_rows continue to class logits; rows in mint_rows feed the head.
    struct JointOut {
        Tensor logits;      // [n_audited, num_classes]
        Tensor mint_probs;  // [n_mint]
    };
    JointOut joint_forward(const Tensor& union_images, const std::vector<int>& audited_rows,
                           const std::vector<int>& mint_rows, bool training);

    // Backward for the last joint_forward. Either gradient may be empty to
    // drop that path's contribution. Parameter gradients are overwritten.
    void joint_backward(const Tensor& dlogits, const Tensor& dmint_probs);

    std::vector<ParamRef> shared_params();
    std::vector<ParamRef> audited_only_params();
    std::vector<ParamRef> mint_params();
    std::vector<ParamRef> all_params();  // shared ++ audited_only ++ mint

    void zero_grads();
    double param_sum_squares();

    MintHead& head() { return head_; }
    Rng& dropout_rng() { return head_.dropout_rng(); }

private:
    void build(uint64_t init_seed);

    BackboneSpec spec_;
    MintHeadSpec head_spec_;
    TapConfig taps_;

    Sequential shared_;        // ends exactly at the deepest tap layer
    Sequential audited_tail_;  // pool/convs after the deepest tap + GAP + classifier
    int tap_a_index_ = 0;      // index into shared_ whose activation is map_a
    MintHead head_;

    // caches from joint_forward
    std::vector<int> audited_rows_, mint_rows_;
    bool joint_ran_ = false;
};

// Shape of the activation map emitted by the layer at (block, layer) for a
// given input size, following the conv/pool geometry of BackboneSpec.
struct MapShape {
    int h = 0, w = 0, c = 0;
};
MapShape tap_output_shape(const BackboneSpec& spec, std::pair<int, int> tap);

}  // namespace amint
