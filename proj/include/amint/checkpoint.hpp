#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "amint/layers.hpp"
#include "amint/nets.hpp"

namespace amint {

using json = nlohmann::json;

json backbone_to_json(const BackboneSpec& spec);
BackboneSpec backbone_from_json(const json& j);
json head_to_json(const MintHeadSpec& spec);
MintHeadSpec head_from_json(const json& j);

// Versioned binary container: magic, format version, JSON header describing
// the named tensors, raw float32 payload, trailing crc32 of all prior bytes.
void save_model_checkpoint(const std::filesystem::path& path, const std::string& kind,
                           const json& meta, const std::vector<ParamRef>& params);

struct LoadedCheckpoint {
    std::string kind;
    json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

LoadedCheckpoint load_model_checkpoint(const std::filesystem::path& path);

// Copies stored tensors into the given parameters, matching by name and
// requiring identical shapes and an exhaustive match.
void load_params_into(const LoadedCheckpoint& ckpt, const std::vector<ParamRef>& params);

// Whole-model convenience wrappers.
void save_enhanced(const std::filesystem::path& path, EnhancedModel& model, uint64_t init_seed);
std::unique_ptr<EnhancedModel> load_enhanced(const std::filesystem::path& path);

// Standalone membership head (passive runs). Tap channel widths are stored so
// the head can be rebuilt without its model; the dropout seed reseeds the
// stream from position zero, so only inference-mode outputs are reproduced.
void save_mint_head(const std::filesystem::path& path, MintHead& head, int channels_a,
                    int channels_b, uint64_t dropout_seed);
std::unique_ptr<MintHead> load_mint_head(const std::filesystem::path& path);

}  // namespace amint
