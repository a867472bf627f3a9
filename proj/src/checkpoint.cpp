#include "amint/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "amint/common.hpp"

namespace amint {

namespace {

constexpr char kMagic[4] = {'A', 'M', 'N', 'T'};
constexpr uint32_t kFormatVersion = 1;

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
    buf.push_back(static_cast<uint8_t>(v));
    buf.push_back(static_cast<uint8_t>(v >> 8));
    buf.push_back(static_cast<uint8_t>(v >> 16));
    buf.push_back(static_cast<uint8_t>(v >> 24));
}

uint32_t get_u32(const uint8_t* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}

}  // namespace

json backbone_to_json(const BackboneSpec& spec) {
    json blocks = json::array();
    for (const auto& b : spec.blocks)
        blocks.push_back({{"layers_per_block", b.layers_per_block},
                          {"channels", b.channels},
                          {"pool_after_block", b.pool_after_block}});
    return {{"blocks", blocks},
            {"num_classes", spec.num_classes},
            {"input_h", spec.input_h},
            {"input_w", spec.input_w},
            {"input_c", spec.input_c}};
}

BackboneSpec backbone_from_json(const json& j) {
    BackboneSpec spec;
    spec.blocks.clear();
    for (const auto& b : j.at("blocks")) {
        ConvBlockSpec blk;
        blk.layers_per_block = b.at("layers_per_block").get<int>();
        blk.channels = b.at("channels").get<int>();
        blk.pool_after_block = b.at("pool_after_block").get<bool>();
        spec.blocks.push_back(blk);
    }
    spec.num_classes = j.at("num_classes").get<int>();
    spec.input_h = j.at("input_h").get<int>();
    spec.input_w = j.at("input_w").get<int>();
    spec.input_c = j.at("input_c").get<int>();
    spec.validate();
    return spec;
}

json head_to_json(const MintHeadSpec& spec) {
    return {{"per_path_conv_channels", spec.per_path_conv_channels},
            {"dropout", spec.dropout},
            {"hidden_dim", spec.hidden_dim}};
}

MintHeadSpec head_from_json(const json& j) {
    MintHeadSpec spec;
    spec.per_path_conv_channels = j.at("per_path_conv_channels").get<std::vector<int>>();
    spec.dropout = j.at("dropout").get<double>();
    spec.hidden_dim = j.at("hidden_dim").get<int>();
    spec.validate();
    return spec;
}

void save_model_checkpoint(const std::filesystem::path& path, const std::string& kind,
                           const json& meta, const std::vector<ParamRef>& params) {
    json header;
    header["format_version"] = kFormatVersion;
    header["toolkit_version"] = kToolkitVersion;
    header["kind"] = kind;
    header["meta"] = meta;
    json tensors = json::array();
    size_t offset = 0;
    for (const auto& p : params) {
        tensors.push_back({{"name", p.name}, {"shape", p.value->shape()}, {"offset", offset}});
        offset += p.value->numel();
    }
    header["tensors"] = tensors;
    std::string header_str = header.dump();

    std::vector<uint8_t> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32(buf, kFormatVersion);
    put_u32(buf, static_cast<uint32_t>(header_str.size()));
    buf.insert(buf.end(), header_str.begin(), header_str.end());
    size_t payload_base = buf.size();
    buf.resize(payload_base + offset * sizeof(float));
    size_t cursor = payload_base;
    for (const auto& p : params) {
        std::memcpy(buf.data() + cursor, p.value->data(), p.value->numel() * sizeof(float));
        cursor += p.value->numel() * sizeof(float);
    }
    uint32_t crc = static_cast<uint32_t>(
        ::crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
    put_u32(buf, crc);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot write checkpoint: " + path.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw data_error("short write on checkpoint: " + path.string());
}

LoadedCheckpoint load_model_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint: " + path.string());
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 16 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw data_error("not a checkpoint file: " + path.string());
    uint32_t version = get_u32(buf.data() + 4);
    if (version != kFormatVersion)
        throw data_error("unsupported checkpoint version " + std::to_string(version) + " in " +
                         path.string());
    uint32_t crc_stored = get_u32(buf.data() + buf.size() - 4);
    uint32_t crc = static_cast<uint32_t>(
        ::crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
    if (crc != crc_stored) throw data_error("checkpoint checksum mismatch: " + path.string());

    uint32_t header_len = get_u32(buf.data() + 8);
    if (12 + static_cast<size_t>(header_len) + 4 > buf.size())
        throw data_error("truncated checkpoint header: " + path.string());
    json header;
    try {
        header = json::parse(buf.begin() + 12, buf.begin() + 12 + header_len);
    } catch (const json::exception& e) {
        throw data_error("bad checkpoint header in " + path.string() + ": " + e.what());
    }

    LoadedCheckpoint out;
    out.kind = header.at("kind").get<std::string>();
    out.meta = header.at("meta");
    const uint8_t* payload = buf.data() + 12 + header_len;
    size_t payload_floats = (buf.size() - 16 - header_len) / sizeof(float);
    for (const auto& t : header.at("tensors")) {
        std::string name = t.at("name").get<std::string>();
        std::vector<int> shape = t.at("shape").get<std::vector<int>>();
        size_t offset = t.at("offset").get<size_t>();
        Tensor tensor(shape);
        if (offset + tensor.numel() > payload_floats)
            throw data_error("checkpoint payload too short for tensor " + name);
        std::memcpy(tensor.data(), payload + offset * sizeof(float), tensor.numel() * sizeof(float));
        out.tensors.emplace_back(std::move(name), std::move(tensor));
    }
    return out;
}

const Tensor* LoadedCheckpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void load_params_into(const LoadedCheckpoint& ckpt, const std::vector<ParamRef>& params) {
    if (ckpt.tensors.size() != params.size())
        throw data_error("checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                         " tensors, model expects " + std::to_string(params.size()));
    for (const auto& p : params) {
        const Tensor* t = ckpt.find(p.name);
        if (!t) throw data_error("checkpoint is missing tensor " + p.name);
        if (t->shape() != p.value->shape())
            throw data_error("checkpoint tensor " + p.name + " has the wrong shape");
        *p.value = *t;
    }
}

void save_enhanced(const std::filesystem::path& path, EnhancedModel& model, uint64_t init_seed) {
    json meta;
    meta["backbone"] = backbone_to_json(model.spec());
    meta["head"] = head_to_json(model.head_spec());
    meta["setup"] = to_string(model.tap_config().setup);
    meta["init_seed"] = init_seed;
    save_model_checkpoint(path, "enhanced", meta, model.all_params());
}

std::unique_ptr<EnhancedModel> load_enhanced(const std::filesystem::path& path) {
    LoadedCheckpoint ckpt = load_model_checkpoint(path);
    if (ckpt.kind != "enhanced")
        throw data_error("expected an enhanced-model checkpoint, found kind '" + ckpt.kind + "'");
    BackboneSpec spec = backbone_from_json(ckpt.meta.at("backbone"));
    MintHeadSpec head = head_from_json(ckpt.meta.at("head"));
    TapSetup setup = tap_setup_from_string(ckpt.meta.at("setup").get<std::string>());
    uint64_t init_seed = ckpt.meta.at("init_seed").get<uint64_t>();
    auto model = std::make_unique<EnhancedModel>(spec, setup, head, init_seed);
    load_params_into(ckpt, model->all_params());
    return model;
}

void save_mint_head(const std::filesystem::path& path, MintHead& head, int channels_a,
                    int channels_b, uint64_t dropout_seed) {
    json meta;
    meta["head"] = head_to_json(head.spec());
    meta["channels_a"] = channels_a;
    meta["channels_b"] = channels_b;
    meta["dropout_seed"] = dropout_seed;
    save_model_checkpoint(path, "mint_head", meta, head.params());
}

std::unique_ptr<MintHead> load_mint_head(const std::filesystem::path& path) {
    LoadedCheckpoint ckpt = load_model_checkpoint(path);
    if (ckpt.kind != "mint_head")
        throw data_error("expected a mint-head checkpoint, found kind '" + ckpt.kind + "'");
    MintHeadSpec spec = head_from_json(ckpt.meta.at("head"));
    int channels_a = ckpt.meta.at("channels_a").get<int>();
    int channels_b = ckpt.meta.at("channels_b").get<int>();
    uint64_t dropout_seed = ckpt.meta.at("dropout_seed").get<uint64_t>();
    auto head = std::make_unique<MintHead>(spec, channels_a, channels_b, dropout_seed);
    load_params_into(ckpt, head->params());
    return head;
}

}  // namespace amint
