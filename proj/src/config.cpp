#include "amint/config.hpp"

#include <cstdlib>
#include <fstream>

namespace amint {

using json = nlohmann::json;

namespace {

struct Reader {
    const json& j;
    std::string prefix;

    std::string path(const std::string& key) const {
        return prefix.empty() ? key : prefix + "." + key;
    }

    void expect_object(std::initializer_list<const char*> allowed) const {
        if (!j.is_object())
            throw config_error("config: \"" + prefix + "\" must be an object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool known = false;
            for (const char* k : allowed)
                if (it.key() == k) known = true;
            if (!known) throw config_error("config: unknown key \"" + path(it.key()) + "\"");
        }
    }

    template <typename T>
    void read(const char* key, T& into) const {
        if (!j.contains(key)) return;
        try {
            into = j.at(key).get<T>();
        } catch (const json::exception&) {
            throw config_error("config: field \"" + path(key) + "\" has the wrong type");
        }
    }

    bool has(const char* key) const { return j.contains(key); }
};

std::vector<ConvBlockSpec> blocks_from_json(const json& j, const std::string& prefix) {
    if (!j.is_array()) throw config_error("config: \"" + prefix + "\" must be an array");
    std::vector<ConvBlockSpec> blocks;
    for (size_t i = 0; i < j.size(); ++i) {
        Reader r{j[i], prefix + "[" + std::to_string(i) + "]"};
        r.expect_object({"layers", "channels", "pool"});
        ConvBlockSpec b;
        r.read("layers", b.layers_per_block);
        r.read("channels", b.channels);
        r.read("pool", b.pool_after_block);
        blocks.push_back(b);
    }
    return blocks;
}

json blocks_to_json(const std::vector<ConvBlockSpec>& blocks) {
    json arr = json::array();
    for (const auto& b : blocks)
        arr.push_back({{"layers", b.layers_per_block},
                       {"channels", b.channels},
                       {"pool", b.pool_after_block}});
    return arr;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    Reader top{j, ""};
    top.expect_object({"dataset", "dataset_root", "seed", "out_dir", "member_count",
                       "external_count", "setup", "methods", "audited_checkpoint", "split",
                       "backbone", "head", "train"});
    ExperimentConfig cfg;
    top.read("dataset", cfg.dataset);
    top.read("dataset_root", cfg.dataset_root);
    top.read("seed", cfg.seed);
    top.read("out_dir", cfg.out_dir);
    top.read("member_count", cfg.member_count);
    top.read("external_count", cfg.external_count);
    top.read("setup", cfg.setup);
    top.read("audited_checkpoint", cfg.audited_checkpoint);

    if (top.has("methods")) {
        const json& m = j.at("methods");
        if (!m.is_array()) throw config_error("config: \"methods\" must be an array of strings");
        cfg.methods.clear();
        for (const auto& entry : m) {
            if (!entry.is_string())
                throw config_error("config: \"methods\" must be an array of strings");
            cfg.methods.push_back(method_from_string(entry.get<std::string>()));
        }
    }
    if (top.has("split")) {
        Reader r{j.at("split"), "split"};
        r.expect_object({"member_fraction", "mint_eval_fraction"});
        r.read("member_fraction", cfg.split.member_fraction);
        r.read("mint_eval_fraction", cfg.split.mint_eval_fraction);
    }
    if (top.has("backbone")) {
        Reader r{j.at("backbone"), "backbone"};
        r.expect_object({"blocks"});
        if (r.has("blocks"))
            cfg.backbone_blocks = blocks_from_json(j.at("backbone").at("blocks"), "backbone.blocks");
    }
    if (top.has("head")) {
        Reader r{j.at("head"), "head"};
        r.expect_object({"conv_channels", "dropout", "hidden_dim"});
        r.read("conv_channels", cfg.head.per_path_conv_channels);
        r.read("dropout", cfg.head.dropout);
        r.read("hidden_dim", cfg.head.hidden_dim);
    }
    if (top.has("train")) {
        Reader r{j.at("train"), "train"};
        r.expect_object({"learning_rate", "max_epochs", "early_stop_patience", "batch_size",
                         "lambda1", "lambda2", "l2_coeff"});
        r.read("learning_rate", cfg.train.learning_rate);
        r.read("max_epochs", cfg.train.max_epochs);
        r.read("early_stop_patience", cfg.train.early_stop_patience);
        r.read("batch_size", cfg.train.batch_size);
        r.read("lambda1", cfg.train.weights.lambda1);
        r.read("lambda2", cfg.train.weights.lambda2);
        r.read("l2_coeff", cfg.train.weights.l2_coeff);
    }
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["dataset"] = cfg.dataset;
    j["dataset_root"] = cfg.dataset_root;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    j["member_count"] = cfg.member_count;
    j["external_count"] = cfg.external_count;
    j["setup"] = cfg.setup;
    json methods = json::array();
    for (Method m : cfg.methods) methods.push_back(to_string(m));
    j["methods"] = methods;
    j["audited_checkpoint"] = cfg.audited_checkpoint;
    j["split"] = {{"member_fraction", cfg.split.member_fraction},
                  {"mint_eval_fraction", cfg.split.mint_eval_fraction}};
    if (cfg.backbone_blocks) j["backbone"] = {{"blocks", blocks_to_json(*cfg.backbone_blocks)}};
    j["head"] = {{"conv_channels", cfg.head.per_path_conv_channels},
                 {"dropout", cfg.head.dropout},
                 {"hidden_dim", cfg.head.hidden_dim}};
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"max_epochs", cfg.train.max_epochs},
                  {"early_stop_patience", cfg.train.early_stop_patience},
                  {"batch_size", cfg.train.batch_size},
                  {"lambda1", cfg.train.weights.lambda1},
                  {"lambda2", cfg.train.weights.lambda2},
                  {"l2_coeff", cfg.train.weights.l2_coeff}};
    return j;
}

void ExperimentConfig::validate() const {
    if (dataset != "mnist" && dataset != "cifar10")
        throw config_error("config: dataset must be \"mnist\" or \"cifar10\", got \"" + dataset +
                           "\"");
    if (out_dir.empty()) throw config_error("config: out_dir must be set");
    tap_setup_from_string(setup);
    if (methods.empty()) throw config_error("config: methods must not be empty");
    for (size_t i = 0; i < methods.size(); ++i)
        for (size_t k = i + 1; k < methods.size(); ++k)
            if (methods[i] == methods[k])
                throw config_error("config: duplicate method \"" + to_string(methods[i]) + "\"");
    split.validate();
    if (backbone_blocks) {
        if (backbone_blocks->size() < 3)
            throw config_error("config: backbone.blocks needs at least 3 entries");
        for (const auto& b : *backbone_blocks) {
            if (b.layers_per_block < 2)
                throw config_error("config: every backbone block needs at least 2 layers");
            if (b.channels <= 0)
                throw config_error("config: backbone block channels must be positive");
        }
    }
    head.validate();
    train.validate();
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open config file for writing: " + path.string());
    out << config_to_json(cfg).dump(2) << "\n";
    if (!out) throw data_error("failed writing config file: " + path.string());
}

std::filesystem::path resolve_data_root(const ExperimentConfig& cfg) {
    if (!cfg.dataset_root.empty()) return cfg.dataset_root;
    if (const char* env = std::getenv("AMINT_DATA_ROOT"); env && *env) return env;
    return "./data";
}

void save_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
    json j;
    j["toolkit_version"] = manifest.toolkit_version;
    j["status"] = manifest.status;
    j["config"] = manifest.config_echo;
    j["seeds"] = manifest.seeds;
    json checks = json::array();
    for (const auto& [file, crc] : manifest.dataset_checksums)
        checks.push_back({{"file", file}, {"crc32", crc}});
    j["dataset_checksums"] = checks;
    json timings = json::array();
    for (const auto& t : manifest.timings)
        timings.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
    j["timings"] = timings;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open manifest for writing: " + path.string());
    out << j.dump(2) << "\n";
    if (!out) throw data_error("failed writing manifest: " + path.string());
}

RunManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open manifest: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw data_error("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    RunManifest m;
    try {
        m.toolkit_version = j.at("toolkit_version").get<std::string>();
        m.status = j.at("status").get<std::string>();
        m.config_echo = j.at("config");
        m.seeds = j.at("seeds").get<std::map<std::string, uint64_t>>();
        for (const auto& entry : j.at("dataset_checksums"))
            m.dataset_checksums.push_back(
                {entry.at("file").get<std::string>(), entry.at("crc32").get<uint32_t>()});
        for (const auto& entry : j.at("timings"))
            m.timings.push_back(
                {entry.at("stage").get<std::string>(), entry.at("seconds").get<double>()});
    } catch (const json::exception& e) {
        throw data_error("manifest " + path.string() + " is missing required fields: " + e.what());
    }
    return m;
}

}  // namespace amint
