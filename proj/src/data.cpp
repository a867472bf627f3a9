#include "amint/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "amint/rng.hpp"

namespace amint {

namespace fs = std::filesystem;

namespace {

std::vector<uint8_t> read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw data_error("cannot open dataset file: " + p.string());
    in.seekg(0, std::ios::end);
    std::streamoff n = in.tellg();
    in.seekg(0);
    std::vector<uint8_t> buf(static_cast<size_t>(n));
    if (n > 0) in.read(reinterpret_cast<char*>(buf.data()), n);
    if (!in) throw data_error("short read on dataset file: " + p.string());
    return buf;
}

uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

// Optional integrity manifest: lines of "<crc32 hex>  <filename>".
std::map<std::string, uint32_t> read_checksum_manifest(const fs::path& root) {
    std::map<std::string, uint32_t> sums;
    fs::path manifest = root / "checksums.txt";
    if (!fs::exists(manifest)) return sums;
    std::ifstream in(manifest);
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string hex, name;
        if (ls >> hex >> name) sums[name] = static_cast<uint32_t>(std::stoul(hex, nullptr, 16));
    }
    return sums;
}

struct FileVerifier {
    fs::path root;
    std::map<std::string, uint32_t> expected;
    std::vector<std::pair<std::string, uint32_t>> seen;

    std::vector<uint8_t> load(const std::string& name) {
        fs::path p = root / name;
        if (!fs::exists(p)) throw data_error("missing dataset file: " + p.string());
        auto buf = read_file(p);
        uint32_t crc = static_cast<uint32_t>(
            ::crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
        auto it = expected.find(name);
        if (it != expected.end() && it->second != crc) {
            std::ostringstream msg;
            msg << "checksum mismatch for " << p.string() << ": expected " << std::hex << it->second
                << ", file has " << crc;
            throw data_error(msg.str());
        }
        seen.emplace_back(name, crc);
        return buf;
    }
};

Dataset load_idx_pair(FileVerifier& v, const std::string& images_name, const std::string& labels_name) {
    auto img = v.load(images_name);
    auto lab = v.load(labels_name);
    if (img.size() < 16 || be32(img.data()) != 0x00000803u)
        throw data_error("bad IDX image magic in " + images_name);
    if (lab.size() < 8 || be32(lab.data()) != 0x00000801u)
        throw data_error("bad IDX label magic in " + labels_name);
    uint32_t n = be32(img.data() + 4), rows = be32(img.data() + 8), cols = be32(img.data() + 12);
    uint32_t nl = be32(lab.data() + 4);
    if (n != nl) throw data_error("IDX image/label count mismatch in " + images_name);
    size_t expect = 16 + static_cast<size_t>(n) * rows * cols;
    if (img.size() != expect) throw data_error("truncated IDX image file " + images_name);
    if (lab.size() != 8 + static_cast<size_t>(n)) throw data_error("truncated IDX label file " + labels_name);

    Dataset ds;
    ds.height = static_cast<int>(rows);
    ds.width = static_cast<int>(cols);
    ds.channels = 1;
    ds.num_classes = 10;
    ds.images.assign(img.begin() + 16, img.end());
    ds.labels.resize(n);
    for (uint32_t i = 0; i < n; ++i) {
        uint8_t c = lab[8 + i];
        if (c >= 10) throw data_error("label out of range in " + labels_name);
        ds.labels[i] = c;
    }
    return ds;
}

// CIFAR-10 binary record: 1 label byte + 3072 planar RGB bytes. Stored NHWC.
void append_cifar_file(Dataset& ds, const std::vector<uint8_t>& buf, const std::string& name) {
    constexpr size_t kRec = 3073;
    if (buf.size() % kRec != 0) throw data_error("truncated CIFAR-10 file " + name);
    size_t n = buf.size() / kRec;
    constexpr int hw = 32 * 32;
    size_t base = ds.images.size();
    ds.images.resize(base + n * size_t(3 * hw));
    for (size_t r = 0; r < n; ++r) {
        const uint8_t* rec = buf.data() + r * kRec;
        if (rec[0] >= 10) throw data_error("label out of range in " + name);
        ds.labels.push_back(rec[0]);
        uint8_t* out = ds.images.data() + base + r * size_t(3 * hw);
        const uint8_t* rp = rec + 1;
        const uint8_t* gp = rec + 1 + hw;
        const uint8_t* bp = rec + 1 + 2 * hw;
        for (int i = 0; i < hw; ++i) {
            out[3 * i + 0] = rp[i];
            out[3 * i + 1] = gp[i];
            out[3 * i + 2] = bp[i];
        }
    }
}

}  // namespace

DatasetHandle load_dataset(const std::string& name, const fs::path& root) {
    if (!fs::exists(root)) throw data_error("dataset root does not exist: " + root.string());
    FileVerifier v{root, read_checksum_manifest(root), {}};
    DatasetHandle h;
    if (name == "mnist") {
        h.train_pool = load_idx_pair(v, "train-images-idx3-ubyte", "train-labels-idx1-ubyte");
        h.test = load_idx_pair(v, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
        h.train_pool.name = h.test.name = "mnist";
    } else if (name == "cifar10") {
        Dataset pool;
        pool.height = pool.width = 32;
        pool.channels = 3;
        pool.num_classes = 10;
        append_cifar_file(pool, v.load("data_batch_1.bin"), "data_batch_1.bin");
        for (int b = 2; b <= 5; ++b) {
            std::string fn = "data_batch_" + std::to_string(b) + ".bin";
            if (!fs::exists(root / fn)) break;
            append_cifar_file(pool, v.load(fn), fn);
        }
        Dataset test;
        test.height = test.width = 32;
        test.channels = 3;
        test.num_classes = 10;
        append_cifar_file(test, v.load("test_batch.bin"), "test_batch.bin");
        pool.name = test.name = "cifar10";
        h.train_pool = std::move(pool);
        h.test = std::move(test);
    } else {
        throw config_error("unknown dataset name: " + name);
    }
    h.file_checksums = std::move(v.seen);
    return h;
}

void SplitPlan::validate() const {
    if (!(member_fraction > 0.0 && member_fraction < 1.0))
        throw config_error("SplitPlan.member_fraction must lie in (0,1)");
    if (!(mint_eval_fraction >= 0.0 && mint_eval_fraction < 0.5))
        throw config_error("SplitPlan.mint_eval_fraction must lie in [0,0.5)");
}

namespace {

void flag_mint_eval(std::vector<SplitRecord>& recs, double fraction, uint64_t seed, const char* tag) {
    std::sort(recs.begin(), recs.end(), [](const SplitRecord& a, const SplitRecord& b) { return a.id < b.id; });
    std::vector<size_t> order(recs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, tag));
    rng.shuffle(order);
    size_t k = static_cast<size_t>(std::lround(fraction * static_cast<double>(recs.size())));
    for (size_t i = 0; i < k; ++i) recs[order[i]].mint = MintSplit::EVAL;
}

}  // namespace

SplitResult make_split(const DatasetHandle& handle, const SplitPlan& plan) {
    plan.validate();
    int64_t n = handle.train_pool.count();
    std::vector<int64_t> ids(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i;
    Rng rng(derive_seed(plan.seed, "role-split"));
    rng.shuffle(ids);
    size_t n_members = static_cast<size_t>(std::lround(plan.member_fraction * static_cast<double>(n)));

    SplitResult out;
    out.seed = plan.seed;
    out.members.reserve(n_members);
    out.externals.reserve(ids.size() - n_members);
    for (size_t i = 0; i < ids.size(); ++i) {
        SplitRecord r;
        r.id = ids[i];
        r.role = i < n_members ? Role::MEMBER : Role::EXTERNAL;
        (i < n_members ? out.members : out.externals).push_back(r);
    }
    flag_mint_eval(out.members, plan.mint_eval_fraction, plan.seed, "mint-eval-members");
    flag_mint_eval(out.externals, plan.mint_eval_fraction, plan.seed, "mint-eval-externals");
    return out;
}

SubsampleResult subsample(const Dataset& ds, const std::vector<SplitRecord>& records, size_t n,
                          uint64_t seed) {
    if (n > records.size())
        throw config_error("subsample: requested " + std::to_string(n) + " of " +
                           std::to_string(records.size()) + " records");
    std::vector<SplitRecord> sorted = records;
    std::sort(sorted.begin(), sorted.end(),
              [](const SplitRecord& a, const SplitRecord& b) { return a.id < b.id; });
    Rng rng(derive_seed(seed, "subsample"));
    rng.shuffle(sorted);
    sorted.resize(n);
    std::sort(sorted.begin(), sorted.end(),
              [](const SplitRecord& a, const SplitRecord& b) { return a.id < b.id; });

    SubsampleResult out;
    out.class_counts.assign(static_cast<size_t>(ds.num_classes), 0);
    for (const auto& r : sorted) out.class_counts[static_cast<size_t>(ds.labels[static_cast<size_t>(r.id)])]++;
    out.records = std::move(sorted);
    return out;
}

std::vector<int64_t> ids_of(const std::vector<SplitRecord>& records) {
    std::vector<int64_t> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.id);
    return ids;
}

std::vector<SplitRecord> filter_mint(const std::vector<SplitRecord>& records, MintSplit which) {
    std::vector<SplitRecord> out;
    for (const auto& r : records)
        if (r.mint == which) out.push_back(r);
    return out;
}

Tensor gather_images(const Dataset& ds, const std::vector<int64_t>& ids) {
    Tensor t({static_cast<int>(ids.size()), ds.height, ds.width, ds.channels});
    size_t sb = ds.sample_bytes();
    float* dst = t.data();
    constexpr float kScale = 1.0f / 255.0f;
    for (size_t i = 0; i < ids.size(); ++i) {
        const uint8_t* src = ds.sample(ids[i]);
        for (size_t j = 0; j < sb; ++j) dst[i * sb + j] = static_cast<float>(src[j]) * kScale;
    }
    return t;
}

std::vector<int> gather_labels(const Dataset& ds, const std::vector<int64_t>& ids) {
    std::vector<int> out;
    out.reserve(ids.size());
    for (int64_t id : ids) out.push_back(ds.labels[static_cast<size_t>(id)]);
    return out;
}

MixedBatchStream::MixedBatchStream(const Dataset& ds, std::vector<int64_t> member_fit_ids,
                                   std::vector<int64_t> external_fit_ids, int batch_size,
                                   uint64_t seed)
    : ds_(ds), members_(std::move(member_fit_ids)), externals_(std::move(external_fit_ids)),
      seed_(seed) {
    if (batch_size <= 0 || batch_size % 2 != 0)
        throw config_error("batch_size must be a positive even integer, got " +
                           std::to_string(batch_size));
    if (members_.empty() || externals_.empty())
        throw config_error("compose_batches requires nonempty member and external sets");
    half_ = batch_size / 2;
    batches_per_epoch_ =
        static_cast<int>(std::min(members_.size(), externals_.size()) / static_cast<size_t>(half_));
}

void MixedBatchStream::start_epoch(int epoch) {
    member_order_ = members_;
    external_order_ = externals_;
    Rng mr(derive_seed(seed_, "batch-members", static_cast<uint64_t>(epoch)));
    Rng er(derive_seed(seed_, "batch-externals", static_cast<uint64_t>(epoch)));
    mr.shuffle(member_order_);
    er.shuffle(external_order_);
    cursor_ = 0;
}

bool MixedBatchStream::next(MixedBatch& out) {
    if (cursor_ >= batches_per_epoch_) return false;
    size_t base = static_cast<size_t>(cursor_) * half_;
    out.member_ids.assign(member_order_.begin() + base, member_order_.begin() + base + half_);
    out.external_ids.assign(external_order_.begin() + base, external_order_.begin() + base + half_);
    out.member_images = gather_images(ds_, out.member_ids);
    out.external_images = gather_images(ds_, out.external_ids);
    out.member_class_labels = gather_labels(ds_, out.member_ids);
    out.membership_labels.assign(static_cast<size_t>(2 * half_), 0.0f);
    for (int i = 0; i < half_; ++i) out.membership_labels[static_cast<size_t>(i)] = 1.0f;
    ++cursor_;
    return true;
}

void save_split_manifest(const fs::path& csv_path, const SplitResult& split) {
    std::ofstream out(csv_path);
    if (!out) throw data_error("cannot write split manifest: " + csv_path.string());
    out << "id,role,mint_split\n";
    auto dump = [&out](const std::vector<SplitRecord>& recs) {
        for (const auto& r : recs)
            out << r.id << ',' << (r.role == Role::MEMBER ? "member" : "external") << ','
                << (r.mint == MintSplit::FIT ? "fit" : "eval") << '\n';
    };
    dump(split.members);
    dump(split.externals);
}

SplitResult load_split_manifest(const fs::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw data_error("cannot read split manifest: " + csv_path.string());
    std::string line;
    if (!std::getline(in, line) || line != "id,role,mint_split")
        throw data_error("bad split manifest header in " + csv_path.string());
    SplitResult out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id_s, role_s, mint_s;
        if (!std::getline(ls, id_s, ',') || !std::getline(ls, role_s, ',') || !std::getline(ls, mint_s))
            throw data_error("bad split manifest row: " + line);
        SplitRecord r;
        r.id = std::stoll(id_s);
        r.role = role_s == "member" ? Role::MEMBER : Role::EXTERNAL;
        r.mint = mint_s == "fit" ? MintSplit::FIT : MintSplit::EVAL;
        (r.role == Role::MEMBER ? out.members : out.externals).push_back(r);
    }
    return out;
}

uint32_t file_crc32(const fs::path& p) {
    auto buf = read_file(p);
    return static_cast<uint32_t>(
        ::crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
}

}  // namespace amint
