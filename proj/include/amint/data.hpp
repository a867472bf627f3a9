#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amint/common.hpp"
#include "amint/tensor.hpp"

namespace amint {

enum class Role { MEMBER, EXTERNAL };
enum class MintSplit { FIT, EVAL };

// In-memory image store. Pixels kept as raw bytes; gather_images scales to
// [0,1] floats at batch-assembly time.
struct Dataset {
    std::string name;
    int height = 0, width = 0, channels = 0;
    int num_classes = 0;
    std::vector<uint8_t> images;  // NHWC, u8
    std::vector<int> labels;

    int count() const { return images.empty() ? 0 : static_cast<int>(labels.size()); }
    size_t sample_bytes() const { return static_cast<size_t>(height) * width * channels; }
    const uint8_t* sample(int64_t i) const { return images.data() + static_cast<size_t>(i) * sample_bytes(); }
};

struct DatasetHandle {
    Dataset train_pool;  // record id == index into train_pool
    Dataset test;
    std::vector<std::pair<std::string, uint32_t>> file_checksums;  // name, crc32
};

// Loads "mnist" (IDX files) or "cifar10" (binary batches) from root.
// If root/checksums.txt exists, every loaded file is verified against it.
DatasetHandle load_dataset(const std::string& name, const std::filesystem::path& root);

struct SplitPlan {
    uint64_t seed = 0;
    double member_fraction = 0.5;
    double mint_eval_fraction = 0.1;

    void validate() const;
};

struct SplitRecord {
    int64_t id = 0;
    Role role = Role::MEMBER;
    MintSplit mint = MintSplit::FIT;
};

struct SplitResult {
    std::vector<SplitRecord> members;    // D
    std::vector<SplitRecord> externals;  // E
    uint64_t seed = 0;
};

// Deterministic member/external split over the train pool. Assignment depends
// only on the set of record ids and the plan seed, not on input order.
SplitResult make_split(const DatasetHandle& handle, const SplitPlan& plan);

struct SubsampleResult {
    std::vector<SplitRecord> records;
    std::vector<int> class_counts;
};

// Uniform random n-subset, deterministic in seed. Preserves role/mint flags.
SubsampleResult subsample(const Dataset& ds, const std::vector<SplitRecord>& records, size_t n,
                          uint64_t seed);

std::vector<int64_t> ids_of(const std::vector<SplitRecord>& records);
std::vector<SplitRecord> filter_mint(const std::vector<SplitRecord>& records, MintSplit which);

// Gather records into an NHWC float batch scaled to [0,1].
Tensor gather_images(const Dataset& ds, const std::vector<int64_t>& ids);
std::vector<int> gather_labels(const Dataset& ds, const std::vector<int64_t>& ids);

struct MixedBatch {
    Tensor member_images;              // half x H x W x C
    std::vector<int> member_class_labels;
    Tensor external_images;            // half x H x W x C
    std::vector<float> membership_labels;  // [1]*half ++ [0]*half
    std::vector<int64_t> member_ids;
    std::vector<int64_t> external_ids;
};

// Balanced member/external batch composer. Each epoch is a fresh shuffle,
// deterministic in (seed, epoch); trailing partial batches are dropped.
class MixedBatchStream {
public:
    MixedBatchStream(const Dataset& ds, std::vector<int64_t> member_fit_ids,
                     std::vector<int64_t> external_fit_ids, int batch_size, uint64_t seed);

    int batches_per_epoch() const { return batches_per_epoch_; }
    int half() const { return half_; }
    void start_epoch(int epoch);
    bool next(MixedBatch& out);

private:
    const Dataset& ds_;
    std::vector<int64_t> members_, externals_;
    std::vector<int64_t> member_order_, external_order_;
    int half_ = 0;
    int batches_per_epoch_ = 0;
    int cursor_ = 0;
    uint64_t seed_ = 0;
};

void save_split_manifest(const std::filesystem::path& csv_path, const SplitResult& split);
SplitResult load_split_manifest(const std::filesystem::path& csv_path);

uint32_t file_crc32(const std::filesystem::path& p);

}  // namespace amint
