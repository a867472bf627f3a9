#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace amint {

// Parameters controlling the synthetic image distribution. Class identity is
// carried by smooth per-class fields; per-sample idiosyncrasy (local texture,
// marks, jitter) controls how much the classifier must fit individual samples.
struct SynthProfile {
    int height = 28, width = 28, channels = 1;
    int num_classes = 10;
    double class_amplitude = 0.85;   // weight of the class prototype field
    double texture_amplitude = 0.25; // per-sample smooth texture field
    double mark_amplitude = 0.9;     // per-sample sharp marks
    int marks_per_sample = 3;
    int max_shift = 3;               // prototype jitter in pixels
    double pixel_noise = 0.04;
    double train_label_noise = 0.0;  // fraction of train labels re-rolled to another class

    static SynthProfile mnist_like();
    static SynthProfile cifar10_like();
};

// Writes a dataset root in the official on-disk format for `name` ("mnist" ->
// IDX files, "cifar10" -> binary batches) plus a checksums.txt manifest.
void write_synthetic_dataset(const std::filesystem::path& root, const std::string& name,
                             int train_count, int test_count, uint64_t seed,
                             const SynthProfile& profile);

void write_synthetic_dataset(const std::filesystem::path& root, const std::string& name,
                             int train_count, int test_count, uint64_t seed);

}  // namespace amint
