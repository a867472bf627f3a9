#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "amint/data.hpp"
#include "amint/datagen.hpp"
#include "test_util.hpp"

using namespace amint;
using amint::test::TempDir;

namespace {

// Mean per-pixel byte distance between class-mean images.
double class_mean_distance(const Dataset& ds, int ca, int cb) {
    size_t sb = ds.sample_bytes();
    std::vector<double> ma(sb, 0.0), mb(sb, 0.0);
    int na = 0, nb = 0;
    for (int i = 0; i < ds.count(); ++i) {
        const uint8_t* s = ds.sample(i);
        if (ds.labels[static_cast<size_t>(i)] == ca) {
            for (size_t j = 0; j < sb; ++j) ma[j] += s[j];
            ++na;
        } else if (ds.labels[static_cast<size_t>(i)] == cb) {
            for (size_t j = 0; j < sb; ++j) mb[j] += s[j];
            ++nb;
        }
    }
    double d = 0.0;
    for (size_t j = 0; j < sb; ++j) d += std::abs(ma[j] / na - mb[j] / nb);
    return d / static_cast<double>(sb);
}

}  // namespace

TEST_CASE("generated mnist root has official layout and balanced labels") {
    TempDir tmp;
    write_synthetic_dataset(tmp.path, "mnist", 500, 100, 42);
    for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                          "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", "checksums.txt"})
        CHECK(std::filesystem::exists(tmp.path / f));

    DatasetHandle h = load_dataset("mnist", tmp.path);
    CHECK(h.train_pool.count() == 500);
    CHECK(h.test.count() == 100);
    std::vector<int> counts(10, 0);
    for (int l : h.train_pool.labels) counts[static_cast<size_t>(l)]++;
    for (int c : counts) CHECK(c == 50);
}

TEST_CASE("generated cifar root has record-sized files and three channels") {
    TempDir tmp;
    write_synthetic_dataset(tmp.path, "cifar10", 12000, 400, 42);
    CHECK(std::filesystem::file_size(tmp.path / "data_batch_1.bin") == 10000u * 3073u);
    CHECK(std::filesystem::file_size(tmp.path / "data_batch_2.bin") == 2000u * 3073u);
    CHECK(!std::filesystem::exists(tmp.path / "data_batch_3.bin"));
    CHECK(std::filesystem::file_size(tmp.path / "test_batch.bin") == 400u * 3073u);

    DatasetHandle h = load_dataset("cifar10", tmp.path);
    CHECK(h.train_pool.count() == 12000);
    CHECK(h.train_pool.channels == 3);
    CHECK(h.test.count() == 400);
}

TEST_CASE("generation is deterministic in the seed") {
    TempDir a, b, c;
    write_synthetic_dataset(a.path, "mnist", 60, 20, 7);
    write_synthetic_dataset(b.path, "mnist", 60, 20, 7);
    write_synthetic_dataset(c.path, "mnist", 60, 20, 8);
    CHECK(file_crc32(a.path / "train-images-idx3-ubyte") ==
          file_crc32(b.path / "train-images-idx3-ubyte"));
    CHECK(file_crc32(a.path / "train-images-idx3-ubyte") !=
          file_crc32(c.path / "train-images-idx3-ubyte"));
}

TEST_CASE("classes are visually separated but samples vary within a class") {
    TempDir tmp;
    write_synthetic_dataset(tmp.path, "mnist", 600, 100, 19);
    DatasetHandle h = load_dataset("mnist", tmp.path);

    // Class means must differ clearly across classes.
    double between = 0.0;
    int pairs = 0;
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) {
            between += class_mean_distance(h.train_pool, a, b);
            ++pairs;
        }
    CHECK(between / pairs > 10.0);

    // Two samples of one class are never byte-identical.
    int first = -1, second = -1;
    for (int i = 0; i < h.train_pool.count(); ++i)
        if (h.train_pool.labels[static_cast<size_t>(i)] == 0) {
            if (first < 0)
                first = i;
            else {
                second = i;
                break;
            }
        }
    REQUIRE(second > 0);
    size_t sb = h.train_pool.sample_bytes();
    bool identical = true;
    for (size_t j = 0; j < sb && identical; ++j)
        identical = h.train_pool.sample(first)[j] == h.train_pool.sample(second)[j];
    CHECK(!identical);
}

TEST_CASE("generator rejects invalid requests") {
    TempDir tmp;
    CHECK_THROWS_AS(write_synthetic_dataset(tmp.path, "mnist", 0, 10, 1), config_error);
    CHECK_THROWS_AS(write_synthetic_dataset(tmp.path, "cifar10", 60000, 10, 1), config_error);
    CHECK_THROWS_AS(write_synthetic_dataset(tmp.path, "svhn", 10, 10, 1), config_error);
}
