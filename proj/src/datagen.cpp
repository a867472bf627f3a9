#include "amint/datagen.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include "amint/common.hpp"
#include "amint/rng.hpp"

namespace amint {

namespace fs = std::filesystem;

SynthProfile SynthProfile::mnist_like() {
    SynthProfile p;
    p.height = p.width = 28;
    p.channels = 1;
    p.class_amplitude = 0.9;
    p.texture_amplitude = 0.22;
    p.mark_amplitude = 0.85;
    p.marks_per_sample = 3;
    p.max_shift = 2;
    p.pixel_noise = 0.03;
    return p;
}

SynthProfile SynthProfile::cifar10_like() {
    SynthProfile p;
    p.height = p.width = 32;
    p.channels = 3;
    p.class_amplitude = 0.55;
    p.texture_amplitude = 0.5;
    p.mark_amplitude = 0.95;
    p.marks_per_sample = 5;
    p.max_shift = 4;
    p.pixel_noise = 0.08;
    return p;
}

namespace {

// Smooth per-class field: a few Gaussian blobs plus a sinusoidal grating,
// rescaled to [0,1]. Channels of one class share blob geometry but get their
// own amplitudes, which gives classes a color identity when channels > 1.
std::vector<float> make_prototype(const SynthProfile& p, int cls, uint64_t seed) {
    Rng rng(derive_seed(seed, "class-prototype", static_cast<uint64_t>(cls)));
    int h = p.height, w = p.width, c = p.channels;
    struct Blob {
        double cy, cx, sigma;
    };
    std::vector<Blob> blobs(5);
    for (auto& b : blobs) {
        b.cy = rng.next_double() * h;
        b.cx = rng.next_double() * w;
        b.sigma = 1.8 + rng.next_double() * 2.4;
    }
    double fy = (rng.next_double() - 0.5) * 0.5;
    double fx = (rng.next_double() - 0.5) * 0.5;
    double phase = rng.next_double() * 6.28318530717958648;
    std::vector<double> chan_blob(static_cast<size_t>(c)), chan_wave(static_cast<size_t>(c));
    for (int k = 0; k < c; ++k) {
        chan_blob[static_cast<size_t>(k)] = 0.5 + rng.next_double();
        chan_wave[static_cast<size_t>(k)] = 0.2 + 0.4 * rng.next_double();
    }

    std::vector<float> proto(static_cast<size_t>(h) * w * c);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double g = 0.0;
            for (const auto& b : blobs) {
                double dy = y - b.cy, dx = x - b.cx;
                g += std::exp(-(dy * dy + dx * dx) / (2.0 * b.sigma * b.sigma));
            }
            double wave = std::sin(6.28318530717958648 * (fy * y + fx * x) + phase);
            for (int k = 0; k < c; ++k) {
                double v = chan_blob[static_cast<size_t>(k)] * g + chan_wave[static_cast<size_t>(k)] * wave;
                proto[(static_cast<size_t>(y) * w + x) * c + k] = static_cast<float>(v);
            }
        }
    float lo = proto[0], hi = proto[0];
    for (float v : proto) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    float span = std::max(hi - lo, 1e-6f);
    for (float& v : proto) v = (v - lo) / span;
    return proto;
}

// Low-resolution random field upsampled bilinearly; zero-mean by construction
// of the grid values in [-1,1].
void add_texture(std::vector<double>& img, const SynthProfile& p, Rng& rng, double amp) {
    constexpr int kGrid = 6;
    int h = p.height, w = p.width, c = p.channels;
    std::vector<double> grid(static_cast<size_t>(kGrid) * kGrid * c);
    for (auto& v : grid) v = 2.0 * rng.next_double() - 1.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gy = static_cast<double>(y) / (h - 1) * (kGrid - 1);
            double gx = static_cast<double>(x) / (w - 1) * (kGrid - 1);
            int y0 = std::min(static_cast<int>(gy), kGrid - 2);
            int x0 = std::min(static_cast<int>(gx), kGrid - 2);
            double ty = gy - y0, tx = gx - x0;
            for (int k = 0; k < c; ++k) {
                auto at = [&](int yy, int xx) {
                    return grid[(static_cast<size_t>(yy) * kGrid + xx) * c + k];
                };
                double v = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                           ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
                img[(static_cast<size_t>(y) * w + x) * c + k] += amp * v;
            }
        }
}

void render_sample(std::vector<uint8_t>& out, size_t offset, const std::vector<float>& proto,
                   const SynthProfile& p, Rng& rng) {
    int h = p.height, w = p.width, c = p.channels;
    std::vector<double> img(static_cast<size_t>(h) * w * c, 0.0);

    int dy = static_cast<int>(rng.below(static_cast<uint64_t>(2 * p.max_shift + 1))) - p.max_shift;
    int dx = static_cast<int>(rng.below(static_cast<uint64_t>(2 * p.max_shift + 1))) - p.max_shift;
    double amp = p.class_amplitude * (0.85 + 0.3 * rng.next_double());
    for (int y = 0; y < h; ++y) {
        int sy = std::clamp(y - dy, 0, h - 1);
        for (int x = 0; x < w; ++x) {
            int sx = std::clamp(x - dx, 0, w - 1);
            for (int k = 0; k < c; ++k)
                img[(static_cast<size_t>(y) * w + x) * c + k] +=
                    amp * proto[(static_cast<size_t>(sy) * w + sx) * c + k];
        }
    }

    add_texture(img, p, rng, p.texture_amplitude);

    // Sharp 2x2 marks at random positions, bright or dark per mark.
    for (int m = 0; m < p.marks_per_sample; ++m) {
        int my = static_cast<int>(rng.below(static_cast<uint64_t>(h - 1)));
        int mx = static_cast<int>(rng.below(static_cast<uint64_t>(w - 1)));
        double v = rng.next_double() < 0.5 ? -p.mark_amplitude : p.mark_amplitude;
        for (int oy = 0; oy < 2; ++oy)
            for (int ox = 0; ox < 2; ++ox)
                for (int k = 0; k < c; ++k)
                    img[(static_cast<size_t>(my + oy) * w + (mx + ox)) * c + k] = 0.5 + v * 0.5;
    }

    for (size_t i = 0; i < img.size(); ++i) {
        double v = img[i] + p.pixel_noise * rng.normal();
        v = std::clamp(v, 0.0, 1.0);
        out[offset + i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
}

struct SplitArrays {
    std::vector<uint8_t> images;  // NHWC for IDX/gray, converted later for CIFAR
    std::vector<uint8_t> labels;
};

SplitArrays make_split_arrays(const SynthProfile& p, int count, uint64_t seed, const char* tag,
                              const std::vector<std::vector<float>>& protos) {
    SplitArrays a;
    size_t sb = static_cast<size_t>(p.height) * p.width * p.channels;
    a.images.resize(static_cast<size_t>(count) * sb);
    a.labels.resize(static_cast<size_t>(count));
    Rng label_rng(derive_seed(seed, "labels", std::hash<std::string_view>{}(tag)));
    for (int i = 0; i < count; ++i) {
        int cls = i % p.num_classes;
        a.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(cls);
        Rng rng(derive_seed(seed, tag, static_cast<uint64_t>(i)));
        render_sample(a.images, static_cast<size_t>(i) * sb, protos[static_cast<size_t>(cls)], p, rng);
    }
    // Shuffle sample order so class labels are not periodic on disk.
    std::vector<size_t> order(static_cast<size_t>(count));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    label_rng.shuffle(order);
    SplitArrays shuffled;
    shuffled.images.resize(a.images.size());
    shuffled.labels.resize(a.labels.size());
    for (size_t i = 0; i < order.size(); ++i) {
        shuffled.labels[i] = a.labels[order[i]];
        std::memcpy(shuffled.images.data() + i * sb, a.images.data() + order[i] * sb, sb);
    }
    return shuffled;
}

void write_bytes(const fs::path& p, const std::vector<uint8_t>& buf) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw data_error("cannot write dataset file: " + p.string());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw data_error("short write on dataset file: " + p.string());
}

void push_be32(std::vector<uint8_t>& buf, uint32_t v) {
    buf.push_back(static_cast<uint8_t>(v >> 24));
    buf.push_back(static_cast<uint8_t>(v >> 16));
    buf.push_back(static_cast<uint8_t>(v >> 8));
    buf.push_back(static_cast<uint8_t>(v));
}

std::vector<uint8_t> idx_images(const SplitArrays& a, const SynthProfile& p) {
    std::vector<uint8_t> buf;
    buf.reserve(16 + a.images.size());
    push_be32(buf, 0x00000803u);
    push_be32(buf, static_cast<uint32_t>(a.labels.size()));
    push_be32(buf, static_cast<uint32_t>(p.height));
    push_be32(buf, static_cast<uint32_t>(p.width));
    buf.insert(buf.end(), a.images.begin(), a.images.end());
    return buf;
}

std::vector<uint8_t> idx_labels(const SplitArrays& a) {
    std::vector<uint8_t> buf;
    buf.reserve(8 + a.labels.size());
    push_be32(buf, 0x00000801u);
    push_be32(buf, static_cast<uint32_t>(a.labels.size()));
    buf.insert(buf.end(), a.labels.begin(), a.labels.end());
    return buf;
}

// CIFAR-10 record layout: label byte then the three color planes.
std::vector<uint8_t> cifar_records(const SplitArrays& a, const SynthProfile& p, size_t first,
                                   size_t count) {
    constexpr int hw = 32 * 32;
    size_t sb = static_cast<size_t>(3) * hw;
    std::vector<uint8_t> buf;
    buf.reserve(count * 3073);
    for (size_t i = first; i < first + count; ++i) {
        buf.push_back(a.labels[i]);
        const uint8_t* src = a.images.data() + i * sb;
        for (int plane = 0; plane < 3; ++plane)
            for (int j = 0; j < hw; ++j) buf.push_back(src[static_cast<size_t>(3) * j + plane]);
    }
    (void)p;
    return buf;
}

}  // namespace

void write_synthetic_dataset(const fs::path& root, const std::string& name, int train_count,
                             int test_count, uint64_t seed, const SynthProfile& profile) {
    if (train_count <= 0 || test_count <= 0)
        throw config_error("write_synthetic_dataset: counts must be positive");
    fs::create_directories(root);

    std::vector<std::vector<float>> protos;
    protos.reserve(static_cast<size_t>(profile.num_classes));
    for (int c = 0; c < profile.num_classes; ++c) protos.push_back(make_prototype(profile, c, seed));

    SplitArrays train = make_split_arrays(profile, train_count, seed, "train", protos);
    SplitArrays test = make_split_arrays(profile, test_count, seed, "test", protos);

    if (profile.train_label_noise < 0.0 || profile.train_label_noise >= 1.0)
        throw config_error("write_synthetic_dataset: train_label_noise must be in [0, 1)");
    if (profile.train_label_noise > 0.0) {
        Rng noise_rng(derive_seed(seed, "label-noise"));
        for (auto& label : train.labels) {
            if (noise_rng.next_double() >= profile.train_label_noise) continue;
            int shift = 1 + static_cast<int>(noise_rng.below(
                                static_cast<uint64_t>(profile.num_classes - 1)));
            label = static_cast<uint8_t>((label + shift) % profile.num_classes);
        }
    }

    std::vector<std::pair<std::string, std::vector<uint8_t>>> files;
    if (name == "mnist") {
        if (profile.channels != 1) throw config_error("mnist layout requires a single channel");
        files.emplace_back("train-images-idx3-ubyte", idx_images(train, profile));
        files.emplace_back("train-labels-idx1-ubyte", idx_labels(train));
        files.emplace_back("t10k-images-idx3-ubyte", idx_images(test, profile));
        files.emplace_back("t10k-labels-idx1-ubyte", idx_labels(test));
    } else if (name == "cifar10") {
        if (profile.channels != 3 || profile.height != 32 || profile.width != 32)
            throw config_error("cifar10 layout requires 3x32x32 images");
        constexpr size_t kPerFile = 10000;
        size_t n = static_cast<size_t>(train_count);
        size_t nfiles = (n + kPerFile - 1) / kPerFile;
        if (nfiles > 5) throw config_error("cifar10 layout holds at most 50000 training records");
        for (size_t b = 0; b < nfiles; ++b) {
            size_t first = b * kPerFile;
            size_t cnt = std::min(kPerFile, n - first);
            files.emplace_back("data_batch_" + std::to_string(b + 1) + ".bin",
                               cifar_records(train, profile, first, cnt));
        }
        files.emplace_back("test_batch.bin",
                           cifar_records(test, profile, 0, static_cast<size_t>(test_count)));
    } else {
        throw config_error("unknown dataset name: " + name);
    }

    std::ostringstream manifest;
    for (const auto& [fname, buf] : files) {
        write_bytes(root / fname, buf);
        uint32_t crc = static_cast<uint32_t>(
            ::crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
        manifest << std::hex << std::setw(8) << std::setfill('0') << crc << "  " << fname << '\n';
    }
    std::ofstream mf(root / "checksums.txt");
    if (!mf) throw data_error("cannot write checksums.txt under " + root.string());
    mf << manifest.str();
}

void write_synthetic_dataset(const fs::path& root, const std::string& name, int train_count,
                             int test_count, uint64_t seed) {
    write_synthetic_dataset(root, name, train_count, test_count, seed,
                            name == "cifar10" ? SynthProfile::cifar10_like()
                                              : SynthProfile::mnist_like());
}

}  // namespace amint
