#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "amint/common.hpp"
#include "amint/datagen.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Synthetic dataset generator (official binary formats)"};

    std::string root, dataset;
    int train_count = 22000, test_count = 2000;
    int64_t seed = 7;
    double class_amp = -1.0, texture_amp = -1.0, mark_amp = -1.0, pixel_noise = -1.0;
    double label_noise = -1.0;
    int marks = -1, max_shift = -1;
    app.add_option("--root", root, "Directory to write the dataset files into")->required();
    app.add_option("--dataset", dataset, "mnist|cifar10")->required();
    app.add_option("--train", train_count, "Training pool size")->check(CLI::PositiveNumber);
    app.add_option("--test", test_count, "Test split size")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Generator seed")->check(CLI::NonNegativeNumber);
    app.add_option("--class-amp", class_amp, "Class prototype amplitude override");
    app.add_option("--texture-amp", texture_amp, "Per-sample texture amplitude override");
    app.add_option("--mark-amp", mark_amp, "Per-sample mark amplitude override");
    app.add_option("--marks", marks, "Marks per sample override");
    app.add_option("--max-shift", max_shift, "Prototype jitter override (pixels)");
    app.add_option("--pixel-noise", pixel_noise, "Pixel noise override");
    app.add_option("--label-noise", label_noise,
                   "Fraction of train labels re-rolled to another class");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (dataset != "mnist" && dataset != "cifar10")
            throw amint::config_error("dataset must be \"mnist\" or \"cifar10\", got \"" + dataset +
                                      "\"");
        amint::SynthProfile profile = dataset == "mnist" ? amint::SynthProfile::mnist_like()
                                                         : amint::SynthProfile::cifar10_like();
        if (class_amp >= 0.0) profile.class_amplitude = class_amp;
        if (texture_amp >= 0.0) profile.texture_amplitude = texture_amp;
        if (mark_amp >= 0.0) profile.mark_amplitude = mark_amp;
        if (marks >= 0) profile.marks_per_sample = marks;
        if (max_shift >= 0) profile.max_shift = max_shift;
        if (pixel_noise >= 0.0) profile.pixel_noise = pixel_noise;
        if (label_noise >= 0.0) profile.train_label_noise = label_noise;
        amint::write_synthetic_dataset(root, dataset, train_count, test_count,
                                       static_cast<uint64_t>(seed), profile);
        std::printf("wrote %s (%d train, %d test) under %s\n", dataset.c_str(), train_count,
                    test_count, root.c_str());
        return 0;
    } catch (const amint::config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}
