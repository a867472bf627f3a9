#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>
#include <vector>

namespace amint {

// Deterministic splitmix64 generator. Everything stochastic in the toolkit
// (splits, shuffles, init, dropout) draws from one of these, so runs are
// bit-reproducible across platforms regardless of the standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }
    float next_float() { return static_cast<float>((next_u64() >> 40) * 0x1.0p-24); }

    // Unbiased integer in [0, n), n > 0.
    uint64_t below(uint64_t n) {
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller (cached pair).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// One master seed expands into independent per-stage streams keyed by tag.
// FNV-1a over the tag, mixed with the master through splitmix finalization.
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index = 0);

}  // namespace amint
