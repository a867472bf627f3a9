#include "amint/rng.hpp"

namespace amint {

uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : tag) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    h ^= master + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h ^= index * 0xff51afd7ed558ccdull;
    Rng mix(h);
    return mix.next_u64();
}

}  // namespace amint
