// Deterministic PRNG wrapper. std::mt19937_64 output is pinned by the
// standard, but the standard distributions are not, so sampling helpers are
// implemented here to keep results identical across compilers and platforms.

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "das/bytes.hpp"

namespace das {

class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : eng_(seed) {}
    explicit DetRng(const Hash32& seed) : eng_(hash_to_u64(seed)) {}

    std::uint64_t next_u64() { return eng_(); }

    // Unbiased uniform draw in [0, bound) via masked rejection.
    std::uint64_t uniform_below(std::uint64_t bound) {
        if (bound == 0) throw std::invalid_argument("uniform_below: bound must be positive");
        if ((bound & (bound - 1)) == 0) return eng_() & (bound - 1);
        std::uint64_t mask = bound - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        for (;;) {
            std::uint64_t v = eng_() & mask;
            if (v < bound) return v;
        }
    }

    // Uniform double in [0, 1) with 53 bits of entropy.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Fisher-Yates over an index range.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values in [0, bound), rejection-sampled, in draw order.
    std::vector<std::uint64_t> sample_distinct(std::uint64_t k, std::uint64_t bound) {
        if (k > bound) throw std::invalid_argument("sample_distinct: k exceeds bound");
        std::vector<std::uint64_t> out;
        out.reserve(static_cast<std::size_t>(k));
        while (out.size() < k) {
            std::uint64_t v = uniform_below(bound);
            bool seen = false;
            for (std::uint64_t u : out) {
                if (u == v) {
                    seen = true;
                    break;
                }
            }
            if (!seen) out.push_back(v);
        }
        return out;
    }

private:
    std::mt19937_64 eng_;
};

// Domain-separated seed derivation: independent streams for unrelated
// random choices made from one scenario seed.
inline Hash32 derive_seed(const Hash32& root, std::string_view domain, std::uint64_t index = 0) {
    HashWriter w;
    w.write(as_span(root)).write(domain).write_u64(index);
    return w.finish();
}

inline Hash32 seed_from_u64(std::uint64_t seed) {
    HashWriter w;
    w.write("seed-root").write_u64(seed);
    return w.finish();
}

}  // namespace das
