#pragma once

// Counter-based random number generation for the simulator. Every variate
// is addressed by (seed; replicate, task, slot), so draws are reproducible
// no matter how work is scheduled across threads.

#include <array>
#include <cstdint>

#include "rebias/math.hpp"

namespace rebias {

// Philox4x32-10 block cipher (Salmon et al. counter RNG).
struct Philox4x32 {
    static constexpr std::uint32_t kMult0 = 0xD2511F53u;
    static constexpr std::uint32_t kMult1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMult0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMult1) * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                   static_cast<std::uint32_t>(p0)};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }
};

class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t bits(std::uint64_t replicate, std::uint64_t task, std::uint32_t slot) const {
        const std::array<std::uint32_t, 4> ctr = {
            static_cast<std::uint32_t>(replicate),
            static_cast<std::uint32_t>(replicate >> 32),
            static_cast<std::uint32_t>(task), slot};
        const std::array<std::uint32_t, 2> key = {
            static_cast<std::uint32_t>(seed_),
            static_cast<std::uint32_t>(seed_ >> 32)};
        const auto out = Philox4x32::block(ctr, key);
        return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    }

    // Uniform on the open interval (0,1): 53 random bits centered in their
    // cell, so 0 and 1 are unreachable and inverse-CDF transforms stay finite.
    double uniform(std::uint64_t replicate, std::uint64_t task, std::uint32_t slot) const {
        const std::uint64_t x = bits(replicate, task, slot) >> 11;
        return (static_cast<double>(x) + 0.5) * 0x1.0p-53;
    }

    double normal(std::uint64_t replicate, std::uint64_t task, std::uint32_t slot) const {
        return normal_quantile(uniform(replicate, task, slot));
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

}  // namespace rebias
