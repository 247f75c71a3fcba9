#include <catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "rebias/rng.hpp"

using namespace rebias;

// Published known-answer vectors for Philox4x32-10.
TEST_CASE("philox4x32-10 known-answer vectors") {
    {
        const auto out = Philox4x32::block({0u, 0u, 0u, 0u}, {0u, 0u});
        CHECK(out[0] == 0x6627e8d5u);
        CHECK(out[1] == 0xe169c58du);
        CHECK(out[2] == 0xbc57ac4cu);
        CHECK(out[3] == 0x9b00dbd8u);
    }
    {
        const auto out = Philox4x32::block(
            {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
        CHECK(out[0] == 0x408f276du);
        CHECK(out[1] == 0x41c83b0eu);
        CHECK(out[2] == 0xa20bc7c6u);
        CHECK(out[3] == 0x6d5451fdu);
    }
    {
        const auto out = Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                           {0xa4093822u, 0x299f31d0u});
        CHECK(out[0] == 0xd16cfe09u);
        CHECK(out[1] == 0x94fdccebu);
        CHECK(out[2] == 0x5001e420u);
        CHECK(out[3] == 0x24126ea1u);
    }
}

TEST_CASE("counter rng is a pure function of its coordinates") {
    const CounterRng rng(12345);
    CHECK(rng.uniform(3, 17, 2) == rng.uniform(3, 17, 2));
    CHECK(rng.uniform(3, 17, 2) != rng.uniform(3, 17, 3));
    CHECK(rng.uniform(3, 17, 2) != rng.uniform(3, 18, 2));
    CHECK(rng.uniform(4, 17, 2) != rng.uniform(3, 17, 2));
    const CounterRng other(12346);
    CHECK(rng.uniform(3, 17, 2) != other.uniform(3, 17, 2));
}

TEST_CASE("uniforms live strictly inside (0,1)") {
    const CounterRng rng(99);
    for (std::uint64_t i = 0; i < 20000; ++i) {
        const double u = rng.uniform(0, i, 0);
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("normal draws have the right first two moments") {
    const CounterRng rng(2024);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal(0, static_cast<std::uint64_t>(i), 1);
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(mean == Catch::Approx(0.0).margin(4.0 / std::sqrt(static_cast<double>(n))));
    CHECK(var == Catch::Approx(1.0).margin(0.02));
}
