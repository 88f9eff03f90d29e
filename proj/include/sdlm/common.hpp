// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// Error types and the deterministic RNG used across the project.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sdlm {

// Bad user-facing configuration (task names, config files, flag values).
// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Ill-formed block layout requests (overlaps, out-of-range blocks).
struct LayoutError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Internal API misuse: shape mismatches, cache/position inconsistencies.
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

// Unreadable or corrupt checkpoint files.
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Generation would exceed the model's position range.
struct LengthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// mt19937_64 with hand-rolled draw helpers. The std distributions are
// implementation-defined; these are not, so seeded runs reproduce
// byte-identically across standard libraries.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [lo, hi], inclusive. Rejection sampling, no modulo bias.
    int uniform_int(int lo, int hi) {
        if (lo > hi) throw ContractViolation("uniform_int: lo > hi");
        uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return lo + static_cast<int>(x % span);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller. Draws two uniforms per call; no cached spare, so the
    // stream position is a fixed function of the call count.
    float normal(float mean = 0.0f, float stddev = 1.0f) {
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform01();
        double u2 = uniform01();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        return mean + stddev * static_cast<float>(z);
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace sdlm
