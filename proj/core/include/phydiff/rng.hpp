// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace phydiff {

/// Mixes a 64-bit value (splitmix64 finalizer). Used to derive child seeds.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic random stream. mt19937_64 is bit-exact across platforms;
/// the normal/uniform transforms below are ours, so every draw sequence is
/// reproducible from the seed alone (the standard library distributions are
/// not portable and are avoided on purpose).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller (two uniforms per draw, no cached state).
    double normal();

    /// Fills `out` with standard normals.
    void fill_normal(std::vector<double>& out);

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Independent child stream keyed by (seed, salt). Does not advance
    /// or depend on this stream's position.
    Rng fork(std::uint64_t salt) const { return Rng(mix64(seed_ ^ mix64(salt))); }

    /// Serialized engine state (decimal text, as specified for mt19937_64).
    std::string state() const;
    void restore(const std::string& state);

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

} // namespace phydiff
