// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "phydiff/gradients.hpp"
#include "phydiff/nn.hpp"

namespace phydiff {

/// Everything the denoiser is conditioned on for one slice at one timestep.
struct ConditionBundle {
    std::int64_t t = 0;
    Vec3 bvec = {0.0, 0.0, 0.0};
    double bval = 0.0;
    std::int64_t slice_index = 0;
};

struct CondConfig {
    std::int64_t width = 256;      // d_cond; must be even (sinusoidal features)
    std::int64_t ffn_blocks = 2;   // GEGLU FFN blocks fusing the embeddings
    std::int64_t max_slices = 110; // slice-index table size
};

/// Pre-feature of the real-number embedding: sign(x) * ln(|x| + 1), with
/// sign(0) = 0. Throws ValueError on non-finite input.
double real_embed_prefeature(double x);

/// Builds the fused guidance vector from timestep, b-vector, b-value, and
/// slice index. Each sub-embedding has width d_cond; they are summed and
/// passed through the GEGLU FFN stack.
class CondMapper {
public:
    CondMapper() = default;
    static CondMapper create(nn::ParamStore& ps, const CondConfig& cfg, Rng& rng);

    const CondConfig& config() const { return cfg_; }

    /// Sinusoidal timestep features followed by a two-layer MLP.
    nn::Tensor time_embed(std::int64_t t) const;
    /// Real-number embedding of Eq-style magnitude conditions (b-values).
    nn::Tensor real_embed(double x) const;
    /// MLP embedding of a unit (or exactly zero) gradient direction.
    nn::Tensor bvec_embed(const Vec3& bvec) const;
    /// Learned lookup-table embedding of the slice index.
    nn::Tensor slice_embed(std::int64_t slice_index) const;

    /// Full guidance vector, shape {1, width}.
    nn::Tensor fuse(const ConditionBundle& bundle) const;

private:
    CondConfig cfg_;
    nn::Linear time1_, time2_;
    nn::Linear bval1_, bval2_;
    nn::Linear bvec1_, bvec2_;
    nn::Tensor slice_table_;
    std::vector<nn::GegluFfn> ffns_;
};

} // namespace phydiff
