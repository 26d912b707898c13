// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "phydiff/denoiser.hpp"
#include "phydiff/gradients.hpp"
#include "phydiff/nn.hpp"
#include "phydiff/volume.hpp"

namespace phydiff {

struct EnrichmentConfig {
    double xi = 1.0;  // correction factor, >= 0
};

/// Replaces every channel of an empty atlas slice (all 42 channels exactly
/// zero) with (sum of that slice's channels + xi) * f_N(b0 slice), where
/// f_N min-max normalizes the slice's baseline image onto [0, 1]. Since the
/// slice is empty the channel sum is zero, so the replacement collapses to
/// xi * f_N(b0). Non-empty slices pass through untouched.
TractAtlas enrich_empty_slices(const TractAtlas& atlas, const Volume& b0,
                               const EnrichmentConfig& cfg);

/// Space-to-depth: (C, H, W) -> (C*r^2, H/r, W/r); channel-major within each
/// r x r cell, cells scanned row-major. pixel_shuffle is the exact inverse.
std::vector<std::int64_t> pixel_unshuffle_indices(std::int64_t c, std::int64_t h, std::int64_t w,
                                                  std::int64_t r);
std::vector<double> pixel_unshuffle(std::span<const double> img, std::int64_t c, std::int64_t h,
                                    std::int64_t w, std::int64_t r);
std::vector<double> pixel_shuffle(std::span<const double> img, std::int64_t c_r2, std::int64_t h,
                                  std::int64_t w, std::int64_t r);

/// Tract-atlas condition encoder: pixel-unshuffle stem, three ResNet blocks
/// with 2x downsampling between levels, and zero-initialized 1x1 output
/// projections shaped for additive injection into the denoiser's three
/// encoder levels. Zero-initialized projections make a fresh adapter an
/// exact no-op.
class Adapter {
public:
    Adapter() = default;
    static Adapter create(nn::ParamStore& ps, const HDiTConfig& denoiser_cfg, Rng& rng);

    /// atlas_slice: {42, H, W} (normalized). Returns the three per-level
    /// token-grid feature maps.
    std::vector<nn::Tensor> forward(const nn::Tensor& atlas_slice) const;

private:
    struct ResBlock {
        nn::Tensor conv1_w, conv1_b, conv2_w, conv2_b;
        nn::Tensor skip_w;  // 1x1, only when in/out channels differ
        nn::Tensor operator()(const nn::Tensor& x) const;
    };

    HDiTConfig cfg_;
    nn::Tensor stem_w_, stem_b_;
    ResBlock blocks_[3];
    nn::Tensor proj_w_[3], proj_b_[3];
    std::shared_ptr<const std::vector<std::int64_t>> unshuffle_idx_;
    std::shared_ptr<const std::vector<std::int64_t>> to_tokens_idx_[3];
};

} // namespace phydiff
