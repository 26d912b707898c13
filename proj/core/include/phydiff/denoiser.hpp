// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "phydiff/nn.hpp"

namespace phydiff {

struct HDiTConfig {
    std::int64_t patch_size = 4;
    std::array<std::int64_t, 3> widths = {64, 128, 256};
    std::int64_t blocks_per_level = 1;
    std::int64_t mid_blocks = 2;
    std::int64_t na_window = 7;
    std::int64_t head_dim = 32;
    std::int64_t cond_width = 256;
    std::int64_t image_channels = 1;
    std::int64_t image_h = 64;
    std::int64_t image_w = 64;

    void validate() const;

    /// Token-grid (rows, cols) at each of the three levels.
    std::array<std::array<std::int64_t, 2>, 3> level_grids() const;
};

// Permutation tables between image layout (C, H, W) and token layout
// (tokens, features). Token features are ordered (channel, dy, dx) with the
// channel slowest; tokens scan the patch grid row-major.
std::vector<std::int64_t> patchify_indices(std::int64_t c, std::int64_t h, std::int64_t w,
                                           std::int64_t p);
std::vector<std::int64_t> unpatchify_indices(std::int64_t c, std::int64_t h, std::int64_t w,
                                             std::int64_t p);

/// Raw (projection-free) patchify of a (C,H,W) buffer; exact inverse pair.
std::vector<double> patchify_raw(std::span<const double> img, std::int64_t c, std::int64_t h,
                                 std::int64_t w, std::int64_t p);
std::vector<double> unpatchify_raw(std::span<const double> tokens, std::int64_t c, std::int64_t h,
                                   std::int64_t w, std::int64_t p);

// 2x2 token merging: (gh, gw, width) -> (gh/2, gw/2, 4*width), cells scanned
// row-major. depth_to_space inverts it from the coarse grid back up.
std::vector<std::int64_t> space_to_depth_indices(std::int64_t gh, std::int64_t gw,
                                                 std::int64_t width);
std::vector<std::int64_t> depth_to_space_indices(std::int64_t gh, std::int64_t gw,
                                                 std::int64_t width);

/// Hourglass transformer noise predictor: patchify stem, three NA encoder
/// levels (adapter features add in at each level's first block), a
/// global-attention bottleneck, three decoder levels with learned skip
/// interpolation, unpatchify head.
class Denoiser {
public:
    Denoiser() = default;
    static Denoiser create(nn::ParamStore& ps, const HDiTConfig& cfg, Rng& rng);

    const HDiTConfig& config() const { return cfg_; }

    /// x_t: {C, H, W}; guidance: {1, cond_width}; adapter_feats (optional):
    /// three token-grid tensors matching the encoder levels. Returns the
    /// predicted noise with the shape of x_t.
    nn::Tensor predict_noise(const nn::Tensor& x_t, const nn::Tensor& guidance,
                             const std::vector<nn::Tensor>* adapter_feats = nullptr) const;

private:
    HDiTConfig cfg_;
    nn::Linear in_proj_, out_proj_;
    std::vector<std::vector<nn::NaBlock>> enc_, dec_;  // [level][block]
    std::vector<nn::NaBlock> mid_;
    nn::Linear down_[2], up_[2];     // level transitions 0->1, 1->2 and back
    nn::Tensor merge_[3];            // per-channel skip interpolation weights
    std::shared_ptr<const std::vector<std::int64_t>> patch_idx_, unpatch_idx_;
    std::shared_ptr<const std::vector<std::int64_t>> s2d_idx_[2], d2s_idx_[2];
};

} // namespace phydiff
