// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/denoiser.hpp"

#include <string>

#include "phydiff/errors.hpp"

namespace phydiff {

using ad::Shape;
using ad::Tensor;

void HDiTConfig::validate() const {
    if (patch_size < 1 || image_h % patch_size != 0 || image_w % patch_size != 0)
        throw ConfigError("HDiTConfig: patch size must divide image dims");
    if (!(widths[0] < widths[1] && widths[1] < widths[2]))
        throw ConfigError("HDiTConfig: level widths must be strictly increasing");
    if (na_window < 3 || na_window % 2 == 0)
        throw ConfigError("HDiTConfig: na_window must be odd and >= 3");
    if (blocks_per_level < 1 || mid_blocks < 1)
        throw ConfigError("HDiTConfig: block counts must be >= 1");
    for (std::int64_t w : widths)
        if (head_dim < 1 || w % head_dim != 0)
            throw ConfigError("HDiTConfig: head_dim must divide every level width");
    if (cond_width < 2) throw ConfigError("HDiTConfig: cond_width must be >= 2");
    const auto grids = level_grids();
    for (int l = 0; l < 2; ++l)
        if (grids[l][0] % 2 != 0 || grids[l][1] % 2 != 0)
            throw ConfigError("HDiTConfig: token grid at level " + std::to_string(l) +
                              " must have even dims for downsampling");
    if (grids[2][0] < 1 || grids[2][1] < 1)
        throw ConfigError("HDiTConfig: image too small for three levels");
}

std::array<std::array<std::int64_t, 2>, 3> HDiTConfig::level_grids() const {
    const std::int64_t g0h = image_h / patch_size, g0w = image_w / patch_size;
    return {{{g0h, g0w}, {g0h / 2, g0w / 2}, {g0h / 4, g0w / 4}}};
}

std::vector<std::int64_t> patchify_indices(std::int64_t c, std::int64_t h, std::int64_t w,
                                           std::int64_t p) {
    if (p < 1 || h % p != 0 || w % p != 0)
        throw ShapeError("patchify: patch size must divide image dims");
    const std::int64_t gh = h / p, gw = w / p;
    std::vector<std::int64_t> idx;
    idx.reserve(static_cast<std::size_t>(c * h * w));
    for (std::int64_t ti = 0; ti < gh; ++ti)
        for (std::int64_t tj = 0; tj < gw; ++tj)
            for (std::int64_t ch = 0; ch < c; ++ch)
                for (std::int64_t dy = 0; dy < p; ++dy)
                    for (std::int64_t dx = 0; dx < p; ++dx)
                        idx.push_back((ch * h + ti * p + dy) * w + tj * p + dx);
    return idx;
}

std::vector<std::int64_t> unpatchify_indices(std::int64_t c, std::int64_t h, std::int64_t w,
                                             std::int64_t p) {
    const auto fwd = patchify_indices(c, h, w, p);
    std::vector<std::int64_t> inv(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) inv[fwd[i]] = static_cast<std::int64_t>(i);
    return inv;
}

namespace {

std::vector<double> apply_permutation(std::span<const double> in,
                                      const std::vector<std::int64_t>& idx) {
    if (in.size() != idx.size()) throw ShapeError("permutation: size mismatch");
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = in[idx[i]];
    return out;
}

} // namespace

std::vector<double> patchify_raw(std::span<const double> img, std::int64_t c, std::int64_t h,
                                 std::int64_t w, std::int64_t p) {
    return apply_permutation(img, patchify_indices(c, h, w, p));
}

std::vector<double> unpatchify_raw(std::span<const double> tokens, std::int64_t c, std::int64_t h,
                                   std::int64_t w, std::int64_t p) {
    return apply_permutation(tokens, unpatchify_indices(c, h, w, p));
}

std::vector<std::int64_t> space_to_depth_indices(std::int64_t gh, std::int64_t gw,
                                                 std::int64_t width) {
    if (gh % 2 != 0 || gw % 2 != 0) throw ShapeError("space_to_depth: odd grid dims");
    std::vector<std::int64_t> idx;
    idx.reserve(static_cast<std::size_t>(gh * gw * width));
    for (std::int64_t i = 0; i < gh / 2; ++i)
        for (std::int64_t j = 0; j < gw / 2; ++j)
            for (std::int64_t dy = 0; dy < 2; ++dy)
                for (std::int64_t dx = 0; dx < 2; ++dx)
                    for (std::int64_t f = 0; f < width; ++f)
                        idx.push_back(((2 * i + dy) * gw + (2 * j + dx)) * width + f);
    return idx;
}

std::vector<std::int64_t> depth_to_space_indices(std::int64_t gh, std::int64_t gw,
                                                 std::int64_t width) {
    // From (gh, gw, 4*width) packed cells to the (2gh, 2gw, width) grid.
    std::vector<std::int64_t> idx;
    idx.reserve(static_cast<std::size_t>(gh * gw * 4 * width));
    for (std::int64_t r = 0; r < 2 * gh; ++r)
        for (std::int64_t c = 0; c < 2 * gw; ++c) {
            const std::int64_t q = (r % 2) * 2 + (c % 2);
            for (std::int64_t f = 0; f < width; ++f)
                idx.push_back(((r / 2) * gw + (c / 2)) * (4 * width) + q * width + f);
        }
    return idx;
}

Denoiser Denoiser::create(nn::ParamStore& ps, const HDiTConfig& cfg, Rng& rng) {
    cfg.validate();
    Denoiser d;
    d.cfg_ = cfg;
    const auto grids = cfg.level_grids();
    const std::int64_t pdim = cfg.patch_size * cfg.patch_size * cfg.image_channels;

    d.in_proj_ = nn::Linear::create(ps, "denoiser.in_proj", pdim, cfg.widths[0], rng);

    d.enc_.resize(3);
    d.dec_.resize(3);
    for (int l = 0; l < 3; ++l) {
        const std::int64_t heads = cfg.widths[l] / cfg.head_dim;
        for (std::int64_t b = 0; b < cfg.blocks_per_level; ++b) {
            d.enc_[l].push_back(nn::NaBlock::create(
                ps, "denoiser.enc" + std::to_string(l) + ".b" + std::to_string(b), cfg.widths[l],
                cfg.cond_width, cfg.na_window, heads, rng));
        }
    }
    {
        // Bottleneck: window spanning the whole deepest grid = global attention.
        const std::int64_t span = std::max(grids[2][0], grids[2][1]) * 2 + 1;
        const std::int64_t heads = cfg.widths[2] / cfg.head_dim;
        for (std::int64_t b = 0; b < cfg.mid_blocks; ++b)
            d.mid_.push_back(nn::NaBlock::create(ps, "denoiser.mid.b" + std::to_string(b),
                                                 cfg.widths[2], cfg.cond_width, span, heads, rng));
    }
    for (int l = 2; l >= 0; --l) {
        const std::int64_t heads = cfg.widths[l] / cfg.head_dim;
        for (std::int64_t b = 0; b < cfg.blocks_per_level; ++b) {
            d.dec_[l].push_back(nn::NaBlock::create(
                ps, "denoiser.dec" + std::to_string(l) + ".b" + std::to_string(b), cfg.widths[l],
                cfg.cond_width, cfg.na_window, heads, rng));
        }
    }

    d.down_[0] = nn::Linear::create(ps, "denoiser.down0", 4 * cfg.widths[0], cfg.widths[1], rng);
    d.down_[1] = nn::Linear::create(ps, "denoiser.down1", 4 * cfg.widths[1], cfg.widths[2], rng);
    d.up_[1] = nn::Linear::create(ps, "denoiser.up1", cfg.widths[2], 4 * cfg.widths[1], rng);
    d.up_[0] = nn::Linear::create(ps, "denoiser.up0", cfg.widths[1], 4 * cfg.widths[0], rng);
    for (int l = 0; l < 3; ++l)
        d.merge_[l] = ps.create("denoiser.merge" + std::to_string(l), {cfg.widths[l]},
                                nn::Init::half, rng);

    d.out_proj_ = nn::Linear::create(ps, "denoiser.out_proj", cfg.widths[0], pdim, rng);

    d.patch_idx_ = std::make_shared<const std::vector<std::int64_t>>(
        patchify_indices(cfg.image_channels, cfg.image_h, cfg.image_w, cfg.patch_size));
    d.unpatch_idx_ = std::make_shared<const std::vector<std::int64_t>>(
        unpatchify_indices(cfg.image_channels, cfg.image_h, cfg.image_w, cfg.patch_size));
    for (int l = 0; l < 2; ++l) {
        d.s2d_idx_[l] = std::make_shared<const std::vector<std::int64_t>>(
            space_to_depth_indices(grids[l][0], grids[l][1], cfg.widths[l]));
        d.d2s_idx_[l] = std::make_shared<const std::vector<std::int64_t>>(
            depth_to_space_indices(grids[l + 1][0], grids[l + 1][1], cfg.widths[l]));
    }
    return d;
}

namespace {

/// m*a + (1-m)*b with a learned per-channel m.
Tensor lerp_merge(const Tensor& a, const Tensor& b, const Tensor& m) {
    Tensor one_minus = ad::add_scalar(ad::mul_scalar(m, -1.0), 1.0);
    return ad::add(ad::scale_rows(a, m), ad::scale_rows(b, one_minus));
}

} // namespace

Tensor Denoiser::predict_noise(const Tensor& x_t, const Tensor& guidance,
                               const std::vector<Tensor>* adapter_feats) const {
    const auto& cfg = cfg_;
    if (x_t.shape() != Shape{cfg.image_channels, cfg.image_h, cfg.image_w})
        throw ShapeError("predict_noise: input shape " + ad::shape_str(x_t.shape()) +
                         " does not match config");
    const auto grids = cfg.level_grids();
    if (adapter_feats) {
        if (adapter_feats->size() != 3)
            throw ShapeError("predict_noise: expected 3 adapter feature maps");
        for (int l = 0; l < 3; ++l) {
            const Shape want{grids[l][0] * grids[l][1], cfg.widths[l]};
            if ((*adapter_feats)[l].shape() != want)
                throw ShapeError("predict_noise: adapter features at level " + std::to_string(l) +
                                 " have shape " + ad::shape_str((*adapter_feats)[l].shape()) +
                                 ", expected " + ad::shape_str(want));
        }
    }

    const std::int64_t pdim = cfg.patch_size * cfg.patch_size * cfg.image_channels;
    Tensor tokens = ad::gather(x_t, patch_idx_, {grids[0][0] * grids[0][1], pdim});
    tokens = in_proj_(tokens);

    std::array<Tensor, 3> skips;
    for (int l = 0; l < 3; ++l) {
        if (adapter_feats) tokens = ad::add(tokens, (*adapter_feats)[l]);
        for (const auto& blk : enc_[l]) tokens = blk(tokens, guidance, grids[l][0], grids[l][1]);
        skips[l] = tokens;
        if (l < 2) {
            tokens = ad::gather(tokens, s2d_idx_[l],
                                {grids[l + 1][0] * grids[l + 1][1], 4 * cfg.widths[l]});
            tokens = down_[l](tokens);
        }
    }

    for (const auto& blk : mid_) tokens = blk(tokens, guidance, grids[2][0], grids[2][1]);

    for (int l = 2; l >= 0; --l) {
        tokens = lerp_merge(tokens, skips[l], merge_[l]);
        for (const auto& blk : dec_[l]) tokens = blk(tokens, guidance, grids[l][0], grids[l][1]);
        if (l > 0) {
            tokens = up_[l - 1](tokens);
            tokens = ad::gather(tokens, d2s_idx_[l - 1],
                                {grids[l - 1][0] * grids[l - 1][1], cfg.widths[l - 1]});
        }
    }

    tokens = out_proj_(tokens);
    return ad::gather(tokens, unpatch_idx_, {cfg.image_channels, cfg.image_h, cfg.image_w});
}

} // namespace phydiff
