// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/adapter.hpp"

#include <algorithm>
#include <string>

#include "phydiff/errors.hpp"
#include "phydiff/preprocess.hpp"

namespace phydiff {

using ad::Shape;
using ad::Tensor;

TractAtlas enrich_empty_slices(const TractAtlas& atlas, const Volume& b0,
                               const EnrichmentConfig& cfg) {
    atlas.validate();
    if (cfg.xi < 0.0) throw ValueError("enrich_empty_slices: xi must be >= 0");
    if (b0.channels() != 1 || !atlas.channels.same_grid(b0))
        throw ShapeError("enrich_empty_slices: b0 grid does not match atlas");

    TractAtlas out = atlas;
    const std::int64_t Z = atlas.channels.slices();
    const std::int64_t plane = atlas.channels.height() * atlas.channels.width();

    for (std::int64_t z = 0; z < Z; ++z) {
        // A slice is empty iff every value of all 42 channels is exactly 0.
        bool empty = true;
        for (std::int64_t c = 0; c < TractAtlas::kChannels && empty; ++c)
            for (double v : atlas.channels.plane(c, z))
                if (v != 0.0) { empty = false; break; }
        if (!empty) continue;

        // Empty slice: the channel sum is identically zero, so the
        // replacement is xi * f_N(b0) in every channel.
        std::vector<double> fn(b0.plane(0, z).begin(), b0.plane(0, z).end());
        minmax_normalize(fn, Interval{0.0, 1.0});

        for (std::int64_t c = 0; c < TractAtlas::kChannels; ++c) {
            auto dst = out.channels.plane(c, z);
            for (std::int64_t p = 0; p < plane; ++p) dst[p] = cfg.xi * fn[p];
        }
    }
    return out;
}

std::vector<std::int64_t> pixel_unshuffle_indices(std::int64_t c, std::int64_t h, std::int64_t w,
                                                  std::int64_t r) {
    if (r < 1 || h % r != 0 || w % r != 0)
        throw ShapeError("pixel_unshuffle: factor must divide spatial dims");
    const std::int64_t ho = h / r, wo = w / r;
    std::vector<std::int64_t> idx;
    idx.reserve(static_cast<std::size_t>(c * h * w));
    // Output channel (ch * r^2 + dy * r + dx): input channel is the major
    // index, the r x r cell offset scans row-major.
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t dy = 0; dy < r; ++dy)
            for (std::int64_t dx = 0; dx < r; ++dx)
                for (std::int64_t y = 0; y < ho; ++y)
                    for (std::int64_t x = 0; x < wo; ++x)
                        idx.push_back((ch * h + y * r + dy) * w + x * r + dx);
    return idx;
}

std::vector<double> pixel_unshuffle(std::span<const double> img, std::int64_t c, std::int64_t h,
                                    std::int64_t w, std::int64_t r) {
    const auto idx = pixel_unshuffle_indices(c, h, w, r);
    if (img.size() != idx.size()) throw ShapeError("pixel_unshuffle: size mismatch");
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = img[idx[i]];
    return out;
}

std::vector<double> pixel_shuffle(std::span<const double> img, std::int64_t c_r2, std::int64_t h,
                                  std::int64_t w, std::int64_t r) {
    if (r < 1 || c_r2 % (r * r) != 0)
        throw ShapeError("pixel_shuffle: channel count not divisible by r^2");
    const auto idx = pixel_unshuffle_indices(c_r2 / (r * r), h * r, w * r, r);
    if (img.size() != idx.size()) throw ShapeError("pixel_shuffle: size mismatch");
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = img[i];
    return out;
}

Tensor Adapter::ResBlock::operator()(const Tensor& x) const {
    Tensor h = ad::relu(ad::conv2d(x, conv1_w, conv1_b, 1));
    h = ad::conv2d(h, conv2_w, conv2_b, 1);
    Tensor s = skip_w.defined() ? ad::conv2d(x, skip_w, Tensor(), 0) : x;
    return ad::relu(ad::add(h, s));
}

Adapter Adapter::create(nn::ParamStore& ps, const HDiTConfig& denoiser_cfg, Rng& rng) {
    denoiser_cfg.validate();
    Adapter a;
    a.cfg_ = denoiser_cfg;
    const auto grids = denoiser_cfg.level_grids();
    const std::int64_t r = 4;
    if (denoiser_cfg.image_h % r != 0 || denoiser_cfg.image_w % r != 0)
        throw ConfigError("Adapter: image dims must be divisible by the unshuffle factor 4");
    if (denoiser_cfg.image_h / r != grids[0][0] || denoiser_cfg.image_w / r != grids[0][1])
        throw ConfigError("Adapter: unshuffle factor 4 requires patch size 4 token grids");

    const std::int64_t stem_in = TractAtlas::kChannels * r * r;
    const auto& w = denoiser_cfg.widths;

    a.stem_w_ = ps.create("adapter.stem.w", {w[0], stem_in, 1, 1}, nn::Init::fan_in, rng);
    a.stem_b_ = ps.create("adapter.stem.b", {w[0]}, nn::Init::zeros, rng);

    const std::int64_t chans[4] = {w[0], w[0], w[1], w[2]};
    for (int l = 0; l < 3; ++l) {
        const std::int64_t ci = chans[l], co = chans[l + 1];
        auto name = "adapter.block" + std::to_string(l);
        a.blocks_[l].conv1_w = ps.create(name + ".conv1.w", {co, ci, 3, 3}, nn::Init::fan_in, rng);
        a.blocks_[l].conv1_b = ps.create(name + ".conv1.b", {co}, nn::Init::zeros, rng);
        a.blocks_[l].conv2_w = ps.create(name + ".conv2.w", {co, co, 3, 3}, nn::Init::fan_in, rng);
        a.blocks_[l].conv2_b = ps.create(name + ".conv2.b", {co}, nn::Init::zeros, rng);
        if (ci != co)
            a.blocks_[l].skip_w = ps.create(name + ".skip.w", {co, ci, 1, 1}, nn::Init::fan_in, rng);
        a.proj_w_[l] = ps.create("adapter.proj" + std::to_string(l) + ".w", {w[l], co, 1, 1},
                                 nn::Init::zeros, rng);
        a.proj_b_[l] = ps.create("adapter.proj" + std::to_string(l) + ".b", {w[l]},
                                 nn::Init::zeros, rng);
    }

    a.unshuffle_idx_ = std::make_shared<const std::vector<std::int64_t>>(pixel_unshuffle_indices(
        TractAtlas::kChannels, denoiser_cfg.image_h, denoiser_cfg.image_w, r));

    // (C, gh, gw) feature maps -> (gh*gw, C) token grids, matching the
    // denoiser's row-major token order.
    for (int l = 0; l < 3; ++l) {
        auto idx = std::make_shared<std::vector<std::int64_t>>();
        const std::int64_t gh = grids[l][0], gw = grids[l][1], C = w[l];
        idx->reserve(static_cast<std::size_t>(gh * gw * C));
        for (std::int64_t t = 0; t < gh * gw; ++t)
            for (std::int64_t c = 0; c < C; ++c) idx->push_back(c * gh * gw + t);
        a.to_tokens_idx_[l] = std::move(idx);
    }
    return a;
}

std::vector<Tensor> Adapter::forward(const Tensor& atlas_slice) const {
    const Shape want{TractAtlas::kChannels, cfg_.image_h, cfg_.image_w};
    if (atlas_slice.shape() != want)
        throw ConfigError("Adapter::forward: atlas slice shape " +
                          ad::shape_str(atlas_slice.shape()) + " does not match denoiser config " +
                          ad::shape_str(want));

    const auto grids = cfg_.level_grids();
    Tensor x = ad::gather(atlas_slice, unshuffle_idx_,
                          {TractAtlas::kChannels * 16, grids[0][0], grids[0][1]});
    x = ad::conv2d(x, stem_w_, stem_b_, 0);

    std::vector<Tensor> feats;
    for (int l = 0; l < 3; ++l) {
        if (l > 0) x = ad::avgpool2(x);
        x = blocks_[l](x);
        Tensor f = ad::conv2d(x, proj_w_[l], proj_b_[l], 0);
        feats.push_back(ad::gather(f, to_tokens_idx_[l],
                                   {grids[l][0] * grids[l][1], cfg_.widths[l]}));
    }
    return feats;
}

} // namespace phydiff
