// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "phydiff/adapter.hpp"
#include "phydiff/errors.hpp"
#include "phydiff/rng.hpp"

using namespace phydiff;
using ad::Tensor;

namespace {

TractAtlas make_atlas(std::int64_t z, std::int64_t h, std::int64_t w) {
    TractAtlas a;
    a.channels = Volume(TractAtlas::kChannels, z, h, w, 0.0);
    return a;
}

} // namespace

TEST_CASE("enrichment leaves non-empty slices untouched") {
    TractAtlas atlas = make_atlas(2, 4, 4);
    atlas.channels.at(5, 0, 1, 2) = 0.8;  // slice 0 non-empty
    Volume b0(1, 2, 4, 4, 0.0);
    for (double& v : b0.plane(0, 0)) v = 0.5;
    for (double& v : b0.plane(0, 1)) v = 0.5;
    b0.at(0, 1, 0, 0) = 1.0;

    const TractAtlas out = enrich_empty_slices(atlas, b0, {});
    for (std::int64_t c = 0; c < TractAtlas::kChannels; ++c)
        for (std::int64_t p = 0; p < 16; ++p)
            CHECK(out.channels.plane(c, 0)[p] == atlas.channels.plane(c, 0)[p]);
}

TEST_CASE("empty slice becomes xi times the normalized b0") {
    TractAtlas atlas = make_atlas(1, 2, 2);
    Volume b0(1, 1, 2, 2);
    b0.data() = {0.0, 1.0, 2.0, 1.0};  // f_N maps to {0, 0.5, 1, 0.5}

    EnrichmentConfig cfg;
    cfg.xi = 1.0;
    const TractAtlas out = enrich_empty_slices(atlas, b0, cfg);
    for (std::int64_t c = 0; c < TractAtlas::kChannels; ++c) {
        const auto plane = out.channels.plane(c, 0);
        CHECK(plane[0] == 0.0);
        CHECK(plane[1] == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(plane[2] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(plane[3] == doctest::Approx(0.5).epsilon(1e-15));
    }

    cfg.xi = 0.0;  // enrichment disabled: all channels zero
    const TractAtlas zeros = enrich_empty_slices(atlas, b0, cfg);
    for (double v : zeros.channels.data()) CHECK(v == 0.0);
}

TEST_CASE("enrichment output stays finite and validates shapes") {
    TractAtlas atlas = make_atlas(2, 4, 4);
    Volume wrong(1, 3, 4, 4);
    CHECK_THROWS_AS(enrich_empty_slices(atlas, wrong, {}), ShapeError);

    EnrichmentConfig bad;
    bad.xi = -1.0;
    Volume b0(1, 2, 4, 4, 0.3);
    CHECK_THROWS_AS(enrich_empty_slices(atlas, b0, bad), ValueError);

    const TractAtlas out = enrich_empty_slices(atlas, b0, {});
    for (double v : out.channels.data()) CHECK(std::isfinite(v));
}

TEST_CASE("pixel_unshuffle shape contract and exact inverse") {
    Rng rng(1);
    std::vector<double> img(42 * 64 * 64);
    for (double& v : img) v = rng.normal();

    const auto packed = pixel_unshuffle(img, 42, 64, 64, 4);
    CHECK(packed.size() == img.size());  // (672, 16, 16)

    const auto restored = pixel_shuffle(packed, 42 * 16, 16, 16, 4);
    CHECK(restored == img);

    // r = 1 is the identity.
    CHECK(pixel_unshuffle(img, 42, 64, 64, 1) == img);

    CHECK_THROWS_AS(pixel_unshuffle(img, 42, 64, 64, 5), ShapeError);
}

TEST_CASE("pixel_unshuffle layout is channel-major with row-major cells") {
    // 1x2x2 with r=2: output channels ordered (dy,dx) = (0,0),(0,1),(1,0),(1,1).
    const std::vector<double> img = {1, 2, 3, 4};
    const auto packed = pixel_unshuffle(img, 1, 2, 2, 2);
    CHECK(packed == std::vector<double>{1, 2, 3, 4});

    // Two channels: first channel's cell block precedes the second's.
    const std::vector<double> img2 = {1, 2, 3, 4, 5, 6, 7, 8};
    const auto packed2 = pixel_unshuffle(img2, 2, 2, 2, 2);
    CHECK(packed2 == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
}

namespace {

HDiTConfig adapter_cfg() {
    HDiTConfig c;
    c.patch_size = 4;
    c.widths = {64, 128, 256};
    c.blocks_per_level = 1;
    c.mid_blocks = 1;
    c.na_window = 7;
    c.head_dim = 32;
    c.cond_width = 16;
    c.image_channels = 1;
    c.image_h = 64;
    c.image_w = 64;
    return c;
}

Tensor random_slice(Rng& rng, std::int64_t h, std::int64_t w) {
    std::vector<double> v(static_cast<std::size_t>(TractAtlas::kChannels * h * w));
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from({TractAtlas::kChannels, h, w}, std::move(v));
}

} // namespace

TEST_CASE("adapter emits all-zero feature maps at initialization") {
    nn::ParamStore ps;
    Rng rng(2);
    const Adapter a = Adapter::create(ps, adapter_cfg(), rng);
    Tensor slice = random_slice(rng, 64, 64);
    const auto feats = a.forward(slice);
    REQUIRE(feats.size() == 3);
    for (const auto& f : feats)
        for (double v : f.values()) CHECK(v == 0.0);
}

TEST_CASE("adapter feature shapes match the denoiser token grids") {
    nn::ParamStore ps;
    Rng rng(3);
    const Adapter a = Adapter::create(ps, adapter_cfg(), rng);
    Tensor slice = random_slice(rng, 64, 64);
    const auto feats = a.forward(slice);
    CHECK(feats[0].shape() == ad::Shape{256, 64});   // 16x16 x 64
    CHECK(feats[1].shape() == ad::Shape{64, 128});   // 8x8 x 128
    CHECK(feats[2].shape() == ad::Shape{16, 256});   // 4x4 x 256

    Tensor bad = random_slice(rng, 32, 32);
    CHECK_THROWS_AS(a.forward(bad), ConfigError);
}

TEST_CASE("adapter forward is deterministic; trained projections are nonzero") {
    nn::ParamStore ps;
    Rng rng(4);
    const Adapter a = Adapter::create(ps, adapter_cfg(), rng);
    // Emulate a trained adapter: give the projections real weights.
    for (const auto& name : ps.names_with_prefix("adapter.proj")) {
        Tensor p = ps.get(name);
        for (double& v : p.values()) v = rng.normal() * 0.1;
    }
    Tensor slice = random_slice(rng, 64, 64);
    const auto f1 = a.forward(slice);
    const auto f2 = a.forward(slice);
    double mag = 0.0;
    for (int l = 0; l < 3; ++l) {
        CHECK(f1[l].values() == f2[l].values());
        for (double v : f1[l].values()) mag = std::max(mag, std::abs(v));
    }
    CHECK(mag > 0.0);
}
