// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/conditioning.hpp"

#include <cmath>

#include "phydiff/errors.hpp"

namespace phydiff {

using ad::Tensor;

double real_embed_prefeature(double x) {
    if (!std::isfinite(x)) throw ValueError("real_embed_prefeature: non-finite input");
    if (x == 0.0) return 0.0;
    return (x > 0.0 ? 1.0 : -1.0) * std::log(std::abs(x) + 1.0);
}

CondMapper CondMapper::create(nn::ParamStore& ps, const CondConfig& cfg, Rng& rng) {
    if (cfg.width < 2 || cfg.width % 2 != 0)
        throw ConfigError("CondMapper: cond width must be even and >= 2");
    if (cfg.ffn_blocks < 0 || cfg.max_slices < 1)
        throw ConfigError("CondMapper: invalid ffn_blocks or max_slices");

    CondMapper m;
    m.cfg_ = cfg;
    m.time1_ = nn::Linear::create(ps, "cond.time.fc1", cfg.width, cfg.width, rng);
    m.time2_ = nn::Linear::create(ps, "cond.time.fc2", cfg.width, cfg.width, rng);
    m.bval1_ = nn::Linear::create(ps, "cond.bval.fc1", 1, cfg.width, rng);
    m.bval2_ = nn::Linear::create(ps, "cond.bval.fc2", cfg.width, cfg.width, rng);
    m.bvec1_ = nn::Linear::create(ps, "cond.bvec.fc1", 3, cfg.width, rng);
    m.bvec2_ = nn::Linear::create(ps, "cond.bvec.fc2", cfg.width, cfg.width, rng);
    m.slice_table_ = ps.create("cond.slice_table", {cfg.max_slices, cfg.width},
                               nn::Init::normal02, rng);
    for (std::int64_t i = 0; i < cfg.ffn_blocks; ++i)
        m.ffns_.push_back(nn::GegluFfn::create(ps, "cond.ffn" + std::to_string(i), cfg.width,
                                               2 * cfg.width, rng, /*zero_out=*/false));
    return m;
}

Tensor CondMapper::time_embed(std::int64_t t) const {
    // Standard sinusoidal features: half sines, half cosines over a
    // log-spaced frequency ladder.
    const std::int64_t half = cfg_.width / 2;
    std::vector<double> feat(static_cast<std::size_t>(cfg_.width));
    for (std::int64_t i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        feat[i] = std::sin(static_cast<double>(t) * freq);
        feat[half + i] = std::cos(static_cast<double>(t) * freq);
    }
    Tensor x = Tensor::from({1, cfg_.width}, std::move(feat));
    return time2_(ad::gelu(time1_(x)));
}

Tensor CondMapper::real_embed(double x) const {
    Tensor pre = Tensor::from({1, 1}, {real_embed_prefeature(x)});
    return bval2_(ad::gelu(bval1_(pre)));
}

Tensor CondMapper::bvec_embed(const Vec3& bvec) const {
    for (double c : bvec)
        if (!std::isfinite(c)) throw ValueError("bvec_embed: non-finite component");
    // Unit vectors are already componentwise in [-1, 1]; the zero vector
    // (b=0) passes through unchanged.
    Tensor x = Tensor::from({1, 3}, {bvec[0], bvec[1], bvec[2]});
    return bvec2_(ad::gelu(bvec1_(x)));
}

Tensor CondMapper::slice_embed(std::int64_t slice_index) const {
    if (slice_index < 0 || slice_index >= cfg_.max_slices)
        throw IndexError("slice_embed: index " + std::to_string(slice_index) +
                         " outside [0, " + std::to_string(cfg_.max_slices) + ")");
    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->reserve(static_cast<std::size_t>(cfg_.width));
    for (std::int64_t j = 0; j < cfg_.width; ++j) idx->push_back(slice_index * cfg_.width + j);
    return ad::gather(slice_table_, idx, {1, cfg_.width});
}

Tensor CondMapper::fuse(const ConditionBundle& bundle) const {
    Tensor g = ad::add(ad::add(time_embed(bundle.t), bvec_embed(bundle.bvec)),
                       ad::add(real_embed(bundle.bval), slice_embed(bundle.slice_index)));
    for (const auto& ffn : ffns_) g = ad::add(g, ffn(ad::layer_norm(g)));
    return g;
}

} // namespace phydiff
