// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "phydiff/autodiff.hpp"
#include "phydiff/rng.hpp"

namespace phydiff::nn {

using ad::Shape;
using ad::Tensor;

enum class Init {
    zeros,
    fan_in,   // normal with std = 1/sqrt(fan_in), fan_in = first shape dim
    normal02, // normal with std 0.02 (embedding tables)
    half,     // constant 0.5 (skip-merge interpolation)
};

/// Ordered registry of named parameter leaves. Insertion order defines the
/// checkpoint manifest order, so creation must be deterministic.
class ParamStore {
public:
    Tensor create(const std::string& name, Shape shape, Init init, Rng& rng);
    Tensor get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }

    /// Names with the given prefix, in insertion order.
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> map_;
};

/// y = x @ W + b. Parameters are `<name>.w` {in, out} and `<name>.b` {out}.
struct Linear {
    std::string name;
    Tensor w, b;

    static Linear create(ParamStore& ps, const std::string& name, std::int64_t in,
                         std::int64_t out, Rng& rng, Init weight_init = Init::fan_in);
    Tensor operator()(const Tensor& x) const;
};

/// GEGLU feed-forward: W_out( (xW_a + b_a) * gelu(xW_g + b_g) ).
/// `zero_out` zero-initializes the output projection (residual no-op).
struct GegluFfn {
    Linear value, gate, out;

    static GegluFfn create(ParamStore& ps, const std::string& name, std::int64_t width,
                           std::int64_t hidden, Rng& rng, bool zero_out);
    Tensor operator()(const Tensor& x) const;
};

/// Per-channel scale/shift computed from a guidance vector and applied to
/// normalized activations: y = norm(x) * (1 + s) + t.
struct Modulation {
    Linear proj;  // cond_width -> 2 * width, zero-initialized
    std::int64_t width = 0;

    static Modulation create(ParamStore& ps, const std::string& name, std::int64_t cond_width,
                             std::int64_t width, Rng& rng);
    Tensor operator()(const Tensor& normed, const Tensor& guidance) const;
};

/// Pre-norm residual transformer block with neighborhood attention and a
/// GEGLU FFN; guidance enters through scale/shift after each norm. The
/// attention output projection and the FFN output projection are
/// zero-initialized, so a fresh block is the identity map.
struct NaBlock {
    Modulation mod_attn, mod_ffn;
    Linear wq, wk, wv, wo;
    GegluFfn ffn;
    std::int64_t window = 0;
    std::int64_t heads = 0;

    static NaBlock create(ParamStore& ps, const std::string& name, std::int64_t width,
                          std::int64_t cond_width, std::int64_t window, std::int64_t heads,
                          Rng& rng);
    Tensor operator()(const Tensor& tokens, const Tensor& guidance, std::int64_t gh,
                      std::int64_t gw) const;
};

} // namespace phydiff::nn
