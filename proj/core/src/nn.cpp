// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/nn.hpp"

#include <cmath>

#include "phydiff/errors.hpp"

namespace phydiff::nn {

Tensor ParamStore::create(const std::string& name, Shape shape, Init init, Rng& rng) {
    if (map_.count(name)) throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
    const std::int64_t n = ad::numel(shape);
    std::vector<double> vals(static_cast<std::size_t>(n), 0.0);
    switch (init) {
        case Init::zeros:
            break;
        case Init::fan_in: {
            const double std = 1.0 / std::sqrt(static_cast<double>(shape[0]));
            for (double& v : vals) v = rng.normal() * std;
            break;
        }
        case Init::normal02:
            for (double& v : vals) v = rng.normal() * 0.02;
            break;
        case Init::half:
            for (double& v : vals) v = 0.5;
            break;
    }
    Tensor t = Tensor::from(std::move(shape), std::move(vals), /*requires_grad=*/true);
    order_.push_back(name);
    map_.emplace(name, t);
    return t;
}

Tensor ParamStore::get(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

bool ParamStore::has(const std::string& name) const { return map_.count(name) != 0; }

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& n : order_)
        if (n.rfind(prefix, 0) == 0) out.push_back(n);
    return out;
}

Linear Linear::create(ParamStore& ps, const std::string& name, std::int64_t in, std::int64_t out,
                      Rng& rng, Init weight_init) {
    Linear l;
    l.name = name;
    l.w = ps.create(name + ".w", {in, out}, weight_init, rng);
    l.b = ps.create(name + ".b", {out}, Init::zeros, rng);
    return l;
}

Tensor Linear::operator()(const Tensor& x) const { return ad::add_rows(ad::matmul(x, w), b); }

GegluFfn GegluFfn::create(ParamStore& ps, const std::string& name, std::int64_t width,
                          std::int64_t hidden, Rng& rng, bool zero_out) {
    GegluFfn f;
    f.value = Linear::create(ps, name + ".value", width, hidden, rng);
    f.gate = Linear::create(ps, name + ".gate", width, hidden, rng);
    f.out = Linear::create(ps, name + ".out", hidden, width, rng,
                           zero_out ? Init::zeros : Init::fan_in);
    return f;
}

Tensor GegluFfn::operator()(const Tensor& x) const {
    return out(ad::mul(value(x), ad::gelu(gate(x))));
}

Modulation Modulation::create(ParamStore& ps, const std::string& name, std::int64_t cond_width,
                              std::int64_t width, Rng& rng) {
    Modulation m;
    m.width = width;
    m.proj = Linear::create(ps, name, cond_width, 2 * width, rng, Init::zeros);
    return m;
}

Tensor Modulation::operator()(const Tensor& normed, const Tensor& guidance) const {
    Tensor st = proj(guidance);  // {1, 2*width}
    Tensor scale = ad::slice_cols(st, 0, width);
    Tensor shift = ad::slice_cols(st, width, width);
    return ad::add_rows(ad::scale_rows(normed, ad::add_scalar(scale, 1.0)), shift);
}

NaBlock NaBlock::create(ParamStore& ps, const std::string& name, std::int64_t width,
                        std::int64_t cond_width, std::int64_t window, std::int64_t heads,
                        Rng& rng) {
    if (width % heads != 0)
        throw ConfigError("NaBlock: width " + std::to_string(width) + " not divisible by " +
                          std::to_string(heads) + " heads");
    NaBlock b;
    b.window = window;
    b.heads = heads;
    b.mod_attn = Modulation::create(ps, name + ".mod_attn", cond_width, width, rng);
    b.mod_ffn = Modulation::create(ps, name + ".mod_ffn", cond_width, width, rng);
    b.wq = Linear::create(ps, name + ".wq", width, width, rng);
    b.wk = Linear::create(ps, name + ".wk", width, width, rng);
    b.wv = Linear::create(ps, name + ".wv", width, width, rng);
    b.wo = Linear::create(ps, name + ".wo", width, width, rng, Init::zeros);
    b.ffn = GegluFfn::create(ps, name + ".ffn", width, 2 * width, rng, /*zero_out=*/true);
    return b;
}

Tensor NaBlock::operator()(const Tensor& tokens, const Tensor& guidance, std::int64_t gh,
                           std::int64_t gw) const {
    Tensor h = mod_attn(ad::layer_norm(tokens), guidance);
    Tensor attn = ad::na_attention(wq(h), wk(h), wv(h), gh, gw, window, heads);
    Tensor x = ad::add(tokens, wo(attn));
    Tensor h2 = mod_ffn(ad::layer_norm(x), guidance);
    return ad::add(x, ffn(h2));
}

} // namespace phydiff::nn
