// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/physics.hpp"

#include <algorithm>
#include <cmath>

#include "phydiff/errors.hpp"

namespace phydiff {

namespace {
constexpr double kLogClamp = 1e-6;  // floor for intensities entering a logarithm
}

AdcAtlas estimate_adc_atlas(const DWIStack& stack, double shell_bval, bool mean_form) {
    if (shell_bval <= 0.0) throw ValueError("estimate_adc_atlas: shell_bval must be positive");
    stack.validate();

    const auto dirs = stack.shell(shell_bval);
    if (dirs.empty())
        throw ValueError("estimate_adc_atlas: no directions at b=" + std::to_string(shell_bval));
    const auto b0s = stack.shell(0.0);
    if (b0s.empty()) throw ValueError("estimate_adc_atlas: stack has no b=0 image");

    const std::int64_t Z = stack.data.slices(), H = stack.data.height(), W = stack.data.width();
    const std::int64_t plane = H * W;
    const double N = static_cast<double>(dirs.size());

    AdcAtlas atlas;
    atlas.shell_bval = shell_bval;
    atlas.n_directions = static_cast<std::int64_t>(dirs.size());
    atlas.values = Volume(1, Z, H, W);

    for (std::int64_t z = 0; z < Z; ++z) {
        auto out = atlas.values.plane(0, z);
        for (std::int64_t p = 0; p < plane; ++p) {
            double s0 = 0.0;
            for (std::int64_t c : b0s) s0 += stack.data.plane(c, z)[p];
            s0 /= static_cast<double>(b0s.size());
            const double ln_s0 = std::log(std::max(s0, kLogClamp));

            double sum_ln = 0.0;
            for (std::int64_t c : dirs)
                sum_ln += std::log(std::max(stack.data.plane(c, z)[p], kLogClamp));

            double d = (N * ln_s0 - sum_ln) / shell_bval;
            if (mean_form) d /= N;
            out[p] = std::max(d, 0.0);
        }
    }
    return atlas;
}

NoiseScheduleBase::NoiseScheduleBase(std::int64_t T, double beta1, double betaT) : T_(T) {
    if (T < 1) throw ValueError("NoiseScheduleBase: T must be >= 1");
    if (!(beta1 > 0.0 && beta1 <= betaT && betaT < 1.0))
        throw ValueError("NoiseScheduleBase: need 0 < beta1 <= betaT < 1");

    betas_.resize(static_cast<std::size_t>(T));
    if (T == 1) {
        betas_[0] = beta1;
    } else {
        for (std::int64_t t = 0; t < T; ++t)
            betas_[t] = beta1 + (betaT - beta1) * static_cast<double>(t) / static_cast<double>(T - 1);
    }

    alpha_bars_.resize(static_cast<std::size_t>(T) + 1);
    alpha_bars_[0] = 1.0;
    for (std::int64_t t = 1; t <= T; ++t)
        alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - betas_[t - 1]);
}

double NoiseScheduleBase::beta(std::int64_t t) const {
    if (t < 1 || t > T_) throw ValueError("NoiseScheduleBase::beta: t out of [1, T]");
    return betas_[t - 1];
}

double NoiseScheduleBase::alpha(std::int64_t t) const { return 1.0 - beta(t); }

double NoiseScheduleBase::alpha_bar(std::int64_t t) const {
    if (t < 0 || t > T_) throw ValueError("NoiseScheduleBase::alpha_bar: t out of [0, T]");
    return alpha_bars_[t];
}

NoiseScheduleBase build_base_schedule(std::int64_t T, double beta1, double betaT) {
    return NoiseScheduleBase(T, beta1, betaT);
}

ScheduleMap::ScheduleMap(NoiseScheduleBase base, Volume exponents, double kappa, double delta)
    : base_(std::move(base)), expo_(std::move(exponents)), kappa_(kappa), delta_(delta) {
    if (expo_.channels() != 1) throw ShapeError("ScheduleMap: exponent volume must have 1 channel");
}

double ScheduleMap::phi_at(std::int64_t t, std::int64_t z, std::int64_t y, std::int64_t x) const {
    if (t < 0 || t > base_.timesteps()) throw ValueError("ScheduleMap::phi_at: t out of [0, T]");
    if (t == 0) return 1.0;
    const double w = expo_.at(0, z, y, x);
    const double ab = base_.alpha_bar(t);
    // Exponent 1 recovers the scalar schedule bit-for-bit.
    return w == 1.0 ? ab : std::pow(ab, w);
}

std::vector<double> ScheduleMap::phi_plane(std::int64_t t, std::int64_t z) const {
    if (t < 0 || t > base_.timesteps()) throw ValueError("ScheduleMap::phi_plane: t out of [0, T]");
    const auto expo = expo_.plane(0, z);
    std::vector<double> out(expo.size());
    if (t == 0) {
        std::fill(out.begin(), out.end(), 1.0);
        return out;
    }
    const double ab = base_.alpha_bar(t);
    for (std::size_t i = 0; i < expo.size(); ++i)
        out[i] = expo[i] == 1.0 ? ab : std::pow(ab, expo[i]);
    return out;
}

ScheduleMap build_schedule_map(const AdcAtlas& atlas, const NoiseScheduleBase& base, double kappa,
                               double delta) {
    if (kappa < 0.0) throw ValueError("build_schedule_map: kappa must be >= 0");
    if (atlas.shell_bval <= 0.0) throw ValueError("build_schedule_map: atlas shell_bval <= 0");

    const Volume& d = atlas.values;
    Volume expo(1, d.slices(), d.height(), d.width());

    // Physical retention factor per voxel.
    std::vector<double> x(d.data().size());
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = std::exp(-2.0 * atlas.shell_bval * d.data()[i]);

    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it, hi = *hi_it;
    const bool degenerate = (hi - lo) < delta;

    for (std::size_t i = 0; i < x.size(); ++i) {
        double x_hat = 1.0;
        if (!degenerate) x_hat = std::clamp((x[i] - lo) / (hi - lo + delta), 0.0, 1.0);
        expo.data()[i] = 1.0 + kappa * (1.0 - x_hat);
    }
    return ScheduleMap(base, std::move(expo), kappa, delta);
}

std::vector<double> forward_noise(std::span<const double> x0, std::span<const double> phi_t,
                                  std::span<const double> noise) {
    if (x0.size() != phi_t.size() || x0.size() != noise.size())
        throw ShapeError("forward_noise: x0, phi_t, and noise sizes differ");
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i)
        out[i] = std::sqrt(phi_t[i]) * x0[i] + std::sqrt(1.0 - phi_t[i]) * noise[i];
    return out;
}

std::vector<double> forward_noise_ddpm(std::span<const double> x0, double alpha_bar_t,
                                       std::span<const double> noise) {
    if (x0.size() != noise.size()) throw ShapeError("forward_noise_ddpm: x0 and noise sizes differ");
    std::vector<double> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i)
        out[i] = std::sqrt(alpha_bar_t) * x0[i] + std::sqrt(1.0 - alpha_bar_t) * noise[i];
    return out;
}

} // namespace phydiff
