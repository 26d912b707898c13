// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "phydiff/gradients.hpp"
#include "phydiff/volume.hpp"

namespace phydiff {

/// Per-voxel apparent-diffusion-coefficient map for one shell, aggregated
/// over that shell's directions.
struct AdcAtlas {
    Volume values;               // (1, Z, H, W), finite and >= 0
    double shell_bval = 0.0;     // s/mm^2, > 0
    std::int64_t n_directions = 0;
};

/// Estimates the ADC atlas from raw (pre-normalization) intensities:
///   D(v) = (N ln S0(v) - sum_i ln S_i(v)) / b
/// a sum over the shell's directions. `mean_form` divides by N for the
/// conventional mean ADC. Intensities are clamped to >= 1e-6 before the
/// logarithm and negative results are clamped to 0.
AdcAtlas estimate_adc_atlas(const DWIStack& stack, double shell_bval, bool mean_form = false);

/// Scalar DDPM schedule: betas linear between beta1 and betaT inclusive,
/// alpha_bar(t) the running product of (1 - beta), with alpha_bar(0) = 1.
class NoiseScheduleBase {
public:
    NoiseScheduleBase() = default;
    NoiseScheduleBase(std::int64_t T, double beta1, double betaT);

    std::int64_t timesteps() const { return T_; }
    double beta(std::int64_t t) const;       // t in [1, T]
    double alpha(std::int64_t t) const;      // 1 - beta(t)
    double alpha_bar(std::int64_t t) const;  // t in [0, T], alpha_bar(0) = 1

    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }  // size T+1

private:
    std::int64_t T_ = 0;
    std::vector<double> betas_;       // betas_[t-1] = beta_t
    std::vector<double> alpha_bars_;  // alpha_bars_[t] = prod_{i<=t} (1 - beta_i)
};

/// Per-voxel cumulative signal-retention schedule:
///   phi(t, v) = alpha_bar(t) ^ w(v),   w(v) = 1 + kappa * (1 - x_hat(v))
/// where x(v) = exp(-2 b D(v)) is the physical retention factor and x_hat
/// its range-mapped version. Voxels that physically retain more signal
/// (larger x) get exponents closer to 1 and are noised more slowly; a
/// degenerate atlas (x_hat == 1 everywhere) recovers the scalar schedule
/// exactly.
class ScheduleMap {
public:
    ScheduleMap() = default;
    ScheduleMap(NoiseScheduleBase base, Volume exponents, double kappa, double delta);

    std::int64_t timesteps() const { return base_.timesteps(); }
    const NoiseScheduleBase& base() const { return base_; }
    const Volume& exponents() const { return expo_; }
    double kappa() const { return kappa_; }
    double delta() const { return delta_; }

    std::int64_t slices() const { return expo_.slices(); }
    std::int64_t height() const { return expo_.height(); }
    std::int64_t width() const { return expo_.width(); }

    /// phi(t, v) for one voxel; t in [0, T], phi(0, v) = 1.
    double phi_at(std::int64_t t, std::int64_t z, std::int64_t y, std::int64_t x) const;

    /// Full phi plane for one slice at timestep t (row-major h*w values).
    std::vector<double> phi_plane(std::int64_t t, std::int64_t z) const;

private:
    NoiseScheduleBase base_;
    Volume expo_;  // (1, Z, H, W) per-voxel exponents w(v) >= 1
    double kappa_ = 0.0;
    double delta_ = 0.0;
};

/// Builds the per-voxel schedule from an ADC atlas. x_hat maps the atlas'
/// retention factors onto [0, 1] with a degeneracy guard: when
/// max(x) - min(x) < delta the map collapses to x_hat == 1 and the result
/// equals the base schedule at every voxel.
ScheduleMap build_schedule_map(const AdcAtlas& atlas, const NoiseScheduleBase& base, double kappa,
                               double delta = 1e-8);

NoiseScheduleBase build_base_schedule(std::int64_t T, double beta1, double betaT);

/// Physics-guided forward noising, elementwise:
///   out = sqrt(phi_t) * x0 + sqrt(1 - phi_t) * noise
/// Preconditions: same sizes, 0 < phi_t <= 1.
std::vector<double> forward_noise(std::span<const double> x0, std::span<const double> phi_t,
                                  std::span<const double> noise);

/// Scalar-schedule special case (the standard DDPM forward).
std::vector<double> forward_noise_ddpm(std::span<const double> x0, double alpha_bar_t,
                                       std::span<const double> noise);

} // namespace phydiff
