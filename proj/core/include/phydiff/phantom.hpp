// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "phydiff/gradients.hpp"
#include "phydiff/rng.hpp"
#include "phydiff/volume.hpp"

namespace phydiff {

/// Per-voxel symmetric diffusion tensor field (mm^2/s) with tract labels.
/// Tensors are stored as the six unique coefficients
/// (Dxx, Dyy, Dzz, Dxy, Dxz, Dyz) per voxel in (slice, row, col) order.
struct TensorField {
    std::int64_t slices = 0, height = 0, width = 0;
    std::vector<std::array<double, 6>> tensors;
    std::vector<std::uint8_t> labels;  // 0 = background, 1..K = tract id

    std::int64_t index(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return (z * height + y) * width + x;
    }

    /// Uniform isotropic field with diffusivity d everywhere.
    static TensorField isotropic(std::int64_t z, std::int64_t h, std::int64_t w, double d);
};

struct PhantomSpec {
    std::int64_t slices = 16;
    std::int64_t height = 64;
    std::int64_t width = 64;
    std::int64_t n_tracts = 3;            // <= 42
    std::vector<double> shells = {1000.0, 2000.0};
    std::int64_t dirs_per_shell = 16;     // >= 6 for ADC sanity
    double noise_sigma = 0.0;             // Rician level; 0 = noiseless
    std::uint64_t seed = 7;

    void validate() const;
};

struct Phantom {
    TensorField field;
    Volume s0;         // (1, Z, H, W): 1 inside the head mask, 0 outside
    TractAtlas atlas;  // ground-truth tract masks, unused channels zero
};

/// Builds the deterministic phantom: isotropic background (d = 0.8e-3)
/// inside an ellipsoidal head mask and K curved tract tubes with
/// anisotropic tensors (eigenvalues 1.7e-3, 0.2e-3, 0.2e-3, principal axis
/// along the curve tangent). Throws SpecError when a tract leaves the grid.
Phantom make_phantom(const PhantomSpec& spec);

/// Tensor-model signal S = S0 * exp(-b g^T D g) per voxel; optional Rician
/// corruption sqrt((S + n1)^2 + n2^2) with n1, n2 ~ N(0, sigma^2).
Volume simulate_signal(const TensorField& field, const Volume& s0, double bval, const Vec3& bvec,
                       double noise_sigma, Rng& rng);

/// Quasi-uniform unit directions (Fibonacci sphere); n = 1 yields (0,0,1).
std::vector<Vec3> sphere_directions(std::int64_t n);

/// Full multi-shell acquisition: one b=0 volume followed by every shell's
/// directions, with the matching gradient table.
DWIStack simulate_stack(const Phantom& phantom, const PhantomSpec& spec, Rng& rng);

} // namespace phydiff
