// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "phydiff/volume.hpp"

namespace phydiff {

using Vec3 = std::array<double, 3>;

double norm(const Vec3& v);

/// One acquisition direction: b-value in s/mm^2 plus its unit gradient
/// direction. b = 0 entries carry the exact zero vector.
struct Gradient {
    double bval = 0.0;
    Vec3 bvec = {0.0, 0.0, 0.0};
};

/// FSL text convention: bvals is one whitespace-separated row; bvecs is
/// three rows (x, y, z components), one column per direction. Directions
/// with b > 0 are re-normalized to unit length on load.
std::vector<Gradient> read_gradients(const std::string& bvals_path, const std::string& bvecs_path);

void write_gradients(const std::string& bvals_path, const std::string& bvecs_path,
                     const std::vector<Gradient>& table);

/// Multi-direction, multi-shell stack of 2D slices with its gradient table.
/// `data` is indexed (direction, slice, row, col).
struct DWIStack {
    Volume data;
    std::vector<Gradient> gradients;

    std::int64_t directions() const { return data.channels(); }

    /// Checks direction-count agreement, bvec norms, and (when
    /// `normalized`) that the data lies in [-1, 1]. Throws on violation.
    void validate(bool normalized = false) const;

    /// Indices of all directions whose b-value matches `shell_bval`.
    std::vector<std::int64_t> shell(double shell_bval, double tol = 1e-6) const;

    /// Distinct positive b-values in ascending order.
    std::vector<double> shell_bvals(double tol = 1e-6) const;
};

/// Tract-probability stack with exactly 42 channels, grid-aligned to a
/// DWIStack. Values are finite and non-negative before [-1, 1] scaling.
struct TractAtlas {
    static constexpr std::int64_t kChannels = 42;

    Volume channels;

    void validate() const;
};

} // namespace phydiff
