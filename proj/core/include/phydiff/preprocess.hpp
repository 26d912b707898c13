// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "phydiff/volume.hpp"

namespace phydiff {

struct Interval {
    double lo = -1.0;
    double hi = 1.0;
};

/// Affine map of [min(img), max(img)] onto `target`, in place. A constant
/// image maps to the target midpoint. Throws ValueError on non-finite input.
void minmax_normalize(std::span<double> img, Interval target = {});

void minmax_normalize(Volume& vol, Interval target = {});

/// Centers a (h x w) plane inside (target_h x target_w), filling the border
/// with `pad_value` (-1 is the normalized background). Odd remainders put
/// the extra row/col at the bottom/right.
std::vector<double> pad_center(std::span<const double> img, std::int64_t h, std::int64_t w,
                               std::int64_t target_h, std::int64_t target_w,
                               double pad_value = -1.0);

/// Inverse of pad_center for the same original size.
std::vector<double> center_crop(std::span<const double> img, std::int64_t h, std::int64_t w,
                                std::int64_t crop_h, std::int64_t crop_w);

} // namespace phydiff
