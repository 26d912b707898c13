// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "phydiff/errors.hpp"

namespace phydiff {

Volume::Volume(std::int64_t c, std::int64_t z, std::int64_t h, std::int64_t w, double fill)
    : dims_{c, z, h, w} {
    if (c <= 0 || z <= 0 || h <= 0 || w <= 0)
        throw ShapeError("Volume: all dimensions must be positive");
    data_.assign(static_cast<std::size_t>(c * z * h * w), fill);
}

double Volume::min() const {
    return data_.empty() ? std::numeric_limits<double>::quiet_NaN()
                         : *std::min_element(data_.begin(), data_.end());
}

double Volume::max() const {
    return data_.empty() ? std::numeric_limits<double>::quiet_NaN()
                         : *std::max_element(data_.begin(), data_.end());
}

bool Volume::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

} // namespace phydiff
