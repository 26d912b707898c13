// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace phydiff {

/// Dense 4D array in C-order with axes (channel/direction, slice, row, col).
/// The in-memory element type is double throughout the pipeline; on-disk
/// precision is chosen at write time (see dvol.hpp).
class Volume {
public:
    Volume() : dims_{0, 0, 0, 0} {}
    Volume(std::int64_t c, std::int64_t z, std::int64_t h, std::int64_t w, double fill = 0.0);

    std::int64_t channels() const { return dims_[0]; }
    std::int64_t slices() const { return dims_[1]; }
    std::int64_t height() const { return dims_[2]; }
    std::int64_t width() const { return dims_[3]; }
    const std::array<std::int64_t, 4>& dims() const { return dims_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    double& at(std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) {
        return data_[index(c, z, y, x)];
    }
    double at(std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) const {
        return data_[index(c, z, y, x)];
    }
    std::int64_t index(std::int64_t c, std::int64_t z, std::int64_t y, std::int64_t x) const {
        return ((c * dims_[1] + z) * dims_[2] + y) * dims_[3] + x;
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    /// Contiguous (height x width) plane for one (channel, slice).
    std::span<double> plane(std::int64_t c, std::int64_t z) {
        return {data_.data() + index(c, z, 0, 0), static_cast<std::size_t>(dims_[2] * dims_[3])};
    }
    std::span<const double> plane(std::int64_t c, std::int64_t z) const {
        return {data_.data() + index(c, z, 0, 0), static_cast<std::size_t>(dims_[2] * dims_[3])};
    }

    bool same_grid(const Volume& other) const {
        return dims_[1] == other.dims_[1] && dims_[2] == other.dims_[2] && dims_[3] == other.dims_[3];
    }

    double min() const;
    double max() const;
    bool all_finite() const;

private:
    std::array<std::int64_t, 4> dims_;
    std::vector<double> data_;
};

} // namespace phydiff
