// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "phydiff/errors.hpp"

namespace phydiff {

void minmax_normalize(std::span<double> img, Interval target) {
    if (img.empty()) return;
    double lo = img[0], hi = img[0];
    for (double v : img) {
        if (!std::isfinite(v)) throw ValueError("minmax_normalize: non-finite input value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double mid = 0.5 * (target.lo + target.hi);
    if (hi == lo) {
        for (double& v : img) v = mid;
        return;
    }
    const double scale = (target.hi - target.lo) / (hi - lo);
    for (double& v : img) v = target.lo + (v - lo) * scale;
}

void minmax_normalize(Volume& vol, Interval target) {
    minmax_normalize(std::span<double>(vol.data()), target);
}

std::vector<double> pad_center(std::span<const double> img, std::int64_t h, std::int64_t w,
                               std::int64_t target_h, std::int64_t target_w, double pad_value) {
    if (static_cast<std::int64_t>(img.size()) != h * w)
        throw ShapeError("pad_center: image size does not match h*w");
    if (target_h < h || target_w < w)
        throw ValueError("pad_center: target smaller than input");

    // Extra row/col from an odd remainder lands at the bottom/right.
    const std::int64_t top = (target_h - h) / 2;
    const std::int64_t left = (target_w - w) / 2;

    std::vector<double> out(static_cast<std::size_t>(target_h * target_w), pad_value);
    for (std::int64_t y = 0; y < h; ++y)
        std::copy_n(img.data() + y * w, w, out.data() + (top + y) * target_w + left);
    return out;
}

std::vector<double> center_crop(std::span<const double> img, std::int64_t h, std::int64_t w,
                                std::int64_t crop_h, std::int64_t crop_w) {
    if (static_cast<std::int64_t>(img.size()) != h * w)
        throw ShapeError("center_crop: image size does not match h*w");
    if (crop_h > h || crop_w > w) throw ValueError("center_crop: crop larger than input");

    const std::int64_t top = (h - crop_h) / 2;
    const std::int64_t left = (w - crop_w) / 2;

    std::vector<double> out(static_cast<std::size_t>(crop_h * crop_w));
    for (std::int64_t y = 0; y < crop_h; ++y)
        std::copy_n(img.data() + (top + y) * w + left, crop_w, out.data() + y * crop_w);
    return out;
}

} // namespace phydiff
