// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace phydiff {

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range L = 1. Inputs are expected on a [0, 1] scale
/// (see rescale_pair). Windows fully inside the image are averaged; images
/// smaller than the window use the largest odd window that fits.
double ssim(std::span<const double> a, std::span<const double> b, std::int64_t h, std::int64_t w);

/// 10*log10(1 / MSE) with MAX = 1, capped at the 100 dB sentinel (reached
/// exactly for identical inputs).
double psnr(std::span<const double> a, std::span<const double> b);

/// |a - b| rescaled so the largest difference maps to 255, written as an
/// 8-bit binary PGM ("P5").
void write_error_map_pgm(const std::string& path, std::span<const double> a,
                         std::span<const double> b, std::int64_t h, std::int64_t w);

/// Maps both images onto [0, 1] using the reference's min/max, so the
/// reference anchors the scale. A constant reference shifts both images to
/// center the reference at 0.5.
struct RescaledPair {
    std::vector<double> pred;
    std::vector<double> ref;
};
RescaledPair rescale_pair(std::span<const double> pred, std::span<const double> ref);

struct EvalPairResult {
    double ssim_percent = 0.0;
    double psnr_db = 0.0;
};

/// rescale_pair followed by both metrics; SSIM reported in percent.
EvalPairResult eval_pair(std::span<const double> pred, std::span<const double> ref, std::int64_t h,
                         std::int64_t w);

struct EvalRow {
    std::int64_t index = 0;
    double bval = 0.0;
    std::int64_t slice = 0;
    double ssim_percent = 0.0;
    double psnr_db = 0.0;
};

struct EvalGroup {
    std::string label;  // "b1000", ... or "arbitrary" for the pooled set
    std::int64_t n = 0;
    double ssim_mean = 0.0, ssim_std = 0.0;
    double psnr_mean = 0.0, psnr_std = 0.0;
};

/// Mean and population standard deviation per b-value group plus the pooled
/// "arbitrary" group over all rows.
std::vector<EvalGroup> aggregate_report(const std::vector<EvalRow>& rows);

void write_report_csv(const std::string& path, const std::vector<EvalRow>& rows);
void write_summary_csv(const std::string& path, const std::vector<EvalGroup>& groups);

} // namespace phydiff
