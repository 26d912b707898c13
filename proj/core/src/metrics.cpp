// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "phydiff/errors.hpp"

namespace phydiff {

namespace {

constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2
constexpr double kC2 = 0.03 * 0.03;  // (K2 * L)^2

std::vector<double> gaussian_window(std::int64_t size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size * size));
    const double c = 0.5 * static_cast<double>(size - 1);
    double total = 0.0;
    for (std::int64_t y = 0; y < size; ++y)
        for (std::int64_t x = 0; x < size; ++x) {
            const double dy = static_cast<double>(y) - c, dx = static_cast<double>(x) - c;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            w[y * size + x] = v;
            total += v;
        }
    for (double& v : w) v /= total;
    return w;
}

} // namespace

double ssim(std::span<const double> a, std::span<const double> b, std::int64_t h, std::int64_t w) {
    if (a.size() != b.size() || static_cast<std::int64_t>(a.size()) != h * w)
        throw ShapeError("ssim: image sizes differ or do not match h*w");

    std::int64_t win = 11;
    if (win > std::min(h, w)) {
        win = std::min(h, w);
        if (win % 2 == 0) --win;
    }
    if (win < 1) throw ShapeError("ssim: image too small");
    const std::vector<double> g = gaussian_window(win, 1.5);

    double total = 0.0;
    std::int64_t count = 0;
    for (std::int64_t y = 0; y + win <= h; ++y)
        for (std::int64_t x = 0; x + win <= w; ++x) {
            double mu_a = 0.0, mu_b = 0.0;
            for (std::int64_t wy = 0; wy < win; ++wy)
                for (std::int64_t wx = 0; wx < win; ++wx) {
                    const double wt = g[wy * win + wx];
                    mu_a += wt * a[(y + wy) * w + x + wx];
                    mu_b += wt * b[(y + wy) * w + x + wx];
                }
            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (std::int64_t wy = 0; wy < win; ++wy)
                for (std::int64_t wx = 0; wx < win; ++wx) {
                    const double wt = g[wy * win + wx];
                    const double da = a[(y + wy) * w + x + wx] - mu_a;
                    const double db = b[(y + wy) * w + x + wx] - mu_b;
                    var_a += wt * da * da;
                    var_b += wt * db * db;
                    cov += wt * da * db;
                }
            total += ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
                     ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
            ++count;
        }
    return total / static_cast<double>(count);
}

double psnr(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("psnr: image sizes differ");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
    mse /= static_cast<double>(a.size());
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

void write_error_map_pgm(const std::string& path, std::span<const double> a,
                         std::span<const double> b, std::int64_t h, std::int64_t w) {
    if (a.size() != b.size() || static_cast<std::int64_t>(a.size()) != h * w)
        throw ShapeError("error_map: image sizes differ or do not match h*w");
    std::vector<double> diff(a.size());
    double dmax = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff[i] = std::abs(a[i] - b[i]);
        dmax = std::max(dmax, diff[i]);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out << "P5\n" << w << ' ' << h << "\n255\n";
    std::vector<unsigned char> bytes(a.size(), 0);
    if (dmax > 0.0)
        for (std::size_t i = 0; i < a.size(); ++i)
            bytes[i] = static_cast<unsigned char>(std::lround(255.0 * diff[i] / dmax));
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(path + ": write failed");
}

RescaledPair rescale_pair(std::span<const double> pred, std::span<const double> ref) {
    if (pred.size() != ref.size()) throw ShapeError("rescale_pair: sizes differ");
    const auto [lo_it, hi_it] = std::minmax_element(ref.begin(), ref.end());
    const double lo = *lo_it, hi = *hi_it;
    RescaledPair out;
    out.pred.resize(pred.size());
    out.ref.resize(ref.size());
    if (hi > lo) {
        const double inv = 1.0 / (hi - lo);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            out.pred[i] = (pred[i] - lo) * inv;
            out.ref[i] = (ref[i] - lo) * inv;
        }
    } else {
        for (std::size_t i = 0; i < ref.size(); ++i) {
            out.pred[i] = pred[i] - lo + 0.5;
            out.ref[i] = 0.5;
        }
    }
    return out;
}

EvalPairResult eval_pair(std::span<const double> pred, std::span<const double> ref, std::int64_t h,
                         std::int64_t w) {
    const RescaledPair p = rescale_pair(pred, ref);
    EvalPairResult r;
    r.ssim_percent = 100.0 * ssim(p.pred, p.ref, h, w);
    r.psnr_db = psnr(p.pred, p.ref);
    return r;
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());  // population std
    sd = std::sqrt(var);
}

EvalGroup make_group(const std::string& label, const std::vector<const EvalRow*>& rows) {
    EvalGroup g;
    g.label = label;
    g.n = static_cast<std::int64_t>(rows.size());
    std::vector<double> s, p;
    for (const EvalRow* r : rows) {
        s.push_back(r->ssim_percent);
        p.push_back(r->psnr_db);
    }
    mean_std(s, g.ssim_mean, g.ssim_std);
    mean_std(p, g.psnr_mean, g.psnr_std);
    return g;
}

std::string format_bval_label(double bval) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "b%g", bval);
    return buf;
}

} // namespace

std::vector<EvalGroup> aggregate_report(const std::vector<EvalRow>& rows) {
    if (rows.empty()) return {};
    std::map<double, std::vector<const EvalRow*>> by_bval;
    std::vector<const EvalRow*> all;
    for (const auto& r : rows) {
        by_bval[r.bval].push_back(&r);
        all.push_back(&r);
    }
    std::vector<EvalGroup> groups;
    for (const auto& [bval, grp] : by_bval) groups.push_back(make_group(format_bval_label(bval), grp));
    groups.push_back(make_group("arbitrary", all));
    return groups;
}

void write_report_csv(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out << "index,bval,slice,ssim_percent,psnr_db\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%lld,%.9g,%lld,%.9f,%.9f\n",
                      static_cast<long long>(r.index), r.bval, static_cast<long long>(r.slice),
                      r.ssim_percent, r.psnr_db);
        out << buf;
    }
}

void write_summary_csv(const std::string& path, const std::vector<EvalGroup>& groups) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(path + ": cannot open for writing");
    out << "group,n,ssim_mean,ssim_std,psnr_mean,psnr_std\n";
    char buf[200];
    for (const auto& g : groups) {
        std::snprintf(buf, sizeof buf, "%s,%lld,%.9f,%.9f,%.9f,%.9f\n", g.label.c_str(),
                      static_cast<long long>(g.n), g.ssim_mean, g.ssim_std, g.psnr_mean,
                      g.psnr_std);
        out << buf;
    }
}

} // namespace phydiff
