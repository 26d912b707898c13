// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "phydiff/errors.hpp"
#include "phydiff/metrics.hpp"
#include "phydiff/rng.hpp"

using namespace phydiff;

TEST_CASE("ssim of an image with itself is exactly 1") {
    Rng rng(1);
    std::vector<double> img(32 * 32);
    for (double& v : img) v = rng.uniform(0.0, 1.0);
    CHECK(ssim(img, img, 32, 32) == 1.0);
}

TEST_CASE("ssim of two constant images matches the closed form") {
    // mu_a = 0.4, mu_b = 0.6, zero variances:
    // (2*0.24 + 1e-4) / (0.16 + 0.36 + 1e-4) = 0.9230917...
    const std::vector<double> a(32 * 32, 0.4), b(32 * 32, 0.6);
    CHECK(ssim(a, b, 32, 32) == doctest::Approx(0.9230917131320899).epsilon(1e-10));
    CHECK(std::abs(ssim(a, b, 32, 32) - 0.92310) < 1e-4);
}

TEST_CASE("ssim is symmetric") {
    Rng rng(2);
    std::vector<double> a(24 * 24), b(24 * 24);
    for (double& v : a) v = rng.uniform(0.0, 1.0);
    for (double& v : b) v = rng.uniform(0.0, 1.0);
    CHECK(ssim(a, b, 24, 24) == doctest::Approx(ssim(b, a, 24, 24)).epsilon(1e-12));
}

TEST_CASE("ssim rejects shape mismatches") {
    const std::vector<double> a(16, 0.0), b(12, 0.0);
    CHECK_THROWS_AS(ssim(a, b, 4, 4), ShapeError);
    CHECK_THROWS_AS(ssim(a, a, 3, 4), ShapeError);
}

TEST_CASE("psnr matches the closed form and caps at 100 dB") {
    // Constant difference 0.1: MSE = 0.01 -> 20 dB.
    const std::vector<double> a(64, 0.5), b(64, 0.6);
    CHECK(std::abs(psnr(a, b) - 20.0) <= 1e-9);
    CHECK(psnr(a, a) == 100.0);
    CHECK(psnr(a, b) == doctest::Approx(psnr(b, a)).epsilon(1e-15));

    // Tiny but nonzero error also hits the cap.
    std::vector<double> c = a;
    c[0] += 1e-9;
    CHECK(psnr(a, c) == 100.0);
}

TEST_CASE("error map: zero difference and full-scale pixel") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "phydiff_metrics_test";
    fs::create_directories(dir);
    const std::string path = (dir / "err.pgm").string();

    std::vector<double> a(4 * 5, 0.25), b(4 * 5, 0.25);
    b[7] = 1.25;   // |diff| = 1.0 -> byte 255
    b[3] = 0.75;   // |diff| = 0.5 -> byte 128 (rounded)
    write_error_map_pgm(path, a, b, 4, 5);

    std::ifstream in(path, std::ios::binary);
    std::string header;
    std::getline(in, header);
    CHECK(header == "P5");
    std::int64_t w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    CHECK(w == 5);
    CHECK(h == 4);
    CHECK(maxval == 255);
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> bytes(20);
    in.read(reinterpret_cast<char*>(bytes.data()), 20);
    CHECK(bytes[7] == 255);
    CHECK(bytes[3] == 128);
    CHECK(bytes[0] == 0);

    // Identical images produce an all-zero map.
    write_error_map_pgm(path, a, a, 4, 5);
    std::ifstream in2(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in2)), std::istreambuf_iterator<char>());
    for (std::size_t i = all.size() - 20; i < all.size(); ++i) CHECK(all[i] == 0);
}

TEST_CASE("rescale_pair anchors both images to the reference range") {
    const std::vector<double> ref = {-1.0, 0.0, 1.0, 3.0};
    const std::vector<double> pred = {-1.0, 1.0, 3.0, 5.0};
    const RescaledPair p = rescale_pair(pred, ref);
    CHECK(p.ref == std::vector<double>{0.0, 0.25, 0.5, 1.0});
    CHECK(p.pred == std::vector<double>{0.0, 0.5, 1.0, 1.5});  // may exceed [0,1]
}

TEST_CASE("eval_pair of identical images reports SSIM 100% and PSNR 100 dB") {
    Rng rng(3);
    std::vector<double> img(32 * 32);
    for (double& v : img) v = rng.uniform(-1.0, 1.0);
    const EvalPairResult r = eval_pair(img, img, 32, 32);
    CHECK(r.ssim_percent == 100.0);
    CHECK(r.psnr_db == 100.0);
}

TEST_CASE("eval_pair is invariant to a shared affine rescale of both inputs") {
    Rng rng(4);
    for (int trial = 0; trial < 8; ++trial) {
        std::vector<double> pred(24 * 24), ref(24 * 24);
        for (double& v : pred) v = rng.uniform(-1.0, 1.0);
        for (double& v : ref) v = rng.uniform(-1.0, 1.0);
        const EvalPairResult base = eval_pair(pred, ref, 24, 24);

        const double s = rng.uniform(0.5, 3.0), o = rng.uniform(-2.0, 2.0);
        std::vector<double> pred2 = pred, ref2 = ref;
        for (double& v : pred2) v = s * v + o;
        for (double& v : ref2) v = s * v + o;
        const EvalPairResult scaled = eval_pair(pred2, ref2, 24, 24);
        CHECK(scaled.ssim_percent == doctest::Approx(base.ssim_percent).epsilon(1e-9));
        CHECK(scaled.psnr_db == doctest::Approx(base.psnr_db).epsilon(1e-9));
    }
}

TEST_CASE("report aggregates are recomputable from the rows") {
    Rng rng(5);
    std::vector<EvalRow> rows;
    for (int i = 0; i < 30; ++i) {
        EvalRow r;
        r.index = i;
        r.bval = (i % 3 == 0) ? 1000.0 : (i % 3 == 1 ? 2000.0 : 3000.0);
        r.slice = i % 5;
        r.ssim_percent = rng.uniform(50.0, 100.0);
        r.psnr_db = rng.uniform(15.0, 40.0);
        rows.push_back(r);
    }
    const auto groups = aggregate_report(rows);
    REQUIRE(groups.size() == 4u);  // three shells + pooled
    CHECK(groups.back().label == "arbitrary");
    CHECK(groups.back().n == 30);

    for (const auto& g : groups) {
        double mean = 0.0, var = 0.0;
        std::int64_t n = 0;
        for (const auto& r : rows) {
            const bool member = g.label == "arbitrary" || g.label == ("b" + std::to_string(static_cast<int>(r.bval)));
            if (!member) continue;
            mean += r.ssim_percent;
            ++n;
        }
        mean /= static_cast<double>(n);
        for (const auto& r : rows) {
            const bool member = g.label == "arbitrary" || g.label == ("b" + std::to_string(static_cast<int>(r.bval)));
            if (!member) continue;
            var += (r.ssim_percent - mean) * (r.ssim_percent - mean);
        }
        var /= static_cast<double>(n);
        CHECK(g.n == n);
        CHECK(std::abs(g.ssim_mean - mean) <= 1e-9);
        CHECK(std::abs(g.ssim_std - std::sqrt(var)) <= 1e-9);
    }
}

TEST_CASE("csv writers emit a header and one line per row") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "phydiff_metrics_test";
    fs::create_directories(dir);
    const std::string path = (dir / "report.csv").string();

    std::vector<EvalRow> rows = {{0, 1000.0, 3, 88.5, 24.25}, {1, 2000.0, 4, 90.0, 26.0}};
    write_report_csv(path, rows);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "index,bval,slice,ssim_percent,psnr_db");
    int count = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++count;
    CHECK(count == 2);
}
