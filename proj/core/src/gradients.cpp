// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "phydiff/errors.hpp"

namespace phydiff {

double norm(const Vec3& v) {
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

namespace {

std::vector<std::vector<double>> read_numeric_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path + ": cannot open");

    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::vector<double> row;
        std::string tok;
        while (ls >> tok) {
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(tok, &pos);
            } catch (const std::exception&) {
                throw ParseError(path + ": non-numeric token '" + tok + "'");
            }
            if (pos != tok.size())
                throw ParseError(path + ": non-numeric token '" + tok + "'");
            row.push_back(v);
        }
        if (!row.empty()) rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

std::vector<Gradient> read_gradients(const std::string& bvals_path, const std::string& bvecs_path) {
    const auto bval_rows = read_numeric_rows(bvals_path);
    if (bval_rows.size() != 1)
        throw FormatError(bvals_path + ": expected a single row of b-values, got " +
                          std::to_string(bval_rows.size()) + " rows");
    const auto& bvals = bval_rows[0];

    const auto bvec_rows = read_numeric_rows(bvecs_path);
    if (bvec_rows.size() != 3)
        throw FormatError(bvecs_path + ": expected 3 rows (x, y, z), got " +
                          std::to_string(bvec_rows.size()));
    for (const auto& row : bvec_rows)
        if (row.size() != bvals.size())
            throw FormatError(bvecs_path + ": column count " + std::to_string(row.size()) +
                              " does not match " + std::to_string(bvals.size()) + " b-values");

    std::vector<Gradient> table(bvals.size());
    for (std::size_t i = 0; i < bvals.size(); ++i) {
        table[i].bval = bvals[i];
        Vec3 g = {bvec_rows[0][i], bvec_rows[1][i], bvec_rows[2][i]};
        if (bvals[i] > 0.0) {
            const double n = norm(g);
            if (n <= 0.0)
                throw FormatError(bvecs_path + ": zero direction vector for b > 0 at column " +
                                  std::to_string(i));
            for (double& c : g) c /= n;
        } else {
            g = {0.0, 0.0, 0.0};
        }
        table[i].bvec = g;
    }
    return table;
}

void write_gradients(const std::string& bvals_path, const std::string& bvecs_path,
                     const std::vector<Gradient>& table) {
    std::ofstream bv(bvals_path, std::ios::trunc);
    std::ofstream gv(bvecs_path, std::ios::trunc);
    if (!bv || !gv) throw FormatError("write_gradients: cannot open output files");

    char buf[64];
    for (std::size_t i = 0; i < table.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", table[i].bval);
        bv << (i ? " " : "") << buf;
    }
    bv << '\n';
    for (int axis = 0; axis < 3; ++axis) {
        for (std::size_t i = 0; i < table.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", table[i].bvec[axis]);
            gv << (i ? " " : "") << buf;
        }
        gv << '\n';
    }
}

void DWIStack::validate(bool normalized) const {
    if (data.channels() != static_cast<std::int64_t>(gradients.size()))
        throw ShapeError("DWIStack: direction count " + std::to_string(data.channels()) +
                         " does not match gradient table size " +
                         std::to_string(gradients.size()));
    for (std::size_t i = 0; i < gradients.size(); ++i) {
        const auto& g = gradients[i];
        if (g.bval > 0.0) {
            if (std::abs(norm(g.bvec) - 1.0) > 1e-4)
                throw ValueError("DWIStack: non-unit bvec at direction " + std::to_string(i));
        } else {
            if (g.bvec != Vec3{0.0, 0.0, 0.0})
                throw ValueError("DWIStack: b=0 direction must carry the zero vector");
        }
    }
    if (normalized) {
        for (double v : data.data())
            if (!(v >= -1.0 && v <= 1.0))
                throw ValueError("DWIStack: normalized data outside [-1, 1]");
    }
}

std::vector<std::int64_t> DWIStack::shell(double shell_bval, double tol) const {
    std::vector<std::int64_t> idx;
    for (std::size_t i = 0; i < gradients.size(); ++i)
        if (std::abs(gradients[i].bval - shell_bval) <= tol)
            idx.push_back(static_cast<std::int64_t>(i));
    return idx;
}

std::vector<double> DWIStack::shell_bvals(double tol) const {
    std::vector<double> shells;
    for (const auto& g : gradients) {
        if (g.bval <= 0.0) continue;
        bool known = false;
        for (double s : shells)
            if (std::abs(s - g.bval) <= tol) { known = true; break; }
        if (!known) shells.push_back(g.bval);
    }
    std::sort(shells.begin(), shells.end());
    return shells;
}

void TractAtlas::validate() const {
    if (channels.channels() != kChannels)
        throw ShapeError("TractAtlas: expected 42 channels, got " +
                         std::to_string(channels.channels()));
    for (double v : channels.data())
        if (!std::isfinite(v) || v < 0.0)
            throw ValueError("TractAtlas: values must be finite and non-negative");
}

} // namespace phydiff
