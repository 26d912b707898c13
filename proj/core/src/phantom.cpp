// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/phantom.hpp"

#include <cmath>
#include <numbers>

#include "phydiff/errors.hpp"

namespace phydiff {

namespace {

constexpr double kBackgroundDiffusivity = 0.8e-3;
constexpr double kTractAxial = 1.7e-3;
constexpr double kTractRadial = 0.2e-3;

std::array<double, 6> isotropic_tensor(double d) { return {d, d, d, 0.0, 0.0, 0.0}; }

/// D = radial * I + (axial - radial) * t t^T for a unit tangent t.
std::array<double, 6> tract_tensor(const Vec3& t) {
    const double a = kTractAxial - kTractRadial;
    return {kTractRadial + a * t[0] * t[0], kTractRadial + a * t[1] * t[1],
            kTractRadial + a * t[2] * t[2], a * t[0] * t[1], a * t[0] * t[2], a * t[1] * t[2]};
}

} // namespace

TensorField TensorField::isotropic(std::int64_t z, std::int64_t h, std::int64_t w, double d) {
    TensorField f;
    f.slices = z;
    f.height = h;
    f.width = w;
    f.tensors.assign(static_cast<std::size_t>(z * h * w), isotropic_tensor(d));
    f.labels.assign(static_cast<std::size_t>(z * h * w), 0);
    return f;
}

void PhantomSpec::validate() const {
    if (slices < 1 || height < 8 || width < 8)
        throw SpecError("PhantomSpec: grid too small");
    if (n_tracts < 0 || n_tracts > TractAtlas::kChannels)
        throw SpecError("PhantomSpec: tract count must lie in [0, 42]");
    if (dirs_per_shell < 6) throw SpecError("PhantomSpec: need >= 6 directions per shell");
    if (shells.empty()) throw SpecError("PhantomSpec: at least one shell required");
    for (double b : shells)
        if (b <= 0.0) throw SpecError("PhantomSpec: shell b-values must be positive");
    if (noise_sigma < 0.0) throw SpecError("PhantomSpec: noise sigma must be >= 0");
}

Phantom make_phantom(const PhantomSpec& spec) {
    spec.validate();
    const std::int64_t Z = spec.slices, H = spec.height, W = spec.width;
    const double cz = 0.5 * static_cast<double>(Z - 1);
    const double cy = 0.5 * static_cast<double>(H - 1);
    const double cx = 0.5 * static_cast<double>(W - 1);
    const double rz = std::max(1.0, 0.55 * static_cast<double>(Z));
    const double ry = 0.42 * static_cast<double>(H);
    const double rx = 0.42 * static_cast<double>(W);

    Phantom ph;
    ph.field.slices = Z;
    ph.field.height = H;
    ph.field.width = W;
    ph.field.tensors.assign(static_cast<std::size_t>(Z * H * W), isotropic_tensor(0.0));
    ph.field.labels.assign(static_cast<std::size_t>(Z * H * W), 0);
    ph.s0 = Volume(1, Z, H, W, 0.0);
    ph.atlas.channels = Volume(TractAtlas::kChannels, Z, H, W, 0.0);

    for (std::int64_t z = 0; z < Z; ++z)
        for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x) {
                const double u = (static_cast<double>(x) - cx) / rx;
                const double v = (static_cast<double>(y) - cy) / ry;
                const double w = (static_cast<double>(z) - cz) / rz;
                if (u * u + v * v + w * w <= 1.0) {
                    ph.s0.at(0, z, y, x) = 1.0;
                    ph.field.tensors[ph.field.index(z, y, x)] =
                        isotropic_tensor(kBackgroundDiffusivity);
                }
            }

    // Curved tract tubes: sinusoidal paths swept left to right, spread over
    // slices, with the principal axis following the local tangent.
    Rng rng(spec.seed);
    const double margin = 0.12 * static_cast<double>(W);
    for (std::int64_t k = 0; k < spec.n_tracts; ++k) {
        const double amp = rng.uniform(0.10, 0.22) * static_cast<double>(H);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double freq = rng.uniform(0.6, 1.1);
        const double zc = (static_cast<double>(k + 1) / static_cast<double>(spec.n_tracts + 1)) *
                          static_cast<double>(Z - 1);
        const double zamp = 0.08 * static_cast<double>(Z);
        const double radius = rng.uniform(1.3, 2.2);

        const double x0 = margin, x1 = static_cast<double>(W - 1) - margin;
        const std::int64_t steps = static_cast<std::int64_t>((x1 - x0) / 0.5) + 1;
        for (std::int64_t i = 0; i <= steps; ++i) {
            const double s = static_cast<double>(i) / static_cast<double>(steps);
            const double px = x0 + s * (x1 - x0);
            const double py =
                cy + amp * std::sin(2.0 * std::numbers::pi * freq * s + phase);
            const double pz = zc + zamp * std::sin(std::numbers::pi * s + phase);

            // Tangent of (px, py, pz) with respect to s, normalized.
            Vec3 tan = {x1 - x0,
                        amp * 2.0 * std::numbers::pi * freq *
                            std::cos(2.0 * std::numbers::pi * freq * s + phase),
                        zamp * std::numbers::pi * std::cos(std::numbers::pi * s + phase)};
            const double tn = norm(tan);
            for (double& c : tan) c /= tn;

            if (px < 0 || px > W - 1 || py < 0 || py > H - 1 || pz < 0 || pz > Z - 1)
                throw SpecError("make_phantom: tract " + std::to_string(k) + " leaves the grid");

            const std::int64_t zlo = std::max<std::int64_t>(0, static_cast<std::int64_t>(pz - radius));
            const std::int64_t zhi = std::min<std::int64_t>(Z - 1, static_cast<std::int64_t>(pz + radius) + 1);
            const std::int64_t ylo = std::max<std::int64_t>(0, static_cast<std::int64_t>(py - radius));
            const std::int64_t yhi = std::min<std::int64_t>(H - 1, static_cast<std::int64_t>(py + radius) + 1);
            const std::int64_t xlo = std::max<std::int64_t>(0, static_cast<std::int64_t>(px - radius));
            const std::int64_t xhi = std::min<std::int64_t>(W - 1, static_cast<std::int64_t>(px + radius) + 1);
            for (std::int64_t z = zlo; z <= zhi; ++z)
                for (std::int64_t y = ylo; y <= yhi; ++y)
                    for (std::int64_t x = xlo; x <= xhi; ++x) {
                        const double dx = static_cast<double>(x) - px;
                        const double dy = static_cast<double>(y) - py;
                        const double dz = static_cast<double>(z) - pz;
                        if (dx * dx + dy * dy + dz * dz > radius * radius) continue;
                        if (ph.s0.at(0, z, y, x) == 0.0) continue;  // stay inside the head
                        ph.field.tensors[ph.field.index(z, y, x)] = tract_tensor(tan);
                        ph.field.labels[ph.field.index(z, y, x)] =
                            static_cast<std::uint8_t>(k + 1);
                        ph.atlas.channels.at(k, z, y, x) = 1.0;
                    }
        }
    }
    return ph;
}

Volume simulate_signal(const TensorField& field, const Volume& s0, double bval, const Vec3& bvec,
                       double noise_sigma, Rng& rng) {
    if (s0.channels() != 1 || s0.slices() != field.slices || s0.height() != field.height ||
        s0.width() != field.width)
        throw ShapeError("simulate_signal: s0 grid does not match tensor field");
    if (bval > 0.0 && std::abs(norm(bvec) - 1.0) > 1e-6)
        throw ValueError("simulate_signal: bvec must be unit length for b > 0");

    Volume out(1, field.slices, field.height, field.width);
    const auto& g = bvec;
    for (std::size_t i = 0; i < field.tensors.size(); ++i) {
        const auto& d = field.tensors[i];
        const double quad = g[0] * g[0] * d[0] + g[1] * g[1] * d[1] + g[2] * g[2] * d[2] +
                            2.0 * (g[0] * g[1] * d[3] + g[0] * g[2] * d[4] + g[1] * g[2] * d[5]);
        double s = s0.data()[i] * std::exp(-bval * quad);
        if (noise_sigma > 0.0) {
            const double n1 = noise_sigma * rng.normal();
            const double n2 = noise_sigma * rng.normal();
            s = std::sqrt((s + n1) * (s + n1) + n2 * n2);
        }
        out.data()[i] = s;
    }
    return out;
}

std::vector<Vec3> sphere_directions(std::int64_t n) {
    if (n < 1) throw ValueError("sphere_directions: n must be >= 1");
    if (n == 1) return {Vec3{0.0, 0.0, 1.0}};
    std::vector<Vec3> dirs(static_cast<std::size_t>(n));
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (std::int64_t i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double th = golden * static_cast<double>(i);
        Vec3 v = {r * std::cos(th), r * std::sin(th), z};
        const double vn = norm(v);
        for (double& c : v) c /= vn;
        dirs[static_cast<std::size_t>(i)] = v;
    }
    return dirs;
}

DWIStack simulate_stack(const Phantom& phantom, const PhantomSpec& spec, Rng& rng) {
    spec.validate();
    const std::int64_t Z = spec.slices, H = spec.height, W = spec.width;
    const std::int64_t n_dirs =
        1 + static_cast<std::int64_t>(spec.shells.size()) * spec.dirs_per_shell;

    DWIStack stack;
    stack.data = Volume(n_dirs, Z, H, W);
    stack.gradients.resize(static_cast<std::size_t>(n_dirs));

    const auto dirs = sphere_directions(spec.dirs_per_shell);

    std::int64_t c = 0;
    auto emit = [&](double bval, const Vec3& g) {
        Volume vol = simulate_signal(phantom.field, phantom.s0, bval, g, spec.noise_sigma, rng);
        std::copy(vol.data().begin(), vol.data().end(),
                  stack.data.data().begin() + c * Z * H * W);
        stack.gradients[static_cast<std::size_t>(c)] = Gradient{bval, g};
        ++c;
    };

    emit(0.0, Vec3{0.0, 0.0, 0.0});
    for (double b : spec.shells)
        for (const auto& g : dirs) emit(b, g);

    stack.validate();
    return stack;
}

} // namespace phydiff
