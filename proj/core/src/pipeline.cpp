// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "phydiff/adapter.hpp"
#include "phydiff/dvol.hpp"
#include "phydiff/errors.hpp"
#include "phydiff/preprocess.hpp"

namespace phydiff {

void write_data_dir(const std::string& dir, const DWIStack& stack, const Volume& s0,
                    const TractAtlas& atlas) {
    std::filesystem::create_directories(dir);
    const auto p = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
    write_dvol(p("dwi.dvol"), stack.data);
    write_gradients(p("dwi.bval"), p("dwi.bvec"), stack.gradients);
    write_dvol(p("s0.dvol"), s0);
    write_dvol(p("atlas.dvol"), atlas.channels);
}

DataBundle load_data_dir(const std::string& dir) {
    const auto p = [&](const char* name) { return (std::filesystem::path(dir) / name).string(); };
    DataBundle b;
    b.raw.data = read_dvol(p("dwi.dvol"));
    b.raw.gradients = read_gradients(p("dwi.bval"), p("dwi.bvec"));
    b.raw.validate();
    b.b0 = read_dvol(p("s0.dvol"));
    b.atlas_raw.channels = read_dvol(p("atlas.dvol"));
    b.atlas_raw.validate();
    if (!b.raw.data.same_grid(b.b0) || !b.raw.data.same_grid(b.atlas_raw.channels))
        throw ShapeError(dir + ": dwi, s0, and atlas grids differ");
    return b;
}

std::size_t nearest_shell(const std::vector<double>& shells, double bval) {
    if (shells.empty()) throw ConfigError("nearest_shell: no shells available");
    std::size_t best = 0;
    for (std::size_t i = 1; i < shells.size(); ++i)
        if (std::abs(shells[i] - bval) < std::abs(shells[best] - bval)) best = i;
    return best;
}

PreparedData prepare_training_data(const DataBundle& bundle, const RunConfig& cfg,
                                   const std::vector<std::int64_t>& exclude_dirs) {
    const DWIStack& raw = bundle.raw;
    const std::int64_t Z = raw.data.slices(), H = raw.data.height(), W = raw.data.width();

    PreparedData out;
    out.shells = raw.shell_bvals();
    if (out.shells.empty()) throw ConfigError("prepare_training_data: stack has no b > 0 shell");

    // Physics artifacts come from raw intensities; the model itself sees
    // [-1, 1] data.
    const NoiseScheduleBase base = schedule_from_config(cfg);
    const double kappa = cfg.get_double("schedule.kappa");
    const double delta = cfg.get_double("schedule.delta");
    const bool adc_mean = cfg.get_bool("adc.mean");
    for (double shell : out.shells) {
        out.atlases.push_back(estimate_adc_atlas(raw, shell, adc_mean));
        out.dataset.schedules.push_back(build_schedule_map(out.atlases.back(), base, kappa, delta));
    }

    out.normalized = raw.data;
    minmax_normalize(out.normalized);

    out.dataset.height = H;
    out.dataset.width = W;
    out.dataset.slices = Z;

    for (std::int64_t c = 0; c < raw.directions(); ++c) {
        const Gradient& g = raw.gradients[static_cast<std::size_t>(c)];
        if (g.bval <= 0.0) continue;
        if (std::find(exclude_dirs.begin(), exclude_dirs.end(), c) != exclude_dirs.end()) continue;
        const std::size_t shell = nearest_shell(out.shells, g.bval);
        for (std::int64_t z = 0; z < Z; ++z) {
            SliceSample s;
            const auto plane = out.normalized.plane(c, z);
            s.x0.assign(plane.begin(), plane.end());
            s.slice_index = z;
            s.bvec = g.bvec;
            s.bval = g.bval;
            s.shell = shell;
            out.dataset.samples.push_back(std::move(s));
        }
    }

    if (cfg.get_bool("adapter.enabled")) {
        EnrichmentConfig ec;
        ec.xi = cfg.get_double("adapter.xi");
        TractAtlas enriched = enrich_empty_slices(bundle.atlas_raw, bundle.b0, ec);
        minmax_normalize(enriched.channels);
        out.dataset.atlas_slices.resize(static_cast<std::size_t>(Z));
        for (std::int64_t z = 0; z < Z; ++z) {
            auto& dst = out.dataset.atlas_slices[static_cast<std::size_t>(z)];
            dst.reserve(static_cast<std::size_t>(TractAtlas::kChannels * H * W));
            for (std::int64_t c = 0; c < TractAtlas::kChannels; ++c) {
                const auto plane = enriched.channels.plane(c, z);
                dst.insert(dst.end(), plane.begin(), plane.end());
            }
        }
    }
    return out;
}

} // namespace phydiff
