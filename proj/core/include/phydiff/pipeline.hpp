// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "phydiff/config.hpp"
#include "phydiff/engine.hpp"
#include "phydiff/phantom.hpp"
#include "phydiff/physics.hpp"

namespace phydiff {

// Data directory layout (written by `make-phantom`, read by everything
// else): dwi.dvol + dwi.bval + dwi.bvec hold the raw multi-shell stack,
// s0.dvol the baseline image, atlas.dvol the 42-channel tract stack.
struct DataBundle {
    DWIStack raw;          // raw (pre-normalization) intensities
    Volume b0;             // (1, Z, H, W) raw baseline
    TractAtlas atlas_raw;  // raw tract probabilities
};

void write_data_dir(const std::string& dir, const DWIStack& stack, const Volume& s0,
                    const TractAtlas& atlas);
DataBundle load_data_dir(const std::string& dir);

/// Everything training and sampling need, derived deterministically from a
/// raw bundle: per-shell ADC atlases and schedule maps, the [-1,1]
/// normalized stack, and enriched + normalized atlas slices.
struct PreparedData {
    TrainDataset dataset;
    std::vector<double> shells;      // ascending, aligned with schedules
    std::vector<AdcAtlas> atlases;   // per shell
    Volume normalized;               // full stack, [-1, 1]
};

/// `exclude_dirs` lists direction indices (into the gradient table) left
/// out of the training sample list, e.g. a held-out q-space set. b = 0
/// directions are never training samples.
PreparedData prepare_training_data(const DataBundle& bundle, const RunConfig& cfg,
                                   const std::vector<std::int64_t>& exclude_dirs = {});

/// Schedule map for an arbitrary requested b-value: exact shell match when
/// available, otherwise the nearest shell's atlas-derived schedule.
std::size_t nearest_shell(const std::vector<double>& shells, double bval);

} // namespace phydiff
