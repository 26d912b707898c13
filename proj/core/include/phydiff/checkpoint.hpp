// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "phydiff/autodiff.hpp"
#include "phydiff/nn.hpp"

namespace phydiff {

// Checkpoint container, all integers little-endian:
//   magic    8 bytes "PHYCKPT1"
//   version  u32 (currently 1)
//   stage    u32 length + bytes ("denoiser" | "adapter")
//   config   u64 length + bytes (run-config snapshot, verbatim text)
//   rng      u64 length + bytes (serialized RNG state)
//   manifest u64 length + text, one line per parameter:
//              "<name> <d0>x<d1>x... f64\n"
//   payload  u64 length + concatenated little-endian f64 arrays in
//            manifest order
struct CheckpointEntry {
    std::string name;
    ad::Shape shape;
    std::vector<double> values;
};

struct LoadedCheckpoint {
    std::string stage;
    std::string config_text;
    std::string rng_state;
    std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::string& path, const nn::ParamStore& params,
                     const std::string& stage, const std::string& config_text,
                     const std::string& rng_state);

/// Re-serializes a loaded checkpoint; save(load(x)) is byte-identical.
void save_checkpoint(const std::string& path, const LoadedCheckpoint& ckpt);

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Copies checkpoint values into matching parameters. Every checkpoint
/// entry must exist in the store with the same shape (ConfigError
/// otherwise); store parameters absent from the checkpoint keep their
/// initialization (a freshly added adapter, for stage 2).
void apply_checkpoint(const LoadedCheckpoint& ckpt, nn::ParamStore& params);

} // namespace phydiff
