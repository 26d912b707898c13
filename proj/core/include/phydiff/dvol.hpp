// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "phydiff/volume.hpp"

namespace phydiff {

// DVOL container layout, all multi-byte integers little-endian:
//   magic   6 bytes  "DVOL1\n"
//   version u32      currently 1
//   dims    4 x u32  (C, Z, H, W), all strictly positive
//   dtype   u8       0 = f32, 1 = f64
//   payload C*Z*H*W little-endian values in C-order
enum class DvolDtype : std::uint8_t {
    f32 = 0,
    f64 = 1,
};

struct VolumeHeader {
    std::uint32_t version = 1;
    std::uint32_t dims[4] = {0, 0, 0, 0};
    DvolDtype dtype = DvolDtype::f32;
};

/// Parses and validates a DVOL header. Throws FormatError on a bad magic,
/// version, dtype tag, or non-positive/overflowing dims.
VolumeHeader read_dvol_header(const std::string& path);

/// Reads a full DVOL volume. Throws TruncationError when the payload is
/// shorter than the header promises.
Volume read_dvol(const std::string& path);

/// Writes `vol` at the requested on-disk precision. f32 narrows; use f64
/// when a bit-exact round trip of double data matters.
void write_dvol(const std::string& path, const Volume& vol, DvolDtype dtype = DvolDtype::f32);

} // namespace phydiff
