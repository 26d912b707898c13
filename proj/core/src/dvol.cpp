// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/dvol.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "phydiff/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "DVOL I/O assumes a little-endian host");
static_assert(sizeof(float) == 4 && sizeof(double) == 8);

namespace phydiff {

namespace {

constexpr char kMagic[6] = {'D', 'V', 'O', 'L', '1', '\n'};
constexpr std::uint32_t kVersion = 1;

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff),
    };
    out.write(reinterpret_cast<const char*>(b), 4);
}

VolumeHeader parse_header(std::istream& in, const std::string& path) {
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, kMagic, 6) != 0)
        throw FormatError(path + ": not a DVOL file (bad magic)");

    VolumeHeader hdr;
    hdr.version = read_u32(in);
    if (!in) throw TruncationError(path + ": truncated header");
    if (hdr.version != kVersion)
        throw FormatError(path + ": unsupported DVOL version " + std::to_string(hdr.version));

    std::uint64_t count = 1;
    for (int i = 0; i < 4; ++i) {
        hdr.dims[i] = read_u32(in);
        if (!in) throw TruncationError(path + ": truncated header");
        if (hdr.dims[i] == 0) throw FormatError(path + ": zero dimension in header");
        count *= hdr.dims[i];
        if (count > (std::uint64_t(1) << 40))
            throw FormatError(path + ": header dims overflow sanity limit");
    }

    std::uint8_t tag = 0;
    in.read(reinterpret_cast<char*>(&tag), 1);
    if (!in) throw TruncationError(path + ": truncated header");
    if (tag != 0 && tag != 1)
        throw FormatError(path + ": unknown dtype tag " + std::to_string(tag));
    hdr.dtype = static_cast<DvolDtype>(tag);
    return hdr;
}

} // namespace

VolumeHeader read_dvol_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    return parse_header(in, path);
}

Volume read_dvol(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");
    const VolumeHeader hdr = parse_header(in, path);

    Volume vol(hdr.dims[0], hdr.dims[1], hdr.dims[2], hdr.dims[3]);
    const std::size_t n = vol.data().size();

    if (hdr.dtype == DvolDtype::f32) {
        std::vector<float> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
        if (static_cast<std::size_t>(in.gcount()) != n * 4)
            throw TruncationError(path + ": payload shorter than header dims");
        for (std::size_t i = 0; i < n; ++i) vol.data()[i] = static_cast<double>(buf[i]);
    } else {
        in.read(reinterpret_cast<char*>(vol.data().data()), static_cast<std::streamsize>(n * 8));
        if (static_cast<std::size_t>(in.gcount()) != n * 8)
            throw TruncationError(path + ": payload shorter than header dims");
    }
    return vol;
}

void write_dvol(const std::string& path, const Volume& vol, DvolDtype dtype) {
    if (vol.size() == 0) throw ShapeError("write_dvol: empty volume");
    for (std::int64_t d : vol.dims())
        if (d > std::numeric_limits<std::uint32_t>::max())
            throw ShapeError("write_dvol: dimension exceeds u32 range");

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path + ": cannot open for writing");

    out.write(kMagic, 6);
    write_u32(out, kVersion);
    for (std::int64_t d : vol.dims()) write_u32(out, static_cast<std::uint32_t>(d));
    const std::uint8_t tag = static_cast<std::uint8_t>(dtype);
    out.write(reinterpret_cast<const char*>(&tag), 1);

    const std::size_t n = vol.data().size();
    if (dtype == DvolDtype::f32) {
        std::vector<float> buf(n);
        for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(vol.data()[i]);
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * 4));
    } else {
        out.write(reinterpret_cast<const char*>(vol.data().data()),
                  static_cast<std::streamsize>(n * 8));
    }
    if (!out) throw FormatError(path + ": write failed");
}

} // namespace phydiff
