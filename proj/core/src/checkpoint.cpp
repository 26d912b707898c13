// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "phydiff/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace phydiff {

namespace {

constexpr char kMagic[8] = {'P', 'H', 'Y', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}
void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}
std::uint32_t read_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw FormatError(path + ": truncated checkpoint");
    return v;
}
std::uint64_t read_u64(std::istream& in, const std::string& path) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw FormatError(path + ": truncated checkpoint");
    return v;
}
std::string read_blob(std::istream& in, std::uint64_t len, const std::string& path) {
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw FormatError(path + ": truncated checkpoint");
    return s;
}

std::string format_manifest_line(const std::string& name, const ad::Shape& shape) {
    std::string line = name + ' ';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) line += 'x';
        line += std::to_string(shape[i]);
    }
    return line + " f64\n";
}

void write_body(std::ostream& out, const std::string& stage, const std::string& config_text,
                const std::string& rng_state, const std::string& manifest,
                const std::vector<const std::vector<double>*>& payloads) {
    out.write(kMagic, 8);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(stage.size()));
    out.write(stage.data(), static_cast<std::streamsize>(stage.size()));
    write_u64(out, config_text.size());
    out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
    write_u64(out, rng_state.size());
    out.write(rng_state.data(), static_cast<std::streamsize>(rng_state.size()));
    write_u64(out, manifest.size());
    out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));

    std::uint64_t payload_bytes = 0;
    for (const auto* p : payloads) payload_bytes += p->size() * 8;
    write_u64(out, payload_bytes);
    for (const auto* p : payloads)
        out.write(reinterpret_cast<const char*>(p->data()),
                  static_cast<std::streamsize>(p->size() * 8));
}

} // namespace

void save_checkpoint(const std::string& path, const nn::ParamStore& params,
                     const std::string& stage, const std::string& config_text,
                     const std::string& rng_state) {
    std::string manifest;
    std::vector<const std::vector<double>*> payloads;
    for (const auto& name : params.names()) {
        ad::Tensor t = params.get(name);
        manifest += format_manifest_line(name, t.shape());
        payloads.push_back(&t.values());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path + ": cannot open for writing");
    write_body(out, stage, config_text, rng_state, manifest, payloads);
    if (!out) throw FormatError(path + ": write failed");
}

void save_checkpoint(const std::string& path, const LoadedCheckpoint& ckpt) {
    std::string manifest;
    std::vector<const std::vector<double>*> payloads;
    for (const auto& e : ckpt.entries) {
        manifest += format_manifest_line(e.name, e.shape);
        payloads.push_back(&e.values);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(path + ": cannot open for writing");
    write_body(out, ckpt.stage, ckpt.config_text, ckpt.rng_state, manifest, payloads);
    if (!out) throw FormatError(path + ": write failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open");

    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError(path + ": not a checkpoint (bad magic)");
    const std::uint32_t version = read_u32(in, path);
    if (version != kVersion)
        throw VersionError(path + ": checkpoint version " + std::to_string(version) +
                           ", expected " + std::to_string(kVersion));

    LoadedCheckpoint ckpt;
    ckpt.stage = read_blob(in, read_u32(in, path), path);
    ckpt.config_text = read_blob(in, read_u64(in, path), path);
    ckpt.rng_state = read_blob(in, read_u64(in, path), path);
    const std::string manifest = read_blob(in, read_u64(in, path), path);

    std::uint64_t expected_payload = 0;
    std::istringstream ms(manifest);
    std::string line;
    while (std::getline(ms, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name, dims, dtype;
        if (!(ls >> name >> dims >> dtype) || dtype != "f64")
            throw FormatError(path + ": malformed manifest line '" + line + "'");
        CheckpointEntry e;
        e.name = name;
        std::size_t pos = 0;
        while (pos < dims.size()) {
            const std::size_t xpos = dims.find('x', pos);
            const std::string tok = dims.substr(pos, xpos == std::string::npos ? xpos : xpos - pos);
            try {
                e.shape.push_back(std::stoll(tok));
            } catch (const std::exception&) {
                throw FormatError(path + ": malformed manifest dims '" + dims + "'");
            }
            if (xpos == std::string::npos) break;
            pos = xpos + 1;
        }
        if (e.shape.empty() || ad::numel(e.shape) <= 0)
            throw FormatError(path + ": malformed manifest dims '" + dims + "'");
        expected_payload += static_cast<std::uint64_t>(ad::numel(e.shape)) * 8;
        ckpt.entries.push_back(std::move(e));
    }

    const std::uint64_t payload_len = read_u64(in, path);
    if (payload_len != expected_payload)
        throw FormatError(path + ": payload length " + std::to_string(payload_len) +
                          " does not match manifest (" + std::to_string(expected_payload) + ")");
    for (auto& e : ckpt.entries) {
        e.values.resize(static_cast<std::size_t>(ad::numel(e.shape)));
        in.read(reinterpret_cast<char*>(e.values.data()),
                static_cast<std::streamsize>(e.values.size() * 8));
        if (!in) throw FormatError(path + ": truncated payload");
    }
    return ckpt;
}

void apply_checkpoint(const LoadedCheckpoint& ckpt, nn::ParamStore& params) {
    for (const auto& e : ckpt.entries) {
        if (!params.has(e.name))
            throw ConfigError("checkpoint parameter '" + e.name +
                              "' does not exist in this model configuration");
        ad::Tensor t = params.get(e.name);
        if (t.shape() != e.shape)
            throw ConfigError("checkpoint parameter '" + e.name + "' has shape " +
                              ad::shape_str(e.shape) + ", model expects " +
                              ad::shape_str(t.shape()));
        t.values() = e.values;
    }
}

} // namespace phydiff
