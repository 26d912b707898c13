// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phydiff/conditioning.hpp"
#include "phydiff/denoiser.hpp"
#include "phydiff/engine.hpp"
#include "phydiff/phantom.hpp"

namespace phydiff {

/// Flat `key = value` run configuration with dotted section keys and `#`
/// comments. Every key has a documented default; unknown keys are rejected.
class RunConfig {
public:
    struct Entry {
        std::string key;
        std::string def;
        std::string doc;
    };

    RunConfig();

    static const std::vector<Entry>& registry();

    void load_file(const std::string& path);
    void parse_line(const std::string& line, const std::string& context);

    /// Sets a key to a raw value; ConfigError on unknown key.
    void set(const std::string& key, const std::string& value);
    bool known(const std::string& key) const;

    const std::string& get(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<std::int64_t> get_int_list(const std::string& key) const;

    /// All keys in registry order, one `key = value` line each.
    std::string serialize() const;

private:
    std::vector<std::string> values_;  // aligned with registry order
    std::size_t index_of(const std::string& key) const;
};

// Builders mapping the flat config onto module configs.
NoiseScheduleBase schedule_from_config(const RunConfig& cfg);
HDiTConfig model_config_from(const RunConfig& cfg, std::int64_t image_h, std::int64_t image_w);
CondConfig cond_config_from(const RunConfig& cfg, std::int64_t data_slices);
TrainConfig train_config_from(const RunConfig& cfg, std::uint64_t seed);
PhantomSpec phantom_spec_from(const RunConfig& cfg, std::uint64_t seed);

} // namespace phydiff
