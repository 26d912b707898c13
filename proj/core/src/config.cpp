// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "phydiff/errors.hpp"

namespace phydiff {

const std::vector<RunConfig::Entry>& RunConfig::registry() {
    static const std::vector<Entry> entries = {
        {"schedule.timesteps", "1000", "diffusion steps T"},
        {"schedule.beta1", "0.0001", "first beta of the linear schedule"},
        {"schedule.betaT", "0.02", "last beta of the linear schedule"},
        {"schedule.kappa", "0.5", "atlas modulation strength (0 = plain DDPM)"},
        {"schedule.delta", "1e-08", "degeneracy threshold for the atlas range map"},
        {"adc.mean", "false", "report mean ADC (divide the direction sum by N)"},
        {"model.patch_size", "4", "patch edge length of the transformer stem"},
        {"model.widths", "64,128,256", "token widths of the three levels"},
        {"model.blocks", "1", "transformer blocks per level"},
        {"model.mid_blocks", "2", "global-attention blocks at the bottleneck"},
        {"model.na_window", "7", "neighborhood attention window (odd, >= 3)"},
        {"model.head_dim", "32", "attention head width"},
        {"cond.width", "256", "guidance vector width"},
        {"cond.ffn_blocks", "2", "GEGLU FFN blocks fusing the guidance"},
        {"cond.max_slices", "0", "slice-index table size (0 = infer from data)"},
        {"adapter.enabled", "true", "inject tract-atlas features"},
        {"adapter.xi", "1.0", "enrichment correction factor"},
        {"train.stage", "denoiser", "training stage: denoiser | adapter"},
        {"train.lr", "0.0005", "learning rate"},
        {"train.weight_decay", "0.0001", "decoupled weight decay"},
        {"train.beta1", "0.9", "first Adam momentum"},
        {"train.beta2", "0.95", "second Adam momentum"},
        {"train.eps", "1e-08", "Adam epsilon"},
        {"train.batch_size", "32", "samples per optimizer step"},
        {"train.max_epochs", "80", "epoch cap"},
        {"train.max_steps", "0", "optimizer-step cap (0 = none)"},
        {"train.patience", "10", "early-stopping patience in epochs"},
        {"train.val_fraction", "0.1", "fraction of samples held out for validation"},
        {"train.log_every", "50", "steps between loss log lines"},
        {"train.init_checkpoint", "", "stage-1 checkpoint to start the adapter stage from"},
        {"sample.count", "1", "images to sample"},
        {"phantom.slices", "16", "phantom slice count"},
        {"phantom.height", "64", "phantom slice height"},
        {"phantom.width", "64", "phantom slice width"},
        {"phantom.tracts", "3", "synthetic tract count (<= 42)"},
        {"phantom.shells", "1000,2000", "phantom shell b-values"},
        {"phantom.dirs_per_shell", "16", "directions per shell (>= 6)"},
        {"phantom.noise_sigma", "0.0", "Rician noise level (0 = noiseless)"},
    };
    return entries;
}

RunConfig::RunConfig() {
    values_.reserve(registry().size());
    for (const auto& e : registry()) values_.push_back(e.def);
}

std::size_t RunConfig::index_of(const std::string& key) const {
    const auto& reg = registry();
    for (std::size_t i = 0; i < reg.size(); ++i)
        if (reg[i].key == key) return i;
    throw ConfigError("unknown config key '" + key + "'");
}

bool RunConfig::known(const std::string& key) const {
    for (const auto& e : registry())
        if (e.key == key) return true;
    return false;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

void RunConfig::parse_line(const std::string& raw, const std::string& context) {
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) return;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
        throw ConfigError(context + ": expected 'key = value', got '" + trim(raw) + "'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        parse_line(line, path + ":" + std::to_string(lineno));
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    values_[index_of(key)] = value;
}

const std::string& RunConfig::get(const std::string& key) const { return values_[index_of(key)]; }

std::int64_t RunConfig::get_int(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t pos = 0;
        const std::int64_t x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
    }
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& v = get(key);
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
    const std::string& v = get(key);
    std::vector<double> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': '" + tok + "' is not a number");
        }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

std::vector<std::int64_t> RunConfig::get_int_list(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (double v : get_double_list(key)) {
        const auto i = static_cast<std::int64_t>(v);
        if (static_cast<double>(i) != v)
            throw ConfigError("config key '" + key + "': expected integers");
        out.push_back(i);
    }
    return out;
}

std::string RunConfig::serialize() const {
    std::string out;
    const auto& reg = registry();
    for (std::size_t i = 0; i < reg.size(); ++i)
        out += reg[i].key + " = " + values_[i] + "\n";
    return out;
}

NoiseScheduleBase schedule_from_config(const RunConfig& cfg) {
    return build_base_schedule(cfg.get_int("schedule.timesteps"), cfg.get_double("schedule.beta1"),
                               cfg.get_double("schedule.betaT"));
}

HDiTConfig model_config_from(const RunConfig& cfg, std::int64_t image_h, std::int64_t image_w) {
    HDiTConfig m;
    m.patch_size = cfg.get_int("model.patch_size");
    const auto widths = cfg.get_int_list("model.widths");
    if (widths.size() != 3) throw ConfigError("model.widths must list exactly 3 widths");
    m.widths = {widths[0], widths[1], widths[2]};
    m.blocks_per_level = cfg.get_int("model.blocks");
    m.mid_blocks = cfg.get_int("model.mid_blocks");
    m.na_window = cfg.get_int("model.na_window");
    m.head_dim = cfg.get_int("model.head_dim");
    m.cond_width = cfg.get_int("cond.width");
    m.image_channels = 1;
    m.image_h = image_h;
    m.image_w = image_w;
    m.validate();
    return m;
}

CondConfig cond_config_from(const RunConfig& cfg, std::int64_t data_slices) {
    CondConfig c;
    c.width = cfg.get_int("cond.width");
    c.ffn_blocks = cfg.get_int("cond.ffn_blocks");
    c.max_slices = cfg.get_int("cond.max_slices");
    if (c.max_slices == 0) c.max_slices = data_slices;
    if (c.max_slices < data_slices)
        throw ConfigError("cond.max_slices smaller than the data slice count");
    return c;
}

TrainConfig train_config_from(const RunConfig& cfg, std::uint64_t seed) {
    TrainConfig t;
    t.lr = cfg.get_double("train.lr");
    t.weight_decay = cfg.get_double("train.weight_decay");
    t.adam_beta1 = cfg.get_double("train.beta1");
    t.adam_beta2 = cfg.get_double("train.beta2");
    t.adam_eps = cfg.get_double("train.eps");
    t.batch_size = cfg.get_int("train.batch_size");
    t.max_epochs = cfg.get_int("train.max_epochs");
    t.max_steps = cfg.get_int("train.max_steps");
    t.patience = cfg.get_int("train.patience");
    t.val_fraction = cfg.get_double("train.val_fraction");
    t.log_every = cfg.get_int("train.log_every");
    t.seed = seed;
    t.stage = stage_from_name(cfg.get("train.stage"));
    t.validate();
    return t;
}

PhantomSpec phantom_spec_from(const RunConfig& cfg, std::uint64_t seed) {
    PhantomSpec p;
    p.slices = cfg.get_int("phantom.slices");
    p.height = cfg.get_int("phantom.height");
    p.width = cfg.get_int("phantom.width");
    p.n_tracts = cfg.get_int("phantom.tracts");
    p.shells = cfg.get_double_list("phantom.shells");
    p.dirs_per_shell = cfg.get_int("phantom.dirs_per_shell");
    p.noise_sigma = cfg.get_double("phantom.noise_sigma");
    p.seed = seed;
    p.validate();
    return p;
}

} // namespace phydiff
