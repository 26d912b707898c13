// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "phydiff/adapter.hpp"
#include "phydiff/conditioning.hpp"
#include "phydiff/denoiser.hpp"
#include "phydiff/nn.hpp"
#include "phydiff/physics.hpp"

namespace phydiff {

enum class Stage { denoiser, adapter };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct TrainConfig {
    double lr = 5e-4;
    double weight_decay = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.95;
    double adam_eps = 1e-8;
    std::int64_t batch_size = 32;
    std::int64_t max_epochs = 80;
    std::int64_t max_steps = 0;  // 0 = no step cap
    std::int64_t patience = 10;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
    Stage stage = Stage::denoiser;
    std::int64_t log_every = 50;

    void validate() const;
};

/// One training example: a normalized [-1,1] slice plus its conditions.
struct SliceSample {
    std::vector<double> x0;  // h*w values
    std::int64_t slice_index = 0;
    Vec3 bvec = {0.0, 0.0, 0.0};
    double bval = 0.0;
    std::size_t shell = 0;  // index into TrainDataset::schedules
};

struct TrainDataset {
    std::int64_t height = 0;
    std::int64_t width = 0;
    std::int64_t slices = 0;
    std::vector<SliceSample> samples;
    std::vector<ScheduleMap> schedules;
    /// Normalized atlas planes (42*h*w doubles) per slice index;
    /// empty when the adapter is unused.
    std::vector<std::vector<double>> atlas_slices;
};

/// Parameter store plus the modules built over it. `with_adapter` controls
/// whether adapter parameters exist (stage 2 and adapter-conditioned
/// sampling).
class Model {
public:
    static Model create(const HDiTConfig& model_cfg, const CondConfig& cond_cfg,
                        bool with_adapter, std::uint64_t seed);

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const HDiTConfig& model_config() const { return model_cfg_; }
    const CondConfig& cond_config() const { return cond_cfg_; }
    bool has_adapter() const { return has_adapter_; }
    const Denoiser& denoiser() const { return denoiser_; }
    const CondMapper& cond() const { return cond_; }
    const Adapter& adapter() const { return adapter_; }

    /// Noise prediction for one slice. `atlas_slice`, when non-null and the
    /// model has an adapter, is a {42, H, W} tensor of normalized tract
    /// conditions.
    nn::Tensor predict(const nn::Tensor& x_t, const ConditionBundle& bundle,
                       const nn::Tensor* atlas_slice) const;

    /// Parameter names trained at the given stage (stage 2 freezes
    /// everything except the adapter).
    std::vector<std::string> trainable_names(Stage stage) const;

private:
    nn::ParamStore params_;
    HDiTConfig model_cfg_;
    CondConfig cond_cfg_;
    CondMapper cond_;
    Denoiser denoiser_;
    Adapter adapter_;
    bool has_adapter_ = false;
};

/// Decoupled-weight-decay adaptive-moment optimizer.
class AdamW {
public:
    AdamW(double lr, double weight_decay, double beta1, double beta2, double eps)
        : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(nn::ParamStore& ps, const std::vector<std::string>& names,
              const std::unordered_map<std::string, std::vector<double>>& grads);

    std::int64_t steps_taken() const { return t_; }

private:
    double lr_, wd_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::unordered_map<std::string, std::vector<double>> m_, v_;
};

/// Stops after `patience` consecutive epochs without strict improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(std::int64_t patience) : patience_(patience) {}

    /// Feeds one epoch's validation loss; returns true when training
    /// should stop now.
    bool update(double val_loss);

    double best() const { return best_; }

private:
    std::int64_t patience_;
    double best_ = std::numeric_limits<double>::infinity();
    std::int64_t bad_epochs_ = 0;
};

/// Per-voxel ancestral reverse step. With alpha_bar_t(v) = phi(t, v) and
/// alpha_t(v) = phi(t, v) / phi(t-1, v):
///   mu    = (x_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t)
///   sigma^2 = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * (1 - alpha_t)
/// returns mu + sigma * z. At t = 1 the variance is exactly zero.
std::vector<double> reverse_step(std::span<const double> x_t, std::span<const double> eps_hat,
                                 std::int64_t t, const ScheduleMap& map, std::int64_t slice,
                                 std::span<const double> z);

struct FitResult {
    std::vector<double> step_losses;
    std::vector<double> epoch_val_losses;
    std::int64_t steps = 0;
    std::int64_t epochs = 0;
    bool early_stopped = false;
};

using LogFn = std::function<void(std::int64_t step, std::int64_t epoch, double loss)>;

class Trainer {
public:
    Trainer(Model& model, const TrainDataset& data, TrainConfig cfg);

    /// One optimizer step over the given sample indices. Draws (t, eps) per
    /// item from `rng` in index order, so results are reproducible and
    /// independent of worker-thread count.
    double step(Rng& rng, std::span<const std::int64_t> items);

    /// Full loop: epochs, shuffling, validation, early stopping.
    FitResult fit(const LogFn& log = nullptr);

    /// Mean validation loss under a fixed evaluation noise stream.
    double validation_loss(const std::vector<std::int64_t>& items, Rng rng) const;

private:
    Model& model_;
    const TrainDataset& data_;
    TrainConfig cfg_;
    AdamW opt_;
    std::vector<std::string> trainable_;
};

/// Ancestral sampling from pure noise down to t = 0 for one conditioned
/// slice; the result is clamped to [-1, 1].
std::vector<double> sample_slice(const Model& model, const ConditionBundle& conditions,
                                 const ScheduleMap& schedule,
                                 const std::vector<double>* atlas_slice, Rng& rng);

} // namespace phydiff
