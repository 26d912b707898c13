// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "phydiff/engine.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <thread>

#include "phydiff/errors.hpp"

namespace phydiff {

using ad::Tensor;

std::string stage_name(Stage s) { return s == Stage::denoiser ? "denoiser" : "adapter"; }

Stage stage_from_name(const std::string& name) {
    if (name == "denoiser") return Stage::denoiser;
    if (name == "adapter") return Stage::adapter;
    throw ConfigError("unknown stage '" + name + "' (expected denoiser or adapter)");
}

void TrainConfig::validate() const {
    if (lr <= 0.0 || weight_decay < 0.0 || adam_eps <= 0.0)
        throw ConfigError("TrainConfig: optimizer scalars must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("TrainConfig: momenta must lie in [0, 1)");
    if (batch_size < 1 || max_epochs < 1 || patience < 1)
        throw ConfigError("TrainConfig: batch_size, max_epochs, patience must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ConfigError("TrainConfig: val_fraction must lie in [0, 1)");
}

Model Model::create(const HDiTConfig& model_cfg, const CondConfig& cond_cfg, bool with_adapter,
                    std::uint64_t seed) {
    if (model_cfg.cond_width != cond_cfg.width)
        throw ConfigError("Model: denoiser cond_width differs from conditioning width");
    Model m;
    m.model_cfg_ = model_cfg;
    m.cond_cfg_ = cond_cfg;
    m.has_adapter_ = with_adapter;

    // Parameter creation order (and thus checkpoint manifests) is fixed:
    // conditioning, denoiser, then adapter.
    Rng init_rng = Rng(seed).fork(0xC0DEC0DE);
    m.cond_ = CondMapper::create(m.params_, cond_cfg, init_rng);
    m.denoiser_ = Denoiser::create(m.params_, model_cfg, init_rng);
    if (with_adapter) m.adapter_ = Adapter::create(m.params_, model_cfg, init_rng);
    return m;
}

Tensor Model::predict(const Tensor& x_t, const ConditionBundle& bundle,
                      const Tensor* atlas_slice) const {
    Tensor guidance = cond_.fuse(bundle);
    if (has_adapter_ && atlas_slice) {
        std::vector<Tensor> feats = adapter_.forward(*atlas_slice);
        return denoiser_.predict_noise(x_t, guidance, &feats);
    }
    return denoiser_.predict_noise(x_t, guidance, nullptr);
}

std::vector<std::string> Model::trainable_names(Stage stage) const {
    if (stage == Stage::adapter) {
        if (!has_adapter_) throw ConfigError("Model: adapter stage without adapter parameters");
        return params_.names_with_prefix("adapter.");
    }
    std::vector<std::string> out;
    for (const auto& n : params_.names())
        if (n.rfind("adapter.", 0) != 0) out.push_back(n);
    return out;
}

void AdamW::step(nn::ParamStore& ps, const std::vector<std::string>& names,
                 const std::unordered_map<std::string, std::vector<double>>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& name : names) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const std::vector<double>& g = git->second;
        Tensor p = ps.get(name);
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) m.assign(g.size(), 0.0);
        if (v.empty()) v.assign(g.size(), 0.0);
        auto& w = p.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * w[i]);
        }
    }
}

bool EarlyStopper::update(double val_loss) {
    if (val_loss < best_) {
        best_ = val_loss;
        bad_epochs_ = 0;
        return false;
    }
    ++bad_epochs_;
    return bad_epochs_ >= patience_;
}

std::vector<double> reverse_step(std::span<const double> x_t, std::span<const double> eps_hat,
                                 std::int64_t t, const ScheduleMap& map, std::int64_t slice,
                                 std::span<const double> z) {
    if (t < 1 || t > map.timesteps()) throw ValueError("reverse_step: t out of [1, T]");
    if (x_t.size() != eps_hat.size() || (!z.empty() && z.size() != x_t.size()))
        throw ShapeError("reverse_step: size mismatch");
    const std::vector<double> ab_t = map.phi_plane(t, slice);
    const std::vector<double> ab_prev = map.phi_plane(t - 1, slice);
    if (ab_t.size() != x_t.size()) throw ShapeError("reverse_step: schedule grid mismatch");

    std::vector<double> out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        const double alpha = ab_t[i] / ab_prev[i];
        const double mu =
            (x_t[i] - (1.0 - alpha) / std::sqrt(1.0 - ab_t[i]) * eps_hat[i]) / std::sqrt(alpha);
        const double var = (1.0 - ab_prev[i]) / (1.0 - ab_t[i]) * (1.0 - alpha);
        const double zi = z.empty() ? 0.0 : z[i];
        out[i] = mu + std::sqrt(var) * zi;
    }
    return out;
}

Trainer::Trainer(Model& model, const TrainDataset& data, TrainConfig cfg)
    : model_(model),
      data_(data),
      cfg_(cfg),
      opt_(cfg.lr, cfg.weight_decay, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
      trainable_(model.trainable_names(cfg.stage)) {
    cfg_.validate();
    if (data_.samples.empty()) throw ConfigError("Trainer: empty dataset");
    if (data_.schedules.empty()) throw ConfigError("Trainer: dataset has no schedule maps");
    if (cfg_.stage == Stage::adapter && data_.atlas_slices.empty())
        throw ConfigError("Trainer: adapter stage needs atlas slices");
}

namespace {

struct ItemDraw {
    std::int64_t t;
    std::vector<double> noise;
};

struct ItemResult {
    double loss = 0.0;
    std::vector<std::vector<double>> grads;  // aligned with trainable names
};

} // namespace

double Trainer::step(Rng& rng, std::span<const std::int64_t> items) {
    const std::int64_t T = data_.schedules.at(0).timesteps();
    const std::size_t plane = static_cast<std::size_t>(data_.height * data_.width);

    // All stochastic draws happen up front in item order; the parallel part
    // below is purely deterministic given them.
    std::vector<ItemDraw> draws(items.size());
    for (auto& d : draws) {
        d.t = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(T)));
        d.noise.resize(plane);
        rng.fill_normal(d.noise);
    }

    const bool use_atlas = model_.has_adapter() && !data_.atlas_slices.empty();
    auto run_item = [&](std::size_t j) {
        const SliceSample& s = data_.samples[static_cast<std::size_t>(items[j])];
        const ScheduleMap& sched = data_.schedules.at(s.shell);
        const std::vector<double> phi = sched.phi_plane(draws[j].t, s.slice_index);
        const std::vector<double> x_t = forward_noise(s.x0, phi, draws[j].noise);

        Tensor x_t_tensor =
            Tensor::from({1, data_.height, data_.width}, std::vector<double>(x_t));
        Tensor eps_tensor =
            Tensor::from({1, data_.height, data_.width}, std::vector<double>(draws[j].noise));
        ConditionBundle bundle{draws[j].t, s.bvec, s.bval, s.slice_index};

        Tensor atlas;
        if (use_atlas)
            atlas = Tensor::from({TractAtlas::kChannels, data_.height, data_.width},
                                 std::vector<double>(data_.atlas_slices.at(
                                     static_cast<std::size_t>(s.slice_index))));

        Tensor eps_hat = model_.predict(x_t_tensor, bundle, use_atlas ? &atlas : nullptr);
        Tensor loss = ad::mse(eps_hat, eps_tensor);

        ItemResult r;
        r.loss = loss.item();
        ad::GradTable table = ad::backward(loss);
        r.grads.reserve(trainable_.size());
        for (const auto& name : trainable_) r.grads.push_back(table.take(model_.params().get(name)));
        return r;
    };

    // Bounded worker window; results are consumed in item order, so the
    // reduction is bit-identical for any thread count.
    const std::size_t workers =
        std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), items.size());
    std::vector<std::future<ItemResult>> inflight;
    std::size_t next = 0;

    double loss_sum = 0.0;
    std::unordered_map<std::string, std::vector<double>> grad_sum;
    const double inv_n = 1.0 / static_cast<double>(items.size());

    auto consume = [&](ItemResult r) {
        loss_sum += r.loss * inv_n;
        for (std::size_t k = 0; k < trainable_.size(); ++k) {
            auto& acc = grad_sum[trainable_[k]];
            if (acc.empty()) acc.assign(r.grads[k].size(), 0.0);
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r.grads[k][i] * inv_n;
        }
    };

    for (; next < std::min(workers, items.size()); ++next)
        inflight.push_back(std::async(std::launch::async, run_item, next));
    for (std::size_t j = 0; j < items.size(); ++j) {
        ItemResult r = inflight[j % workers].get();
        if (next < items.size()) {
            inflight[j % workers] = std::async(std::launch::async, run_item, next);
            ++next;
        }
        consume(std::move(r));
    }

    if (!std::isfinite(loss_sum))
        throw DivergenceError("training_step: non-finite loss at optimizer step " +
                              std::to_string(opt_.steps_taken() + 1));

    opt_.step(model_.params(), trainable_, grad_sum);
    return loss_sum;
}

double Trainer::validation_loss(const std::vector<std::int64_t>& items, Rng rng) const {
    if (items.empty()) return std::numeric_limits<double>::quiet_NaN();
    const std::int64_t T = data_.schedules.at(0).timesteps();
    const std::size_t plane = static_cast<std::size_t>(data_.height * data_.width);
    const bool use_atlas = model_.has_adapter() && !data_.atlas_slices.empty();

    ad::NoGradGuard no_grad;
    double sum = 0.0;
    std::vector<double> noise(plane);
    for (std::int64_t idx : items) {
        const SliceSample& s = data_.samples[static_cast<std::size_t>(idx)];
        const std::int64_t t = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(T)));
        rng.fill_normal(noise);
        const std::vector<double> phi = data_.schedules.at(s.shell).phi_plane(t, s.slice_index);
        const std::vector<double> x_t = forward_noise(s.x0, phi, noise);

        Tensor x_t_tensor = Tensor::from({1, data_.height, data_.width}, std::vector<double>(x_t));
        ConditionBundle bundle{t, s.bvec, s.bval, s.slice_index};
        Tensor atlas;
        if (use_atlas)
            atlas = Tensor::from({TractAtlas::kChannels, data_.height, data_.width},
                                 std::vector<double>(data_.atlas_slices.at(
                                     static_cast<std::size_t>(s.slice_index))));
        Tensor eps_hat = model_.predict(x_t_tensor, bundle, use_atlas ? &atlas : nullptr);

        double mse = 0.0;
        const auto& pred = eps_hat.values();
        for (std::size_t i = 0; i < plane; ++i)
            mse += (pred[i] - noise[i]) * (pred[i] - noise[i]);
        sum += mse / static_cast<double>(plane);
    }
    return sum / static_cast<double>(items.size());
}

FitResult Trainer::fit(const LogFn& log) {
    Rng master(cfg_.seed);

    // Deterministic train/validation split.
    std::vector<std::int64_t> order(data_.samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = master.fork(0x5EED5);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[split_rng.below(i)]);
    const std::size_t n_val =
        static_cast<std::size_t>(cfg_.val_fraction * static_cast<double>(order.size()));
    std::vector<std::int64_t> val_items(order.begin(), order.begin() + n_val);
    std::vector<std::int64_t> train_items(order.begin() + n_val, order.end());
    if (train_items.empty()) throw ConfigError("Trainer::fit: no training items after split");

    FitResult res;
    EarlyStopper stopper(cfg_.patience);
    Rng step_rng = master.fork(0x57E9);

    for (std::int64_t epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
        Rng shuffle_rng = master.fork(0xE90C0 + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = train_items.size(); i > 1; --i)
            std::swap(train_items[i - 1], train_items[shuffle_rng.below(i)]);

        for (std::size_t off = 0; off < train_items.size();
             off += static_cast<std::size_t>(cfg_.batch_size)) {
            const std::size_t len =
                std::min<std::size_t>(cfg_.batch_size, train_items.size() - off);
            const double loss = step(step_rng, {train_items.data() + off, len});
            res.step_losses.push_back(loss);
            ++res.steps;
            if (log && (res.steps % cfg_.log_every == 0 || res.steps == 1))
                log(res.steps, epoch, loss);
            if (cfg_.max_steps > 0 && res.steps >= cfg_.max_steps) {
                res.epochs = epoch + 1;
                return res;
            }
        }

        if (!val_items.empty()) {
            const double vl = validation_loss(val_items, master.fork(0xEA1));
            res.epoch_val_losses.push_back(vl);
            if (stopper.update(vl)) {
                res.early_stopped = true;
                res.epochs = epoch + 1;
                return res;
            }
        }
        res.epochs = epoch + 1;
    }
    return res;
}

std::vector<double> sample_slice(const Model& model, const ConditionBundle& conditions,
                                 const ScheduleMap& schedule,
                                 const std::vector<double>* atlas_slice, Rng& rng) {
    const HDiTConfig& cfg = model.model_config();
    const std::size_t plane = static_cast<std::size_t>(cfg.image_h * cfg.image_w);
    if (conditions.slice_index < 0 || conditions.slice_index >= schedule.slices())
        throw ConfigError("sample_slice: slice index outside schedule grid");
    if (schedule.height() != cfg.image_h || schedule.width() != cfg.image_w)
        throw ConfigError("sample_slice: schedule grid does not match model config");

    ad::NoGradGuard no_grad;
    Tensor atlas;
    const bool use_atlas = model.has_adapter() && atlas_slice;
    if (use_atlas)
        atlas = Tensor::from({TractAtlas::kChannels, cfg.image_h, cfg.image_w},
                             std::vector<double>(*atlas_slice));

    std::vector<double> x(plane);
    rng.fill_normal(x);

    std::vector<double> z(plane);
    for (std::int64_t t = schedule.timesteps(); t >= 1; --t) {
        ConditionBundle b = conditions;
        b.t = t;
        Tensor x_tensor = Tensor::from({1, cfg.image_h, cfg.image_w}, std::vector<double>(x));
        Tensor eps_hat = model.predict(x_tensor, b, use_atlas ? &atlas : nullptr);
        std::span<const double> z_span;
        if (t > 1) {
            rng.fill_normal(z);
            z_span = z;
        }
        x = reverse_step(x, eps_hat.values(), t, schedule, conditions.slice_index, z_span);
    }
    for (double& v : x) v = std::clamp(v, -1.0, 1.0);
    return x;
}

} // namespace phydiff
