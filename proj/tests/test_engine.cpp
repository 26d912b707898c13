// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "phydiff/checkpoint.hpp"
#include "phydiff/engine.hpp"
#include "phydiff/errors.hpp"

using namespace phydiff;
using ad::Tensor;

namespace {

HDiTConfig tiny_model() {
    HDiTConfig c;
    c.patch_size = 4;
    c.widths = {8, 16, 32};
    c.blocks_per_level = 1;
    c.mid_blocks = 1;
    c.na_window = 3;
    c.head_dim = 8;
    c.cond_width = 8;
    c.image_channels = 1;
    c.image_h = 16;
    c.image_w = 16;
    return c;
}

CondConfig tiny_cond() {
    CondConfig c;
    c.width = 8;
    c.ffn_blocks = 1;
    c.max_slices = 4;
    return c;
}

ScheduleMap tiny_schedule(std::int64_t T, std::int64_t z, std::int64_t h, std::int64_t w,
                          bool uniform, double kappa = 0.5) {
    AdcAtlas atlas;
    atlas.values = Volume(1, z, h, w);
    atlas.shell_bval = 1000.0;
    atlas.n_directions = 8;
    Rng rng(77);
    for (double& v : atlas.values.data()) v = uniform ? 1e-3 : rng.uniform(0.0, 3e-3);
    return build_schedule_map(atlas, build_base_schedule(T, 1e-4, 0.02), kappa);
}

TrainDataset tiny_dataset(std::int64_t T, bool with_atlas, std::int64_t n_samples = 8) {
    TrainDataset d;
    d.height = 16;
    d.width = 16;
    d.slices = 2;
    d.schedules.push_back(tiny_schedule(T, d.slices, 16, 16, /*uniform=*/false));
    Rng rng(3);
    const auto dirs_pool = std::vector<Vec3>{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.6, 0.8, 0}};
    for (std::int64_t i = 0; i < n_samples; ++i) {
        SliceSample s;
        s.x0.resize(256);
        for (double& v : s.x0) v = rng.uniform(-1.0, 1.0);
        s.slice_index = i % d.slices;
        s.bvec = dirs_pool[static_cast<std::size_t>(i) % dirs_pool.size()];
        s.bval = 1000.0;
        s.shell = 0;
        d.samples.push_back(std::move(s));
    }
    if (with_atlas) {
        d.atlas_slices.resize(static_cast<std::size_t>(d.slices));
        for (auto& a : d.atlas_slices) {
            a.resize(static_cast<std::size_t>(TractAtlas::kChannels) * 256);
            for (double& v : a) v = rng.uniform(-1.0, 1.0);
        }
    }
    return d;
}

TrainConfig tiny_train_cfg(Stage stage = Stage::denoiser) {
    TrainConfig t;
    t.batch_size = 4;
    t.max_epochs = 2;
    t.patience = 5;
    t.val_fraction = 0.0;
    t.seed = 9;
    t.stage = stage;
    t.log_every = 1;
    return t;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("a zero model's training loss is the variance of the drawn noise") {
    Model model = Model::create(tiny_model(), tiny_cond(), /*with_adapter=*/false, 1);
    for (const auto& name : model.params().names())
        std::fill(model.params().get(name).values().begin(),
                  model.params().get(name).values().end(), 0.0);

    // >= 1e4 elements: 40 items x 256 pixels.
    TrainDataset data = tiny_dataset(8, false, 40);
    Trainer trainer(model, data, tiny_train_cfg());
    std::vector<std::int64_t> items(40);
    for (std::int64_t i = 0; i < 40; ++i) items[i] = i;
    Rng rng(4);
    const double loss = trainer.step(rng, items);
    CHECK(std::abs(loss - 1.0) < 0.05);
}

TEST_CASE("training_step is deterministic given (batch, seed, params)") {
    auto run = [] {
        Model model = Model::create(tiny_model(), tiny_cond(), false, 7);
        TrainDataset data = tiny_dataset(8, false);
        Trainer trainer(model, data, tiny_train_cfg());
        std::vector<std::int64_t> items = {0, 1, 2, 3, 4, 5};
        Rng rng(5);
        const double l1 = trainer.step(rng, items);
        const double l2 = trainer.step(rng, items);
        std::vector<double> flat;
        for (const auto& name : model.params().names()) {
            const auto& v = model.params().get(name).values();
            flat.insert(flat.end(), v.begin(), v.end());
        }
        return std::make_tuple(l1, l2, flat);
    };
    const auto [a1, a2, pa] = run();
    const auto [b1, b2, pb] = run();
    CHECK(a1 == b1);
    CHECK(a2 == b2);
    CHECK(pa == pb);
    CHECK(a1 != a2);  // the two steps differ from each other
}

TEST_CASE("stage 2 leaves denoiser and conditioning parameters bit-identical") {
    Model model = Model::create(tiny_model(), tiny_cond(), /*with_adapter=*/true, 11);
    std::vector<std::pair<std::string, std::vector<double>>> frozen;
    for (const auto& name : model.params().names())
        if (name.rfind("adapter.", 0) != 0)
            frozen.emplace_back(name, model.params().get(name).values());

    TrainDataset data = tiny_dataset(8, /*with_atlas=*/true);
    Trainer trainer(model, data, tiny_train_cfg(Stage::adapter));
    std::vector<std::int64_t> items = {0, 1, 2, 3};
    Rng rng(6);
    trainer.step(rng, items);

    for (const auto& [name, vals] : frozen)
        CHECK(model.params().get(name).values() == vals);

    // The adapter itself must have moved.
    double moved = 0.0;
    for (const auto& name : model.params().names_with_prefix("adapter."))
        for (double v : model.params().get(name).values()) moved += std::abs(v);
    CHECK(moved > 0.0);
}

TEST_CASE("AdamW applies decoupled weight decay with zero gradients") {
    nn::ParamStore ps;
    Rng rng(1);
    Tensor p = ps.create("w", {2}, nn::Init::zeros, rng);
    p.values() = {1.0, -2.0};
    AdamW opt(0.1, 0.01, 0.9, 0.95, 1e-8);
    std::unordered_map<std::string, std::vector<double>> grads;
    grads["w"] = {0.0, 0.0};
    opt.step(ps, {"w"}, grads);
    CHECK(p.values()[0] == doctest::Approx(1.0 * (1.0 - 0.1 * 0.01)).epsilon(1e-12));
    CHECK(p.values()[1] == doctest::Approx(-2.0 * (1.0 - 0.1 * 0.01)).epsilon(1e-12));
}

TEST_CASE("reverse_step at t=1 is deterministic (variance exactly zero)") {
    const ScheduleMap map = tiny_schedule(8, 1, 4, 4, false);
    Rng rng(8);
    std::vector<double> x(16), eps(16), z(16);
    for (double& v : x) v = rng.normal();
    for (double& v : eps) v = rng.normal();
    for (double& v : z) v = rng.normal();
    const auto without_z = reverse_step(x, eps, 1, map, 0, {});
    const auto with_z = reverse_step(x, eps, 1, map, 0, z);
    CHECK(without_z == with_z);  // sigma = 0 kills the noise term exactly
}

TEST_CASE("reverse_step with uniform phi equals the scalar DDPM step") {
    const std::int64_t T = 8;
    const ScheduleMap map = tiny_schedule(T, 1, 4, 4, /*uniform=*/true);
    const NoiseScheduleBase& base = map.base();
    Rng rng(9);
    std::vector<double> x(16), eps(16), z(16);
    for (double& v : x) v = rng.normal();
    for (double& v : eps) v = rng.normal();
    for (double& v : z) v = rng.normal();

    for (std::int64_t t = 1; t <= T; ++t) {
        const auto got = reverse_step(x, eps, t, map, 0, z);
        const double ab_t = base.alpha_bar(t), ab_prev = base.alpha_bar(t - 1);
        for (std::size_t i = 0; i < got.size(); ++i) {
            const double alpha = ab_t / ab_prev;
            const double mu =
                (x[i] - (1.0 - alpha) / std::sqrt(1.0 - ab_t) * eps[i]) / std::sqrt(alpha);
            const double var = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - alpha);
            CHECK(got[i] == mu + std::sqrt(var) * z[i]);
        }
    }
}

TEST_CASE("reverse_step validates t") {
    const ScheduleMap map = tiny_schedule(8, 1, 4, 4, false);
    std::vector<double> x(16, 0.0), eps(16, 0.0);
    CHECK_THROWS_AS(reverse_step(x, eps, 0, map, 0, {}), ValueError);
    CHECK_THROWS_AS(reverse_step(x, eps, 9, map, 0, {}), ValueError);
}

TEST_CASE("deterministic rollout with the analytic point-mass predictor recovers x0") {
    // eps_hat = (x_t - sqrt(phi_t) x0) / sqrt(1 - phi_t) is the exact noise
    // for a point-mass data distribution; a z = 0 rollout must return x0.
    const std::int64_t T = 64;
    const ScheduleMap map = tiny_schedule(T, 1, 4, 4, /*uniform=*/false, 1.0);
    Rng rng(10);
    std::vector<double> x0(16);
    for (double& v : x0) v = rng.uniform(-1.0, 1.0);

    std::vector<double> x(16);
    for (double& v : x) v = rng.normal();  // arbitrary x_T

    for (std::int64_t t = T; t >= 1; --t) {
        const auto phi = map.phi_plane(t, 0);
        std::vector<double> eps_hat(16);
        for (int i = 0; i < 16; ++i)
            eps_hat[i] = (x[i] - std::sqrt(phi[i]) * x0[i]) / std::sqrt(1.0 - phi[i]);
        x = reverse_step(x, eps_hat, t, map, 0, {});
    }
    for (int i = 0; i < 16; ++i) CHECK(std::abs(x[i] - x0[i]) < 1e-3);
}

TEST_CASE("sample_slice is seed-deterministic with the right shape and range") {
    Model model = Model::create(tiny_model(), tiny_cond(), false, 13);
    const ScheduleMap map = tiny_schedule(8, 2, 16, 16, false);
    ConditionBundle cond{0, {1, 0, 0}, 1000.0, 1};
    Rng r1(21), r2(21);
    const auto s1 = sample_slice(model, cond, map, nullptr, r1);
    const auto s2 = sample_slice(model, cond, map, nullptr, r2);
    CHECK(s1.size() == 256u);
    CHECK(s1 == s2);
    for (double v : s1) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("fit honors max_steps and logs losses") {
    Model model = Model::create(tiny_model(), tiny_cond(), false, 17);
    TrainDataset data = tiny_dataset(8, false, 12);
    TrainConfig cfg = tiny_train_cfg();
    cfg.max_steps = 3;
    cfg.max_epochs = 50;
    Trainer trainer(model, data, cfg);
    const FitResult res = trainer.fit();
    CHECK(res.steps == 3);
    CHECK(res.step_losses.size() == 3u);
    for (double l : res.step_losses) CHECK(std::isfinite(l));
}

TEST_CASE("early stopping triggers after exactly `patience` bad epochs") {
    EarlyStopper s(2);
    CHECK(!s.update(1.0));   // first value improves on infinity
    CHECK(!s.update(0.9));   // improves
    CHECK(!s.update(0.95));  // bad epoch 1
    CHECK(s.update(0.96));   // bad epoch 2 -> stop

    EarlyStopper r(2);
    CHECK(!r.update(1.0));
    CHECK(!r.update(1.1));  // bad 1
    CHECK(!r.update(0.5));  // improvement resets the counter
    CHECK(!r.update(0.6));  // bad 1
    CHECK(r.update(0.7));   // bad 2 -> stop

    EarlyStopper one(1);
    CHECK(!one.update(3.0));
    CHECK(one.update(3.0));  // equality is not an improvement
}

TEST_CASE("checkpoint save -> load -> save is byte-identical") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "phydiff_ckpt_test";
    fs::create_directories(dir);
    const std::string p1 = (dir / "a.ckpt").string(), p2 = (dir / "b.ckpt").string();

    Model model = Model::create(tiny_model(), tiny_cond(), true, 23);
    save_checkpoint(p1, model.params(), "adapter", "schedule.timesteps = 8\n", Rng(23).state());

    const LoadedCheckpoint ckpt = load_checkpoint(p1);
    CHECK(ckpt.stage == "adapter");
    CHECK(ckpt.config_text == "schedule.timesteps = 8\n");
    save_checkpoint(p2, ckpt);
    CHECK(slurp(p1) == slurp(p2));

    // Applying to an identically configured model restores every value.
    Model fresh = Model::create(tiny_model(), tiny_cond(), true, 99);
    apply_checkpoint(ckpt, fresh.params());
    for (const auto& name : model.params().names())
        CHECK(fresh.params().get(name).values() == model.params().get(name).values());
}

TEST_CASE("checkpoint version and shape mismatches are rejected") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "phydiff_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "v.ckpt").string();

    Model model = Model::create(tiny_model(), tiny_cond(), false, 29);
    save_checkpoint(path, model.params(), "denoiser", "", Rng(29).state());

    // Patch the version field (offset 8, little-endian u32).
    std::string bytes = slurp(path);
    bytes[8] = 9;
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
    CHECK_THROWS_AS(load_checkpoint(path), VersionError);

    // Shape mismatch against a differently sized model.
    const std::string path2 = (dir / "s.ckpt").string();
    save_checkpoint(path2, model.params(), "denoiser", "", Rng(29).state());
    HDiTConfig other = tiny_model();
    other.widths = {8, 16, 48};
    Model wrong = Model::create(other, tiny_cond(), false, 29);
    CHECK_THROWS_AS(apply_checkpoint(load_checkpoint(path2), wrong.params()), ConfigError);
}

TEST_CASE("checkpoints preserve the stage tag") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "phydiff_ckpt_test";
    fs::create_directories(dir);
    for (const char* stage : {"denoiser", "adapter"}) {
        const std::string path = (dir / (std::string(stage) + ".ckpt")).string();
        Model model = Model::create(tiny_model(), tiny_cond(), std::string(stage) == "adapter", 31);
        save_checkpoint(path, model.params(), stage, "", Rng(31).state());
        CHECK(load_checkpoint(path).stage == stage);
    }
}

TEST_CASE("adapter stage without adapter parameters is rejected") {
    Model model = Model::create(tiny_model(), tiny_cond(), /*with_adapter=*/false, 37);
    CHECK_THROWS_AS(model.trainable_names(Stage::adapter), ConfigError);
}
