// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// phydiff command-line front end:
//   make-phantom  synthesize a multi-shell phantom data directory
//   adc-atlas     estimate a per-shell ADC atlas from a DWI stack
//   train         stage-1 (denoiser) or stage-2 (adapter) training
//   sample        ancestral sampling from a trained checkpoint
//   eval          SSIM/PSNR report and error maps for two volumes

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "phydiff/checkpoint.hpp"
#include "phydiff/config.hpp"
#include "phydiff/dvol.hpp"
#include "phydiff/engine.hpp"
#include "phydiff/errors.hpp"
#include "phydiff/metrics.hpp"
#include "phydiff/pipeline.hpp"

namespace {

using namespace phydiff;
namespace fs = std::filesystem;

int usage(const std::string& msg = "") {
    if (!msg.empty()) std::cerr << "error: " << msg << "\n\n";
    std::cerr <<
        "usage: phydiff <subcommand> [options]\n"
        "\n"
        "subcommands:\n"
        "  make-phantom --out DIR\n"
        "  adc-atlas    --dwi F --bvals F --bvecs F --shell B --out DIR\n"
        "  train        --data DIR --out DIR [--init CKPT]\n"
        "  sample       --checkpoint F --data DIR --bval B --bvec x,y,z --slice K --out DIR\n"
        "  eval         --pred F --ref F [--bvals F] [--error-maps] --out DIR\n"
        "\n"
        "common options:\n"
        "  --config FILE      run configuration (key = value lines)\n"
        "  --<key> VALUE      override any config key (e.g. --schedule.timesteps 64)\n"
        "  --seed N           RNG seed (falls back to $PHYDIFF_SEED, then 0)\n"
        "  --out DIR          output directory (default .)\n";
    return 2;
}

struct Args {
    std::string subcommand;
    std::map<std::string, std::string> flags;  // fixed flags (without --)
    bool error_maps = false;
    RunConfig cfg;
    std::uint64_t seed = 0;
    std::string out = ".";
};

const char* kValueFlags[] = {"config", "seed",  "out",   "dwi",  "bvals", "bvecs", "shell",
                             "data",   "init",  "checkpoint", "bval", "bvec",  "slice", "pred",
                             "ref"};

bool is_value_flag(const std::string& name) {
    for (const char* f : kValueFlags)
        if (name == f) return true;
    return false;
}

/// Parses argv; throws ConfigError for bad config values, returns nullopt
/// for usage errors (message already printed).
std::optional<Args> parse_args(int argc, char** argv) {
    if (argc < 2) {
        usage("missing subcommand");
        return std::nullopt;
    }
    Args a;
    a.subcommand = argv[1];
    const char* subs[] = {"make-phantom", "adc-atlas", "train", "sample", "eval"};
    bool known_sub = false;
    for (const char* s : subs) known_sub = known_sub || a.subcommand == s;
    if (!known_sub) {
        usage("unknown subcommand '" + a.subcommand + "'");
        return std::nullopt;
    }

    std::vector<std::pair<std::string, std::string>> overrides;
    for (int i = 2; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg.rfind("--", 0) != 0) {
            usage("unexpected argument '" + arg + "'");
            return std::nullopt;
        }
        const std::string name = arg.substr(2);
        if (name == "error-maps") {
            a.error_maps = true;
            continue;
        }
        if (!is_value_flag(name) && !a.cfg.known(name)) {
            usage("unknown flag '--" + name + "'");
            return std::nullopt;
        }
        if (i + 1 >= argc) {
            usage("flag '--" + name + "' needs a value");
            return std::nullopt;
        }
        const std::string value = argv[++i];
        if (a.cfg.known(name))
            overrides.emplace_back(name, value);
        else
            a.flags[name] = value;
    }

    if (a.flags.count("config")) a.cfg.load_file(a.flags.at("config"));
    for (const auto& [k, v] : overrides) a.cfg.set(k, v);  // overrides win

    if (a.flags.count("seed")) {
        a.seed = std::stoull(a.flags.at("seed"));
    } else if (const char* env = std::getenv("PHYDIFF_SEED")) {
        a.seed = std::stoull(env);
    }
    if (a.flags.count("out")) a.out = a.flags.at("out");
    return a;
}

std::string need(const Args& a, const std::string& flag) {
    auto it = a.flags.find(flag);
    if (it == a.flags.end()) throw ConfigError("missing required flag --" + flag);
    return it->second;
}

Vec3 parse_bvec(const std::string& s) {
    Vec3 v{};
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &v[0], &v[1], &v[2]) != 3)
        throw ConfigError("--bvec expects 'x,y,z', got '" + s + "'");
    return v;
}

int cmd_make_phantom(const Args& a) {
    const PhantomSpec spec = phantom_spec_from(a.cfg, a.seed);
    const Phantom phantom = make_phantom(spec);
    Rng rng = Rng(spec.seed).fork(0xDA7A);
    const DWIStack stack = simulate_stack(phantom, spec, rng);
    write_data_dir(a.out, stack, phantom.s0, phantom.atlas);

    std::ofstream cfg_out(fs::path(a.out) / "config.txt");
    cfg_out << a.cfg.serialize();

    std::printf("make-phantom: wrote %s (dirs=%lld shells=%zu grid=%lldx%lldx%lld tracts=%lld)\n",
                a.out.c_str(), static_cast<long long>(stack.directions()), spec.shells.size(),
                static_cast<long long>(spec.slices), static_cast<long long>(spec.height),
                static_cast<long long>(spec.width), static_cast<long long>(spec.n_tracts));
    return 0;
}

int cmd_adc_atlas(const Args& a) {
    DWIStack stack;
    stack.data = read_dvol(need(a, "dwi"));
    stack.gradients = read_gradients(need(a, "bvals"), need(a, "bvecs"));
    stack.validate();
    const double shell = std::stod(need(a, "shell"));
    const AdcAtlas atlas = estimate_adc_atlas(stack, shell, a.cfg.get_bool("adc.mean"));

    fs::create_directories(a.out);
    char name[64];
    std::snprintf(name, sizeof name, "adc_b%g.dvol", shell);
    const std::string path = (fs::path(a.out) / name).string();
    write_dvol(path, atlas.values);
    std::printf("adc-atlas: b=%g dirs=%lld min=%.6g max=%.6g -> %s\n", shell,
                static_cast<long long>(atlas.n_directions), atlas.values.min(),
                atlas.values.max(), path.c_str());
    return 0;
}

int cmd_train(const Args& a) {
    const DataBundle bundle = load_data_dir(need(a, "data"));
    const PreparedData prepared = prepare_training_data(bundle, a.cfg);
    const Volume& d = bundle.raw.data;

    const TrainConfig tcfg = train_config_from(a.cfg, a.seed);
    const bool with_adapter = tcfg.stage == Stage::adapter;
    if (with_adapter && !a.cfg.get_bool("adapter.enabled"))
        throw ConfigError("train: stage adapter requires adapter.enabled = true");

    std::string init_path;
    if (a.flags.count("init")) init_path = a.flags.at("init");
    if (init_path.empty()) init_path = a.cfg.get("train.init_checkpoint");
    if (with_adapter && init_path.empty())
        throw ConfigError("train: stage adapter requires a stage-1 checkpoint (--init)");

    Model model = Model::create(model_config_from(a.cfg, d.height(), d.width()),
                                cond_config_from(a.cfg, d.slices()), with_adapter, a.seed);
    if (!init_path.empty()) apply_checkpoint(load_checkpoint(init_path), model.params());

    fs::create_directories(a.out);
    std::ofstream loss_csv(fs::path(a.out) / "loss.csv");
    loss_csv << "step,epoch,loss\n";
    char line[96];

    Trainer trainer(model, prepared.dataset, tcfg);
    const FitResult res = trainer.fit([&](std::int64_t step, std::int64_t epoch, double loss) {
        std::snprintf(line, sizeof line, "%lld,%lld,%.17g\n", static_cast<long long>(step),
                      static_cast<long long>(epoch), loss);
        loss_csv << line;
    });

    std::ofstream val_csv(fs::path(a.out) / "val_loss.csv");
    val_csv << "epoch,val_loss\n";
    for (std::size_t e = 0; e < res.epoch_val_losses.size(); ++e) {
        std::snprintf(line, sizeof line, "%zu,%.17g\n", e, res.epoch_val_losses[e]);
        val_csv << line;
    }

    const std::string ckpt_path = (fs::path(a.out) / "checkpoint.ckpt").string();
    save_checkpoint(ckpt_path, model.params(), stage_name(tcfg.stage), a.cfg.serialize(),
                    Rng(a.seed).state());

    std::printf("train: stage=%s steps=%lld epochs=%lld final_loss=%.6g%s -> %s\n",
                stage_name(tcfg.stage).c_str(), static_cast<long long>(res.steps),
                static_cast<long long>(res.epochs),
                res.step_losses.empty() ? 0.0 : res.step_losses.back(),
                res.early_stopped ? " (early stop)" : "", ckpt_path.c_str());
    return 0;
}

int cmd_sample(const Args& a) {
    const LoadedCheckpoint ckpt = load_checkpoint(need(a, "checkpoint"));

    // The checkpoint's config snapshot defines the model; command-line
    // config only steers sampling itself.
    RunConfig mcfg;
    std::istringstream cfg_stream(ckpt.config_text);
    std::string cfg_line;
    while (std::getline(cfg_stream, cfg_line)) mcfg.parse_line(cfg_line, "checkpoint config");

    const DataBundle bundle = load_data_dir(need(a, "data"));
    const PreparedData prepared = prepare_training_data(bundle, mcfg);
    const Volume& d = bundle.raw.data;

    Model model = Model::create(model_config_from(mcfg, d.height(), d.width()),
                                cond_config_from(mcfg, d.slices()), ckpt.stage == "adapter",
                                a.seed);
    apply_checkpoint(ckpt, model.params());

    const double bval = std::stod(need(a, "bval"));
    Vec3 bvec = parse_bvec(need(a, "bvec"));
    if (bval > 0.0) {
        const double n = norm(bvec);
        if (n <= 0.0) throw ConfigError("sample: zero b-vector for b > 0");
        for (double& c : bvec) c /= n;
    } else {
        bvec = {0.0, 0.0, 0.0};
    }
    const std::int64_t slice = std::stoll(need(a, "slice"));
    const std::int64_t count = a.cfg.get_int("sample.count");
    if (count < 1) throw ConfigError("sample.count must be >= 1");

    const ScheduleMap& schedule = prepared.dataset.schedules[nearest_shell(prepared.shells, bval)];
    const std::vector<double>* atlas_slice = nullptr;
    if (model.has_adapter() && !prepared.dataset.atlas_slices.empty())
        atlas_slice = &prepared.dataset.atlas_slices.at(static_cast<std::size_t>(slice));

    ConditionBundle bundle_cond{0, bvec, bval, slice};
    Volume samples(count, 1, d.height(), d.width());
    std::vector<std::future<std::vector<double>>> jobs;
    for (std::int64_t i = 0; i < count; ++i)
        jobs.push_back(std::async(std::launch::async, [&, i] {
            Rng rng = Rng(a.seed).fork(0x5A400000 + static_cast<std::uint64_t>(i));
            return sample_slice(model, bundle_cond, schedule, atlas_slice, rng);
        }));
    for (std::int64_t i = 0; i < count; ++i) {
        const std::vector<double> img = jobs[static_cast<std::size_t>(i)].get();
        std::copy(img.begin(), img.end(), samples.plane(i, 0).begin());
    }

    fs::create_directories(a.out);
    const std::string path = (fs::path(a.out) / "samples.dvol").string();
    write_dvol(path, samples);
    std::printf("sample: b=%g bvec=(%.3f,%.3f,%.3f) slice=%lld count=%lld -> %s\n", bval, bvec[0],
                bvec[1], bvec[2], static_cast<long long>(slice), static_cast<long long>(count),
                path.c_str());
    return 0;
}

int cmd_eval(const Args& a) {
    const Volume pred = read_dvol(need(a, "pred"));
    const Volume ref = read_dvol(need(a, "ref"));
    if (pred.dims() != ref.dims()) throw ShapeError("eval: pred and ref dimensions differ");

    // Optional bvals file (one whitespace-separated row) groups the report
    // by shell; without it everything lands in one group.
    std::vector<double> bvals(static_cast<std::size_t>(pred.channels()), 0.0);
    if (a.flags.count("bvals")) {
        std::ifstream in(a.flags.at("bvals"));
        if (!in) throw FormatError(a.flags.at("bvals") + ": cannot open");
        std::vector<double> parsed;
        double v = 0.0;
        while (in >> v) parsed.push_back(v);
        if (parsed.size() != bvals.size())
            throw ShapeError("eval: bvals count does not match volume directions");
        bvals = std::move(parsed);
    }

    fs::create_directories(a.out);
    if (a.error_maps) fs::create_directories(fs::path(a.out) / "error_maps");

    std::vector<EvalRow> rows;
    std::int64_t index = 0;
    for (std::int64_t c = 0; c < pred.channels(); ++c)
        for (std::int64_t z = 0; z < pred.slices(); ++z) {
            const auto pp = pred.plane(c, z);
            const auto rp = ref.plane(c, z);
            const EvalPairResult r = eval_pair(pp, rp, pred.height(), pred.width());
            rows.push_back({index, bvals[static_cast<std::size_t>(c)], z, r.ssim_percent,
                            r.psnr_db});
            if (a.error_maps) {
                char name[64];
                std::snprintf(name, sizeof name, "error_maps/pair_%03lld_%03lld.pgm",
                              static_cast<long long>(c), static_cast<long long>(z));
                write_error_map_pgm((fs::path(a.out) / name).string(), pp, rp, pred.height(),
                                    pred.width());
            }
            ++index;
        }

    const std::vector<EvalGroup> groups = aggregate_report(rows);
    write_report_csv((fs::path(a.out) / "report.csv").string(), rows);
    write_summary_csv((fs::path(a.out) / "report_summary.csv").string(), groups);

    const EvalGroup& pooled = groups.back();
    std::printf("eval: n=%lld ssim%%=%.3f±%.3f psnr=%.3f±%.3f\n",
                static_cast<long long>(pooled.n), pooled.ssim_mean, pooled.ssim_std,
                pooled.psnr_mean, pooled.psnr_std);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    std::optional<Args> args;
    try {
        args = parse_args(argc, argv);
    } catch (const std::exception& e) {
        return usage(e.what());
    }
    if (!args) return 2;

    try {
        if (args->subcommand == "make-phantom") return cmd_make_phantom(*args);
        if (args->subcommand == "adc-atlas") return cmd_adc_atlas(*args);
        if (args->subcommand == "train") return cmd_train(*args);
        if (args->subcommand == "sample") return cmd_sample(*args);
        if (args->subcommand == "eval") return cmd_eval(*args);
    } catch (const Error& e) {
        std::cerr << "phydiff " << args->subcommand << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "phydiff " << args->subcommand << ": " << e.what() << "\n";
        return 1;
    }
    return usage("unhandled subcommand");
}
