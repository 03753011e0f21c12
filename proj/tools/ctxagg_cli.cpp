// Command-line entry point: verification (selftest, gradcheck), cost
// accounting (params, flops), toy training and evaluation, and map export.
// Every subcommand is deterministic given --seed; file outputs are
// byte-identical across reruns.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxagg/accounting.hpp"
#include "ctxagg/checkpoint.hpp"
#include "ctxagg/config.hpp"
#include "ctxagg/export_maps.hpp"
#include "ctxagg/toy/detector.hpp"
#include "ctxagg/toy/train.hpp"
#include "ctxagg/verify/gradcheck_suite.hpp"
#include "ctxagg/verify/selftest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file (defaults apply when omitted)");
    cmd->add_option("--seed", opts.seed, "override the config seed")->each([&](const std::string&) {
        opts.seed_set = true;
    });
    cmd->add_option("--out", opts.out_dir, "output directory");
}

ctxagg::RunConfig load_config(const CommonOpts& opts) {
    ctxagg::RunConfig cfg =
        opts.config_path.empty() ? ctxagg::RunConfig() : ctxagg::RunConfig::from_file(opts.config_path);
    if (opts.seed_set) cfg.seed = opts.seed;
    cfg.validate();
    return cfg;
}

fs::path ensure_out_dir(const CommonOpts& opts, const std::string& fallback) {
    fs::path dir = opts.out_dir.empty() ? fs::path(fallback) : fs::path(opts.out_dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    os << text;
    if (!os) throw std::runtime_error("write failed for " + path.string());
}

int run_selftest(bool full) {
    ctxagg::verify::SelfTest st = ctxagg::verify::SelfTest::run_all(full);
    int failed = 0;
    for (const auto& r : st.results()) {
        std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.empty() ? "" : " -- ",
                    r.detail.c_str());
        if (!r.pass) ++failed;
    }
    std::printf("%zu checks, %d failed\n", st.results().size(), failed);
    return failed == 0 ? 0 : 1;
}

int run_gradcheck() {
    auto cases = ctxagg::verify::run_gradcheck_suite();
    bool ok = true;
    std::printf("%-40s %-14s %s\n", "case", "max_rel_error", "worst coordinate");
    for (const auto& c : cases) {
        const bool pass = c.result.max_rel_error < 1e-6;
        ok = ok && pass;
        std::printf("%-40s %-14.3e %s %s\n", c.name.c_str(), c.result.max_rel_error,
                    c.result.worst_coordinate.c_str(), pass ? "" : "FAIL");
    }
    std::printf("gradcheck: %s (threshold 1e-6)\n", ok ? "all passed" : "FAILURES");
    return ok ? 0 : 1;
}

struct CostOpts {
    std::string module = "all";
    int64_t channels = 256;
    int levels = 0;  // 0 = module default
    int depth = 5;
    int64_t mid_channels = 192;
    int reduction = 1;
    bool norm_affine = false;
    int64_t input = 512;
    int64_t det_rois = 1000;
    int64_t mask_rois = 100;
};

ctxagg::DenseFPNConfig densefpn_cfg_from(const CostOpts& o) {
    ctxagg::DenseFPNConfig c;
    c.depth = o.depth;
    c.channels = o.channels;
    c.mid_channels = o.mid_channels;
    c.l_min = 2;
    c.l_max = o.levels > 0 ? 2 + o.levels - 1 : 6;
    c.norm_affine = o.norm_affine;
    return c;
}

ctxagg::SCPConfig scp_cfg_from(const CostOpts& o) {
    ctxagg::SCPConfig c;
    c.channels = o.channels;
    c.reduction = o.reduction;
    c.levels.clear();
    const int n = o.levels > 0 ? o.levels : 5;
    for (int l = 2; l < 2 + n; ++l) c.levels.push_back(l);
    return c;
}

ctxagg::HRoIEConfig hroie_cfg_from(const CostOpts& o) {
    ctxagg::HRoIEConfig c;
    c.channels = o.channels;
    c.l_min = 2;
    c.l_max = o.levels > 0 ? 2 + o.levels - 1 : 5;
    return c;
}

int run_params(const CommonOpts& common, const CostOpts& o) {
    json out = json::object();
    std::vector<std::string> wanted;
    if (o.module == "all")
        wanted = {"densefpn", "scp", "hroie"};
    else
        wanted = {o.module};
    for (const std::string& m : wanted) {
        ctxagg::CostReport rep;
        int64_t live = -1;
        ctxagg::Rng rng(1);
        if (m == "densefpn") {
            auto cfg = densefpn_cfg_from(o);
            rep = ctxagg::densefpn_params(cfg);
            ctxagg::DenseFPN mod(cfg, rng);
            live = ctxagg::live_param_count(mod);
            if (cfg.channels == 256 && cfg.mid_channels == 192 && cfg.num_levels() == 5) {
                auto rec = ctxagg::reconcile("densefpn per-block params vs reference",
                                             static_cast<double>(ctxagg::densefpn_block_delta_params(cfg, true)),
                                             ctxagg::ReferenceCosts::densefpn_per_block_params);
                rep.notes.push_back(rec.label + ": " + std::to_string(rec.measured) + " vs " +
                                    std::to_string(rec.reference) + ", rel err " + std::to_string(rec.rel_error));
                out["reconciliation"]["densefpn_block"] = rec.to_json();
            }
        } else if (m == "scp") {
            auto cfg = scp_cfg_from(o);
            rep = ctxagg::scp_params(cfg);
            ctxagg::SCP mod(cfg, rng);
            live = ctxagg::live_param_count(mod);
            if (cfg.channels == 256 && cfg.reduction == 1 && cfg.levels.size() == 5) {
                auto rec = ctxagg::reconcile("scp params vs reference", static_cast<double>(rep.params_with_affine()),
                                             ctxagg::ReferenceCosts::scp_params);
                rep.notes.push_back(rec.label + ": rel err " + std::to_string(rec.rel_error));
                out["reconciliation"]["scp"] = rec.to_json();
            }
        } else if (m == "hroie") {
            auto cfg = hroie_cfg_from(o);
            rep = ctxagg::hroie_params(cfg);
            ctxagg::HRoIE mod(cfg, rng);
            live = ctxagg::live_param_count(mod);
            if (cfg.channels == 256 && cfg.num_levels() == 4) {
                auto rec = ctxagg::reconcile("hroie params vs reference",
                                             static_cast<double>(rep.params_with_affine()),
                                             ctxagg::ReferenceCosts::hroie_params);
                rep.notes.push_back(rec.label + ": rel err " + std::to_string(rec.rel_error));
                out["reconciliation"]["hroie"] = rec.to_json();
            }
        } else {
            throw std::invalid_argument("params: unknown module " + m);
        }
        rep.notes.push_back("registry walk over a live instance: " + std::to_string(live) +
                            (live == rep.params_with_affine() ? " (exact match)" : " (MISMATCH)"));
        std::printf("%s", rep.to_table().c_str());
        out["modules"][m] = rep.to_json();
        out["modules"][m]["live_registry_walk"] = live;
        if (live != rep.params_with_affine()) {
            std::fprintf(stderr, "params: analytic count does not match the registry walk for %s\n", m.c_str());
            return 1;
        }
    }
    if (!common.out_dir.empty()) {
        fs::path dir = ensure_out_dir(common, "ctxagg_out");
        write_text(dir / "params.json", out.dump(2) + "\n");
    }
    return 0;
}

int run_flops(const CommonOpts& common, const CostOpts& o) {
    json out = json::object();
    std::vector<std::string> wanted;
    if (o.module == "all")
        wanted = {"densefpn", "scp", "hroie"};
    else
        wanted = {o.module};
    for (const std::string& m : wanted) {
        ctxagg::CostReport rep;
        if (m == "densefpn") {
            rep = ctxagg::densefpn_macs(densefpn_cfg_from(o), o.input, o.input);
        } else if (m == "scp") {
            auto cfg = scp_cfg_from(o);
            rep = ctxagg::scp_macs(cfg, o.input, o.input);
            if (cfg.channels == 256 && cfg.reduction == 1 && cfg.levels.size() == 5 && o.input == 512) {
                auto rec_1x = ctxagg::reconcile("scp macs vs reference", static_cast<double>(rep.macs),
                                                ctxagg::ReferenceCosts::scp_flops);
                auto rec_2x = ctxagg::reconcile("scp 2x-macs vs reference", static_cast<double>(rep.flops_2x()),
                                                ctxagg::ReferenceCosts::scp_flops);
                const bool one_x_closer = rec_1x.rel_error <= rec_2x.rel_error;
                rep.notes.push_back(std::string("reference flop delta matches the ") +
                                    (one_x_closer ? "1x (macs)" : "2x (flops)") + " convention: rel err " +
                                    std::to_string(one_x_closer ? rec_1x.rel_error : rec_2x.rel_error));
                out["reconciliation"]["scp_macs"] = rec_1x.to_json();
                out["reconciliation"]["scp_2x_macs"] = rec_2x.to_json();
                out["reconciliation"]["matching_convention"] = one_x_closer ? "macs" : "2x_macs";
            }
        } else if (m == "hroie") {
            rep = ctxagg::hroie_macs(hroie_cfg_from(o), o.det_rois, o.mask_rois);
        } else {
            throw std::invalid_argument("flops: unknown module " + m);
        }
        std::printf("%s", rep.to_table().c_str());
        out["modules"][m] = rep.to_json();
    }
    if (!common.out_dir.empty()) {
        fs::path dir = ensure_out_dir(common, "ctxagg_out");
        write_text(dir / "flops.json", out.dump(2) + "\n");
    }
    return 0;
}

int run_train(const CommonOpts& common) {
    ctxagg::RunConfig cfg = load_config(common);
    ctxagg::Rng rng(ctxagg::mix_seed(cfg.seed, 0x0de1));
    ctxagg::ToyDetector model(cfg, rng);
    fs::path dir = ensure_out_dir(common, "ctxagg_out");
    write_text(dir / "resolved_config.json", cfg.to_json().dump(2) + "\n");
    std::ofstream metrics(dir / "metrics.csv", std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot open metrics.csv");
    ctxagg::TrainResult res = ctxagg::train(model, cfg, &metrics);
    ctxagg::ParamMap params = model.params();
    ctxagg::CheckpointManifest manifest;
    manifest.seed = cfg.seed;
    manifest.config = cfg.to_json();
    ctxagg::save_checkpoint((dir / "checkpoint.ckpt").string(), params, manifest);
    if (!res.log.empty())
        std::printf("train: %zu iterations, loss %.5f -> %.5f\n", res.log.size(), res.log.front().total,
                    res.log.back().total);
    else
        std::printf("train: 0 iterations, checkpoint equals the initialization\n");
    std::printf("wrote %s and %s\n", (dir / "metrics.csv").c_str(), (dir / "checkpoint.ckpt").c_str());
    return 0;
}

int run_eval(const CommonOpts& common, const std::string& checkpoint, int scenes, const std::string& proposals,
             double jitter) {
    ctxagg::RunConfig cfg = load_config(common);
    ctxagg::Rng rng(ctxagg::mix_seed(cfg.seed, 0x0de1));
    ctxagg::ToyDetector model(cfg, rng);
    if (!checkpoint.empty()) {
        ctxagg::ParamMap params = model.params();
        ctxagg::load_checkpoint(checkpoint, params);
    }
    const int n = scenes > 0 ? scenes : cfg.toy.eval_scenes;
    ctxagg::ProposalMode mode;
    if (proposals == "grid")
        mode = ctxagg::ProposalMode::grid;
    else if (proposals == "gt")
        mode = ctxagg::ProposalMode::gt_jitter;
    else
        throw std::invalid_argument("eval: --proposals must be grid or gt");
    ctxagg::EvalResult r = ctxagg::evaluate(model, n, mode, jitter);
    json out;
    out["scenes"] = n;
    out["proposal_mode"] = proposals;
    out["recall_at_iou_0.5"] = r.recall;
    out["mean_mask_iou"] = r.mean_mask_iou;
    out["matched"] = r.matched;
    out["total_gt"] = r.total_gt;
    std::printf("%s\n", out.dump(2).c_str());
    if (!common.out_dir.empty()) {
        fs::path dir = ensure_out_dir(common, "ctxagg_out");
        write_text(dir / "eval.json", out.dump(2) + "\n");
    }
    return 0;
}

int run_dump_maps(const CommonOpts& common, const std::string& checkpoint) {
    ctxagg::RunConfig cfg = load_config(common);
    if (!cfg.modules.scp) throw std::invalid_argument("dump-maps: scp module is disabled in this config");
    ctxagg::Rng rng(ctxagg::mix_seed(cfg.seed, 0x0de1));
    ctxagg::ToyDetector model(cfg, rng);
    if (!checkpoint.empty()) {
        ctxagg::ParamMap params = model.params();
        ctxagg::load_checkpoint(checkpoint, params);
    }
    fs::path dir = ensure_out_dir(common, "ctxagg_out");
    ctxagg::NoGradGuard ng;
    ctxagg::Scene scene = ctxagg::generate_scene(cfg.seed, cfg.toy.image_size, cfg.toy.image_size);
    ctxagg::FeaturePyramid pre = model.neck_features(ctxagg::reshape(scene.image, {1, 3, scene.h, scene.w}));
    const ctxagg::SCP& scp = *model.scp();
    for (int l = pre.l_min; l <= pre.l_max(); ++l) {
        if (!scp.wraps_level(l)) continue;
        const ctxagg::CABlock& blk = scp.block(l);
        const ctxagg::Tensor& p = pre.level(l);
        const int64_t h = p.dim(2), w = p.dim(3);
        ctxagg::Tensor alpha = blk.attention_map(p);
        ctxagg::Tensor gate = blk.gate_map(p);
        const std::string base = "l" + std::to_string(l);
        ctxagg::write_pgm((dir / ("scp_attention_" + base + ".pgm")).string(), alpha.values(), h, w);
        ctxagg::write_csv_matrix((dir / ("scp_attention_" + base + ".csv")).string(), alpha.values(), h, w);
        ctxagg::write_pgm((dir / ("scp_gate_" + base + ".pgm")).string(), gate.values(), h, w);
        ctxagg::write_csv_matrix((dir / ("scp_gate_" + base + ".csv")).string(), gate.values(), h, w);
    }
    ctxagg::FeaturePyramid q = scp.forward(pre);
    ctxagg::save_pyramid(q, (dir / "pyramid.ckpt").string(), cfg.to_json().dump());

    // hroie gate means for one centered roi, both task paths
    if (cfg.modules.hroie) {
        const double c = cfg.toy.image_size / 2.0, half = cfg.toy.image_size / 4.0;
        std::vector<ctxagg::RoI> rois{{0, c - half, c - half, c + half, c + half}};
        ctxagg::FusionTrace det_trace, mask_trace;
        model.hroie()->extract(q, rois, ctxagg::RoITask::detection, &det_trace);
        model.hroie()->extract(q, rois, ctxagg::RoITask::mask, &mask_trace);
        std::ofstream os(dir / "hroie_gate_means.csv", std::ios::trunc);
        os << "task,step,level,gate_mean\n";
        char buf[96];
        for (size_t i = 0; i < det_trace.level_order.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "detection,%zu,%d,%.17g\n", i, det_trace.level_order[i],
                          det_trace.gate_means[i]);
            os << buf;
        }
        for (size_t i = 0; i < mask_trace.level_order.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "mask,%zu,%d,%.17g\n", i, mask_trace.level_order[i],
                          mask_trace.gate_means[i]);
            os << buf;
        }
    }
    std::printf("dump-maps: wrote SCP attention/gate maps and fusion gate means to %s\n", dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"context aggregation modules: verification, accounting, and the toy pipeline"};
    app.require_subcommand(1);

    CommonOpts selftest_opts, gradcheck_opts, params_opts, flops_opts, train_opts, eval_opts, maps_opts;
    bool selftest_full = false;
    CostOpts cost_params, cost_flops;
    std::string eval_checkpoint, maps_checkpoint, eval_proposals = "grid";
    int eval_scenes = 0;
    double eval_jitter = 0.0;

    CLI::App* selftest = app.add_subcommand("selftest", "run the built-in example checks");
    selftest->add_flag("--full", selftest_full, "include the long training checks");

    app.add_subcommand("gradcheck", "finite-difference verification of every differentiable op");

    CLI::App* params_cmd = app.add_subcommand("params", "analytic parameter counts and reconciliation");
    add_common(params_cmd, params_opts);
    params_cmd->add_option("--module", cost_params.module, "densefpn|scp|hroie|all");
    params_cmd->add_option("--channels", cost_params.channels, "channel width (default 256)");
    params_cmd->add_option("--levels", cost_params.levels, "number of pyramid levels");
    params_cmd->add_option("--depth", cost_params.depth, "densefpn block count (default 5)");
    params_cmd->add_option("--mid-channels", cost_params.mid_channels, "densefpn bottleneck width (default 192)");
    params_cmd->add_option("--reduction", cost_params.reduction, "scp refinement reduction rate (default 1)");
    params_cmd->add_flag("--norm-affine", cost_params.norm_affine, "count frozen-affine terms in densefpn");

    CLI::App* flops_cmd = app.add_subcommand("flops", "analytic multiply-accumulate counts and reconciliation");
    add_common(flops_cmd, flops_opts);
    flops_cmd->add_option("--module", cost_flops.module, "densefpn|scp|hroie|all");
    flops_cmd->add_option("--channels", cost_flops.channels, "channel width (default 256)");
    flops_cmd->add_option("--levels", cost_flops.levels, "number of pyramid levels");
    flops_cmd->add_option("--depth", cost_flops.depth, "densefpn block count (default 5)");
    flops_cmd->add_option("--mid-channels", cost_flops.mid_channels, "densefpn bottleneck width (default 192)");
    flops_cmd->add_option("--reduction", cost_flops.reduction, "scp refinement reduction rate (default 1)");
    flops_cmd->add_option("--input", cost_flops.input, "square input size (default 512)");
    flops_cmd->add_option("--det-rois", cost_flops.det_rois, "assumed detection rois (default 1000)");
    flops_cmd->add_option("--mask-rois", cost_flops.mask_rois, "assumed mask rois (default 100)");

    CLI::App* train_cmd = app.add_subcommand("train", "train the toy detector; writes metrics.csv + checkpoint.ckpt");
    add_common(train_cmd, train_opts);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate recall and mean mask IoU on held-out scenes");
    add_common(eval_cmd, eval_opts);
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint to load (default: fresh init)");
    eval_cmd->add_option("--scenes", eval_scenes, "number of held-out scenes (default: config)");
    eval_cmd->add_option("--proposals", eval_proposals, "grid|gt (default grid)");
    eval_cmd->add_option("--jitter", eval_jitter, "jitter fraction for --proposals gt");

    CLI::App* maps_cmd = app.add_subcommand("dump-maps", "export SCP attention/gate maps (PGM + CSV) and fusion traces");
    add_common(maps_cmd, maps_opts);
    maps_cmd->add_option("--checkpoint", maps_checkpoint, "checkpoint to load (default: fresh init)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("selftest")) return run_selftest(selftest_full);
        if (app.got_subcommand("gradcheck")) return run_gradcheck();
        if (app.got_subcommand("params")) return run_params(params_opts, cost_params);
        if (app.got_subcommand("flops")) return run_flops(flops_opts, cost_flops);
        if (app.got_subcommand("train")) return run_train(train_opts);
        if (app.got_subcommand("eval"))
            return run_eval(eval_opts, eval_checkpoint, eval_scenes, eval_proposals, eval_jitter);
        if (app.got_subcommand("dump-maps")) return run_dump_maps(maps_opts, maps_checkpoint);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
