// Built-in example checks: every operation's documented small cases, runnable
// from the CLI. The quick set finishes in seconds; the full set adds the long
// training checks.
#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "ctxagg/accounting.hpp"
#include "ctxagg/config.hpp"
#include "ctxagg/grad_check.hpp"
#include "ctxagg/optim.hpp"
#include "ctxagg/soft_nms.hpp"
#include "ctxagg/toy/detector.hpp"
#include "ctxagg/toy/train.hpp"
#include "ctxagg/verify/gradcheck_suite.hpp"
#include "ctxagg/verify/oracles.hpp"

namespace ctxagg::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

class SelfTest {
  public:
    void check(const std::string& name, bool cond, const std::string& detail = "") {
        results_.push_back({name, cond, detail});
    }

    void near(const std::string& name, double got, double want, double tol) {
        const double err = std::fabs(got - want);
        std::ostringstream os;
        os << "got " << got << " want " << want << " (|err| " << err << ", tol " << tol << ")";
        results_.push_back({name, err <= tol, os.str()});
    }

    void max_abs_diff(const std::string& name, const std::vector<double>& got, const std::vector<double>& want,
                      double tol) {
        if (got.size() != want.size()) {
            results_.push_back({name, false, "size mismatch"});
            return;
        }
        double worst = 0.0;
        for (size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::fabs(got[i] - want[i]));
        std::ostringstream os;
        os << "max |diff| " << worst << " (tol " << tol << ")";
        results_.push_back({name, worst <= tol, os.str()});
    }

    const std::vector<CheckResult>& results() const { return results_; }
    bool all_passed() const {
        for (const auto& r : results_)
            if (!r.pass) return false;
        return true;
    }

    // ---- core tensor ops -----------------------------------------------------

    void run_core() {
        {
            Tensor x = Tensor::from({1, 1, 3, 3}, std::vector<double>(9, 1.0));
            Tensor k = Tensor::from({1, 1, 1, 1}, {2.0});
            Tensor y = conv2d(x, k);
            bool ok = y.shape() == Shape{1, 1, 3, 3};
            for (double v : y.values()) ok = ok && v == 2.0;
            check("conv2d: 1x1 kernel scales pointwise", ok);
        }
        {
            Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
            Tensor k = Tensor::from({1, 1, 3, 3}, std::vector<double>(9, 1.0));
            Tensor y = conv2d(x, k, Tensor(), 1, 1);
            near("conv2d: full-window sum under padding", y.values()[0], 10.0, 0.0);
        }
        {
            Rng rng(101);
            Tensor x = random_input({1, 2, 5, 5}, rng);
            Tensor k = random_input({3, 2, 3, 3}, rng);
            Tensor y = conv2d(x, k, Tensor(), 2, 1);
            auto ref = oracle::conv2d(x.values(), 1, 2, 5, 5, k.values(), 3, 3, 3, {}, 2, 1);
            max_abs_diff("conv2d: strided random vs direct-loop oracle", y.values(), ref, 1e-12);
        }
        {
            Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
            near("maxpool2d: window max", maxpool2d(x, 2, 2).values()[0], 4.0, 0.0);
            Tensor c = Tensor::full({1, 1, 4, 4}, 2.5);
            Tensor pc = maxpool2d(c, 2, 2);
            bool ok = pc.shape() == Shape{1, 1, 2, 2};
            for (double v : pc.values()) ok = ok && v == 2.5;
            check("maxpool2d: constant map stays constant", ok);
            Rng rng(102);
            Tensor r = random_input({1, 1, 6, 6}, rng);
            max_abs_diff("maxpool2d: random vs loop oracle", maxpool2d(r, 2, 2).values(),
                         oracle::maxpool2d(r.values(), 1, 1, 6, 6, 2, 2), 0.0);
        }
        {
            Rng rng(103);
            Tensor x = random_input({1, 2, 4, 4}, rng);
            Tensor same = bilinear_resize(x, 4, 4);
            check("bilinear_resize: identity at equal size is bit-exact", same.values() == x.values());
            Tensor c = Tensor::full({1, 1, 2, 2}, 3.25);
            Tensor up = bilinear_resize(c, 5, 7);
            bool ok = true;
            for (double v : up.values()) ok = ok && v == 3.25;
            check("bilinear_resize: constants map to constants", ok);
            Tensor q = Tensor::from({1, 1, 2, 2}, {0, 1, 2, 3});
            max_abs_diff("bilinear_resize: 2x2 -> 4x4 vs interpolation oracle", bilinear_resize(q, 4, 4).values(),
                         oracle::bilinear_resize(q.values(), 1, 1, 2, 2, 4, 4), 1e-12);
        }
        {
            Tensor x = Tensor::from({3}, {0, 0, 0});
            max_abs_diff("softmax: symmetric input", softmax(x, 0).values(), {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
            Tensor y = Tensor::from({2}, {std::log(2.0), 0.0});
            max_abs_diff("softmax: analytic two-way", softmax(y, 0).values(), {2.0 / 3, 1.0 / 3}, 1e-15);
            Tensor z = Tensor::from({3}, {1, 2, 3});
            max_abs_diff("softmax: scalar oracle evaluation", softmax(z, 0).values(),
                         {0.09003057317038046, 0.24472847105479767, 0.6652409557748219}, 1e-12);
        }
        {
            near("sigmoid(0)", sigmoid(Tensor::scalar(0.0)).item(), 0.5, 0.0);
            Tensor r = relu(Tensor::from({2}, {-3.0, 3.0}));
            check("relu(-3)=0, relu(3)=3", r.values()[0] == 0.0 && r.values()[1] == 3.0);
            Tensor a = Tensor::from({1, 2, 1, 1}, {1, 2});
            Tensor b = Tensor::from({1, 3, 1, 1}, {3, 4, 5});
            Tensor cc = concat_channels(a, b);
            check("concat_channels: C=2 + C=3 -> C=5, order preserved",
                  cc.shape() == Shape{1, 5, 1, 1} && cc.values() == std::vector<double>({1, 2, 3, 4, 5}));
        }
        {
            Tensor x = Tensor::from({3}, {1, 2, 3}).set_requires_grad();
            auto res = grad_check([&] { return sum(mul(x, x)); }, {x});
            x.zero_grad();
            Tensor s = sum(mul(x, x));
            s.backward();
            check("grad_check: sum of squares analytic grads",
                  x.grad() == std::vector<double>({2, 4, 6}) && res.max_rel_error < 1e-9,
                  "max rel err " + std::to_string(res.max_rel_error));
        }
        {
            Rng rng(104);
            Tensor x = random_input({1, 2, 4, 4}, rng);
            Tensor k = random_input({2, 2, 3, 3}, rng);
            auto res = grad_check([&] { return sum(relu(conv2d(x, k, Tensor(), 1, 1))); }, {x, k});
            check("grad_check: conv2d + relu + sum < 1e-6", res.max_rel_error < 1e-6,
                  "max rel err " + std::to_string(res.max_rel_error));
        }
        {
            Rng rng(105);
            CABlock blk(8, 1, rng);
            ParamMap pm;
            blk.collect_params(pm, "ca");
            Rng nudge(1051);
            std::vector<Tensor> params;
            for (auto& p : pm) {
                for (double& v : p.tensor.values()) v += 0.1 * nudge.normal();
                params.push_back(p.tensor);
            }
            Tensor x = random_input({1, 8, 3, 3}, rng);
            params.push_back(x);
            auto res = grad_check([&] { return sum(blk.forward(x)); }, params);
            check("grad_check: CABlock forward + sum < 1e-6", res.max_rel_error < 1e-6,
                  "max rel err " + std::to_string(res.max_rel_error));
        }
        {
            std::vector<std::vector<double>> bufs;
            Tensor p = Tensor::scalar(1.0).set_requires_grad();
            p.grad()[0] = 2.0;
            std::vector<Tensor> ps{p};
            sgd_step(ps, 0.0, 0.9, 0.0, bufs);
            near("sgd_step: lr=0 leaves parameters unchanged", p.item(), 1.0, 0.0);
            p.values()[0] = 1.0;
            p.zero_grad();
            p.grad()[0] = 2.0;
            bufs.clear();
            sgd_step(ps, 0.1, 0.0, 0.0, bufs);
            near("sgd_step: plain step 1 - 0.1*2", p.item(), 0.8, 1e-15);
            p.values()[0] = 0.0;
            bufs.clear();
            p.zero_grad();
            p.grad()[0] = 1.0;
            sgd_step(ps, 0.1, 0.9, 0.0, bufs);
            const double after1 = p.item();
            p.zero_grad();
            p.grad()[0] = 1.0;
            sgd_step(ps, 0.1, 0.9, 0.0, bufs);
            near("sgd_step: momentum recurrence step 1", after1, -0.1, 1e-15);
            near("sgd_step: momentum recurrence step 2", p.item(), -0.29, 1e-15);
        }
    }

    // ---- feature pyramid -------------------------------------------------------

    void run_pyramid() {
        {
            Rng rng(201);
            LateralReducer lat({4, 4, 4, 4}, 2, 8, rng);
            std::vector<Tensor> feats;
            int64_t hw = 128;
            for (int i = 0; i < 4; ++i, hw /= 2) feats.push_back(Tensor::zeros({1, 4, hw, hw}));
            FeaturePyramid pyr = lat.forward(feats);
            bool sizes_ok = true;
            int64_t want = 128;
            for (int l = 2; l <= 6; ++l, want /= 2)
                sizes_ok = sizes_ok && pyr.level(l).dim(2) == want && pyr.level(l).dim(3) == want;
            check("reduce_laterals: 512-input level sizes 128,64,32,16,8", sizes_ok);
            bool zero = true;
            for (const Tensor& t : pyr.levels)
                for (double v : t.values()) zero = zero && v == 0.0;
            check("reduce_laterals: zero features, zero biases -> zero pyramid", zero);
        }
        {
            Rng rng(202);
            LateralReducer lat({3, 5, 2, 4}, 2, 6, rng);
            ParamMap pm;
            lat.collect_params(pm, "lat");
            std::vector<Tensor> feats;
            std::vector<int64_t> cs{3, 5, 2, 4};
            int64_t hw = 16;
            Rng drng(203);
            for (int i = 0; i < 4; ++i, hw /= 2) feats.push_back(random_input({1, cs[static_cast<size_t>(i)], hw, hw}, drng));
            FeaturePyramid pyr = lat.forward(feats);
            bool ok = true;
            for (int i = 0; i < 4; ++i) {
                const Tensor& wt = pm.at("lat/l" + std::to_string(2 + i) + "/weight").tensor;
                auto ref = oracle::conv2d(feats[static_cast<size_t>(i)].values(), 1, cs[static_cast<size_t>(i)],
                                          feats[static_cast<size_t>(i)].dim(2), feats[static_cast<size_t>(i)].dim(3),
                                          wt.values(), 6, 1, 1, pm.at("lat/l" + std::to_string(2 + i) + "/bias").tensor.values(),
                                          1, 0);
                double worst = 0.0;
                const auto& got = pyr.level(2 + i).values();
                for (size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, std::fabs(got[k] - ref[k]));
                ok = ok && worst <= 1e-12;
            }
            check("reduce_laterals: per-level match of composed conv oracle", ok);
        }
        {
            FeaturePyramid a = make_synthetic_pyramid(0, 1, 4, 64, 64, 2, 6);
            FeaturePyramid b = make_synthetic_pyramid(0, 1, 4, 64, 64, 2, 6);
            bool same = true;
            for (int l = 2; l <= 6; ++l) same = same && a.level(l).values() == b.level(l).values();
            check("make_synthetic_pyramid: same seed twice is bit-identical", same);
            FeaturePyramid big = make_synthetic_pyramid(3, 1, 256, 64, 64, 2, 6);
            bool sizes = true;
            int64_t want = 16;
            for (int l = 2; l <= 6; ++l, want /= 2) sizes = sizes && big.level(l).dim(2) == want;
            check("make_synthetic_pyramid: c=256 levels 2..6 sizes 16,8,4,2,1", sizes);
            double mean = 0.0;
            int64_t n = 0;
            for (const Tensor& t : big.levels) {
                for (double v : t.values()) mean += v;
                n += t.numel();
            }
            mean /= static_cast<double>(n);
            near("make_synthetic_pyramid: sample mean near 0 over >=4096 draws", mean, 0.0, 0.1);
        }
    }

    // ---- densefpn ----------------------------------------------------------------

    void run_densefpn() {
        {
            max_abs_diff("normalize_weights: zeros -> uniform", normalize_weights(Tensor::from({3}, {0, 0, 0})).values(),
                         {1.0 / 3, 1.0 / 3, 1.0 / 3}, 1e-15);
            max_abs_diff("normalize_weights: [ln2, 0] -> [2/3, 1/3]",
                         normalize_weights(Tensor::from({2}, {std::log(2.0), 0.0})).values(), {2.0 / 3, 1.0 / 3},
                         1e-15);
            max_abs_diff("normalize_weights: [1,2,3] softmax oracle",
                         normalize_weights(Tensor::from({3}, {1, 2, 3})).values(),
                         oracle::softmax({1, 2, 3}), 1e-15);
        }
        DenseFPNConfig cfg;
        cfg.depth = 1;
        cfg.channels = 4;
        cfg.mid_channels = 2;
        cfg.l_min = 2;
        cfg.l_max = 4;
        {
            Rng rng(301);
            DenseFPNBlock blk(cfg, rng);
            FeaturePyramid pyr = make_synthetic_pyramid(5, 1, 4, 16, 16, 2, 4);
            // zero all levels above the bottom
            for (int l = 3; l <= 4; ++l)
                std::fill(pyr.level(l).values().begin(), pyr.level(l).values().end(), 0.0);
            FeaturePyramid td = blk.topdown(pyr);
            Tensor direct = blk.topdown_transform(2).forward(pyr.level(2));
            max_abs_diff("topdown: zero upper levels reduce to Transform(C_i')", td.level(2).values(),
                         direct.values(), 0.0);
        }
        {
            Rng rng(302);
            DenseFPNBlock blk(cfg, rng);
            ParamMap pm;
            blk.collect_params(pm, "b");
            for (auto& p : pm)
                if (p.name.find("reweight") == std::string::npos)
                    std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0);
            FeaturePyramid pyr = make_synthetic_pyramid(6, 1, 4, 16, 16, 2, 4);
            FeaturePyramid out = blk.forward(pyr);
            bool zero = true;
            for (const Tensor& t : out.levels)
                for (double v : t.values()) zero = zero && v == 0.0;
            check("densefpn: all transform weights zero -> all-zero output", zero);
        }
        {
            // 2-level, 1x1 spatial, C=M=1: scalar evaluation of the top-down rule
            DenseFPNConfig c1;
            c1.depth = 1;
            c1.channels = 1;
            c1.mid_channels = 1;
            c1.l_min = 2;
            c1.l_max = 3;
            Rng rng(303);
            DenseFPNBlock blk(c1, rng);
            ParamMap pm;
            blk.collect_params(pm, "b");
            auto set = [&](const std::string& n, double v) {
                auto& vals = pm.at(n).tensor.values();
                std::fill(vals.begin(), vals.end(), 0.0);
                vals[vals.size() / 2] = v;  // center tap for the 3x3
            };
            set("b/topdown/l2/reduce/weight", 0.7);
            set("b/topdown/l2/mid/weight", 1.3);
            set("b/topdown/l2/expand/weight", -0.9);
            pm.at("b/topdown/l2/reduce/bias").tensor.values()[0] = 0.2;
            pm.at("b/topdown/l2/mid/bias").tensor.values()[0] = -0.1;
            pm.at("b/topdown/l2/expand/bias").tensor.values()[0] = 0.05;
            pm.at("b/topdown/l2/reweight").tensor.values()[0] = 0.4;  // single source, softmax -> 1
            FeaturePyramid pyr;
            pyr.l_min = 2;
            pyr.levels.push_back(Tensor::from({1, 1, 2, 2}, {1.5, 1.5, 1.5, 1.5}));
            pyr.levels.push_back(Tensor::from({1, 1, 1, 1}, {-2.0}));
            FeaturePyramid td = blk.topdown(pyr);
            // fused = 1.5 + 1.0 * (-2.0) = -0.5; relu -> 0; transform(0) chain of biases
            const double t_relu = 0.0;
            const double t1 = 0.7 * t_relu + 0.2;
            const double t2 = 1.3 * t1 - 0.1;
            const double expect = -0.9 * t2 + 0.05;
            near("topdown: 2-level 1x1 scalar rule evaluation", td.level(2).values()[0], expect, 1e-12);
        }
        {
            // bottom-up: single-level pyramid degenerates to Transform(C' + C_down)
            DenseFPNConfig c1;
            c1.depth = 1;
            c1.channels = 2;
            c1.mid_channels = 2;
            c1.l_min = 3;
            c1.l_max = 3;
            Rng rng(304);
            DenseFPNBlock blk(c1, rng);
            ParamMap pm;
            blk.collect_params(pm, "b");
            Rng nudge(3041);
            for (auto& p : pm)
                for (double& v : p.tensor.values()) v += 0.3 * nudge.normal();
            FeaturePyramid pyr = make_synthetic_pyramid(8, 1, 2, 8, 8, 3, 3);
            FeaturePyramid td = blk.topdown(pyr);
            FeaturePyramid bu = blk.bottomup(pyr, td);
            Tensor direct = blk.bottomup_transform(3).forward(add(pyr.level(3), td.level(3)));
            max_abs_diff("bottomup: single level reduces to Transform(C' + C_down)", bu.level(3).values(),
                         direct.values(), 0.0);
        }
        {
            // D=1 block equals topdown then bottomup; D=2 equals chaining blocks
            Rng rng(305);
            DenseFPNConfig c2 = cfg;
            c2.depth = 2;
            DenseFPN fpn(c2, rng);
            ParamMap pm;
            fpn.collect_params(pm, "f");
            Rng nudge(3051);
            for (auto& p : pm)
                for (double& v : p.tensor.values()) v += 0.2 * nudge.normal();
            FeaturePyramid pyr = make_synthetic_pyramid(9, 1, 4, 16, 16, 2, 4);
            FeaturePyramid direct = fpn.forward(pyr);
            FeaturePyramid step1 = fpn.block(0).bottomup(pyr, fpn.block(0).topdown(pyr));
            FeaturePyramid step2 = fpn.block(1).forward(step1);
            bool same_shape = true;
            bool same_vals = true;
            for (int l = 2; l <= 4; ++l) {
                same_shape = same_shape && direct.level(l).shape() == pyr.level(l).shape();
                same_vals = same_vals && direct.level(l).values() == step2.level(l).values();
            }
            check("densefpn_forward: output shapes equal input shapes", same_shape);
            check("densefpn_forward: D=2 equals manually chained D=1 blocks", same_vals);
        }
    }

    // ---- scp ----------------------------------------------------------------------

    void run_scp() {
        Rng rng(401);
        CABlock blk(4, 1, rng);
        {
            Tensor constant = Tensor::full({1, 4, 3, 3}, 0.8);
            Tensor alpha = blk.attention_map(constant);
            bool uniform = true;
            for (double v : alpha.values()) uniform = uniform && std::fabs(v - 1.0 / 9) < 1e-15;
            check("attention_map: spatially constant input -> uniform", uniform);
            Rng r2(402);
            CABlock zero_key(4, 1, r2);
            std::fill(zero_key.key_weight().values().begin(), zero_key.key_weight().values().end(), 0.0);
            Tensor any = random_input({1, 4, 2, 3}, r2);
            Tensor a2 = zero_key.attention_map(any);
            bool uni2 = true;
            for (double v : a2.values()) uni2 = uni2 && std::fabs(v - 1.0 / 6) < 1e-15;
            check("attention_map: w_k = 0 -> uniform", uni2);
        }
        {
            Rng r3(403);
            Tensor x = random_input({1, 4, 2, 2}, r3);
            Tensor alpha = blk.attention_map(x);
            // per-pixel dot products + scalar softmax
            std::vector<double> key(4);
            for (int j = 0; j < 4; ++j) {
                double acc = blk.key_bias().values()[0];
                for (int c = 0; c < 4; ++c) acc += blk.key_weight().values()[static_cast<size_t>(c)] * x.values()[static_cast<size_t>(c * 4 + j)];
                key[static_cast<size_t>(j)] = acc;
            }
            max_abs_diff("attention_map: random input vs dot-product + softmax oracle", alpha.values(),
                         oracle::softmax(key), 1e-12);
        }
        {
            // constant P: ctx independent of alpha; identity-ish value/refine -> spatial mean
            Tensor constant = Tensor::full({1, 4, 2, 2}, 1.7);
            Tensor alpha = blk.attention_map(constant);
            Tensor ctx = blk.context_vector(constant, alpha);
            Tensor uniform_alpha = Tensor::full({1, 1, 2, 2}, 0.25);
            Tensor ctx2 = blk.context_vector(constant, uniform_alpha);
            max_abs_diff("context_vector: constant map ignores the attention", ctx.values(), ctx2.values(), 1e-12);

            Rng r4(404);
            CABlock ident(3, 1, r4);
            auto& wv = ident.value_weight().values();
            std::fill(wv.begin(), wv.end(), 0.0);
            for (int c = 0; c < 3; ++c) wv[static_cast<size_t>(c * 3 + c)] = 1.0;
            std::fill(ident.value_bias().values().begin(), ident.value_bias().values().end(), 0.0);
            auto& wr = ident.refine_weight().values();
            std::fill(wr.begin(), wr.end(), 0.0);
            for (int c = 0; c < 3; ++c) wr[static_cast<size_t>(c * 3 + c)] = 1.0;
            Tensor p = random_input({1, 3, 2, 2}, r4);
            Tensor ua = Tensor::full({1, 1, 2, 2}, 0.25);
            Tensor got = ident.context_vector(p, ua);
            std::vector<double> want(3);
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int j = 0; j < 4; ++j) acc += p.values()[static_cast<size_t>(c * 4 + j)];
                want[static_cast<size_t>(c)] = acc / 4.0;
            }
            max_abs_diff("context_vector: identity maps + uniform attention = spatial mean", got.values(), want, 1e-12);
        }
        {
            Rng r5(405);
            Tensor p = random_input({1, 4, 2, 2}, r5);
            Tensor alpha = blk.attention_map(p);
            Tensor ctx = blk.context_vector(p, alpha);
            // brute-force double loop
            std::vector<double> pooled(4, 0.0);
            for (int j = 0; j < 4; ++j) {
                for (int co = 0; co < 4; ++co) {
                    double v = blk.value_bias().values()[static_cast<size_t>(co)];
                    for (int ci = 0; ci < 4; ++ci)
                        v += blk.value_weight().values()[static_cast<size_t>(co * 4 + ci)] * p.values()[static_cast<size_t>(ci * 4 + j)];
                    pooled[static_cast<size_t>(co)] += alpha.values()[static_cast<size_t>(j)] * v;
                }
            }
            std::vector<double> want(4);
            for (int co = 0; co < 4; ++co) {
                double v = blk.refine_bias().values()[static_cast<size_t>(co)];
                for (int ci = 0; ci < 4; ++ci)
                    v += blk.refine_weight().values()[static_cast<size_t>(co * 4 + ci)] * pooled[static_cast<size_t>(ci)];
                want[static_cast<size_t>(co)] = v;
            }
            max_abs_diff("context_vector: brute-force summation oracle", ctx.values(), want, 1e-12);
        }
        {
            Rng r6(406);
            CABlock g(4, 1, r6);
            std::fill(g.gate_weight().values().begin(), g.gate_weight().values().end(), 0.0);
            Tensor p = random_input({1, 4, 3, 3}, r6);
            Tensor gate = g.gate_map(p);
            bool uni = true;
            for (double v : gate.values()) uni = uni && std::fabs(v - 1.0 / 9) < 1e-15;
            check("gate_map: w_a = 0 -> uniform 1/N", uni);
            Tensor c = Tensor::full({1, 4, 3, 3}, -0.4);
            Tensor gc = blk.gate_map(c);
            bool uni2 = true;
            for (double v : gc.values()) uni2 = uni2 && std::fabs(v - 1.0 / 9) < 1e-15;
            check("gate_map: constant input -> uniform", uni2);
            Tensor r = random_input({1, 4, 3, 3}, r6);
            std::vector<double> raw(9);
            for (int j = 0; j < 9; ++j) {
                double acc = blk.gate_bias().values()[0];
                for (int ci = 0; ci < 4; ++ci) acc += blk.gate_weight().values()[static_cast<size_t>(ci)] * r.values()[static_cast<size_t>(ci * 9 + j)];
                raw[static_cast<size_t>(j)] = acc;
            }
            max_abs_diff("gate_map: random input vs softmax oracle", blk.gate_map(r).values(), oracle::softmax(raw),
                         1e-12);
        }
        {
            Rng r7(407);
            CABlock zero_refine(4, 1, r7);
            std::fill(zero_refine.refine_weight().values().begin(), zero_refine.refine_weight().values().end(), 0.0);
            std::fill(zero_refine.refine_bias().values().begin(), zero_refine.refine_bias().values().end(), 0.0);
            Tensor p = random_input({1, 4, 3, 2}, r7);
            max_abs_diff("cablock: zero refinement conv -> Q = P exactly", zero_refine.forward(p).values(),
                         p.values(), 0.0);
            Tensor c = Tensor::full({2, 4, 3, 3}, 0.6);
            Tensor q = blk.forward(c);
            bool const_out = true;
            for (int64_t n = 0; n < 2; ++n)
                for (int64_t ch = 0; ch < 4; ++ch)
                    for (int64_t j = 1; j < 9; ++j)
                        const_out = const_out && std::fabs(q.values()[static_cast<size_t>((n * 4 + ch) * 9 + j)] -
                                                           q.values()[static_cast<size_t>((n * 4 + ch) * 9)]) < 1e-12;
            check("cablock: spatially constant input stays spatially constant", const_out);
        }
        {
            Rng r8(408);
            CABlock b8(8, 1, r8);
            Tensor p = random_input({1, 8, 2, 3}, r8);
            oracle::CABlockWeights ww;
            ww.wk = b8.key_weight().values();
            ww.bk = b8.key_bias().values();
            ww.wv = b8.value_weight().values();
            ww.bv = b8.value_bias().values();
            ww.wa = b8.gate_weight().values();
            ww.ba = b8.gate_bias().values();
            ww.wr = b8.refine_weight().values();
            ww.br = b8.refine_bias().values();
            max_abs_diff("cablock: composed scalar oracle within 1e-12", b8.forward(p).values(),
                         oracle::cablock_forward(p.values(), 8, 2, 3, ww), 1e-12);
        }
        {
            Rng r9(409);
            SCPConfig cfg;
            cfg.levels = {};
            cfg.channels = 4;
            SCP empty(cfg, r9);
            FeaturePyramid pyr = make_synthetic_pyramid(11, 1, 4, 32, 32, 2, 4);
            FeaturePyramid out = empty.forward(pyr);
            bool identity = true;
            for (int l = 2; l <= 4; ++l) identity = identity && out.level(l).values() == pyr.level(l).values();
            check("scp_forward: empty level set is the identity", identity);

            SCPConfig cfg2;
            cfg2.levels = {2, 3, 4};
            cfg2.channels = 4;
            SCP scp(cfg2, r9);
            FeaturePyramid out2 = scp.forward(pyr);
            bool per_level = true;
            for (int l = 2; l <= 4; ++l)
                per_level = per_level && out2.level(l).values() == scp.block(l).forward(pyr.level(l)).values();
            check("scp_forward: per-level outputs equal isolated cablock_forward", per_level);

            SCPConfig cfg3;  // full-scale accounting
            CostReport rep = scp_params(cfg3);
            check("scp_forward: C=256 5-level params 657,920 weights",
                  rep.weights == 657920 && std::fabs(rep.params_with_affine() / 1e6 - 0.66) < 0.02,
                  std::to_string(rep.weights) + " weights, " + std::to_string(rep.params_with_affine()) + " total");
        }
    }

    // ---- hroie --------------------------------------------------------------------

    void run_hroie() {
        {
            Tensor map = Tensor::full({1, 2, 8, 8}, 5.0);
            RoI roi{0, 1.0, 2.0, 7.5, 6.0};
            Tensor crop = roi_align_one(map, roi, 3, 2, 1.0);
            bool ok = crop.shape() == Shape{2, 3, 3};
            for (double v : crop.values()) ok = ok && std::fabs(v - 5.0) < 1e-12;
            check("roi_align: constant map -> constant crop", ok);
        }
        {
            // integer-aligned box with samples at cell centers = average pooling
            Rng rng(501);
            Tensor map = random_input({1, 1, 4, 4}, rng);
            RoI roi{0, 0.0, 0.0, 4.0, 4.0};
            Tensor crop = roi_align_one(map, roi, 2, 2, 1.0);
            std::vector<double> want(4);
            const auto& m = map.values();
            want[0] = (m[0] + m[1] + m[4] + m[5]) / 4.0;
            want[1] = (m[2] + m[3] + m[6] + m[7]) / 4.0;
            want[2] = (m[8] + m[9] + m[12] + m[13]) / 4.0;
            want[3] = (m[10] + m[11] + m[14] + m[15]) / 4.0;
            max_abs_diff("roi_align: integer-aligned box equals average pooling", crop.values(), want, 1e-12);
        }
        {
            Rng rng(502);
            Tensor map = random_input({1, 2, 8, 8}, rng);
            RoI roi{0, 1.5, 2.0, 6.5, 7.0};
            Tensor crop = roi_align_one(map, roi, 2, 2, 1.0);
            auto ref = oracle::roi_align(map.values(), 2, 8, 8, 1.5, 2.0, 6.5, 7.0, 2, 2, 1.0);
            max_abs_diff("roi_align: random map vs direct sampling oracle", crop.values(), ref, 1e-12);
        }
        {
            HRoIEConfig cfg;
            cfg.l_min = 2;
            cfg.l_max = 3;
            cfg.channels = 2;
            cfg.det_size = 2;
            Rng rng(503);
            HRoIE h(cfg, rng);
            FeaturePyramid pyr = make_synthetic_pyramid(12, 1, 2, 16, 16, 2, 3);
            std::vector<RoI> rois{{0, 2.0, 2.0, 14.0, 12.0}};
            for (auto& cell : h.detection_cells()) std::fill(cell.bias.values().begin(), cell.bias.values().end(), -30.0);
            Tensor f0 = h.extract(pyr, rois, RoITask::detection);
            double worst = 0.0;
            for (double v : f0.values()) worst = std::max(worst, std::fabs(v));
            check("fuse: gate biases -30 saturate to F = 0 (tol 1e-12)", worst <= 1e-12,
                  "max |F| " + std::to_string(worst));
            for (auto& cell : h.detection_cells()) std::fill(cell.bias.values().begin(), cell.bias.values().end(), 30.0);
            Tensor f1 = h.extract(pyr, rois, RoITask::detection);
            const double scale2 = 0.25, scale3 = 0.125;
            Tensor sum_crops = add(roi_align(pyr.level(2), rois, 2, 2, scale2),
                                   roi_align(pyr.level(3), rois, 2, 2, scale3));
            double worst2 = 0.0;
            for (size_t i = 0; i < f1.values().size(); ++i)
                worst2 = std::max(worst2, std::fabs(f1.values()[i] - sum_crops.values()[i]));
            check("fuse: gate biases +30 saturate to F = sum of crops (tol 1e-12)", worst2 <= 1e-12,
                  "max |diff| " + std::to_string(worst2));
        }
        {
            // single level, zero weights and bias: F = 0.5 * R
            HRoIEConfig cfg;
            cfg.l_min = 2;
            cfg.l_max = 2;
            cfg.channels = 2;
            cfg.det_size = 3;
            Rng rng(504);
            HRoIE h(cfg, rng);
            FeaturePyramid pyr = make_synthetic_pyramid(13, 1, 2, 8, 8, 2, 2);
            std::vector<RoI> rois{{0, 0.5, 0.5, 7.0, 6.0}};
            Tensor f = h.extract(pyr, rois, RoITask::detection);
            Tensor r = roi_align(pyr.level(2), rois, 3, 2, 0.25);
            double worst = 0.0;
            for (size_t i = 0; i < f.values().size(); ++i)
                worst = std::max(worst, std::fabs(f.values()[i] - 0.5 * r.values()[i]));
            check("fuse: single level, zero gate -> F = 0.5 * R", worst <= 1e-15);
        }
        {
            // two levels, 1x1 spatial, C=1: scalar recurrence
            HRoIEConfig cfg;
            cfg.l_min = 0;
            cfg.l_max = 1;
            cfg.channels = 1;
            Rng rng(505);
            HRoIE h(cfg, rng);
            Tensor r0 = Tensor::from({1, 1, 1, 1}, {1.4});
            Tensor r1 = Tensor::from({1, 1, 1, 1}, {-0.6});
            auto& cells = h.detection_cells();
            cells[0].weight.values() = {0.3, -0.2};  // [F, R] taps
            cells[0].bias.values() = {0.1};
            cells[1].weight.values() = {-0.5, 0.7};
            cells[1].bias.values() = {-0.3};
            std::vector<Tensor> crops{r0, r1};
            Tensor f = h.fuse(crops, FusionDirection::bottom_up, cells);
            auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
            double fs = 0.0;
            fs = fs + 1.4 * sig(0.3 * fs + (-0.2) * 1.4 + 0.1);
            fs = fs + (-0.6) * sig(-0.5 * fs + 0.7 * (-0.6) - 0.3);
            near("fuse: two-level scalar recurrence oracle", f.values()[0], fs, 1e-12);
        }
        {
            // structural: detection ascends, mask descends; zero pyramid -> zero F
            HRoIEConfig cfg;
            cfg.l_min = 2;
            cfg.l_max = 5;
            cfg.channels = 2;
            cfg.det_size = 2;
            cfg.mask_size = 2;
            Rng rng(506);
            HRoIE h(cfg, rng);
            FeaturePyramid pyr = make_synthetic_pyramid(14, 1, 2, 64, 64, 2, 5);
            std::vector<RoI> rois{{0, 4.0, 4.0, 40.0, 36.0}};
            FusionTrace det_trace, mask_trace;
            h.extract(pyr, rois, RoITask::detection, &det_trace);
            h.extract(pyr, rois, RoITask::mask, &mask_trace);
            check("extract: detection path ascends levels",
                  det_trace.level_order == std::vector<int>({2, 3, 4, 5}));
            check("extract: mask path descends levels", mask_trace.level_order == std::vector<int>({5, 4, 3, 2}));
            FeaturePyramid zeros;
            zeros.l_min = 2;
            for (int l = 2; l <= 5; ++l)
                zeros.levels.push_back(Tensor::zeros({1, 2, 64 >> l, 64 >> l}));
            Tensor f = h.extract(zeros, rois, RoITask::detection);
            bool all_zero = true;
            for (double v : f.values()) all_zero = all_zero && v == 0.0;
            check("extract: zero pyramid -> zero F", all_zero);
        }
        {
            HRoIEConfig cfg;  // full-scale accounting
            CostReport rep = hroie_params(cfg);
            check("extract: C=256 4-level 2-path gate weights = 1,048,576",
                  rep.weights == 1048576 && rep.biases == 2048,
                  std::to_string(rep.weights) + " weights + " + std::to_string(rep.biases) + " biases");
        }
    }

    // ---- accounting ------------------------------------------------------------------

    void run_accounting() {
        {
            CostReport r = lateral_params({256}, 256);
            // single 1x1 conv 256->256 with bias, ignoring the extra conv
            const int64_t one_conv = 256 * 256 + 256;
            check("count_params: single 1x1 conv 256->256 + bias = 65,792", one_conv == 65792);
            (void)r;
        }
        {
            SCPConfig cfg;
            cfg.levels = {2};
            CostReport r = scp_params(cfg);
            Rng rng(601);
            CABlock blk(256, 1, rng);
            ParamMap pm;
            blk.collect_params(pm, "ca");
            check("count_params: CABlock formula matches registry walk",
                  r.params_with_affine() == pm.total_count() && r.weights == 2 * 256 * 256 + 2 * 256,
                  std::to_string(r.params_with_affine()) + " vs live " + std::to_string(pm.total_count()));
        }
        {
            HRoIEConfig cfg;
            CostReport r = hroie_params(cfg);
            Rng rng(602);
            HRoIE h(cfg, rng);
            check("count_params: HRoIE formula matches registry walk",
                  r.params_with_affine() == live_param_count(h) && r.weights == 1048576);
        }
        {
            // 1x1 conv 256->256 on a 64x64 map
            check("count_macs: 1x1 conv 256x256 on 64x64 = 268,435,456",
                  conv_macs(256, 256, 1, 1, 64, 64) == 268435456LL);
            SCPConfig cfg;
            CostReport scp = scp_macs(cfg, 512, 512);
            const double delta = 1.45e9;
            const double rel = std::fabs(static_cast<double>(scp.macs) - delta) / delta;
            check("count_macs: SCP at 512x512 within 25% of the 1.45G reference (MAC convention)", rel < 0.25,
                  std::to_string(scp.macs) + " macs, rel err " + std::to_string(rel));
            DenseFPNConfig zero_cfg;
            zero_cfg.depth = 1;
            zero_cfg.channels = 0;
            zero_cfg.mid_channels = 0;
            check("count_macs: zero-layer model counts zero", densefpn_macs(zero_cfg, 512, 512).macs == 0);
        }
    }

    // ---- toy pipeline -------------------------------------------------------------------

    void run_toy(bool include_slow) {
        {
            Scene a = generate_scene(7, 64, 64);
            Scene b = generate_scene(7, 64, 64);
            check("generate_scene: same seed twice -> identical scenes",
                  a.image.values() == b.image.values() && a.instances.size() == b.instances.size());
            bool boxes_ok = true;
            for (uint64_t s = 0; s < 300; ++s) {
                Scene sc = generate_scene(s, 64, 64);
                for (const Instance& inst : sc.instances)
                    boxes_ok = boxes_ok && inst.x2 > inst.x1 && inst.y2 > inst.y1 && inst.x1 >= 0 && inst.y1 >= 0 &&
                               inst.x2 <= 64 && inst.y2 <= 64;
            }
            check("generate_scene: boxes valid and in bounds across seeds", boxes_ok);
            // shape rule: rectangles fill their box; ellipses fill ~pi/4 of it
            bool shapes_ok = true;
            for (uint64_t s = 0; s < 40; ++s) {
                Scene sc = generate_scene(s, 96, 96);
                for (const Instance& inst : sc.instances) {
                    int64_t area = 0;
                    for (uint8_t m : inst.mask) area += m;
                    const double fill = static_cast<double>(area) / (inst.box_w() * inst.box_h());
                    if (inst.category == 1)
                        shapes_ok = shapes_ok && fill > 0.95;
                    else
                        shapes_ok = shapes_ok && fill > 0.55 && fill < 0.92;
                }
            }
            check("generate_scene: class 1 rectangles, class 2 ellipses (mask moments)", shapes_ok);
        }
        {
            RunConfig cfg;
            cfg.toy.num_classes = 3;
            cfg.toy.image_size = 64;
            cfg.toy.channels = 16;
            cfg.toy.stage_widths = {8, 8, 8, 16, 16};
            cfg.densefpn.channels = 16;
            cfg.densefpn.depth = 1;
            cfg.densefpn.mid_channels = 8;
            cfg.scp.channels = 16;
            cfg.hroie.channels = 16;
            Rng rng(701);
            ToyDetector det(cfg, rng);
            det.heads().zero_output_convs();
            Tensor zero_img = Tensor::zeros({1, 3, 64, 64});
            std::vector<RoI> props;
            for (int i = 0; i < 7; ++i)
                props.push_back(RoI{0, 4.0 + i, 4.0, 30.0 + i, 28.0});
            auto out = det.forward(zero_img, props);
            Tensor probs = softmax(out.cls_logits, 1);
            bool uniform = true;
            for (double v : probs.values()) uniform = uniform && std::fabs(v - 0.25) < 1e-12;
            check("forward_detector: zero image, zero heads -> uniform posterior", uniform);
            check("forward_detector: shape contract for 7 proposals, K=3",
                  out.cls_logits.shape() == Shape{7, 4} && out.box_deltas.shape() == Shape{7, 4} &&
                      out.mask_logits.shape() == Shape{7, 14, 14});
        }
        {
            // saturated-off HRoIE gates: mask logits equal mask-head(0)
            RunConfig cfg;
            cfg.toy.image_size = 64;
            cfg.toy.channels = 16;
            cfg.toy.stage_widths = {8, 8, 8, 16, 16};
            cfg.densefpn.channels = 16;
            cfg.densefpn.depth = 1;
            cfg.densefpn.mid_channels = 8;
            cfg.scp.channels = 16;
            cfg.hroie.channels = 16;
            Rng rng(702);
            ToyDetector det(cfg, rng);
            for (auto& cell : det.hroie()->mask_cells())
                std::fill(cell.bias.values().begin(), cell.bias.values().end(), -30.0);
            Scene sc = generate_scene(3, 64, 64);
            std::vector<RoI> props{{0, 8.0, 8.0, 40.0, 40.0}, {0, 2.0, 12.0, 20.0, 30.0}};
            FeaturePyramid pyr = det.features(reshape(sc.image, {1, 3, 64, 64}));
            Tensor got = det.masks(pyr, props);
            Tensor zero_feats = Tensor::zeros({2, 16, 14, 14});
            Tensor want = det.heads().mask(zero_feats);
            max_abs_diff("forward_detector: saturated-off gates give mask-head(0)", got.values(), want.values(),
                         1e-10);
        }
        {
            // losses
            Tensor logits = Tensor::from({2, 3}, {30, 0, 0, 0, 30, 0});
            Tensor box = Tensor::from({1, 4}, {0.2, -0.1, 0.05, 0.0});
            ToyDetector::Outputs out;
            out.cls_logits = logits;
            out.box_deltas = box;
            out.mask_logits = Tensor::from({1, 2, 2}, {30, -30, 30, -30});
            ProposalTargets t;
            t.labels = {0, 1};
            t.positive_rows = {0};
            t.box_deltas = {0.2, -0.1, 0.05, 0.0};
            t.mask_bins = {1, 0, 1, 0};
            auto [total, lb] = compute_losses(out, t);
            check("compute_losses: one-hot logits with margin 30 -> cls < 1e-6", lb.cls < 1e-6,
                  "cls " + std::to_string(lb.cls));
            check("compute_losses: deltas equal targets -> box loss 0", lb.box == 0.0);
            check("compute_losses: +-30 mask logits matching target -> mask < 1e-6", lb.mask < 1e-6);
        }
        {
            // soft-nms
            std::vector<ScoredBox> far{{0, 0, 10, 10, 0.9, 0}, {50, 50, 70, 70, 0.7, 1}, {100, 0, 110, 10, 0.8, 2}};
            auto kept = soft_nms(far);
            check("soft_nms: disjoint boxes unchanged, ordered by score",
                  kept.size() == 3 && kept[0].index == 0 && kept[1].index == 2 && kept[2].index == 1 &&
                      kept[0].score == 0.9 && kept[1].score == 0.8 && kept[2].score == 0.7);
            std::vector<ScoredBox> dup{{0, 0, 10, 10, 0.9, 0}, {0, 0, 10, 10, 0.8, 1}};
            auto kept2 = soft_nms(dup);
            check("soft_nms: exact duplicate decays to zero and drops", kept2.size() == 1 && kept2[0].index == 0);
            // IoU 0.4 pair stays intact: 10x10 boxes overlapping 10x4 -> wait, construct IoU = 4/ (100+100-40)
            std::vector<ScoredBox> mild{{0, 0, 10, 10, 0.9, 0}, {0, 4.375, 10, 14.375, 0.8, 1}};
            const double iou = box_iou(mild[0], mild[1]);
            auto kept3 = soft_nms(mild);
            check("soft_nms: IoU below threshold leaves both unchanged",
                  iou < 0.5 && kept3.size() == 2 && kept3[0].score == 0.9 && kept3[1].score == 0.8,
                  "iou " + std::to_string(iou));
        }
        {
            // train: 0 iterations leaves the model at init and logs nothing
            RunConfig cfg;
            cfg.toy.image_size = 64;
            cfg.toy.channels = 8;
            cfg.toy.stage_widths = {4, 4, 8, 8, 8};
            cfg.toy.iterations = 0;
            cfg.densefpn.channels = 8;
            cfg.densefpn.depth = 1;
            cfg.densefpn.mid_channels = 4;
            cfg.scp.channels = 8;
            cfg.hroie.channels = 8;
            Rng rng(703);
            ToyDetector det(cfg, rng);
            Rng rng2(703);
            ToyDetector ref(cfg, rng2);
            TrainResult res = train(det, cfg);
            ParamMap a = det.params();
            ParamMap b = ref.params();
            bool same = res.log.empty();
            for (auto& p : a) same = same && p.tensor.values() == b.at(p.name).tensor.values();
            check("train: 0 iterations -> empty log, checkpoint equals init", same);
        }
        {
            // determinism over a short run
            RunConfig cfg;
            cfg.toy.image_size = 64;
            cfg.toy.channels = 8;
            cfg.toy.stage_widths = {4, 4, 8, 8, 8};
            cfg.toy.iterations = 3;
            cfg.densefpn.channels = 8;
            cfg.densefpn.depth = 1;
            cfg.densefpn.mid_channels = 4;
            cfg.scp.channels = 8;
            cfg.hroie.channels = 8;
            Rng ra(704);
            ToyDetector da(cfg, ra);
            Rng rb(704);
            ToyDetector db(cfg, rb);
            TrainResult la = train(da, cfg);
            TrainResult lb2 = train(db, cfg);
            bool same = la.log.size() == lb2.log.size();
            for (size_t i = 0; same && i < la.log.size(); ++i) same = la.log[i].total == lb2.log[i].total;
            check("train: same seed, same config -> bit-identical loss curves", same);
        }
        {
            // evaluation on oracle-injected predictions and untrained recall
            Scene sc = generate_scene(42, 64, 64);
            std::vector<Prediction> perfect;
            // bins finer than 2x the box resolve pixel-exact when pasted back
            const int s_fine = 128;
            for (const Instance& inst : sc.instances) {
                Prediction p;
                p.category = inst.category;
                p.score = 1.0;
                p.x1 = inst.x1;
                p.y1 = inst.y1;
                p.x2 = inst.x2;
                p.y2 = inst.y2;
                p.mask_size = s_fine;
                p.mask_logits.resize(static_cast<size_t>(s_fine) * s_fine);
                for (int by = 0; by < s_fine; ++by)
                    for (int bx = 0; bx < s_fine; ++bx) {
                        const double cy = inst.y1 + (by + 0.5) * inst.box_h() / s_fine;
                        const double cx = inst.x1 + (bx + 0.5) * inst.box_w() / s_fine;
                        const int py = std::clamp(static_cast<int>(cy), 0, 63);
                        const int px = std::clamp(static_cast<int>(cx), 0, 63);
                        p.mask_logits[static_cast<size_t>(by) * s_fine + bx] =
                            inst.mask[static_cast<size_t>(py) * 64 + px] ? 30.0 : -30.0;
                    }
                perfect.push_back(std::move(p));
            }
            SceneScore s = score_predictions(sc, perfect);
            check("evaluate: perfect oracle predictions give recall 1 and mask IoU 1",
                  s.matched == s.total_gt &&
                      std::fabs(s.mask_iou_sum / std::max(1, s.matched) - 1.0) < 1e-12,
                  "mean IoU " + std::to_string(s.mask_iou_sum / std::max(1, s.matched)));
            // duplicates removed by soft-nms leave recall unchanged
            std::vector<Prediction> doubled = perfect;
            doubled.insert(doubled.end(), perfect.begin(), perfect.end());
            SceneScore s2 = score_predictions(sc, doubled);
            check("evaluate: duplicate predictions do not change recall", s2.matched == s.matched);
        }
        if (include_slow) {
            RunConfig cfg;  // default toy configuration
            Rng rng(static_cast<uint64_t>(cfg.seed));
            ToyDetector det(cfg, rng);
            EvalResult init_eval = evaluate(det, 5);
            check("evaluate: untrained model recall below 0.1", init_eval.recall < 0.1,
                  "recall " + std::to_string(init_eval.recall));
            TrainResult res = train(det, cfg);
            const double initial = res.log.front().total;
            const double final_loss = res.log.back().total;
            check("train: 200 iterations reach <= 50% of the initial loss", final_loss <= 0.5 * initial,
                  "initial " + std::to_string(initial) + " final " + std::to_string(final_loss));
        }
    }

    static SelfTest run_all(bool include_slow) {
        SelfTest st;
        st.run_core();
        st.run_pyramid();
        st.run_densefpn();
        st.run_scp();
        st.run_hroie();
        st.run_accounting();
        st.run_toy(include_slow);
        return st;
    }

  private:
    std::vector<CheckResult> results_;
};

}  // namespace ctxagg::verify
