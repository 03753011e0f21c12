// Central-difference verification cases covering every differentiable op and
// the module-level composites, on tiny double-precision tensors.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ctxagg/densefpn.hpp"
#include "ctxagg/grad_check.hpp"
#include "ctxagg/hroie.hpp"
#include "ctxagg/losses.hpp"
#include "ctxagg/nn_ops.hpp"
#include "ctxagg/params.hpp"
#include "ctxagg/pyramid.hpp"
#include "ctxagg/roi_align.hpp"
#include "ctxagg/scp.hpp"

namespace ctxagg::verify {

struct GradCheckCase {
    std::string name;
    GradCheckResult result;
};

inline Tensor random_input(Shape shape, Rng& rng) {
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (double& v : data) v = rng.normal();
    return Tensor::from(std::move(shape), std::move(data)).set_requires_grad();
}

inline std::vector<GradCheckCase> run_gradcheck_suite() {
    std::vector<GradCheckCase> cases;
    auto add_case = [&](const std::string& name, const std::function<Tensor()>& fn, std::vector<Tensor> params) {
        cases.push_back({name, grad_check(fn, params)});
    };

    {
        Rng rng(11);
        Tensor x = random_input({1, 2, 4, 4}, rng);
        Tensor k = random_input({3, 2, 3, 3}, rng);
        Tensor b = random_input({3}, rng);
        add_case("conv2d(stride=2,pad=1)", [&] { return sum(conv2d(x, k, b, 2, 1)); }, {x, k, b});
    }
    {
        Rng rng(12);
        Tensor x = random_input({1, 2, 6, 6}, rng);
        add_case("maxpool2d(2,2)", [&] { return sum(mul(maxpool2d(x, 2, 2), maxpool2d(x, 2, 2))); }, {x});
    }
    {
        Rng rng(13);
        Tensor x = random_input({1, 2, 3, 3}, rng);
        add_case("bilinear_resize(up 3->5)", [&] { return sum(mul(bilinear_resize(x, 5, 5), bilinear_resize(x, 5, 5))); },
                 {x});
        Tensor y = random_input({1, 2, 6, 6}, rng);
        add_case("bilinear_resize(down 6->3)", [&] { return sum(relu(bilinear_resize(y, 3, 3))); }, {y});
    }
    {
        Rng rng(14);
        Tensor x = random_input({2, 5}, rng);
        add_case("softmax(axis=1)", [&] { return sum(mul(softmax(x, 1), x)); }, {x});
    }
    {
        Rng rng(15);
        Tensor a = random_input({1, 2, 3, 3}, rng);
        Tensor b = random_input({1, 1, 3, 3}, rng);  // broadcast
        Tensor c = random_input({1, 2, 1, 1}, rng);  // broadcast
        add_case("elementwise(relu,sigmoid,add,mul,concat)",
                 [&] { return sum(concat_channels(relu(add(a, b)), sigmoid(mul(a, c)))); }, {a, b, c});
    }
    {
        Rng rng(16);
        Tensor m1 = random_input({1, 2, 2, 2}, rng);
        Tensor m2 = random_input({1, 2, 2, 2}, rng);
        Tensor w = random_input({2}, rng);
        add_case("weighted_sum+softmax_spatial",
                 [&] {
                     std::vector<Tensor> maps{m1, softmax_spatial(m2)};
                     return sum(mul(weighted_sum(maps, softmax(w, 0)), m1));
                 },
                 {m1, m2, w});
    }
    {
        Rng rng(17);
        Tensor x = random_input({2, 3, 2, 2}, rng);
        Tensor s = random_input({3}, rng);
        Tensor t = random_input({3}, rng);
        add_case("channel_affine+spatial_mean",
                 [&] { return sum(mul(spatial_mean(channel_affine(x, s, t)), spatial_sum(x))); }, {x, s, t});
    }
    {
        Rng rng(18);
        Tensor logits = random_input({3, 4}, rng);
        Tensor mask_logits = random_input({2, 3, 3}, rng);
        Tensor mask_tgt = Tensor::from({2, 3, 3}, {1, 0, 1, 0, 1, 0, 1, 1, 0, 0, 0, 1, 1, 0, 1, 0, 1, 0});
        Tensor box = random_input({2, 4}, rng);
        Tensor box_tgt = random_input({2, 4}, rng);
        box_tgt.set_requires_grad(false);
        add_case("losses(ce+bce+smooth_l1)",
                 [&] {
                     Tensor ce = cross_entropy(logits, {0, 2, 3});
                     Tensor bce = bce_with_logits(take_rows(mask_logits, {1, 0}), mask_tgt);
                     Tensor sl1 = smooth_l1(box, box_tgt);
                     return add(ce, add(bce, sl1));
                 },
                 {logits, mask_logits, box});
    }
    {
        // full DenseFPN basic block on a 3-level, tiny-spatial pyramid
        Rng rng(19);
        DenseFPNConfig cfg;
        cfg.depth = 1;
        cfg.channels = 8;
        cfg.mid_channels = 4;
        cfg.l_min = 2;
        cfg.l_max = 4;
        DenseFPN fpn(cfg, rng);
        ParamMap pm;
        fpn.collect_params(pm, "fpn");
        // zero-init expand convs have zero gradient flow through themselves
        // only at exactly zero weights; nudge all params off zero
        Rng nudge(191);
        std::vector<Tensor> params;
        for (auto& p : pm) {
            for (double& v : p.tensor.values()) v += 0.05 * nudge.normal();
            params.push_back(p.tensor);
        }
        FeaturePyramid pyr = make_synthetic_pyramid(7, 1, 8, 16, 16, 2, 4);
        for (Tensor& lvl : pyr.levels) params.push_back(lvl.set_requires_grad());
        add_case("densefpn_block(D=1,3 levels)",
                 [&] {
                     FeaturePyramid out = fpn.forward(pyr);
                     Tensor acc = sum(out.level(2));
                     acc = add(acc, sum(mul(out.level(3), out.level(3))));
                     return add(acc, sum(out.level(4)));
                 },
                 params);
    }
    {
        // CABlock forward on a 1x8x3x3 input
        Rng rng(20);
        CABlock blk(8, 1, rng);
        ParamMap pm;
        blk.collect_params(pm, "ca");
        Rng nudge(201);
        std::vector<Tensor> params;
        for (auto& p : pm) {
            for (double& v : p.tensor.values()) v += 0.1 * nudge.normal();
            params.push_back(p.tensor);
        }
        Tensor x = random_input({1, 8, 3, 3}, rng);
        params.push_back(x);
        add_case("cablock(C=8,3x3)", [&] { return sum(mul(blk.forward(x), x)); }, params);
    }
    {
        // roi_align + hierarchical fusion, both directions
        Rng rng(21);
        HRoIEConfig cfg;
        cfg.l_min = 2;
        cfg.l_max = 3;
        cfg.channels = 4;
        cfg.det_size = 2;
        cfg.mask_size = 3;
        cfg.sampling_ratio = 2;
        HRoIE hroie(cfg, rng);
        ParamMap pm;
        hroie.collect_params(pm, "hroie");
        Rng nudge(211);
        std::vector<Tensor> params;
        for (auto& p : pm) {
            for (double& v : p.tensor.values()) v += 0.2 * nudge.normal();
            params.push_back(p.tensor);
        }
        FeaturePyramid pyr = make_synthetic_pyramid(9, 1, 4, 32, 32, 2, 3);
        for (Tensor& lvl : pyr.levels) params.push_back(lvl.set_requires_grad());
        std::vector<RoI> rois{{0, 3.5, 4.0, 21.0, 27.5}, {0, 10.0, 2.0, 30.0, 14.5}};
        add_case("roi_align+fuse(det & mask)",
                 [&] {
                     Tensor det = hroie.extract(pyr, rois, RoITask::detection);
                     Tensor msk = hroie.extract(pyr, rois, RoITask::mask);
                     return add(sum(mul(det, det)), sum(msk));
                 },
                 params);
    }
    return cases;
}

}  // namespace ctxagg::verify
