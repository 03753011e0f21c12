#include <gtest/gtest.h>

#include "ctxagg/hroie.hpp"
#include "ctxagg/scp.hpp"
#include "ctxagg/verify/selftest.hpp"

using namespace ctxagg;

TEST(SelfTestSections, SCPExamples) {
    verify::SelfTest st;
    st.run_scp();
    for (const auto& r : st.results()) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

TEST(SelfTestSections, HRoIEExamples) {
    verify::SelfTest st;
    st.run_hroie();
    for (const auto& r : st.results()) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

// (Q - P) is a rank-1 outer product of the context vector and the gate map:
// (Q^j - P^j) / a^j is the same C-vector at every pixel
static void expect_rank_one_residual(const CABlock& blk, const Tensor& p) {
    const int64_t n = p.dim(0), c = p.dim(1), hw = p.dim(2) * p.dim(3);
    Tensor q = blk.forward(p);
    Tensor gate = blk.gate_map(p);
    for (int64_t b = 0; b < n; ++b) {
        std::vector<double> ref(static_cast<size_t>(c), 0.0);
        bool have_ref = false;
        for (int64_t j = 0; j < hw; ++j) {
            const double a = gate.values()[static_cast<size_t>(b * hw + j)];
            if (a <= 1e-30) continue;
            std::vector<double> vec(static_cast<size_t>(c));
            for (int64_t ch = 0; ch < c; ++ch) {
                const size_t idx = static_cast<size_t>((b * c + ch) * hw + j);
                vec[static_cast<size_t>(ch)] = (q.values()[idx] - p.values()[idx]) / a;
            }
            if (!have_ref) {
                ref = vec;
                have_ref = true;
                continue;
            }
            for (int64_t ch = 0; ch < c; ++ch) {
                const double denom = std::max(1.0, std::fabs(ref[static_cast<size_t>(ch)]));
                EXPECT_NEAR(vec[static_cast<size_t>(ch)], ref[static_cast<size_t>(ch)], 1e-9 * denom);
            }
        }
        EXPECT_TRUE(have_ref);
    }
}

TEST(SCP, RankOneResidualAndGateNormalization) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed * 31 + 7);
        CABlock blk(6, 1, rng);
        Tensor p = verify::random_input({2, 6, 3, 4}, rng);
        expect_rank_one_residual(blk, p);
        Tensor gate = blk.gate_map(p);
        for (int64_t b = 0; b < 2; ++b) {
            double s = 0;
            for (int64_t j = 0; j < 12; ++j) s += gate.values()[static_cast<size_t>(b * 12 + j)];
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

// with the gate forced uniform the block is a plain global-context block with
// scaling 1/N: Q = P + (1/N) * Refine(sum_m alpha_m w_v P_m)
TEST(SCP, UniformGateReducesToGlobalContextBlock) {
    Rng rng(55);
    CABlock blk(5, 1, rng);
    std::fill(blk.gate_weight().values().begin(), blk.gate_weight().values().end(), 0.0);
    std::fill(blk.gate_bias().values().begin(), blk.gate_bias().values().end(), 0.0);
    Tensor p = verify::random_input({1, 5, 3, 3}, rng);
    Tensor q = blk.forward(p);
    // hand-built reference
    Tensor alpha = blk.attention_map(p);
    Tensor ctx = blk.context_vector(p, alpha);
    const int64_t hw = 9;
    for (int64_t ch = 0; ch < 5; ++ch)
        for (int64_t j = 0; j < hw; ++j) {
            const size_t idx = static_cast<size_t>(ch * hw + j);
            const double want = p.values()[idx] + ctx.values()[static_cast<size_t>(ch)] / static_cast<double>(hw);
            EXPECT_NEAR(q.values()[idx], want, 1e-12);
        }
}

TEST(SCP, ReductionPathParamsMatchRegistry) {
    Rng rng(66);
    SCPConfig cfg;
    cfg.levels = {2, 3};
    cfg.channels = 16;
    cfg.reduction = 4;
    SCP scp(cfg, rng);
    CostReport rep = scp_params(cfg);
    EXPECT_EQ(rep.params_with_affine(), live_param_count(scp));
    EXPECT_GT(rep.affine, 0);
}

TEST(SCP, ReductionBlockIsIdentityAtInitAndGradChecks) {
    Rng rng(67);
    CABlock blk(8, 2, rng);
    Tensor p = verify::random_input({1, 8, 2, 2}, rng);
    // zero-initialized second refinement conv: block starts as identity
    EXPECT_EQ(blk.forward(p).values(), p.values());
    ParamMap pm;
    blk.collect_params(pm, "ca");
    Rng nudge(671);
    std::vector<Tensor> params;
    for (auto& pr : pm) {
        for (double& v : pr.tensor.values()) v += 0.1 * nudge.normal();
        params.push_back(pr.tensor);
    }
    params.push_back(p);
    auto res = grad_check([&] { return sum(mul(blk.forward(p), p)); }, params);
    EXPECT_LT(res.max_rel_error, 1e-6) << res.worst_coordinate;
}

TEST(SCP, MissingConfiguredLevelRejected) {
    Rng rng(68);
    SCPConfig cfg;
    cfg.levels = {2, 5};
    cfg.channels = 4;
    SCP scp(cfg, rng);
    FeaturePyramid pyr = make_synthetic_pyramid(1, 1, 4, 16, 16, 2, 4);
    EXPECT_THROW(scp.forward(pyr), std::invalid_argument);
}

// ---- hroie ------------------------------------------------------------------------

TEST(HRoIE, BottomUpAndTopDownDifferForGenericWeights) {
    HRoIEConfig cfg;
    cfg.l_min = 2;
    cfg.l_max = 4;
    cfg.channels = 4;
    cfg.det_size = 3;
    Rng rng(77);
    HRoIE h(cfg, rng);
    Rng nudge(771);
    for (auto& cell : h.detection_cells()) {
        for (double& v : cell.weight.values()) v = 0.5 * nudge.normal();
        for (double& v : cell.bias.values()) v = 0.2 * nudge.normal();
    }
    FeaturePyramid pyr = make_synthetic_pyramid(23, 1, 4, 32, 32, 2, 4);
    std::vector<RoI> rois{{0, 3.0, 2.0, 27.0, 29.0}};
    std::vector<Tensor> crops;
    for (int l = 2; l <= 4; ++l)
        crops.push_back(roi_align(pyr.level(l), rois, 3, 2, 1.0 / (1 << l)));
    Tensor up = h.fuse(crops, FusionDirection::bottom_up, h.detection_cells());
    Tensor down = h.fuse(crops, FusionDirection::top_down, h.detection_cells());
    double diff = 0;
    for (size_t i = 0; i < up.values().size(); ++i) diff += std::fabs(up.values()[i] - down.values()[i]);
    EXPECT_GT(diff, 0.0);
}

TEST(HRoIE, DetectionAndMaskPathsShareNoParameters) {
    HRoIEConfig cfg;
    Rng rng(78);
    HRoIE h(cfg, rng);
    ParamMap pm;
    h.collect_params(pm, "hroie");
    size_t det = 0, mask = 0;
    for (const auto& p : pm) {
        const bool is_det = p.name.find("/detection/") != std::string::npos;
        const bool is_mask = p.name.find("/mask/") != std::string::npos;
        EXPECT_TRUE(is_det || is_mask) << p.name;
        EXPECT_FALSE(is_det && is_mask) << p.name;
        det += is_det;
        mask += is_mask;
    }
    EXPECT_EQ(det, mask);
    EXPECT_EQ(det + mask, pm.size());
}

TEST(HRoIE, FuseRejectsLevelCellMismatch) {
    HRoIEConfig cfg;
    cfg.l_min = 2;
    cfg.l_max = 3;
    cfg.channels = 2;
    Rng rng(79);
    HRoIE h(cfg, rng);
    std::vector<Tensor> crops{Tensor::zeros({1, 2, 3, 3})};
    EXPECT_THROW(h.fuse(crops, FusionDirection::bottom_up, h.detection_cells()), std::invalid_argument);
}

TEST(RoiAlign, RejectsDegenerateAndOutOfBatchRois) {
    Tensor map = Tensor::zeros({1, 2, 8, 8});
    RoI degenerate{0, 3.0, 3.0, 3.0, 5.0};
    EXPECT_THROW(roi_align(map, std::span<const RoI>(&degenerate, 1), 2, 2, 1.0), std::invalid_argument);
    RoI bad_batch{2, 1.0, 1.0, 5.0, 5.0};
    EXPECT_THROW(roi_align(map, std::span<const RoI>(&bad_batch, 1), 2, 2, 1.0), std::invalid_argument);
}

TEST(RoiAlign, ClipRoiClampsToImageBounds) {
    RoI r{0, -5.0, -2.0, 200.0, 90.0};
    RoI c = clip_roi(r, 128, 64);
    EXPECT_EQ(c.x1, 0.0);
    EXPECT_EQ(c.y1, 0.0);
    EXPECT_EQ(c.x2, 128.0);
    EXPECT_EQ(c.y2, 64.0);
}

TEST(RoiAlign, BatchIndexSelectsTheRightImage) {
    std::vector<double> data(2 * 1 * 4 * 4);
    for (size_t i = 0; i < 16; ++i) data[i] = 1.0;
    for (size_t i = 16; i < 32; ++i) data[i] = 5.0;
    Tensor map = Tensor::from({2, 1, 4, 4}, std::move(data));
    std::vector<RoI> rois{{0, 0.0, 0.0, 4.0, 4.0}, {1, 0.0, 0.0, 4.0, 4.0}};
    Tensor crop = roi_align(map, rois, 2, 2, 1.0);
    EXPECT_DOUBLE_EQ(crop.values().front(), 1.0);
    EXPECT_DOUBLE_EQ(crop.values().back(), 5.0);
}
