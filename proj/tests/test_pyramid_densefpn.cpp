#include <gtest/gtest.h>

#include "ctxagg/accounting.hpp"
#include "ctxagg/densefpn.hpp"
#include "ctxagg/pyramid.hpp"
#include "ctxagg/verify/selftest.hpp"

using namespace ctxagg;

TEST(SelfTestSections, PyramidExamples) {
    verify::SelfTest st;
    st.run_pyramid();
    for (const auto& r : st.results()) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

TEST(SelfTestSections, DenseFPNExamples) {
    verify::SelfTest st;
    st.run_densefpn();
    for (const auto& r : st.results()) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

TEST(FeaturePyramid, ValidateRejectsNonHalvingSizes) {
    FeaturePyramid pyr;
    pyr.l_min = 2;
    pyr.levels.push_back(Tensor::zeros({1, 4, 8, 8}));
    pyr.levels.push_back(Tensor::zeros({1, 4, 5, 5}));
    EXPECT_THROW(pyr.validate(), std::invalid_argument);
    FeaturePyramid chans;
    chans.l_min = 2;
    chans.levels.push_back(Tensor::zeros({1, 4, 8, 8}));
    chans.levels.push_back(Tensor::zeros({1, 3, 4, 4}));
    EXPECT_THROW(chans.validate(), std::invalid_argument);
}

TEST(FeaturePyramid, LateralReducerRejectsNonHalvingBackbone) {
    Rng rng(1);
    LateralReducer lat({4, 4}, 2, 8, rng);
    std::vector<Tensor> feats{Tensor::zeros({1, 4, 8, 8}), Tensor::zeros({1, 4, 6, 6})};
    EXPECT_THROW(lat.forward(feats), std::invalid_argument);
}

// with zero biases the reduction is linear: f(a*x) = a*f(x)
TEST(FeaturePyramid, LateralsAreLinearWithZeroBias) {
    Rng rng(2);
    LateralReducer lat({3, 5, 2, 4}, 2, 6, rng);
    Rng drng(3);
    std::vector<Tensor> feats, scaled;
    std::vector<int64_t> cs{3, 5, 2, 4};
    int64_t hw = 32;
    const double a = -2.5;
    for (int i = 0; i < 4; ++i, hw /= 2) {
        Tensor t = verify::random_input({2, cs[static_cast<size_t>(i)], hw, hw}, drng);
        feats.push_back(t);
        std::vector<double> sv = t.values();
        for (double& v : sv) v *= a;
        scaled.push_back(Tensor::from(t.shape(), std::move(sv)));
    }
    FeaturePyramid base = lat.forward(feats);
    FeaturePyramid sc = lat.forward(scaled);
    for (int l = 2; l <= 6; ++l) {
        const auto& bv = base.level(l).values();
        const auto& sv = sc.level(l).values();
        for (size_t i = 0; i < bv.size(); ++i) ASSERT_NEAR(sv[i], a * bv[i], 1e-12);
    }
}

TEST(FeaturePyramid, SyntheticRejectsIndivisibleSizes) {
    EXPECT_THROW(make_synthetic_pyramid(0, 1, 4, 48, 48, 2, 6), std::invalid_argument);
}

TEST(FeaturePyramid, SavePyramidArchivesEveryLevel) {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "ctxagg_pyr.ckpt").string();
    FeaturePyramid pyr = make_synthetic_pyramid(4, 1, 3, 32, 32, 2, 4);
    save_pyramid(pyr, path);
    Archive a = read_archive(path);
    ASSERT_EQ(a.entries.size(), 3u);
    for (int l = 2; l <= 4; ++l) {
        const ArchiveEntry& e = a.at("pyramid/l" + std::to_string(l));
        EXPECT_EQ(e.shape, pyr.level(l).shape());
        EXPECT_EQ(e.data, pyr.level(l).values());
    }
    fs::remove(path);
}

// ---- densefpn ------------------------------------------------------------------

TEST(DenseFPN, ChannelMismatchRejected) {
    DenseFPNConfig cfg;
    cfg.depth = 1;
    cfg.channels = 8;
    cfg.mid_channels = 4;
    cfg.l_min = 2;
    cfg.l_max = 3;
    Rng rng(5);
    DenseFPN fpn(cfg, rng);
    FeaturePyramid pyr = make_synthetic_pyramid(0, 1, 4, 16, 16, 2, 3);
    EXPECT_THROW(fpn.forward(pyr), std::invalid_argument);
}

TEST(DenseFPN, ParamCountGrowsExactlyLinearlyInDepthTinyConfig) {
    std::vector<int64_t> counts;
    for (int d = 1; d <= 4; ++d) {
        DenseFPNConfig cfg;
        cfg.depth = d;
        cfg.channels = 8;
        cfg.mid_channels = 4;
        cfg.l_min = 2;
        cfg.l_max = 4;
        Rng rng(6);
        DenseFPN fpn(cfg, rng);
        counts.push_back(live_param_count(fpn));
        EXPECT_EQ(counts.back(), densefpn_params(cfg).params_with_affine());
    }
    const int64_t delta = counts[1] - counts[0];
    for (size_t i = 2; i < counts.size(); ++i) EXPECT_EQ(counts[i] - counts[i - 1], delta);
}

TEST(DenseFPN, NormAffineCountsReportedSeparately) {
    DenseFPNConfig cfg;
    cfg.depth = 2;
    cfg.channels = 8;
    cfg.mid_channels = 4;
    cfg.l_min = 2;
    cfg.l_max = 4;
    cfg.norm_affine = true;
    Rng rng(7);
    DenseFPN fpn(cfg, rng);
    CostReport rep = densefpn_params(cfg);
    EXPECT_EQ(rep.params_with_affine(), live_param_count(fpn));
    EXPECT_GT(rep.affine, 0);
    cfg.norm_affine = false;
    EXPECT_EQ(densefpn_params(cfg).params_with_affine(), rep.params_without_affine());
}

// after one backward pass on a generic input, every raw re-weight entry has a
// nonzero gradient
TEST(DenseFPN, GradientReachesEveryReweightEntry) {
    DenseFPNConfig cfg;
    cfg.depth = 1;
    cfg.channels = 4;
    cfg.mid_channels = 2;
    cfg.l_min = 2;
    cfg.l_max = 5;
    Rng rng(8);
    DenseFPN fpn(cfg, rng);
    ParamMap pm;
    fpn.collect_params(pm, "f");
    Rng nudge(81);
    for (auto& p : pm)
        for (double& v : p.tensor.values()) v += 0.2 * nudge.normal();
    FeaturePyramid pyr = make_synthetic_pyramid(17, 1, 4, 32, 32, 2, 5);
    FeaturePyramid out = fpn.forward(pyr);
    Tensor loss = sum(mul(out.level(2), out.level(2)));
    for (int l = 3; l <= 5; ++l) loss = add(loss, sum(mul(out.level(l), out.level(l))));
    loss.backward();
    for (const auto& p : pm) {
        if (p.name.find("reweight") == std::string::npos) continue;
        for (double g : p.tensor.grad()) EXPECT_NE(g, 0.0) << p.name;
    }
}

// softmax of the raw vectors always sums to 1, including after optimizer steps
TEST(DenseFPN, NormalizedWeightsSumToOneAfterSteps) {
    DenseFPNConfig cfg;
    cfg.depth = 1;
    cfg.channels = 4;
    cfg.mid_channels = 2;
    cfg.l_min = 2;
    cfg.l_max = 4;
    Rng rng(9);
    DenseFPN fpn(cfg, rng);
    ParamMap pm;
    fpn.collect_params(pm, "f");
    SgdOptimizer opt(pm, 0.05, 0.9, 1e-4);
    FeaturePyramid pyr = make_synthetic_pyramid(19, 1, 4, 16, 16, 2, 4);
    for (int step = 0; step < 3; ++step) {
        FeaturePyramid out = fpn.forward(pyr);
        Tensor loss = sum(mul(out.level(2), out.level(2)));
        loss.backward();
        opt.step();
        for (int l = 2; l <= 4; ++l) {
            const Tensor& raw = fpn.block(0).topdown_raw(l);
            if (!raw.defined()) continue;
            double s = 0;
            for (double v : normalize_weights(raw).values()) s += v;
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(DenseFPN, NormalizeWeightsRejectsEmpty) {
    EXPECT_THROW(normalize_weights(Tensor::zeros({0})), std::invalid_argument);
    EXPECT_THROW(normalize_weights(Tensor::zeros({2, 2})), std::invalid_argument);
}
