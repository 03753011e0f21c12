#include <gtest/gtest.h>

#include <sstream>

#include "ctxagg/toy/detector.hpp"
#include "ctxagg/toy/scene.hpp"
#include "ctxagg/toy/train.hpp"
#include "ctxagg/verify/selftest.hpp"

using namespace ctxagg;

namespace {

// small config used across the toy unit tests
RunConfig tiny_config() {
    RunConfig cfg;
    cfg.toy.image_size = 64;
    cfg.toy.channels = 8;
    cfg.toy.stage_widths = {4, 4, 8, 8, 8};
    cfg.toy.batch = 1;
    cfg.toy.iterations = 2;
    cfg.densefpn.channels = 8;
    cfg.densefpn.depth = 1;
    cfg.densefpn.mid_channels = 4;
    cfg.scp.channels = 8;
    cfg.hroie.channels = 8;
    return cfg;
}

}  // namespace

TEST(SelfTestSections, ToyExamples) {
    verify::SelfTest st;
    st.run_toy(false);
    for (const auto& r : st.results()) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

TEST(Scene, BoxContractHoldsOverManySeeds) {
    for (uint64_t s = 0; s < 10000; ++s) {
        Scene sc = generate_scene(s);
        ASSERT_GE(sc.instances.size(), 1u);
        for (const Instance& inst : sc.instances) {
            ASSERT_GT(inst.x2, inst.x1);
            ASSERT_GT(inst.y2, inst.y1);
            ASSERT_GE(inst.x1, 0.0);
            ASSERT_GE(inst.y1, 0.0);
            ASSERT_LE(inst.x2, 128.0);
            ASSERT_LE(inst.y2, 128.0);
            ASSERT_GE(inst.category, 1);
            ASSERT_LE(inst.category, kSceneClassCount);
        }
    }
}

TEST(Scene, MasksLieWithinBoxes) {
    for (uint64_t s = 0; s < 200; ++s) {
        Scene sc = generate_scene(s, 64, 64);
        for (const Instance& inst : sc.instances) {
            for (int y = 0; y < 64; ++y)
                for (int x = 0; x < 64; ++x) {
                    if (!inst.mask[static_cast<size_t>(y) * 64 + x]) continue;
                    ASSERT_GE(x + 0.5, inst.x1);
                    ASSERT_LT(x + 0.5, inst.x2);
                    ASSERT_GE(y + 0.5, inst.y1);
                    ASSERT_LT(y + 0.5, inst.y2);
                }
        }
    }
}

TEST(Proposals, JitteredBoxesStayPositiveMatches) {
    Rng rng(3);
    int checked = 0;
    for (uint64_t s = 0; s < 100; ++s) {
        Scene sc = generate_scene(s, 64, 64);
        auto props = jittered_proposals(sc, 0, 0.1, rng);
        ASSERT_EQ(props.size(), sc.instances.size());
        for (size_t i = 0; i < props.size(); ++i) {
            const Instance& inst = sc.instances[i];
            const double iou =
                iou_xyxy(props[i].x1, props[i].y1, props[i].x2, props[i].y2, inst.x1, inst.y1, inst.x2, inst.y2);
            ASSERT_GE(iou, 0.5) << "seed " << s << " instance " << i;
            ++checked;
        }
    }
    EXPECT_GT(checked, 100);
}

TEST(Proposals, GridCoversTheImageInBounds) {
    auto grid = grid_proposals(128, 128);
    EXPECT_GT(grid.size(), 100u);
    for (const RoI& r : grid) {
        EXPECT_GE(r.x1, 0.0);
        EXPECT_GE(r.y1, 0.0);
        EXPECT_LE(r.x2, 128.0);
        EXPECT_LE(r.y2, 128.0);
        EXPECT_GT(r.x2, r.x1);
    }
}

TEST(Matching, LowIoUProposalsAreBackground) {
    Scene sc = generate_scene(11, 64, 64);
    std::vector<RoI> props{{0, 0.0, 0.0, 3.0, 3.0}};  // tiny corner box
    ProposalTargets t = match_proposals({sc}, props, 14);
    ASSERT_EQ(t.labels.size(), 1u);
    EXPECT_EQ(t.labels[0], 0);
    EXPECT_TRUE(t.positive_rows.empty());
    EXPECT_TRUE(t.mask_bins.empty());
}

TEST(Matching, ExactProposalGetsTightTargets) {
    Scene sc = generate_scene(12, 64, 64);
    const Instance& inst = sc.instances[0];
    std::vector<RoI> props{{0, inst.x1, inst.y1, inst.x2, inst.y2}};
    ProposalTargets t = match_proposals({sc}, props, 8);
    ASSERT_EQ(t.positive_rows.size(), 1u);
    EXPECT_EQ(t.labels[0], inst.category);
    for (double d : t.box_deltas) EXPECT_NEAR(d, 0.0, 1e-12);
    double fill = 0;
    for (double v : t.mask_bins) fill += v;
    fill /= static_cast<double>(t.mask_bins.size());
    if (inst.category == 1)
        EXPECT_GT(fill, 0.9);
    else
        EXPECT_GT(fill, 0.5);
}

TEST(Losses, NoPositivesGiveZeroBoxAndMaskLoss) {
    ToyDetector::Outputs out;
    out.cls_logits = Tensor::from({2, 3}, {0, 0, 0, 0, 0, 0}).set_requires_grad();
    out.box_deltas = Tensor::zeros({2, 4});
    out.mask_logits = Tensor::zeros({2, 4, 4});
    ProposalTargets t;
    t.labels = {0, 0};
    auto [total, lb] = compute_losses(out, t);
    EXPECT_EQ(lb.box, 0.0);
    EXPECT_EQ(lb.mask, 0.0);
    EXPECT_NEAR(lb.cls, std::log(3.0), 1e-12);
    EXPECT_NEAR(total.item(), lb.total, 1e-15);
}

TEST(BoxCoding, EncodeDecodeRoundTrip) {
    RoI prop{0, 10.0, 20.0, 50.0, 44.0};
    const double gx1 = 12.0, gy1 = 18.0, gx2 = 55.0, gy2 = 46.0;
    BoxDelta d = encode_box(prop, gx1, gy1, gx2, gy2);
    RoI back = decode_box(prop, d, 128, 128);
    EXPECT_NEAR(back.x1, gx1, 1e-9);
    EXPECT_NEAR(back.y1, gy1, 1e-9);
    EXPECT_NEAR(back.x2, gx2, 1e-9);
    EXPECT_NEAR(back.y2, gy2, 1e-9);
}

TEST(Train, MetricsCsvHasHeaderAndOneRowPerIteration) {
    RunConfig cfg = tiny_config();
    cfg.toy.iterations = 3;
    Rng rng(5);
    ToyDetector det(cfg, rng);
    std::ostringstream os;
    train(det, cfg, &os);
    std::istringstream is(os.str());
    std::string line;
    ASSERT_TRUE(std::getline(is, line));
    EXPECT_EQ(line, "iteration,cls_loss,box_loss,mask_loss,total");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 3);
}

TEST(Train, ZeroIterationsWritesHeaderOnly) {
    RunConfig cfg = tiny_config();
    cfg.toy.iterations = 0;
    Rng rng(6);
    ToyDetector det(cfg, rng);
    std::ostringstream os;
    TrainResult res = train(det, cfg, &os);
    EXPECT_TRUE(res.log.empty());
    EXPECT_EQ(os.str(), "iteration,cls_loss,box_loss,mask_loss,total\n");
}

TEST(Train, LossesAreFiniteAndPositive) {
    RunConfig cfg = tiny_config();
    cfg.toy.iterations = 4;
    Rng rng(7);
    ToyDetector det(cfg, rng);
    TrainResult res = train(det, cfg);
    for (const LossBreakdown& lb : res.log) {
        EXPECT_TRUE(std::isfinite(lb.total));
        EXPECT_GE(lb.cls, 0.0);
        EXPECT_GE(lb.box, 0.0);
        EXPECT_GE(lb.mask, 0.0);
        EXPECT_NEAR(lb.total, lb.cls + lb.box + lb.mask, 1e-12);
    }
}

// every on/off combination of the three modules constructs, trains briefly,
// and stays finite
TEST(Train, AblationMatrixTrainsFinitely) {
    for (int mask = 0; mask < 8; ++mask) {
        RunConfig cfg = tiny_config();
        cfg.modules.densefpn = mask & 1;
        cfg.modules.scp = mask & 2;
        cfg.modules.hroie = mask & 4;
        cfg.toy.iterations = 3;
        cfg.validate();
        Rng rng(100 + static_cast<uint64_t>(mask));
        ToyDetector det(cfg, rng);
        TrainResult res = train(det, cfg);
        ASSERT_EQ(res.log.size(), 3u) << "combo " << mask;
        for (const LossBreakdown& lb : res.log) ASSERT_TRUE(std::isfinite(lb.total)) << "combo " << mask;
    }
}

TEST(Detector, CheckpointRoundTripPreservesForward) {
    namespace fs = std::filesystem;
    RunConfig cfg = tiny_config();
    Rng rng(8);
    ToyDetector det(cfg, rng);
    Scene sc = generate_scene(1, 64, 64);
    Rng prng(81);
    std::vector<RoI> props = jittered_proposals(sc, 0, 0.05, prng);
    auto before = det.forward(stack_images({sc}), props);
    const std::string path = (fs::temp_directory_path() / "ctxagg_det.ckpt").string();
    ParamMap pm = det.params();
    save_checkpoint(path, pm, {});
    Rng rng2(999);  // different init
    ToyDetector det2(cfg, rng2);
    ParamMap pm2 = det2.params();
    load_checkpoint(path, pm2);
    auto after = det2.forward(stack_images({sc}), props);
    EXPECT_EQ(before.cls_logits.values(), after.cls_logits.values());
    EXPECT_EQ(before.mask_logits.values(), after.mask_logits.values());
    fs::remove(path);
}

TEST(Eval, UntrainedModelHasNearZeroRecall) {
    RunConfig cfg = tiny_config();
    Rng rng(9);
    ToyDetector det(cfg, rng);
    EvalResult r = evaluate(det, 2);
    EXPECT_LT(r.recall, 0.1);
}

TEST(Eval, GtProposalModeRunsDeterministically) {
    RunConfig cfg = tiny_config();
    Rng rng(10);
    ToyDetector det(cfg, rng);
    EvalResult a = evaluate(det, 2, ProposalMode::gt_jitter, 0.05);
    EvalResult b = evaluate(det, 2, ProposalMode::gt_jitter, 0.05);
    EXPECT_EQ(a.recall, b.recall);
    EXPECT_EQ(a.mean_mask_iou, b.mean_mask_iou);
    EXPECT_EQ(a.total_gt, b.total_gt);
}
