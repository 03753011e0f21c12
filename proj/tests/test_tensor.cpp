#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "ctxagg/checkpoint.hpp"
#include "ctxagg/grad_check.hpp"
#include "ctxagg/losses.hpp"
#include "ctxagg/nn_ops.hpp"
#include "ctxagg/optim.hpp"
#include "ctxagg/params.hpp"
#include "ctxagg/verify/oracles.hpp"
#include "ctxagg/verify/selftest.hpp"

using namespace ctxagg;

TEST(SelfTestSections, CoreExamples) {
    verify::SelfTest st;
    st.run_core();
    for (const auto& r : st.results()) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

// ---- shape validation and error paths ----------------------------------------

TEST(Conv2d, RejectsChannelMismatchNamingBothShapes) {
    Tensor x = Tensor::zeros({1, 3, 4, 4});
    Tensor k = Tensor::zeros({2, 4, 1, 1});
    try {
        conv2d(x, k);
        FAIL() << "expected a shape diagnostic";
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[1, 3, 4, 4]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[2, 4, 1, 1]"), std::string::npos) << msg;
    }
}

TEST(Conv2d, RejectsKernelLargerThanPaddedInput) {
    Tensor x = Tensor::zeros({1, 1, 2, 2});
    Tensor k = Tensor::zeros({1, 1, 5, 5});
    EXPECT_THROW(conv2d(x, k, Tensor(), 1, 0), std::invalid_argument);
}

TEST(Maxpool2d, RejectsWindowBeyondExtentAndRaggedTiling) {
    Tensor x = Tensor::zeros({1, 1, 4, 4});
    EXPECT_THROW(maxpool2d(x, 5, 5), std::invalid_argument);
    EXPECT_THROW(maxpool2d(x, 3, 2), std::invalid_argument);
}

TEST(Maxpool2d, TieBreaksToLowestLinearIndex) {
    Tensor x = Tensor::full({1, 1, 2, 2}, 1.0).set_requires_grad();
    Tensor y = sum(maxpool2d(x, 2, 2));
    y.backward();
    EXPECT_EQ(x.grad(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(Elementwise, BroadcastRules) {
    Tensor a = Tensor::from({2, 1, 2, 1}, {1, 2, 3, 4});
    Tensor b = Tensor::from({1, 3, 1, 1}, {10, 20, 30});
    Tensor c = add(a, b);
    EXPECT_EQ(c.shape(), (Shape{2, 3, 2, 1}));
    EXPECT_DOUBLE_EQ(c.values()[0], 11);
    EXPECT_DOUBLE_EQ(c.values()[11], 34);
    Tensor bad = Tensor::zeros({2, 2, 2, 1});
    EXPECT_THROW(add(a, bad), std::invalid_argument);
    EXPECT_THROW(add(a, Tensor::zeros({2, 1, 2})), std::invalid_argument);
}

TEST(Elementwise, BroadcastGradientsReduceOverExpandedAxes) {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}).set_requires_grad();
    Tensor b = Tensor::from({1, 2}, {5, 7}).set_requires_grad();
    sum(mul(a, b)).backward();
    EXPECT_EQ(a.grad(), (std::vector<double>{5, 7, 5, 7}));
    EXPECT_EQ(b.grad(), (std::vector<double>{1 + 3, 2 + 4}));
}

TEST(Concat, RejectsMismatchedShapesOutsideAxis) {
    Tensor a = Tensor::zeros({1, 2, 2, 2});
    Tensor b = Tensor::zeros({1, 3, 2, 3});
    EXPECT_THROW(concat_channels(a, b), std::invalid_argument);
}

TEST(TakeRows, RejectsOutOfRange) {
    Tensor a = Tensor::zeros({3, 2});
    EXPECT_THROW(take_rows(a, {3}), std::out_of_range);
}

// ---- softmax properties --------------------------------------------------------

TEST(Softmax, SumsToOneUpToMagnitude1e3) {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const double mag = trial < 25 ? 1.0 : 1e3;
        std::vector<double> vals(9);
        for (double& v : vals) v = mag * rng.uniform(-1.0, 1.0);
        Tensor x = Tensor::from({3, 3}, vals);
        Tensor y = softmax(x, 1);
        for (int r = 0; r < 3; ++r) {
            double s = 0;
            for (int c = 0; c < 3; ++c) {
                const double v = y.values()[static_cast<size_t>(r * 3 + c)];
                EXPECT_GT(v, 0.0);
                s += v;
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

// ---- autodiff engine -------------------------------------------------------------

TEST(Tape, DiamondGraphVisitsEachOpOnce) {
    Tensor x = Tensor::from({1}, {3.0}).set_requires_grad();
    Tensor y = add(x, x);       // y = 2x
    Tensor z = sum(mul(y, y));  // z = 4x^2, dz/dx = 8x = 24
    z.backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 24.0);
}

TEST(Tape, GradAccumulatesAcrossBackwardCallsUntilZeroed) {
    Tensor x = Tensor::from({1}, {2.0}).set_requires_grad();
    sum(mul(x, x)).backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
    sum(mul(x, x)).backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
    x.zero_grad();
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Tape, NoGradGuardRecordsNothing) {
    Tensor x = Tensor::from({1}, {2.0}).set_requires_grad();
    NoGradGuard ng;
    Tensor y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
}

TEST(Tape, ForwardIsDeterministic) {
    auto run = [] {
        Rng rng(123);
        Tensor x = verify::random_input({1, 3, 8, 8}, rng);
        Tensor k = verify::random_input({4, 3, 3, 3}, rng);
        Tensor b = verify::random_input({4}, rng);
        return softmax(reshape(spatial_mean(sigmoid(conv2d(x, k, b, 2, 1))), {1, 4}), 1).values();
    };
    EXPECT_EQ(run(), run());
}

TEST(GradCheck, ReportsNonFiniteCoordinates) {
    Tensor x = Tensor::from({2}, {1.0, 0.0}).set_requires_grad();
    // log(x) produces -inf at x=0 probes
    auto fn = [&] {
        Tensor y = detail::unary_op(
            x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
        return sum(y);
    };
    EXPECT_THROW(grad_check(fn, {x}), std::runtime_error);
}

TEST(GradCheck, BilinearAndRoiAlignWithinTolerance) {
    Rng rng(5);
    Tensor x = verify::random_input({1, 2, 5, 5}, rng);
    auto res = grad_check([&] { return sum(mul(bilinear_resize(x, 8, 8), bilinear_resize(x, 8, 8))); }, {x});
    EXPECT_LT(res.max_rel_error, 1e-6) << res.worst_coordinate;
}

// ---- optimizer --------------------------------------------------------------------

TEST(Sgd, WeightDecayEntersTheMomentumBuffer) {
    std::vector<std::vector<double>> bufs;
    Tensor p = Tensor::scalar(2.0).set_requires_grad();
    p.grad()[0] = 1.0;
    std::vector<Tensor> ps{p};
    sgd_step(ps, 0.1, 0.0, 0.5, bufs);
    // buf = 1 + 0.5*2 = 2; p = 2 - 0.2
    EXPECT_NEAR(p.item(), 1.8, 1e-15);
}

TEST(Sgd, OptimizerZeroesGradsBetweenSteps) {
    ParamMap pm;
    pm.add("p", Tensor::scalar(1.0).set_requires_grad());
    SgdOptimizer opt(pm, 0.1, 0.9, 0.0);
    pm.at("p").tensor.grad()[0] = 1.0;
    opt.step();
    EXPECT_DOUBLE_EQ(pm.at("p").tensor.grad()[0], 0.0);
}

TEST(Params, DuplicateNamesRejected) {
    ParamMap pm;
    pm.add("a", Tensor::scalar(1.0).set_requires_grad());
    EXPECT_THROW(pm.add("a", Tensor::scalar(2.0).set_requires_grad()), std::invalid_argument);
}

// ---- checkpoint -----------------------------------------------------------------------

TEST(Checkpoint, BitExactRoundTripWithManifest) {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "ctxagg_ckpt_test.ckpt").string();
    Rng rng(9);
    ParamMap pm;
    pm.add("m/weight", verify::random_input({3, 2, 1, 1}, rng), "fanin_uniform(2)");
    pm.add("m/bias", verify::random_input({3}, rng), "zeros");
    // exercise non-trivial bit patterns
    pm.at("m/bias").tensor.values()[0] = -0.0;
    pm.at("m/bias").tensor.values()[1] = 1e-308;
    CheckpointManifest manifest;
    manifest.seed = 42;
    manifest.config = {{"note", "roundtrip"}};
    save_checkpoint(path, pm, manifest);

    ParamMap pm2;
    pm2.add("m/weight", Tensor::zeros({3, 2, 1, 1}).set_requires_grad());
    pm2.add("m/bias", Tensor::zeros({3}).set_requires_grad());
    CheckpointManifest loaded = load_checkpoint(path, pm2);
    EXPECT_EQ(loaded.seed, 42u);
    EXPECT_EQ(loaded.precision, "f64");
    for (const auto& p : pm) {
        const auto& a = p.tensor.values();
        const auto& b = pm2.at(p.name).tensor.values();
        ASSERT_EQ(a.size(), b.size());
        for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(std::memcmp(&a[i], &b[i], sizeof(double)), 0) << p.name << i;
    }
    fs::remove(path);
}

TEST(Checkpoint, StrictLoadRejectsMismatches) {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "ctxagg_ckpt_test2.ckpt").string();
    ParamMap pm;
    pm.add("a", Tensor::zeros({2}).set_requires_grad());
    save_checkpoint(path, pm, {});
    ParamMap wrong_shape;
    wrong_shape.add("a", Tensor::zeros({3}).set_requires_grad());
    EXPECT_THROW(load_checkpoint(path, wrong_shape), std::runtime_error);
    ParamMap wrong_name;
    wrong_name.add("b", Tensor::zeros({2}).set_requires_grad());
    EXPECT_THROW(load_checkpoint(path, wrong_name), std::out_of_range);
    fs::remove(path);
}

TEST(Checkpoint, RejectsCorruptFiles) {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "ctxagg_ckpt_bad.ckpt").string();
    {
        std::ofstream os(path, std::ios::binary);
        os << "not an archive";
    }
    EXPECT_THROW(read_archive(path), std::runtime_error);
    fs::remove(path);
}

// ---- losses ------------------------------------------------------------------------------

TEST(Losses, CrossEntropyMatchesManualComputation) {
    Tensor logits = Tensor::from({1, 3}, {1.0, 2.0, 3.0});
    Tensor loss = cross_entropy(logits, {2});
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    EXPECT_NEAR(loss.item(), std::log(z) - 3.0, 1e-12);
    EXPECT_THROW(cross_entropy(logits, {3}), std::out_of_range);
}

TEST(Losses, BceWithLogitsIsStableAtLargeMagnitudes) {
    Tensor logits = Tensor::from({2}, {1000.0, -1000.0});
    Tensor targets = Tensor::from({2}, {1.0, 0.0});
    EXPECT_NEAR(bce_with_logits(logits, targets).item(), 0.0, 1e-12);
    Tensor flipped = Tensor::from({2}, {0.0, 1.0});
    EXPECT_NEAR(bce_with_logits(logits, flipped).item(), 1000.0, 1e-9);
}

TEST(Losses, SmoothL1QuadraticAndLinearRegimes) {
    Tensor pred = Tensor::from({2}, {0.5, 3.0});
    Tensor tgt = Tensor::from({2}, {0.0, 0.0});
    EXPECT_NEAR(smooth_l1(pred, tgt).item(), (0.5 * 0.25 + 2.5) / 2.0, 1e-12);
}
