#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "ctxagg/accounting.hpp"
#include "ctxagg/config.hpp"
#include "ctxagg/export_maps.hpp"
#include "ctxagg/soft_nms.hpp"
#include "ctxagg/verify/selftest.hpp"

using namespace ctxagg;
namespace fs = std::filesystem;

TEST(SelfTestSections, AccountingExamples) {
    verify::SelfTest st;
    st.run_accounting();
    for (const auto& r : st.results()) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}

TEST(Accounting, AnalyticCountsMatchRegistryAcrossConfigMatrix) {
    Rng rng(31);
    for (int64_t channels : {8, 16}) {
        for (int levels = 2; levels <= 4; ++levels) {
            DenseFPNConfig dc;
            dc.depth = 2;
            dc.channels = channels;
            dc.mid_channels = channels / 2;
            dc.l_min = 2;
            dc.l_max = 2 + levels - 1;
            DenseFPN fpn(dc, rng);
            EXPECT_EQ(densefpn_params(dc).params_with_affine(), live_param_count(fpn)) << channels << " " << levels;

            SCPConfig sc;
            sc.channels = channels;
            sc.levels.clear();
            for (int l = 2; l < 2 + levels; ++l) sc.levels.push_back(l);
            SCP scp(sc, rng);
            EXPECT_EQ(scp_params(sc).params_with_affine(), live_param_count(scp));

            HRoIEConfig hc;
            hc.channels = channels;
            hc.l_min = 2;
            hc.l_max = 2 + levels - 1;
            HRoIE hroie(hc, rng);
            EXPECT_EQ(hroie_params(hc).params_with_affine(), live_param_count(hroie));
        }
    }
}

TEST(Accounting, HroieMacsScaleWithRoiBudget) {
    HRoIEConfig cfg;
    CostReport a = hroie_macs(cfg, 1000, 100);
    CostReport b = hroie_macs(cfg, 2000, 200);
    EXPECT_EQ(b.macs, 2 * a.macs);
    EXPECT_EQ(a.flops_2x(), 2 * a.macs);
}

TEST(SoftNms, GaussianModeDecaysEveryOverlap) {
    std::vector<ScoredBox> boxes{{0, 0, 10, 10, 0.9, 0}, {1, 1, 11, 11, 0.8, 1}};
    auto kept = soft_nms(boxes, 0.5, SoftNmsMode::gaussian, 1e-3, 0.5);
    ASSERT_EQ(kept.size(), 2u);
    const double iou = box_iou(boxes[0], boxes[1]);
    EXPECT_NEAR(kept[1].score, 0.8 * std::exp(-iou * iou / 0.5), 1e-12);
}

TEST(SoftNms, ScoreTieBreaksByLowestIndex) {
    std::vector<ScoredBox> boxes{{0, 0, 10, 10, 0.5, 7}, {100, 100, 110, 110, 0.5, 3}};
    auto kept = soft_nms(boxes);
    ASSERT_EQ(kept.size(), 2u);
    EXPECT_EQ(kept[0].index, 3);
}

// ---- config ---------------------------------------------------------------------

TEST(Config, UnknownKeysRejectedWithPath) {
    nlohmann::json j = {{"toy", {{"imagesize", 128}}}};
    try {
        RunConfig::from_json(j);
        FAIL() << "expected rejection";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("toy.imagesize"), std::string::npos) << e.what();
    }
    nlohmann::json top = {{"sed", 1}};
    EXPECT_THROW(RunConfig::from_json(top), std::invalid_argument);
}

TEST(Config, DefaultsRoundTripThroughJson) {
    RunConfig a;
    RunConfig b = RunConfig::from_json(a.to_json());
    EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(Config, ValidationCatchesInconsistentChannels) {
    RunConfig c;
    c.densefpn.channels = 32;  // toy.channels stays 64
    EXPECT_THROW(c.validate(), std::invalid_argument);
    RunConfig d;
    d.toy.image_size = 100;
    EXPECT_THROW(d.validate(), std::invalid_argument);
    RunConfig e;
    e.toy.nms_mode = "hard";
    EXPECT_THROW(e.validate(), std::invalid_argument);
}

TEST(Config, SeedAndTogglesParse) {
    nlohmann::json j = {{"seed", 9}, {"modules", {{"densefpn", false}, {"scp", false}, {"hroie", false}}}};
    RunConfig c = RunConfig::from_json(j);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_FALSE(c.modules.densefpn);
    EXPECT_FALSE(c.modules.scp);
    EXPECT_FALSE(c.modules.hroie);
}

// ---- file export ------------------------------------------------------------------

TEST(Export, PgmAndCsvAreDeterministic) {
    const fs::path dir = fs::temp_directory_path();
    const std::vector<double> vals{0.0, 0.25, 0.5, 1.0, -1.0, 2.0};
    auto read = [](const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    };
    write_pgm((dir / "a.pgm").string(), vals, 2, 3);
    write_pgm((dir / "b.pgm").string(), vals, 2, 3);
    EXPECT_EQ(read(dir / "a.pgm"), read(dir / "b.pgm"));
    const std::string pgm = read(dir / "a.pgm");
    EXPECT_EQ(pgm.rfind("P2\n3 2\n65535\n", 0), 0u) << pgm;
    write_csv_matrix((dir / "a.csv").string(), vals, 2, 3);
    write_csv_matrix((dir / "b.csv").string(), vals, 2, 3);
    EXPECT_EQ(read(dir / "a.csv"), read(dir / "b.csv"));
    for (const char* f : {"a.pgm", "b.pgm", "a.csv", "b.csv"}) fs::remove(dir / f);
}

TEST(Export, ConstantMapWritesZeros) {
    const fs::path p = fs::temp_directory_path() / "const.pgm";
    write_pgm(p.string(), {3.0, 3.0, 3.0, 3.0}, 2, 2);
    std::ifstream is(p);
    std::string magic;
    int w, h, maxval, v0;
    is >> magic >> w >> h >> maxval >> v0;
    EXPECT_EQ(v0, 0);
    fs::remove(p);
}
