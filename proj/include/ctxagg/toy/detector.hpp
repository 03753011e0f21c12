// Desk-scale two-stage detector: a small strided backbone emitting C2..C5,
// lateral reduction to a uniform pyramid (levels 2..6), the optional
// DenseFPN / SCP necks, RoI feature extraction (HRoIE or a single-level
// baseline), and classification / box / mask heads.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxagg/config.hpp"
#include "ctxagg/densefpn.hpp"
#include "ctxagg/hroie.hpp"
#include "ctxagg/nn_ops.hpp"
#include "ctxagg/params.hpp"
#include "ctxagg/pyramid.hpp"
#include "ctxagg/roi_align.hpp"
#include "ctxagg/scp.hpp"
#include "ctxagg/tensor.hpp"

namespace ctxagg {

// Four downsampling stages producing C2 (1/4) .. C5 (1/32).
class ToyBackbone {
  public:
    ToyBackbone() = default;
    ToyBackbone(const std::vector<int64_t>& widths, Rng& rng) : widths_(widths) {
        if (widths.size() != 5) throw std::invalid_argument("ToyBackbone: need 5 stage widths");
        auto make = [&](int64_t cin, int64_t cout, int k) {
            conv_w_.push_back(fanin_uniform_param({cout, cin, k, k}, cin * k * k, rng));
            conv_b_.push_back(zeros_param({cout}));
        };
        make(3, widths[0], 3);          // stem, stride 2
        make(widths[0], widths[1], 3);  // to C2, stride 2
        make(widths[1], widths[1], 3);  // C2 refine
        make(widths[1], widths[2], 3);  // to C3, stride 2
        make(widths[2], widths[3], 3);  // to C4, stride 2
        make(widths[3], widths[4], 3);  // to C5, stride 2
    }

    // returns {C2, C3, C4, C5}
    std::vector<Tensor> forward(const Tensor& images) const {
        Tensor x = relu(conv2d(images, conv_w_[0], conv_b_[0], 2, 1));
        Tensor c2 = relu(conv2d(x, conv_w_[1], conv_b_[1], 2, 1));
        c2 = relu(conv2d(c2, conv_w_[2], conv_b_[2], 1, 1));
        Tensor c3 = relu(conv2d(c2, conv_w_[3], conv_b_[3], 2, 1));
        Tensor c4 = relu(conv2d(c3, conv_w_[4], conv_b_[4], 2, 1));
        Tensor c5 = relu(conv2d(c4, conv_w_[5], conv_b_[5], 2, 1));
        return {c2, c3, c4, c5};
    }

    std::vector<int64_t> stage_channels() const { return {widths_[1], widths_[2], widths_[3], widths_[4]}; }

    void collect_params(ParamMap& out, const std::string& prefix) const {
        static const char* names[] = {"stem", "c2a", "c2b", "c3", "c4", "c5"};
        for (size_t i = 0; i < conv_w_.size(); ++i) {
            out.add(prefix + "/" + names[i] + "/weight", conv_w_[i],
                    fanin_spec(conv_w_[i].dim(1) * conv_w_[i].dim(2) * conv_w_[i].dim(3)));
            out.add(prefix + "/" + names[i] + "/bias", conv_b_[i], "zeros");
        }
    }

  private:
    std::vector<int64_t> widths_;
    std::vector<Tensor> conv_w_, conv_b_;
};

// Shared cls/box trunk over {R, C, 7, 7} features plus a per-pixel mask head
// over {R, C, 14, 14}.
class ToyHeads {
  public:
    ToyHeads() = default;
    ToyHeads(int64_t channels, int num_classes, int64_t mask_mid, Rng& rng) : num_classes_(num_classes) {
        trunk_w_ = fanin_uniform_param({channels, channels, 3, 3}, channels * 9, rng);
        trunk_b_ = zeros_param({channels});
        cls_w_ = fanin_uniform_param({num_classes + 1, channels, 1, 1}, channels, rng);
        cls_b_ = zeros_param({num_classes + 1});
        box_w_ = fanin_uniform_param({4, channels, 1, 1}, channels, rng);
        box_b_ = zeros_param({4});
        mask_w1_ = fanin_uniform_param({mask_mid, channels, 3, 3}, channels * 9, rng);
        mask_b1_ = zeros_param({mask_mid});
        mask_w2_ = fanin_uniform_param({1, mask_mid, 1, 1}, mask_mid, rng);
        mask_b2_ = zeros_param({1});
    }

    // test hook: zero every output projection (uniform posterior, zero
    // deltas, zero mask logits on any input)
    void zero_output_convs() {
        for (Tensor* t : {&cls_w_, &cls_b_, &box_w_, &box_b_, &mask_w2_, &mask_b2_})
            std::fill(t->values().begin(), t->values().end(), 0.0);
    }

    // {R, C, s, s} -> logits {R, K+1}, deltas {R, 4}
    std::pair<Tensor, Tensor> cls_box(const Tensor& feats) const {
        Tensor t = spatial_mean(relu(conv2d(feats, trunk_w_, trunk_b_, 1, 1)));
        Tensor logits = reshape(conv2d(t, cls_w_, cls_b_, 1, 0), {feats.dim(0), num_classes_ + 1});
        Tensor deltas = reshape(conv2d(t, box_w_, box_b_, 1, 0), {feats.dim(0), 4});
        return {logits, deltas};
    }

    // {R, C, s, s} -> mask logits {R, s, s}
    Tensor mask(const Tensor& feats) const {
        Tensor t = relu(conv2d(feats, mask_w1_, mask_b1_, 1, 1));
        Tensor logits = conv2d(t, mask_w2_, mask_b2_, 1, 0);
        return reshape(logits, {feats.dim(0), feats.dim(2), feats.dim(3)});
    }

    void collect_params(ParamMap& out, const std::string& prefix) const {
        out.add(prefix + "/trunk/weight", trunk_w_, fanin_spec(trunk_w_.dim(1) * 9));
        out.add(prefix + "/trunk/bias", trunk_b_, "zeros");
        out.add(prefix + "/cls/weight", cls_w_, "zeros");
        out.add(prefix + "/cls/bias", cls_b_, "zeros");
        out.add(prefix + "/box/weight", box_w_, "zeros");
        out.add(prefix + "/box/bias", box_b_, "zeros");
        out.add(prefix + "/mask1/weight", mask_w1_, fanin_spec(mask_w1_.dim(1) * 9));
        out.add(prefix + "/mask1/bias", mask_b1_, "zeros");
        out.add(prefix + "/mask2/weight", mask_w2_, "zeros");
        out.add(prefix + "/mask2/bias", mask_b2_, "zeros");
    }

  private:
    int num_classes_ = 0;
    Tensor trunk_w_, trunk_b_, cls_w_, cls_b_, box_w_, box_b_;
    Tensor mask_w1_, mask_b1_, mask_w2_, mask_b2_;
};

class ToyDetector {
  public:
    struct Outputs {
        Tensor cls_logits;   // {R, K+1}
        Tensor box_deltas;   // {R, 4}
        Tensor mask_logits;  // {R, Sm, Sm}
    };

    ToyDetector() = default;
    ToyDetector(const RunConfig& cfg, Rng& rng) : cfg_(cfg), backbone_(cfg.toy.stage_widths, rng) {
        laterals_ = LateralReducer(backbone_.stage_channels(), 2, cfg.toy.channels, rng);
        if (cfg.modules.densefpn) fpn_.emplace(cfg.densefpn, rng);
        if (cfg.modules.scp) scp_.emplace(cfg.scp, rng);
        if (cfg.modules.hroie) hroie_.emplace(cfg.hroie, rng);
        heads_ = ToyHeads(cfg.toy.channels, cfg.toy.num_classes, std::max<int64_t>(cfg.toy.channels / 2, 8), rng);
    }

    // backbone + laterals + DenseFPN, before spatial context; levels 2..6
    FeaturePyramid neck_features(const Tensor& images) const {
        FeaturePyramid pyr = laterals_.forward(backbone_.forward(images));
        if (fpn_) pyr = fpn_->forward(pyr);
        return pyr;
    }

    // full feature stack including SCP when enabled
    FeaturePyramid features(const Tensor& images) const {
        FeaturePyramid pyr = neck_features(images);
        if (scp_) pyr = scp_->forward(pyr);
        return pyr;
    }

    Tensor extract(const FeaturePyramid& pyr, std::span<const RoI> rois, RoITask task,
                   FusionTrace* trace = nullptr) const {
        if (hroie_) return hroie_->extract(pyr, rois, task, trace);
        // baseline: single-level crop from the finest pyramid level
        const int s = task == RoITask::detection ? cfg_.hroie.det_size : cfg_.hroie.mask_size;
        const int l = cfg_.hroie.l_min;
        const double scale = 1.0 / static_cast<double>(int64_t{1} << l);
        return roi_align(pyr.level(l), rois, s, cfg_.hroie.sampling_ratio, scale);
    }

    std::pair<Tensor, Tensor> detect(const FeaturePyramid& pyr, std::span<const RoI> rois) const {
        return heads_.cls_box(extract(pyr, rois, RoITask::detection));
    }

    Tensor masks(const FeaturePyramid& pyr, std::span<const RoI> rois) const {
        return heads_.mask(extract(pyr, rois, RoITask::mask));
    }

    // full per-proposal outputs on one image batch
    Outputs forward(const Tensor& images, std::span<const RoI> proposals) const {
        FeaturePyramid pyr = features(images);
        Outputs out;
        auto [logits, deltas] = detect(pyr, proposals);
        out.cls_logits = logits;
        out.box_deltas = deltas;
        out.mask_logits = masks(pyr, proposals);
        return out;
    }

    ParamMap params() const {
        ParamMap pm;
        collect_params(pm, "detector");
        return pm;
    }

    void collect_params(ParamMap& out, const std::string& prefix) const {
        backbone_.collect_params(out, prefix + "/backbone");
        laterals_.collect_params(out, prefix + "/laterals");
        if (fpn_) fpn_->collect_params(out, prefix + "/densefpn");
        if (scp_) scp_->collect_params(out, prefix + "/scp");
        if (hroie_) hroie_->collect_params(out, prefix + "/hroie");
        heads_.collect_params(out, prefix + "/heads");
    }

    const RunConfig& config() const { return cfg_; }
    const std::optional<DenseFPN>& densefpn() const { return fpn_; }
    const std::optional<SCP>& scp() const { return scp_; }
    const std::optional<HRoIE>& hroie() const { return hroie_; }
    std::optional<HRoIE>& hroie() { return hroie_; }
    const ToyHeads& heads() const { return heads_; }
    ToyHeads& heads() { return heads_; }

  private:
    RunConfig cfg_;
    ToyBackbone backbone_;
    LateralReducer laterals_;
    std::optional<DenseFPN> fpn_;
    std::optional<SCP> scp_;
    std::optional<HRoIE> hroie_;
    ToyHeads heads_;
};

}  // namespace ctxagg
