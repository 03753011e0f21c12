// Spatial context pyramid: one gated global-context block per pyramid level
// with a residual connection. Per level, a single context vector is pooled
// from all pixels with a softmax attention map, refined by a 1x1 conv stack,
// and injected back into every pixel scaled by a learned spatial gate that is
// itself softmax-normalized over pixels.
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "ctxagg/nn_ops.hpp"
#include "ctxagg/params.hpp"
#include "ctxagg/pyramid.hpp"
#include "ctxagg/rng.hpp"
#include "ctxagg/tensor.hpp"

namespace ctxagg {

struct SCPConfig {
    std::vector<int> levels = {2, 3, 4, 5, 6};
    int64_t channels = 256;
    int reduction = 1;  // context refinement C -> C/r -> C when > 1
};

class CABlock {
  public:
    CABlock() = default;
    CABlock(int64_t channels, int reduction, Rng& rng) : channels_(channels), reduction_(reduction) {
        w_key_ = fanin_uniform_param({1, channels, 1, 1}, channels, rng);
        b_key_ = zeros_param({1});
        w_value_ = fanin_uniform_param({channels, channels, 1, 1}, channels, rng);
        b_value_ = zeros_param({channels});
        w_gate_ = fanin_uniform_param({1, channels, 1, 1}, channels, rng);
        b_gate_ = zeros_param({1});
        // zero-initialized refinement: the block starts as an identity
        if (reduction_ <= 1) {
            w_refine1_ = zeros_param({channels, channels, 1, 1});
            b_refine1_ = zeros_param({channels});
        } else {
            const int64_t mid = channels / reduction_;
            w_refine1_ = fanin_uniform_param({mid, channels, 1, 1}, channels, rng);
            b_refine1_ = zeros_param({mid});
            aff_scale_ = Tensor::full({mid}, 1.0).set_requires_grad();
            aff_shift_ = zeros_param({mid});
            w_refine2_ = zeros_param({channels, mid, 1, 1});
            b_refine2_ = zeros_param({channels});
        }
    }

    // softmax over all pixels of (w_k . P); one map per sample, sums to 1
    Tensor attention_map(const Tensor& p) const { return softmax_spatial(conv2d(p, w_key_, b_key_, 1, 0)); }

    // softmax over all pixels of (w_a . P); the per-pixel aggregation gate
    Tensor gate_map(const Tensor& p) const { return softmax_spatial(conv2d(p, w_gate_, b_gate_, 1, 0)); }

    // ctx = Refine(sum_m alpha_m * (w_v . P_m)), one C-vector per sample
    Tensor context_vector(const Tensor& p, const Tensor& alpha) const {
        Tensor values = conv2d(p, w_value_, b_value_, 1, 0);
        Tensor pooled = spatial_sum(mul(values, alpha));
        return refine(pooled);
    }

    // Q = P + gate * ctx (broadcast over channels and pixels)
    Tensor forward(const Tensor& p) const {
        Tensor alpha = attention_map(p);
        Tensor ctx = context_vector(p, alpha);
        Tensor gate = gate_map(p);
        return add(p, mul(gate, ctx));
    }

    void collect_params(ParamMap& out, const std::string& prefix) const {
        out.add(prefix + "/key/weight", w_key_, fanin_spec(channels_));
        out.add(prefix + "/key/bias", b_key_, "zeros");
        out.add(prefix + "/value/weight", w_value_, fanin_spec(channels_));
        out.add(prefix + "/value/bias", b_value_, "zeros");
        out.add(prefix + "/gate/weight", w_gate_, fanin_spec(channels_));
        out.add(prefix + "/gate/bias", b_gate_, "zeros");
        out.add(prefix + "/refine1/weight", w_refine1_, reduction_ <= 1 ? "zeros" : fanin_spec(channels_));
        out.add(prefix + "/refine1/bias", b_refine1_, "zeros");
        if (reduction_ > 1) {
            out.add(prefix + "/refine/affine_scale", aff_scale_, "ones");
            out.add(prefix + "/refine/affine_shift", aff_shift_, "zeros");
            out.add(prefix + "/refine2/weight", w_refine2_, "zeros");
            out.add(prefix + "/refine2/bias", b_refine2_, "zeros");
        }
    }

    // test hooks for hand-set weights
    Tensor& key_weight() { return w_key_; }
    Tensor& value_weight() { return w_value_; }
    Tensor& gate_weight() { return w_gate_; }
    Tensor& refine_weight() { return w_refine1_; }
    Tensor& key_bias() { return b_key_; }
    Tensor& value_bias() { return b_value_; }
    Tensor& gate_bias() { return b_gate_; }
    Tensor& refine_bias() { return b_refine1_; }

  private:
    Tensor refine(const Tensor& pooled) const {
        if (reduction_ <= 1) return conv2d(pooled, w_refine1_, b_refine1_, 1, 0);
        Tensor y = conv2d(pooled, w_refine1_, b_refine1_, 1, 0);
        y = channel_affine(y, aff_scale_, aff_shift_);
        y = relu(y);
        return conv2d(y, w_refine2_, b_refine2_, 1, 0);
    }

    int64_t channels_ = 0;
    int reduction_ = 1;
    Tensor w_key_, b_key_, w_value_, b_value_, w_gate_, b_gate_;
    Tensor w_refine1_, b_refine1_, w_refine2_, b_refine2_, aff_scale_, aff_shift_;
};

// Independent CABlock per configured level; other levels pass through.
class SCP {
  public:
    SCP() = default;
    SCP(const SCPConfig& cfg, Rng& rng) : cfg_(cfg) {
        std::vector<int> sorted = cfg.levels;
        std::sort(sorted.begin(), sorted.end());
        cfg_.levels = sorted;
        for (size_t i = 0; i < cfg_.levels.size(); ++i) blocks_.emplace_back(cfg.channels, cfg.reduction, rng);
    }

    FeaturePyramid forward(const FeaturePyramid& in) const {
        for (int l : cfg_.levels)
            if (!in.has_level(l))
                throw std::invalid_argument("SCP: configured level " + std::to_string(l) + " not in pyramid " +
                                            std::to_string(in.l_min) + ".." + std::to_string(in.l_max()));
        FeaturePyramid out;
        out.l_min = in.l_min;
        for (int l = in.l_min; l <= in.l_max(); ++l) {
            const CABlock* blk = find_block(l);
            out.levels.push_back(blk ? blk->forward(in.level(l)) : in.level(l));
        }
        return out;
    }

    bool wraps_level(int l) const { return find_block(l) != nullptr; }

    CABlock& block(int level) {
        CABlock* b = const_cast<CABlock*>(find_block(level));
        if (!b) throw std::out_of_range("SCP: level " + std::to_string(level) + " has no block");
        return *b;
    }
    const CABlock& block(int level) const {
        const CABlock* b = find_block(level);
        if (!b) throw std::out_of_range("SCP: level " + std::to_string(level) + " has no block");
        return *b;
    }

    const SCPConfig& config() const { return cfg_; }

    void collect_params(ParamMap& out, const std::string& prefix) const {
        for (size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].collect_params(out, prefix + "/l" + std::to_string(cfg_.levels[i]));
    }

  private:
    const CABlock* find_block(int level) const {
        for (size_t i = 0; i < cfg_.levels.size(); ++i)
            if (cfg_.levels[i] == level) return &blocks_[i];
        return nullptr;
    }

    SCPConfig cfg_;
    std::vector<CABlock> blocks_;
};

}  // namespace ctxagg
