// Stackable dense feature pyramid block: a top-down then a bottom-up
// aggregation path over all levels. Each target level fuses its own map with
// every farther level, resampled to the target size and scaled by
// softmax-normalized learnable weights, then runs a bottleneck transform
// (one ReLU before a 1x1 -> 3x3 -> 1x1 stack, no activations after, no
// internal skip: zero transform weights give a zero output map). The expand
// conv starts at zero; downstream consumers see the raw residual sums fade
// in as it trains.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctxagg/nn_ops.hpp"
#include "ctxagg/params.hpp"
#include "ctxagg/pyramid.hpp"
#include "ctxagg/rng.hpp"
#include "ctxagg/tensor.hpp"

namespace ctxagg {

struct DenseFPNConfig {
    int depth = 5;
    int64_t channels = 256;
    int64_t mid_channels = 192;
    int l_min = 2;
    int l_max = 6;
    bool norm_affine = false;  // frozen per-channel affine after the reduce and mid convs

    int num_levels() const { return l_max - l_min + 1; }
};

inline Tensor normalize_weights(const Tensor& raw) {
    if (raw.rank() != 1 || raw.dim(0) < 1)
        throw std::invalid_argument("normalize_weights: expected a non-empty vector, got " + shape_str(raw.shape()));
    return softmax(raw, 0);
}

// Bottleneck transform: expand(conv3x3(reduce(relu(x)))).
class TransformBlock {
  public:
    TransformBlock() = default;
    TransformBlock(int64_t channels, int64_t mid, bool norm_affine, Rng& rng) : norm_affine_(norm_affine) {
        w_reduce_ = fanin_uniform_param({mid, channels, 1, 1}, channels, rng);
        b_reduce_ = zeros_param({mid});
        w_mid_ = fanin_uniform_param({mid, mid, 3, 3}, mid * 9, rng);
        b_mid_ = zeros_param({mid});
        w_expand_ = zeros_param({channels, mid, 1, 1});
        b_expand_ = zeros_param({channels});
        if (norm_affine_) {
            aff_scale_reduce_ = Tensor::full({mid}, 1.0).set_requires_grad();
            aff_shift_reduce_ = zeros_param({mid});
            aff_scale_mid_ = Tensor::full({mid}, 1.0).set_requires_grad();
            aff_shift_mid_ = zeros_param({mid});
        }
    }

    Tensor forward(const Tensor& x) const {
        Tensor y = relu(x);
        y = conv2d(y, w_reduce_, b_reduce_, 1, 0);
        if (norm_affine_) y = channel_affine(y, aff_scale_reduce_, aff_shift_reduce_);
        y = conv2d(y, w_mid_, b_mid_, 1, 1);
        if (norm_affine_) y = channel_affine(y, aff_scale_mid_, aff_shift_mid_);
        return conv2d(y, w_expand_, b_expand_, 1, 0);
    }

    void collect_params(ParamMap& out, const std::string& prefix) const {
        out.add(prefix + "/reduce/weight", w_reduce_, fanin_spec(w_reduce_.dim(1)));
        out.add(prefix + "/reduce/bias", b_reduce_, "zeros");
        out.add(prefix + "/mid/weight", w_mid_, fanin_spec(w_mid_.dim(1) * 9));
        out.add(prefix + "/mid/bias", b_mid_, "zeros");
        out.add(prefix + "/expand/weight", w_expand_, "zeros");
        out.add(prefix + "/expand/bias", b_expand_, "zeros");
        if (norm_affine_) {
            out.add(prefix + "/reduce/affine_scale", aff_scale_reduce_, "ones");
            out.add(prefix + "/reduce/affine_shift", aff_shift_reduce_, "zeros");
            out.add(prefix + "/mid/affine_scale", aff_scale_mid_, "ones");
            out.add(prefix + "/mid/affine_shift", aff_shift_mid_, "zeros");
        }
    }

  private:
    bool norm_affine_ = false;
    Tensor w_reduce_, b_reduce_, w_mid_, b_mid_, w_expand_, b_expand_;
    Tensor aff_scale_reduce_, aff_shift_reduce_, aff_scale_mid_, aff_shift_mid_;
};

class DenseFPNBlock {
  public:
    DenseFPNBlock() = default;
    DenseFPNBlock(const DenseFPNConfig& cfg, Rng& rng) : l_min_(cfg.l_min), l_max_(cfg.l_max) {
        const int n = cfg.num_levels();
        for (int i = 0; i < n; ++i) {
            td_transform_.emplace_back(cfg.channels, cfg.mid_channels, cfg.norm_affine, rng);
            bu_transform_.emplace_back(cfg.channels, cfg.mid_channels, cfg.norm_affine, rng);
            // raw re-weights start at zero: uniform after softmax
            const int td_sources = n - 1 - i;  // levels above target i
            const int bu_sources = i;          // levels below target i
            td_raw_.push_back(td_sources > 0 ? zeros_param({td_sources}) : Tensor());
            bu_raw_.push_back(bu_sources > 0 ? zeros_param({bu_sources}) : Tensor());
        }
    }

    // C_{i down} = Transform(C'_i + sum_{j>i} resize(C'_j) * w^j)
    FeaturePyramid topdown(const FeaturePyramid& in) const {
        check_input(in);
        FeaturePyramid out;
        out.l_min = l_min_;
        for (int l = l_min_; l <= l_max_; ++l) {
            const size_t i = static_cast<size_t>(l - l_min_);
            Tensor fused = in.level(l);
            if (l < l_max_) {
                std::vector<Tensor> sources;
                for (int j = l + 1; j <= l_max_; ++j) sources.push_back(resize_to_level(in.level(j), in.level(l)));
                fused = add(fused, weighted_sum(sources, normalize_weights(td_raw_[i])));
            }
            out.levels.push_back(td_transform_[i].forward(fused));
        }
        return out;
    }

    // C_{i up} = Transform(C'_i + C_{i down} + sum_{j<i} resize(C_{j down}) * w^j)
    FeaturePyramid bottomup(const FeaturePyramid& in, const FeaturePyramid& topdown_out) const {
        check_input(in);
        if (topdown_out.l_min != l_min_ || topdown_out.l_max() != l_max_)
            throw std::invalid_argument("DenseFPNBlock: top-down pyramid levels do not match");
        FeaturePyramid out;
        out.l_min = l_min_;
        for (int l = l_min_; l <= l_max_; ++l) {
            const size_t i = static_cast<size_t>(l - l_min_);
            Tensor fused = add(in.level(l), topdown_out.level(l));
            if (l > l_min_) {
                std::vector<Tensor> sources;
                for (int j = l_min_; j < l; ++j)
                    sources.push_back(resize_to_level(topdown_out.level(j), in.level(l)));
                fused = add(fused, weighted_sum(sources, normalize_weights(bu_raw_[i])));
            }
            out.levels.push_back(bu_transform_[i].forward(fused));
        }
        return out;
    }

    FeaturePyramid forward(const FeaturePyramid& in) const { return bottomup(in, topdown(in)); }

    const Tensor& topdown_raw(int level) const { return td_raw_.at(static_cast<size_t>(level - l_min_)); }
    const Tensor& bottomup_raw(int level) const { return bu_raw_.at(static_cast<size_t>(level - l_min_)); }
    const TransformBlock& topdown_transform(int level) const {
        return td_transform_.at(static_cast<size_t>(level - l_min_));
    }
    const TransformBlock& bottomup_transform(int level) const {
        return bu_transform_.at(static_cast<size_t>(level - l_min_));
    }

    void collect_params(ParamMap& out, const std::string& prefix) const {
        for (int l = l_min_; l <= l_max_; ++l) {
            const size_t i = static_cast<size_t>(l - l_min_);
            const std::string lvl = "/l" + std::to_string(l);
            td_transform_[i].collect_params(out, prefix + "/topdown" + lvl);
            if (td_raw_[i].defined()) out.add(prefix + "/topdown" + lvl + "/reweight", td_raw_[i], "zeros");
            bu_transform_[i].collect_params(out, prefix + "/bottomup" + lvl);
            if (bu_raw_[i].defined()) out.add(prefix + "/bottomup" + lvl + "/reweight", bu_raw_[i], "zeros");
        }
    }

  private:
    void check_input(const FeaturePyramid& in) const {
        if (in.l_min != l_min_ || in.l_max() != l_max_)
            throw std::invalid_argument("DenseFPNBlock: pyramid levels " + std::to_string(in.l_min) + ".." +
                                        std::to_string(in.l_max()) + " do not match block levels " +
                                        std::to_string(l_min_) + ".." + std::to_string(l_max_));
    }

    int l_min_ = 0, l_max_ = 0;
    std::vector<TransformBlock> td_transform_, bu_transform_;
    std::vector<Tensor> td_raw_, bu_raw_;
};

// D stacked blocks; block d consumes block d-1's bottom-up outputs.
class DenseFPN {
  public:
    DenseFPN() = default;
    DenseFPN(const DenseFPNConfig& cfg, Rng& rng) : cfg_(cfg) {
        if (cfg.depth < 1) throw std::invalid_argument("DenseFPN: depth must be >= 1");
        if (cfg.l_min > cfg.l_max) throw std::invalid_argument("DenseFPN: bad level range");
        for (int d = 0; d < cfg.depth; ++d) blocks_.emplace_back(cfg, rng);
    }

    FeaturePyramid forward(const FeaturePyramid& in) const {
        if (in.channels() != cfg_.channels)
            throw std::invalid_argument("DenseFPN: pyramid channels " + std::to_string(in.channels()) +
                                        " do not match configured " + std::to_string(cfg_.channels));
        FeaturePyramid cur = in;
        for (const DenseFPNBlock& b : blocks_) cur = b.forward(cur);
        return cur;
    }

    const DenseFPNConfig& config() const { return cfg_; }
    const DenseFPNBlock& block(int d) const { return blocks_.at(static_cast<size_t>(d)); }

    void collect_params(ParamMap& out, const std::string& prefix) const {
        for (size_t d = 0; d < blocks_.size(); ++d)
            blocks_[d].collect_params(out, prefix + "/block" + std::to_string(d));
    }

  private:
    DenseFPNConfig cfg_;
    std::vector<DenseFPNBlock> blocks_;
};

}  // namespace ctxagg
