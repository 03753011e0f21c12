// Multi-level feature pyramids: validation, lateral 1x1 reduction of
// backbone stages to a common channel width, the extra stride-2 level, and a
// deterministic synthetic pyramid generator for tests.
#pragma once

#include <string>
#include <vector>

#include "ctxagg/checkpoint.hpp"
#include "ctxagg/nn_ops.hpp"
#include "ctxagg/params.hpp"
#include "ctxagg/rng.hpp"
#include "ctxagg/tensor.hpp"

namespace ctxagg {

// Ordered feature maps, level i at 1/2^i of the reference input resolution.
// Levels are contiguous from l_min; all levels share batch and channel count.
struct FeaturePyramid {
    int l_min = 0;
    std::vector<Tensor> levels;

    int l_max() const { return l_min + static_cast<int>(levels.size()) - 1; }
    int num_levels() const { return static_cast<int>(levels.size()); }
    bool has_level(int l) const { return l >= l_min && l <= l_max(); }

    Tensor& level(int l) { return levels.at(static_cast<size_t>(l - l_min)); }
    const Tensor& level(int l) const { return levels.at(static_cast<size_t>(l - l_min)); }

    int64_t batch() const { return levels.at(0).dim(0); }
    int64_t channels() const { return levels.at(0).dim(1); }

    // same N and C everywhere; spatial sizes halve exactly level to level
    void validate() const {
        if (levels.empty()) throw std::invalid_argument("FeaturePyramid: no levels");
        const int64_t n = levels[0].dim(0), c = levels[0].dim(1);
        for (size_t i = 0; i < levels.size(); ++i) {
            const Tensor& t = levels[i];
            if (t.rank() != 4) throw std::invalid_argument("FeaturePyramid: level " + std::to_string(l_min + i) +
                                                           " is not NCHW: " + shape_str(t.shape()));
            if (t.dim(0) != n || t.dim(1) != c)
                throw std::invalid_argument("FeaturePyramid: level " + std::to_string(l_min + i) +
                                            " batch/channel mismatch: " + shape_str(t.shape()));
            if (i > 0) {
                const Tensor& prev = levels[i - 1];
                if (t.dim(2) * 2 != prev.dim(2) || t.dim(3) * 2 != prev.dim(3))
                    throw std::invalid_argument("FeaturePyramid: level " + std::to_string(l_min + i) + " size " +
                                                shape_str(t.shape()) + " is not half of " + shape_str(prev.shape()));
            }
        }
    }
};

// Resamples to the target spatial size: bilinear when enlarging, max pooling
// when shrinking (integer ratio required), identity when equal.
inline Tensor resize_to(const Tensor& src, int64_t out_h, int64_t out_w) {
    const int64_t h = src.dim(2), w = src.dim(3);
    if (out_h == h && out_w == w) return src;
    if (out_h >= h && out_w >= w) return bilinear_resize(src, out_h, out_w);
    if (out_h <= h && out_w <= w) {
        if (h % out_h != 0 || w % out_w != 0 || h / out_h != w / out_w)
            throw std::invalid_argument("resize_to: non-integer shrink ratio from " + shape_str(src.shape()) + " to " +
                                        std::to_string(out_h) + "x" + std::to_string(out_w));
        const int ratio = static_cast<int>(h / out_h);
        return maxpool2d(src, ratio, ratio);
    }
    throw std::invalid_argument("resize_to: mixed enlarge/shrink request");
}

inline Tensor resize_to_level(const Tensor& src, const Tensor& target_like) {
    return resize_to(src, target_like.dim(2), target_like.dim(3));
}

// Lateral 1x1 reduction of backbone stages (levels l_min..l_min+k-1, each
// with its own channel count) to a uniform width, plus one extra level from a
// stride-2 3x3 convolution on the topmost reduced map.
class LateralReducer {
  public:
    LateralReducer() = default;
    LateralReducer(std::vector<int64_t> in_channels, int l_min, int64_t out_channels, Rng& rng)
        : l_min_(l_min), out_channels_(out_channels), in_channels_(std::move(in_channels)) {
        for (int64_t cin : in_channels_) {
            lat_w_.push_back(fanin_uniform_param({out_channels_, cin, 1, 1}, cin, rng));
            lat_b_.push_back(zeros_param({out_channels_}));
        }
        extra_w_ = fanin_uniform_param({out_channels_, out_channels_, 3, 3}, out_channels_ * 9, rng);
        extra_b_ = zeros_param({out_channels_});
    }

    // backbone_feats[i] is the stage at level l_min + i; sizes must halve
    FeaturePyramid forward(const std::vector<Tensor>& backbone_feats) const {
        if (backbone_feats.size() != in_channels_.size())
            throw std::invalid_argument("LateralReducer: expected " + std::to_string(in_channels_.size()) +
                                        " backbone levels, got " + std::to_string(backbone_feats.size()));
        for (size_t i = 0; i < backbone_feats.size(); ++i) {
            if (backbone_feats[i].dim(1) != in_channels_[i])
                throw std::invalid_argument("LateralReducer: level " + std::to_string(l_min_ + i) +
                                            " channel mismatch: " + shape_str(backbone_feats[i].shape()));
            if (i > 0 && (backbone_feats[i].dim(2) * 2 != backbone_feats[i - 1].dim(2) ||
                          backbone_feats[i].dim(3) * 2 != backbone_feats[i - 1].dim(3)))
                throw std::invalid_argument("LateralReducer: backbone sizes do not halve at level " +
                                            std::to_string(l_min_ + i));
        }
        FeaturePyramid pyr;
        pyr.l_min = l_min_;
        for (size_t i = 0; i < backbone_feats.size(); ++i)
            pyr.levels.push_back(conv2d(backbone_feats[i], lat_w_[i], lat_b_[i], 1, 0));
        pyr.levels.push_back(conv2d(pyr.levels.back(), extra_w_, extra_b_, 2, 1));
        pyr.validate();
        return pyr;
    }

    void collect_params(ParamMap& out, const std::string& prefix) const {
        for (size_t i = 0; i < lat_w_.size(); ++i) {
            const std::string lvl = prefix + "/l" + std::to_string(l_min_ + i);
            out.add(lvl + "/weight", lat_w_[i], fanin_spec(in_channels_[i]));
            out.add(lvl + "/bias", lat_b_[i], "zeros");
        }
        out.add(prefix + "/extra/weight", extra_w_, fanin_spec(out_channels_ * 9));
        out.add(prefix + "/extra/bias", extra_b_, "zeros");
    }

    int64_t out_channels() const { return out_channels_; }

  private:
    int l_min_ = 0;
    int64_t out_channels_ = 0;
    std::vector<int64_t> in_channels_;
    std::vector<Tensor> lat_w_, lat_b_;
    Tensor extra_w_, extra_b_;
};

// Deterministic unit-normal pyramid over levels l_min..l_max of an (h, w)
// reference input. h and w must be divisible by 2^l_max.
inline FeaturePyramid make_synthetic_pyramid(uint64_t seed, int64_t n, int64_t c, int64_t h, int64_t w, int l_min,
                                             int l_max) {
    if (l_min > l_max) throw std::invalid_argument("make_synthetic_pyramid: l_min > l_max");
    const int64_t div = int64_t{1} << l_max;
    if (h % div != 0 || w % div != 0)
        throw std::invalid_argument("make_synthetic_pyramid: input " + std::to_string(h) + "x" + std::to_string(w) +
                                    " not divisible by 2^" + std::to_string(l_max));
    Rng rng(mix_seed(seed, 0x5ca1ab1e));
    FeaturePyramid pyr;
    pyr.l_min = l_min;
    for (int l = l_min; l <= l_max; ++l) {
        const int64_t lh = h >> l, lw = w >> l;
        std::vector<double> data(static_cast<size_t>(n * c * lh * lw));
        for (double& v : data) v = rng.normal();
        pyr.levels.push_back(Tensor::from({n, c, lh, lw}, std::move(data)));
    }
    return pyr;
}

// Writes each level as "pyramid/l{i}" in the archive format.
inline void save_pyramid(const FeaturePyramid& pyr, const std::string& path, const std::string& manifest_json = "{}") {
    std::vector<ArchiveEntry> entries;
    for (int l = pyr.l_min; l <= pyr.l_max(); ++l)
        entries.push_back({"pyramid/l" + std::to_string(l), pyr.level(l).shape(), pyr.level(l).values()});
    write_archive(path, entries, manifest_json);
}

}  // namespace ctxagg
