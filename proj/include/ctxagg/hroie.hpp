// Hierarchical RoI extractor. Crops every pyramid level in the extraction
// range with RoIAlign, then folds the crops into a task feature map:
//   F <- F + R_i * sigmoid(conv1x1([F || R_i]))
// walking levels bottom-up for the detection head and top-down for the mask
// head. The two paths own disjoint per-level gate cells.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "ctxagg/nn_ops.hpp"
#include "ctxagg/params.hpp"
#include "ctxagg/pyramid.hpp"
#include "ctxagg/rng.hpp"
#include "ctxagg/roi_align.hpp"
#include "ctxagg/tensor.hpp"

namespace ctxagg {

enum class FusionDirection { bottom_up, top_down };
enum class RoITask { detection, mask };

struct HRoIEConfig {
    int l_min = 2;
    int l_max = 5;
    int64_t channels = 256;
    int det_size = 7;
    int mask_size = 14;
    int sampling_ratio = 2;

    int num_levels() const { return l_max - l_min + 1; }
};

// Per-level, per-path pixel-wise gate: linear 2C -> C on [F || R].
struct FusionCell {
    Tensor weight, bias;

    FusionCell() = default;
    explicit FusionCell(int64_t channels) {
        // zero init: every gate starts at 0.5
        weight = zeros_param({channels, 2 * channels, 1, 1});
        bias = zeros_param({channels});
    }
};

struct FusionTrace {
    std::vector<int> level_order;     // levels in the order they were folded in
    std::vector<double> gate_means;   // mean sigmoid activation per folded level
};

class HRoIE {
  public:
    HRoIE() = default;
    HRoIE(const HRoIEConfig& cfg, Rng&) : cfg_(cfg) {
        for (int i = 0; i < cfg_.num_levels(); ++i) {
            det_cells_.emplace_back(cfg_.channels);
            mask_cells_.emplace_back(cfg_.channels);
        }
    }

    // crops_by_level[i] is the {R, C, S, S} crop batch for level l_min + i
    Tensor fuse(std::span<const Tensor> crops_by_level, FusionDirection dir, const std::vector<FusionCell>& cells,
                FusionTrace* trace = nullptr) const {
        if (crops_by_level.size() != cells.size())
            throw std::invalid_argument("HRoIE::fuse: " + std::to_string(crops_by_level.size()) + " crop levels vs " +
                                        std::to_string(cells.size()) + " cells");
        if (crops_by_level.empty()) throw std::invalid_argument("HRoIE::fuse: no levels");
        Tensor fused = Tensor::zeros(crops_by_level[0].shape());
        const int n = static_cast<int>(crops_by_level.size());
        for (int step = 0; step < n; ++step) {
            const int i = dir == FusionDirection::bottom_up ? step : n - 1 - step;
            const Tensor& crop = crops_by_level[static_cast<size_t>(i)];
            Tensor gate = sigmoid(conv2d(concat_channels(fused, crop), cells[static_cast<size_t>(i)].weight,
                                         cells[static_cast<size_t>(i)].bias, 1, 0));
            fused = add(fused, mul(crop, gate));
            if (trace) {
                trace->level_order.push_back(cfg_.l_min + i);
                double acc = 0.0;
                for (double v : gate.values()) acc += v;
                trace->gate_means.push_back(acc / static_cast<double>(gate.numel()));
            }
        }
        return fused;
    }

    // Crops all extraction levels at the task's output size and fuses them in
    // the task's direction. Returns {num_rois, C, S, S}.
    Tensor extract(const FeaturePyramid& pyr, std::span<const RoI> rois, RoITask task,
                   FusionTrace* trace = nullptr) const {
        for (int l = cfg_.l_min; l <= cfg_.l_max; ++l)
            if (!pyr.has_level(l))
                throw std::invalid_argument("HRoIE: extraction level " + std::to_string(l) + " not in pyramid");
        if (pyr.channels() != cfg_.channels)
            throw std::invalid_argument("HRoIE: pyramid channels " + std::to_string(pyr.channels()) +
                                        " do not match configured " + std::to_string(cfg_.channels));
        const int s = task == RoITask::detection ? cfg_.det_size : cfg_.mask_size;
        std::vector<Tensor> crops;
        for (int l = cfg_.l_min; l <= cfg_.l_max; ++l) {
            const double scale = 1.0 / static_cast<double>(int64_t{1} << l);
            crops.push_back(roi_align(pyr.level(l), rois, s, cfg_.sampling_ratio, scale));
        }
        const auto& cells = task == RoITask::detection ? det_cells_ : mask_cells_;
        const auto dir = task == RoITask::detection ? FusionDirection::bottom_up : FusionDirection::top_down;
        return fuse(crops, dir, cells, trace);
    }

    const HRoIEConfig& config() const { return cfg_; }
    const std::vector<FusionCell>& detection_cells() const { return det_cells_; }
    const std::vector<FusionCell>& mask_cells() const { return mask_cells_; }
    std::vector<FusionCell>& detection_cells() { return det_cells_; }
    std::vector<FusionCell>& mask_cells() { return mask_cells_; }

    void collect_params(ParamMap& out, const std::string& prefix) const {
        for (int i = 0; i < cfg_.num_levels(); ++i) {
            const std::string lvl = "/l" + std::to_string(cfg_.l_min + i);
            out.add(prefix + "/detection" + lvl + "/weight", det_cells_[static_cast<size_t>(i)].weight, "zeros");
            out.add(prefix + "/detection" + lvl + "/bias", det_cells_[static_cast<size_t>(i)].bias, "zeros");
            out.add(prefix + "/mask" + lvl + "/weight", mask_cells_[static_cast<size_t>(i)].weight, "zeros");
            out.add(prefix + "/mask" + lvl + "/bias", mask_cells_[static_cast<size_t>(i)].bias, "zeros");
        }
    }

  private:
    HRoIEConfig cfg_;
    std::vector<FusionCell> det_cells_, mask_cells_;
};

}  // namespace ctxagg
