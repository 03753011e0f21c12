// Analytical parameter and multiply-accumulate accounting for each module
// configuration, cross-checkable against a live parameter registry walk, plus
// reconciliation against the published full-scale reference costs (deltas
// between the full model and its baseline, FLOPs quoted at 512x512 inputs).
//
// MAC conventions: convolutions count cout*cin*kh*kw*oh*ow; attention
// pooling, gating, and re-weighted sums count one MAC per scalar multiply.
// Resampling interpolation weights and bare additions are not counted.
// Reports carry both MACs and 2x MACs since FLOP conventions differ.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctxagg/densefpn.hpp"
#include "ctxagg/hroie.hpp"
#include "ctxagg/params.hpp"
#include "ctxagg/scp.hpp"

namespace ctxagg {

struct CostReport {
    std::string module;
    int64_t weights = 0;
    int64_t biases = 0;
    int64_t affine = 0;
    int64_t macs = 0;
    std::vector<std::string> notes;

    int64_t params_with_affine() const { return weights + biases + affine; }
    int64_t params_without_affine() const { return weights + biases; }
    int64_t flops_2x() const { return 2 * macs; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["module"] = module;
        j["weights"] = weights;
        j["biases"] = biases;
        j["affine"] = affine;
        j["params_total"] = params_with_affine();
        j["params_without_affine"] = params_without_affine();
        j["macs"] = macs;
        j["flops_2x_macs"] = flops_2x();
        j["notes"] = notes;
        return j;
    }

    std::string to_table() const {
        std::string s;
        s += "module: " + module + "\n";
        s += "  weights            " + std::to_string(weights) + "\n";
        s += "  biases             " + std::to_string(biases) + "\n";
        s += "  affine             " + std::to_string(affine) + "\n";
        s += "  params (total)     " + std::to_string(params_with_affine()) + "\n";
        s += "  macs               " + std::to_string(macs) + "\n";
        s += "  flops (2x macs)    " + std::to_string(flops_2x()) + "\n";
        for (const auto& n : notes) s += "  note: " + n + "\n";
        return s;
    }
};

inline int64_t conv_macs(int64_t cout, int64_t cin, int64_t kh, int64_t kw, int64_t oh, int64_t ow) {
    return cout * cin * kh * kw * oh * ow;
}

// ---- DenseFPN ----------------------------------------------------------------

inline int64_t densefpn_transform_weights(const DenseFPNConfig& c) {
    return 2 * c.mid_channels * c.channels + 9 * c.mid_channels * c.mid_channels;
}

inline int64_t densefpn_block_delta_params(const DenseFPNConfig& c, bool include_affine) {
    const int64_t L = c.num_levels();
    const int64_t transforms = 2 * L;
    const int64_t w = transforms * densefpn_transform_weights(c);
    const int64_t b = transforms * (2 * c.mid_channels + c.channels);
    const int64_t reweights = L * (L - 1);
    const int64_t aff = (include_affine && c.norm_affine) ? transforms * 4 * c.mid_channels : 0;
    return w + b + reweights + aff;
}

inline CostReport densefpn_params(const DenseFPNConfig& c) {
    CostReport r;
    r.module = "densefpn";
    const int64_t L = c.num_levels();
    const int64_t transforms = static_cast<int64_t>(c.depth) * 2 * L;
    r.weights = transforms * densefpn_transform_weights(c) + static_cast<int64_t>(c.depth) * L * (L - 1);
    r.biases = transforms * (2 * c.mid_channels + c.channels);
    r.affine = c.norm_affine ? transforms * 4 * c.mid_channels : 0;
    r.notes.push_back("re-weight raw vectors counted as weights (" +
                      std::to_string(static_cast<int64_t>(c.depth) * L * (L - 1)) + " scalars)");
    r.notes.push_back("per-block delta: " + std::to_string(densefpn_block_delta_params(c, true)) +
                      " params (with affine), " + std::to_string(densefpn_block_delta_params(c, false)) +
                      " (without)");
    return r;
}

inline CostReport densefpn_macs(const DenseFPNConfig& c, int64_t input_h, int64_t input_w) {
    CostReport r = densefpn_params(c);
    const int64_t L = c.num_levels();
    int64_t per_block = 0;
    for (int i = 0; i < L; ++i) {
        const int l = c.l_min + i;
        const int64_t h = input_h >> l, w = input_w >> l;
        const int64_t hw = h * w;
        // two transforms per level
        per_block += 2 * (conv_macs(c.mid_channels, c.channels, 1, 1, h, w) +
                          conv_macs(c.mid_channels, c.mid_channels, 3, 3, h, w) +
                          conv_macs(c.channels, c.mid_channels, 1, 1, h, w));
        // re-weighted dense sums: one MAC per element per source level
        const int64_t sources = (L - 1 - i) + i;
        per_block += sources * c.channels * hw;
    }
    r.macs = static_cast<int64_t>(c.depth) * per_block;
    r.notes.push_back("macs at " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                      " input; resampling interpolation not counted");
    return r;
}

// ---- SCP ----------------------------------------------------------------------

inline CostReport scp_params(const SCPConfig& c) {
    CostReport r;
    r.module = "scp";
    const int64_t L = static_cast<int64_t>(c.levels.size());
    const int64_t C = c.channels;
    if (c.reduction <= 1) {
        r.weights = L * (2 * C * C + 2 * C);
        r.biases = L * (2 * C + 2);
        r.notes.push_back("refinement at reduction 1 is a single CxC conv with no norm; a norm there would add " +
                          std::to_string(2 * C) + " affine params per level");
    } else {
        const int64_t mid = C / c.reduction;
        r.weights = L * (C * C + 2 * C + 2 * C * mid);
        r.biases = L * (C + mid + C + 2);
        r.affine = L * 2 * mid;
    }
    return r;
}

inline CostReport scp_macs(const SCPConfig& c, int64_t input_h, int64_t input_w) {
    CostReport r = scp_params(c);
    const int64_t C = c.channels;
    int64_t total = 0;
    for (int l : c.levels) {
        const int64_t h = input_h >> l, w = input_w >> l;
        const int64_t hw = h * w;
        total += conv_macs(1, C, 1, 1, h, w);   // key
        total += conv_macs(C, C, 1, 1, h, w);   // value
        total += conv_macs(1, C, 1, 1, h, w);   // gate
        total += C * hw;                        // attention-weighted pooling
        total += C * hw;                        // gate * context broadcast
        if (c.reduction <= 1) {
            total += C * C;  // refinement on the pooled 1x1 vector
        } else {
            const int64_t mid = C / c.reduction;
            total += 2 * C * mid;
        }
    }
    r.macs = total;
    r.notes.push_back("macs at " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                      " input; softmax exp/div not counted");
    return r;
}

// ---- HRoIE ---------------------------------------------------------------------

inline CostReport hroie_params(const HRoIEConfig& c) {
    CostReport r;
    r.module = "hroie";
    const int64_t L = c.num_levels();
    const int64_t C = c.channels;
    r.weights = 2 * L * (2 * C * C);
    r.biases = 2 * L * C;
    r.notes.push_back("2 paths x " + std::to_string(L) + " levels, gate 2C->C each");
    return r;
}

inline CostReport hroie_macs(const HRoIEConfig& c, int64_t n_det_rois, int64_t n_mask_rois) {
    CostReport r = hroie_params(c);
    const int64_t L = c.num_levels();
    const int64_t C = c.channels;
    const int64_t det_hw = static_cast<int64_t>(c.det_size) * c.det_size;
    const int64_t mask_hw = static_cast<int64_t>(c.mask_size) * c.mask_size;
    const int64_t per_roi_level_det = (2 * C * C + C) * det_hw;   // gate conv + hadamard
    const int64_t per_roi_level_mask = (2 * C * C + C) * mask_hw;
    r.macs = n_det_rois * L * per_roi_level_det + n_mask_rois * L * per_roi_level_mask;
    r.notes.push_back("assumes " + std::to_string(n_det_rois) + " detection rois and " + std::to_string(n_mask_rois) +
                      " mask rois; roi-align sampling not counted");
    return r;
}

// ---- lateral reducer ------------------------------------------------------------

inline CostReport lateral_params(const std::vector<int64_t>& in_channels, int64_t out_channels) {
    CostReport r;
    r.module = "lateral-reducer";
    for (int64_t cin : in_channels) {
        r.weights += out_channels * cin;
        r.biases += out_channels;
    }
    r.weights += out_channels * out_channels * 9;
    r.biases += out_channels;
    return r;
}

// ---- reconciliation against the full-scale reference ----------------------------

// Reference deltas: full-scale model costs minus its baseline. Params in
// absolute counts, MACs quoted at 512x512 inputs.
struct ReferenceCosts {
    static constexpr double densefpn_per_block_params = 4.28e6;  // mid_channels 192 convention
    static constexpr double scp_params = 0.66e6;                 // C=256, levels 2..6, reduction 1
    static constexpr double hroie_params = 1.05e6;               // C=256, 4 levels, 2 paths
    static constexpr double scp_flops = 1.45e9;                  // at 512x512
};

struct Reconciliation {
    std::string label;
    double measured = 0;
    double reference = 0;
    double rel_error = 0;
    bool within(double tol) const { return rel_error <= tol; }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["label"] = label;
        j["measured"] = measured;
        j["reference"] = reference;
        j["rel_error"] = rel_error;
        return j;
    }
};

inline Reconciliation reconcile(std::string label, double measured, double reference) {
    Reconciliation r;
    r.label = std::move(label);
    r.measured = measured;
    r.reference = reference;
    r.rel_error = std::fabs(measured - reference) / reference;
    return r;
}

// Brute-force registry walk over a constructed module; the cross-check for
// every analytic count.
template <typename Module>
inline int64_t live_param_count(const Module& m) {
    ParamMap pm;
    m.collect_params(pm, "m");
    return pm.total_count();
}

}  // namespace ctxagg
