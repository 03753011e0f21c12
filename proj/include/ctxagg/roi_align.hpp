// RoIAlign: S x S bins per box, sampling_ratio^2 bilinear samples per bin,
// averaged. Boxes live in input-image pixel coordinates and are mapped onto
// a level by spatial_scale. Sampling uses the same half-pixel convention as
// bilinear_resize (pixel (r, c) is centered at (r+0.5, c+0.5)); samples are
// clamped to the map border. Differentiable w.r.t. the feature map.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ctxagg/tensor.hpp"

namespace ctxagg {

struct RoI {
    int64_t batch_index = 0;
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

inline RoI clip_roi(const RoI& r, double img_w, double img_h) {
    RoI c = r;
    c.x1 = std::clamp(r.x1, 0.0, img_w);
    c.x2 = std::clamp(r.x2, 0.0, img_w);
    c.y1 = std::clamp(r.y1, 0.0, img_h);
    c.y2 = std::clamp(r.y2, 0.0, img_h);
    return c;
}

namespace detail {

struct BilinearSample {
    int64_t idx00, idx01, idx10, idx11;
    double w00, w01, w10, w11;
};

inline BilinearSample plan_sample(double y, double x, int64_t h, int64_t w) {
    // continuous -> index space under half-pixel centers, clamped to border
    double iy = y - 0.5, ix = x - 0.5;
    iy = std::clamp(iy, 0.0, static_cast<double>(h - 1));
    ix = std::clamp(ix, 0.0, static_cast<double>(w - 1));
    int64_t y0 = std::min(static_cast<int64_t>(std::floor(iy)), h - 2);
    int64_t x0 = std::min(static_cast<int64_t>(std::floor(ix)), w - 2);
    y0 = std::max<int64_t>(y0, 0);
    x0 = std::max<int64_t>(x0, 0);
    const int64_t y1 = h > 1 ? y0 + 1 : 0;
    const int64_t x1 = w > 1 ? x0 + 1 : 0;
    const double fy = h > 1 ? iy - static_cast<double>(y0) : 0.0;
    const double fx = w > 1 ? ix - static_cast<double>(x0) : 0.0;
    BilinearSample s;
    s.idx00 = y0 * w + x0;
    s.idx01 = y0 * w + x1;
    s.idx10 = y1 * w + x0;
    s.idx11 = y1 * w + x1;
    s.w00 = (1.0 - fy) * (1.0 - fx);
    s.w01 = (1.0 - fy) * fx;
    s.w10 = fy * (1.0 - fx);
    s.w11 = fy * fx;
    return s;
}

}  // namespace detail

// Returns {num_rois, C, out_size, out_size}. Rejects boxes that are
// degenerate (zero area) on the feature map.
inline Tensor roi_align(const Tensor& level_map, std::span<const RoI> rois, int out_size, int sampling_ratio,
                        double spatial_scale) {
    if (level_map.rank() != 4)
        throw std::invalid_argument("roi_align: expected NCHW map, got " + shape_str(level_map.shape()));
    if (out_size < 1 || sampling_ratio < 1) throw std::invalid_argument("roi_align: bad out_size/sampling_ratio");
    const int64_t nb = level_map.dim(0), c = level_map.dim(1), h = level_map.dim(2), w = level_map.dim(3);
    const int64_t nr = static_cast<int64_t>(rois.size());
    const int64_t s = out_size;
    const int64_t ns = sampling_ratio;

    // one sampling plan per roi per bin per sample point, shared across channels
    const int64_t plans_per_roi = s * s * ns * ns;
    std::vector<detail::BilinearSample> plans(static_cast<size_t>(nr * plans_per_roi));
    std::vector<int64_t> batch_of(static_cast<size_t>(nr));
    for (int64_t r = 0; r < nr; ++r) {
        const RoI& roi = rois[r];
        if (roi.batch_index < 0 || roi.batch_index >= nb)
            throw std::invalid_argument("roi_align: batch_index " + std::to_string(roi.batch_index) +
                                        " out of range for batch " + std::to_string(nb));
        batch_of[r] = roi.batch_index;
        const double bx1 = roi.x1 * spatial_scale, bx2 = roi.x2 * spatial_scale;
        const double by1 = roi.y1 * spatial_scale, by2 = roi.y2 * spatial_scale;
        const double bw = bx2 - bx1, bh = by2 - by1;
        if (!(bw > 0.0) || !(bh > 0.0))
            throw std::invalid_argument("roi_align: degenerate roi (" + std::to_string(roi.x1) + ", " +
                                        std::to_string(roi.y1) + ", " + std::to_string(roi.x2) + ", " +
                                        std::to_string(roi.y2) + ") at scale " + std::to_string(spatial_scale));
        const double bin_w = bw / static_cast<double>(s);
        const double bin_h = bh / static_cast<double>(s);
        int64_t k = 0;
        for (int64_t py = 0; py < s; ++py)
            for (int64_t px = 0; px < s; ++px)
                for (int64_t iy = 0; iy < ns; ++iy)
                    for (int64_t ix = 0; ix < ns; ++ix) {
                        const double sy = by1 + (static_cast<double>(py) +
                                                 (static_cast<double>(iy) + 0.5) / static_cast<double>(ns)) *
                                                    bin_h;
                        const double sx = bx1 + (static_cast<double>(px) +
                                                 (static_cast<double>(ix) + 0.5) / static_cast<double>(ns)) *
                                                    bin_w;
                        plans[static_cast<size_t>(r * plans_per_roi + k++)] = detail::plan_sample(sy, sx, h, w);
                    }
    }

    auto node = detail::make_op_node({nr, c, s, s}, "roi_align", {level_map.node()});
    const double* pm = level_map.data();
    double* po = node->value.data();
    const double inv_ns2 = 1.0 / static_cast<double>(ns * ns);
    for (int64_t r = 0; r < nr; ++r) {
        const detail::BilinearSample* rp = plans.data() + r * plans_per_roi;
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* plane = pm + (batch_of[r] * c + ch) * h * w;
            double* out = po + (r * c + ch) * s * s;
            for (int64_t bin = 0; bin < s * s; ++bin) {
                double acc = 0.0;
                const detail::BilinearSample* bp = rp + bin * ns * ns;
                for (int64_t q = 0; q < ns * ns; ++q) {
                    const detail::BilinearSample& sp = bp[q];
                    acc += sp.w00 * plane[sp.idx00] + sp.w01 * plane[sp.idx01] + sp.w10 * plane[sp.idx10] +
                           sp.w11 * plane[sp.idx11];
                }
                out[bin] = acc * inv_ns2;
            }
        }
    }
    if (node->requires_grad) {
        node->backward = [plans, batch_of, plans_per_roi, c, h, w, s, ns, inv_ns2](detail::Node& self) {
            detail::Node& nm = *self.parents[0];
            if (!nm.requires_grad) return;
            nm.ensure_grad();
            const int64_t nr = static_cast<int64_t>(batch_of.size());
            for (int64_t r = 0; r < nr; ++r) {
                const detail::BilinearSample* rp = plans.data() + r * plans_per_roi;
                for (int64_t ch = 0; ch < c; ++ch) {
                    double* gplane = nm.grad.data() + (batch_of[r] * c + ch) * h * w;
                    const double* g = self.grad.data() + (r * c + ch) * s * s;
                    for (int64_t bin = 0; bin < s * s; ++bin) {
                        const double gv = g[bin] * inv_ns2;
                        const detail::BilinearSample* bp = rp + bin * ns * ns;
                        for (int64_t q = 0; q < ns * ns; ++q) {
                            const detail::BilinearSample& sp = bp[q];
                            gplane[sp.idx00] += gv * sp.w00;
                            gplane[sp.idx01] += gv * sp.w01;
                            gplane[sp.idx10] += gv * sp.w10;
                            gplane[sp.idx11] += gv * sp.w11;
                        }
                    }
                }
            }
        };
    }
    return Tensor(node);
}

// Single-roi convenience: returns {C, S, S}.
inline Tensor roi_align_one(const Tensor& level_map, const RoI& roi, int out_size, int sampling_ratio,
                            double spatial_scale) {
    Tensor out = roi_align(level_map, std::span<const RoI>(&roi, 1), out_size, sampling_ratio, spatial_scale);
    return reshape(out, {out.dim(1), out.dim(2), out.dim(3)});
}

}  // namespace ctxagg
