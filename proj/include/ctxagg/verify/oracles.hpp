// Naive reference implementations used for verification. These operate on
// plain arrays with direct loops and share no code with the production ops
// they check.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ctxagg::oracle {

// direct 6-loop convolution, NCHW
inline std::vector<double> conv2d(const std::vector<double>& input, int64_t n, int64_t cin, int64_t h, int64_t w,
                                  const std::vector<double>& kernel, int64_t cout, int64_t kh, int64_t kw,
                                  const std::vector<double>& bias, int stride, int padding) {
    const int64_t oh = (h + 2 * padding - kh) / stride + 1;
    const int64_t ow = (w + 2 * padding - kw) / stride + 1;
    std::vector<double> out(static_cast<size_t>(n * cout * oh * ow), 0.0);
    for (int64_t b = 0; b < n; ++b)
        for (int64_t co = 0; co < cout; ++co)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[static_cast<size_t>(co)];
                    for (int64_t ci = 0; ci < cin; ++ci)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t iy = oy * stride - padding + ky;
                                const int64_t ix = ox * stride - padding + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += input[static_cast<size_t>(((b * cin + ci) * h + iy) * w + ix)] *
                                       kernel[static_cast<size_t>(((co * cin + ci) * kh + ky) * kw + kx)];
                            }
                    out[static_cast<size_t>(((b * cout + co) * oh + oy) * ow + ox)] = acc;
                }
    return out;
}

inline std::vector<double> maxpool2d(const std::vector<double>& input, int64_t n, int64_t c, int64_t h, int64_t w,
                                     int window, int stride) {
    const int64_t oh = (h - window) / stride + 1;
    const int64_t ow = (w - window) / stride + 1;
    std::vector<double> out(static_cast<size_t>(n * c * oh * ow));
    for (int64_t bc = 0; bc < n * c; ++bc)
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                double best = -1e300;
                for (int ky = 0; ky < window; ++ky)
                    for (int kx = 0; kx < window; ++kx)
                        best = std::max(best,
                                        input[static_cast<size_t>((bc * h + oy * stride + ky) * w + ox * stride + kx)]);
                out[static_cast<size_t>((bc * oh + oy) * ow + ox)] = best;
            }
    return out;
}

// one bilinear sample from a single plane, half-pixel centers, border clamp
inline double bilinear_at(const double* plane, int64_t h, int64_t w, double y, double x) {
    double iy = y - 0.5, ix = x - 0.5;
    iy = std::min(std::max(iy, 0.0), static_cast<double>(h - 1));
    ix = std::min(std::max(ix, 0.0), static_cast<double>(w - 1));
    int64_t y0 = static_cast<int64_t>(std::floor(iy));
    int64_t x0 = static_cast<int64_t>(std::floor(ix));
    if (y0 > h - 2) y0 = h >= 2 ? h - 2 : 0;
    if (x0 > w - 2) x0 = w >= 2 ? w - 2 : 0;
    const int64_t y1 = h > 1 ? y0 + 1 : 0;
    const int64_t x1 = w > 1 ? x0 + 1 : 0;
    const double fy = h > 1 ? iy - y0 : 0.0;
    const double fx = w > 1 ? ix - x0 : 0.0;
    return (1.0 - fy) * (1.0 - fx) * plane[y0 * w + x0] + (1.0 - fy) * fx * plane[y0 * w + x1] +
           fy * (1.0 - fx) * plane[y1 * w + x0] + fy * fx * plane[y1 * w + x1];
}

// full-map resize via per-output-pixel sampling
inline std::vector<double> bilinear_resize(const std::vector<double>& input, int64_t n, int64_t c, int64_t h,
                                           int64_t w, int64_t oh, int64_t ow) {
    std::vector<double> out(static_cast<size_t>(n * c * oh * ow));
    for (int64_t bc = 0; bc < n * c; ++bc) {
        const double* plane = input.data() + bc * h * w;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                const double sy = (oy + 0.5) * static_cast<double>(h) / oh;
                const double sx = (ox + 0.5) * static_cast<double>(w) / ow;
                out[static_cast<size_t>((bc * oh + oy) * ow + ox)] = bilinear_at(plane, h, w, sy, sx);
            }
    }
    return out;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    std::vector<double> out(x.size());
    double z = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

// roi_align on one plane set: box in image coordinates, scale onto the map
inline std::vector<double> roi_align(const std::vector<double>& map, int64_t c, int64_t h, int64_t w, double x1,
                                     double y1, double x2, double y2, int out_size, int sampling_ratio,
                                     double spatial_scale) {
    const double bx1 = x1 * spatial_scale, by1 = y1 * spatial_scale;
    const double bw = (x2 - x1) * spatial_scale, bh = (y2 - y1) * spatial_scale;
    const int s = out_size, ns = sampling_ratio;
    std::vector<double> out(static_cast<size_t>(c * s * s), 0.0);
    for (int64_t ch = 0; ch < c; ++ch) {
        const double* plane = map.data() + ch * h * w;
        for (int py = 0; py < s; ++py)
            for (int px = 0; px < s; ++px) {
                double acc = 0.0;
                for (int iy = 0; iy < ns; ++iy)
                    for (int ix = 0; ix < ns; ++ix) {
                        const double sy = by1 + (py + (iy + 0.5) / ns) * (bh / s);
                        const double sx = bx1 + (px + (ix + 0.5) / ns) * (bw / s);
                        acc += bilinear_at(plane, h, w, sy, sx);
                    }
                out[static_cast<size_t>((ch * s + py) * s + px)] = acc / (ns * ns);
            }
    }
    return out;
}

// CABlock composed from scalar loops: key/value/gate are 1x1 projections,
// refine is a CxC matrix on the pooled vector.
struct CABlockWeights {
    std::vector<double> wk, bk;  // c, 1
    std::vector<double> wv, bv;  // c*c, c
    std::vector<double> wa, ba;  // c, 1
    std::vector<double> wr, br;  // c*c, c
};

inline std::vector<double> cablock_forward(const std::vector<double>& p, int64_t c, int64_t h, int64_t w,
                                           const CABlockWeights& ww) {
    const int64_t npix = h * w;
    auto pixel = [&](int64_t ch, int64_t j) { return p[static_cast<size_t>(ch * npix + j)]; };
    // attention over pixels
    std::vector<double> key(npix), gate_raw(npix);
    for (int64_t j = 0; j < npix; ++j) {
        double kacc = ww.bk[0], aacc = ww.ba[0];
        for (int64_t ch = 0; ch < c; ++ch) {
            kacc += ww.wk[static_cast<size_t>(ch)] * pixel(ch, j);
            aacc += ww.wa[static_cast<size_t>(ch)] * pixel(ch, j);
        }
        key[static_cast<size_t>(j)] = kacc;
        gate_raw[static_cast<size_t>(j)] = aacc;
    }
    std::vector<double> alpha = softmax(key);
    std::vector<double> gate = softmax(gate_raw);
    // pooled value vector
    std::vector<double> pooled(static_cast<size_t>(c), 0.0);
    for (int64_t j = 0; j < npix; ++j) {
        for (int64_t co = 0; co < c; ++co) {
            double v = ww.bv[static_cast<size_t>(co)];
            for (int64_t ci = 0; ci < c; ++ci) v += ww.wv[static_cast<size_t>(co * c + ci)] * pixel(ci, j);
            pooled[static_cast<size_t>(co)] += alpha[static_cast<size_t>(j)] * v;
        }
    }
    std::vector<double> ctx(static_cast<size_t>(c));
    for (int64_t co = 0; co < c; ++co) {
        double v = ww.br[static_cast<size_t>(co)];
        for (int64_t ci = 0; ci < c; ++ci) v += ww.wr[static_cast<size_t>(co * c + ci)] * pooled[static_cast<size_t>(ci)];
        ctx[static_cast<size_t>(co)] = v;
    }
    std::vector<double> out(p.size());
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t j = 0; j < npix; ++j)
            out[static_cast<size_t>(ch * npix + j)] = pixel(ch, j) + gate[static_cast<size_t>(j)] * ctx[static_cast<size_t>(ch)];
    return out;
}

// soft-nms reference: straightforward restatement of the decay rule
struct Box {
    double x1, y1, x2, y2, score;
};

inline double iou(const Box& a, const Box& b) {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

inline std::vector<Box> soft_nms_linear(std::vector<Box> boxes, double thresh, double floor) {
    std::vector<Box> kept;
    while (!boxes.empty()) {
        size_t best = 0;
        for (size_t i = 1; i < boxes.size(); ++i)
            if (boxes[i].score > boxes[best].score) best = i;
        Box top = boxes[best];
        boxes.erase(boxes.begin() + static_cast<std::ptrdiff_t>(best));
        kept.push_back(top);
        std::vector<Box> rest;
        for (Box& b : boxes) {
            const double v = iou(top, b);
            double s = b.score;
            if (v > thresh) s *= (1.0 - v);
            if (s >= floor) {
                b.score = s;
                rest.push_back(b);
            }
        }
        boxes = std::move(rest);
    }
    return kept;
}

}  // namespace ctxagg::oracle
