// Structured NCHW operations: convolution (im2col + blocked GEMM), max
// pooling, bilinear resampling, and a frozen per-channel affine. All run
// single-threaded with a fixed summation order, so repeated passes over the
// same inputs are bit-identical.
#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "ctxagg/tensor.hpp"

namespace ctxagg {
namespace detail {

// C (m x n) += A (m x k) * B (k x n), all row-major
inline void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c) {
    for (int64_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C (m x k) += A (m x n) * B^T, where B is (k x n) row-major
inline void gemm_nt(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        double* ci = c + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double* bp = b + p * n;
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += ai[j] * bp[j];
            ci[p] += acc;
        }
    }
}

// C (k x n) += A^T * B, where A is (m x k) and B is (m x n), row-major
inline void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, const double* b, double* c) {
    for (int64_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            double* cp = c + p * n;
            for (int64_t j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

struct Conv2dDims {
    int64_t n, cin, h, w, cout, kh, kw, oh, ow;
    int stride, padding;
};

// column buffer layout: (cin*kh*kw) x (oh*ow)
inline void im2col(const double* img, const Conv2dDims& d, double* col) {
    const int64_t hw = d.h * d.w;
    const int64_t ohw = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin; ++c) {
        const double* plane = img + c * hw;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                double* row = col + ((c * d.kh + ky) * d.kw + kx) * ohw;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    const int64_t iy = oy * d.stride - d.padding + ky;
                    if (iy < 0 || iy >= d.h) {
                        std::fill(row + oy * d.ow, row + (oy + 1) * d.ow, 0.0);
                        continue;
                    }
                    const double* src = plane + iy * d.w;
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        const int64_t ix = ox * d.stride - d.padding + kx;
                        row[oy * d.ow + ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

inline void col2im_accumulate(const double* col, const Conv2dDims& d, double* img_grad) {
    const int64_t hw = d.h * d.w;
    const int64_t ohw = d.oh * d.ow;
    for (int64_t c = 0; c < d.cin; ++c) {
        double* plane = img_grad + c * hw;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                const double* row = col + ((c * d.kh + ky) * d.kw + kx) * ohw;
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    const int64_t iy = oy * d.stride - d.padding + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    double* dst = plane + iy * d.w;
                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                        const int64_t ix = ox * d.stride - d.padding + kx;
                        if (ix >= 0 && ix < d.w) dst[ix] += row[oy * d.ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// 2-d convolution over NCHW input with a (cout, cin, kh, kw) kernel and
// optional per-channel bias. Differentiable in input, kernel, and bias.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias = Tensor(), int stride = 1,
                     int padding = 0) {
    if (input.rank() != 4 || kernel.rank() != 4)
        throw std::invalid_argument("conv2d: need NCHW input and (cout,cin,kh,kw) kernel, got input " +
                                    shape_str(input.shape()) + " kernel " + shape_str(kernel.shape()));
    detail::Conv2dDims d;
    d.n = input.dim(0), d.cin = input.dim(1), d.h = input.dim(2), d.w = input.dim(3);
    d.cout = kernel.dim(0), d.kh = kernel.dim(2), d.kw = kernel.dim(3);
    d.stride = stride, d.padding = padding;
    if (kernel.dim(1) != d.cin)
        throw std::invalid_argument("conv2d: channel mismatch between input " + shape_str(input.shape()) +
                                    " and kernel " + shape_str(kernel.shape()));
    if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: invalid stride/padding");
    d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
    d.ow = (d.w + 2 * padding - d.kw) / stride + 1;
    if (d.h + 2 * padding < d.kh || d.w + 2 * padding < d.kw || d.oh < 1 || d.ow < 1)
        throw std::invalid_argument("conv2d: kernel " + shape_str(kernel.shape()) + " does not fit input " +
                                    shape_str(input.shape()) + " with padding " + std::to_string(padding));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.cout))
        throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) + " does not match cout " +
                                    std::to_string(d.cout));

    std::vector<detail::NodePtr> parents{input.node(), kernel.node()};
    if (bias.defined()) parents.push_back(bias.node());
    auto n = detail::make_op_node({d.n, d.cout, d.oh, d.ow}, "conv2d", std::move(parents));

    const int64_t k = d.cin * d.kh * d.kw;
    const int64_t ohw = d.oh * d.ow;
    std::vector<double> col(static_cast<size_t>(k) * ohw);
    const double* px = input.data();
    const double* pw = kernel.data();
    double* po = n->value.data();
    for (int64_t b = 0; b < d.n; ++b) {
        detail::im2col(px + b * d.cin * d.h * d.w, d, col.data());
        double* out_b = po + b * d.cout * ohw;
        std::fill(out_b, out_b + d.cout * ohw, 0.0);
        detail::gemm_nn(d.cout, ohw, k, pw, col.data(), out_b);
    }
    if (bias.defined()) {
        const double* pb = bias.data();
        for (int64_t b = 0; b < d.n; ++b)
            for (int64_t c = 0; c < d.cout; ++c) {
                double* row = po + (b * d.cout + c) * ohw;
                const double bv = pb[c];
                for (int64_t i = 0; i < ohw; ++i) row[i] += bv;
            }
    }

    if (n->requires_grad) {
        const bool has_bias = bias.defined();
        n->backward = [d, k, ohw, has_bias](detail::Node& self) {
            detail::Node& nx = *self.parents[0];
            detail::Node& nw = *self.parents[1];
            const double* g = self.grad.data();
            if (has_bias) {
                detail::Node& nb = *self.parents[2];
                if (nb.requires_grad) {
                    nb.ensure_grad();
                    for (int64_t b = 0; b < d.n; ++b)
                        for (int64_t c = 0; c < d.cout; ++c) {
                            const double* row = g + (b * d.cout + c) * ohw;
                            double acc = 0.0;
                            for (int64_t i = 0; i < ohw; ++i) acc += row[i];
                            nb.grad[c] += acc;
                        }
                }
            }
            if (!nx.requires_grad && !nw.requires_grad) return;
            std::vector<double> col(static_cast<size_t>(k) * ohw);
            std::vector<double> gcol;
            if (nx.requires_grad) {
                nx.ensure_grad();
                gcol.resize(static_cast<size_t>(k) * ohw);
            }
            if (nw.requires_grad) nw.ensure_grad();
            for (int64_t b = 0; b < d.n; ++b) {
                const double* gout_b = g + b * d.cout * ohw;
                if (nw.requires_grad) {
                    detail::im2col(nx.value.data() + b * d.cin * d.h * d.w, d, col.data());
                    detail::gemm_nt(d.cout, ohw, k, gout_b, col.data(), nw.grad.data());
                }
                if (nx.requires_grad) {
                    std::fill(gcol.begin(), gcol.end(), 0.0);
                    detail::gemm_tn(d.cout, ohw, k, nw.value.data(), gout_b, gcol.data());
                    detail::col2im_accumulate(gcol.data(), d, nx.grad.data() + b * d.cin * d.h * d.w);
                }
            }
        };
    }
    return Tensor(n);
}

// Max pooling without padding; input extents must tile exactly, i.e.
// (h - window) and (w - window) divisible by stride. Gradient is routed to
// the argmax cell; ties resolve to the lowest linear index (the scan uses a
// strict `>` in row-major window order).
inline Tensor maxpool2d(const Tensor& input, int window, int stride) {
    if (input.rank() != 4) throw std::invalid_argument("maxpool2d: expected NCHW, got " + shape_str(input.shape()));
    const int64_t nb = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (window < 1 || stride < 1) throw std::invalid_argument("maxpool2d: invalid window/stride");
    if (window > h || window > w)
        throw std::invalid_argument("maxpool2d: window " + std::to_string(window) + " exceeds spatial extent of " +
                                    shape_str(input.shape()));
    if ((h - window) % stride != 0 || (w - window) % stride != 0)
        throw std::invalid_argument("maxpool2d: input " + shape_str(input.shape()) +
                                    " does not tile exactly with window " + std::to_string(window) + " stride " +
                                    std::to_string(stride));
    const int64_t oh = (h - window) / stride + 1;
    const int64_t ow = (w - window) / stride + 1;
    auto n = detail::make_op_node({nb, c, oh, ow}, "maxpool2d", {input.node()});
    const double* px = input.data();
    double* po = n->value.data();
    std::vector<int64_t> argmax(static_cast<size_t>(nb * c * oh * ow));
    for (int64_t bc = 0; bc < nb * c; ++bc) {
        const double* plane = px + bc * h * w;
        for (int64_t oy = 0; oy < oh; ++oy) {
            for (int64_t ox = 0; ox < ow; ++ox) {
                const int64_t y0 = oy * stride, x0 = ox * stride;
                int64_t best = y0 * w + x0;
                double bv = plane[best];
                for (int64_t ky = 0; ky < window; ++ky)
                    for (int64_t kx = 0; kx < window; ++kx) {
                        const int64_t idx = (y0 + ky) * w + (x0 + kx);
                        if (plane[idx] > bv) {
                            bv = plane[idx];
                            best = idx;
                        }
                    }
                const int64_t o = (bc * oh + oy) * ow + ox;
                po[o] = bv;
                argmax[o] = bc * h * w + best;
            }
        }
    }
    if (n->requires_grad) {
        n->backward = [argmax](detail::Node& self) {
            detail::Node& nx = *self.parents[0];
            if (!nx.requires_grad) return;
            nx.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) nx.grad[argmax[i]] += self.grad[i];
        };
    }
    return Tensor(n);
}

namespace detail {

struct BilinearAxis {
    std::vector<int64_t> i0, i1;
    std::vector<double> f;  // weight of i1
};

// half-pixel centers: src = (dst + 0.5) * in/out - 0.5, clamped to the border
inline BilinearAxis bilinear_axis(int64_t in, int64_t out) {
    BilinearAxis ax;
    ax.i0.resize(out);
    ax.i1.resize(out);
    ax.f.resize(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t d = 0; d < out; ++d) {
        double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        const double cap = static_cast<double>(in - 1);
        if (src > cap) src = cap;
        int64_t lo = static_cast<int64_t>(std::floor(src));
        if (lo > in - 2) lo = in - 2;
        if (lo < 0) lo = 0;
        ax.i0[d] = lo;
        ax.i1[d] = in > 1 ? lo + 1 : 0;
        ax.f[d] = in > 1 ? src - static_cast<double>(lo) : 0.0;
    }
    return ax;
}

}  // namespace detail

// Bilinear resampling with half-pixel centers (align_corners = false).
// Resizing to the input size returns a bit-identical copy.
inline Tensor bilinear_resize(const Tensor& input, int64_t out_h, int64_t out_w) {
    if (input.rank() != 4)
        throw std::invalid_argument("bilinear_resize: expected NCHW, got " + shape_str(input.shape()));
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("bilinear_resize: output extents must be >= 1");
    const int64_t nb = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (out_h == h && out_w == w) {
        auto n = detail::make_op_node({nb, c, h, w}, "bilinear_resize", {input.node()});
        n->value = input.values();
        if (n->requires_grad) {
            n->backward = [](detail::Node& self) {
                detail::Node& nx = *self.parents[0];
                if (!nx.requires_grad) return;
                nx.ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) nx.grad[i] += self.grad[i];
            };
        }
        return Tensor(n);
    }
    auto ay = detail::bilinear_axis(h, out_h);
    auto ax = detail::bilinear_axis(w, out_w);
    auto n = detail::make_op_node({nb, c, out_h, out_w}, "bilinear_resize", {input.node()});
    const double* px = input.data();
    double* po = n->value.data();
    for (int64_t bc = 0; bc < nb * c; ++bc) {
        const double* plane = px + bc * h * w;
        double* out = po + bc * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const double fy = ay.f[oy];
            const double* r0 = plane + ay.i0[oy] * w;
            const double* r1 = plane + ay.i1[oy] * w;
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const double fx = ax.f[ox];
                const double top = r0[ax.i0[ox]] + fx * (r0[ax.i1[ox]] - r0[ax.i0[ox]]);
                const double bot = r1[ax.i0[ox]] + fx * (r1[ax.i1[ox]] - r1[ax.i0[ox]]);
                out[oy * out_w + ox] = top + fy * (bot - top);
            }
        }
    }
    if (n->requires_grad) {
        n->backward = [ay, ax, h, w, out_h, out_w](detail::Node& self) {
            detail::Node& nx = *self.parents[0];
            if (!nx.requires_grad) return;
            nx.ensure_grad();
            const int64_t planes = static_cast<int64_t>(self.grad.size()) / (out_h * out_w);
            for (int64_t bc = 0; bc < planes; ++bc) {
                const double* g = self.grad.data() + bc * out_h * out_w;
                double* gx = nx.grad.data() + bc * h * w;
                for (int64_t oy = 0; oy < out_h; ++oy) {
                    const double fy = ay.f[oy];
                    for (int64_t ox = 0; ox < out_w; ++ox) {
                        const double fx = ax.f[ox];
                        const double gv = g[oy * out_w + ox];
                        gx[ay.i0[oy] * w + ax.i0[ox]] += gv * (1.0 - fy) * (1.0 - fx);
                        gx[ay.i0[oy] * w + ax.i1[ox]] += gv * (1.0 - fy) * fx;
                        gx[ay.i1[oy] * w + ax.i0[ox]] += gv * fy * (1.0 - fx);
                        gx[ay.i1[oy] * w + ax.i1[ox]] += gv * fy * fx;
                    }
                }
            }
        };
    }
    return Tensor(n);
}

// Frozen per-channel affine (scale, shift); stands in where a batch norm
// would sit at full scale. No running statistics.
inline Tensor channel_affine(const Tensor& x, const Tensor& scale_t, const Tensor& shift_t) {
    if (x.rank() != 4) throw std::invalid_argument("channel_affine: expected NCHW, got " + shape_str(x.shape()));
    const int64_t c = x.dim(1);
    if (scale_t.numel() != c || shift_t.numel() != c)
        throw std::invalid_argument("channel_affine: scale/shift must have one entry per channel");
    Tensor s4 = reshape(scale_t, {1, c, 1, 1});
    Tensor b4 = reshape(shift_t, {1, c, 1, 1});
    return add(mul(x, s4), b4);
}

}  // namespace ctxagg
