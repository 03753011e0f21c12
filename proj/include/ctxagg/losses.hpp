// Fused training losses with numerically stable forwards and hand-written
// backwards. Each returns a scalar tensor (mean reduction).
#pragma once

#include <cmath>
#include <vector>

#include "ctxagg/tensor.hpp"

namespace ctxagg {

// Softmax cross-entropy over rows of (n, classes) logits.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels) {
    if (logits.rank() != 2)
        throw std::invalid_argument("cross_entropy: expected (n, classes) logits, got " + shape_str(logits.shape()));
    const int64_t n = logits.dim(0), m = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != n)
        throw std::invalid_argument("cross_entropy: label count does not match rows");
    for (int64_t l : labels)
        if (l < 0 || l >= m) throw std::out_of_range("cross_entropy: label out of range");
    auto node = detail::make_op_node({1}, "cross_entropy", {logits.node()});
    const double* px = logits.data();
    std::vector<double> probs(static_cast<size_t>(n * m));
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double* row = px + i * m;
        double mx = row[0];
        for (int64_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int64_t j = 0; j < m; ++j) {
            const double e = std::exp(row[j] - mx);
            probs[i * m + j] = e;
            z += e;
        }
        for (int64_t j = 0; j < m; ++j) probs[i * m + j] /= z;
        loss += std::log(z) + mx - row[labels[i]];
    }
    node->value[0] = loss / static_cast<double>(n);
    if (node->requires_grad) {
        node->backward = [n, m, labels, probs](detail::Node& self) {
            detail::Node& nx = *self.parents[0];
            if (!nx.requires_grad) return;
            nx.ensure_grad();
            const double g = self.grad[0] / static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < m; ++j)
                    nx.grad[i * m + j] += g * (probs[i * m + j] - (j == labels[i] ? 1.0 : 0.0));
        };
    }
    return Tensor(node);
}

// Per-element binary cross-entropy on logits against {0,1} targets,
// mean over all elements. Stable form: max(x,0) - x*t + log1p(exp(-|x|)).
inline Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    if (logits.shape() != targets.shape())
        throw std::invalid_argument("bce_with_logits: shape mismatch " + shape_str(logits.shape()) + " vs " +
                                    shape_str(targets.shape()));
    auto node = detail::make_op_node({1}, "bce_with_logits", {logits.node(), targets.node()});
    const double* px = logits.data();
    const double* pt = targets.data();
    const int64_t cnt = logits.numel();
    double loss = 0.0;
    for (int64_t i = 0; i < cnt; ++i) {
        const double x = px[i];
        loss += std::max(x, 0.0) - x * pt[i] + std::log1p(std::exp(-std::fabs(x)));
    }
    node->value[0] = loss / static_cast<double>(cnt);
    if (node->requires_grad) {
        node->backward = [cnt](detail::Node& self) {
            detail::Node& nx = *self.parents[0];
            detail::Node& nt = *self.parents[1];
            const double g = self.grad[0] / static_cast<double>(cnt);
            if (nx.requires_grad) {
                nx.ensure_grad();
                for (int64_t i = 0; i < cnt; ++i) {
                    const double x = nx.value[i];
                    const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                    nx.grad[i] += g * (s - nt.value[i]);
                }
            }
            if (nt.requires_grad) {
                nt.ensure_grad();
                for (int64_t i = 0; i < cnt; ++i) nt.grad[i] += g * (-nx.value[i]);
            }
        };
    }
    return Tensor(node);
}

// Huber / smooth-L1 with beta = 1, mean over all elements.
inline Tensor smooth_l1(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument("smooth_l1: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                    shape_str(target.shape()));
    auto node = detail::make_op_node({1}, "smooth_l1", {pred.node(), target.node()});
    const double* pp = pred.data();
    const double* pt = target.data();
    const int64_t cnt = pred.numel();
    double loss = 0.0;
    for (int64_t i = 0; i < cnt; ++i) {
        const double d = pp[i] - pt[i];
        const double a = std::fabs(d);
        loss += a < 1.0 ? 0.5 * d * d : a - 0.5;
    }
    node->value[0] = loss / static_cast<double>(cnt);
    if (node->requires_grad) {
        node->backward = [cnt](detail::Node& self) {
            detail::Node& np = *self.parents[0];
            detail::Node& nt = *self.parents[1];
            const double g = self.grad[0] / static_cast<double>(cnt);
            for (int64_t i = 0; i < cnt; ++i) {
                const double d = np.value[i] - nt.value[i];
                const double dd = d < -1.0 ? -1.0 : (d > 1.0 ? 1.0 : d);
                if (np.requires_grad) {
                    np.ensure_grad();
                    np.grad[i] += g * dd;
                }
                if (nt.requires_grad) {
                    nt.ensure_grad();
                    nt.grad[i] -= g * dd;
                }
            }
        };
    }
    return Tensor(node);
}

}  // namespace ctxagg
