// Central-difference gradient verification for scalar-valued composites.
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ctxagg/tensor.hpp"

namespace ctxagg {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_coordinate;  // "param_index[k]"
};

// Runs fn once for the analytic gradients, then perturbs every coordinate of
// every listed parameter by +/-eps. Relative error is
// |analytic - numeric| / max(1, |analytic|, |numeric|). Throws if any value,
// gradient, or probe evaluation is non-finite, naming the coordinate.
inline GradCheckResult grad_check(const std::function<Tensor()>& fn, const std::vector<Tensor>& params,
                                  double eps = 1e-5) {
    for (const Tensor& p : params)
        if (!p.requires_grad()) throw std::invalid_argument("grad_check: all parameters must require grad");

    for (Tensor p : params) p.zero_grad();
    Tensor out = fn();
    if (!std::isfinite(out.item())) throw std::runtime_error("grad_check: forward value is non-finite");
    out.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const Tensor& p : params) analytic.push_back(p.grad());

    GradCheckResult res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        double* data = p.data();
        const int64_t n = p.numel();
        for (int64_t k = 0; k < n; ++k) {
            const std::string coord = "param" + std::to_string(pi) + "[" + std::to_string(k) + "]";
            const double saved = data[k];
            data[k] = saved + eps;
            double fp;
            {
                NoGradGuard ng;
                fp = fn().item();
            }
            data[k] = saved - eps;
            double fm;
            {
                NoGradGuard ng;
                fm = fn().item();
            }
            data[k] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::runtime_error("grad_check: non-finite probe at " + coord);
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[pi][static_cast<size_t>(k)];
            if (!std::isfinite(a)) throw std::runtime_error("grad_check: non-finite analytic gradient at " + coord);
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_coordinate = coord;
            }
        }
    }
    return res;
}

}  // namespace ctxagg
