// Classic momentum SGD:
//   buf <- momentum * buf + (grad + weight_decay * param)
//   param <- param - lr * buf
#pragma once

#include <span>
#include <vector>

#include "ctxagg/params.hpp"
#include "ctxagg/tensor.hpp"

namespace ctxagg {

// Single update over a parameter list with caller-held momentum buffers.
// Parameters whose gradient buffer was never populated are skipped.
inline void sgd_step(std::span<Tensor> params, double lr, double momentum, double weight_decay,
                     std::vector<std::vector<double>>& buffers) {
    if (buffers.size() != params.size()) buffers.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (!p.has_grad()) continue;
        const std::vector<double>& g = p.grad();
        std::vector<double>& buf = buffers[i];
        if (buf.size() != g.size()) buf.assign(g.size(), 0.0);
        double* data = p.data();
        for (size_t k = 0; k < g.size(); ++k) {
            buf[k] = momentum * buf[k] + (g[k] + weight_decay * data[k]);
            data[k] -= lr * buf[k];
        }
    }
}

class SgdOptimizer {
  public:
    SgdOptimizer(ParamMap& params, double lr, double momentum = 0.9, double weight_decay = 1e-4)
        : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
        for (auto& p : params) params_.push_back(p.tensor);
        buffers_.resize(params_.size());
    }

    // applies the update, then zeroes all gradients for the next step
    void step() {
        sgd_step(params_, lr_, momentum_, weight_decay_, buffers_);
        for (Tensor& p : params_) p.zero_grad();
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

  private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> buffers_;
    double lr_, momentum_, weight_decay_;
};

}  // namespace ctxagg
