// Named learnable parameters. Modules hand their tensors to a ParamMap under
// a path prefix; the map enforces unique names and preserves insertion order
// so optimizer state and checkpoints line up deterministically.
#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxagg/rng.hpp"
#include "ctxagg/tensor.hpp"

namespace ctxagg {

struct Parameter {
    std::string name;
    Tensor tensor;
    std::string init_spec;
};

class ParamMap {
  public:
    void add(std::string name, Tensor t, std::string init_spec = "") {
        if (!t.defined()) throw std::invalid_argument("ParamMap: undefined tensor for " + name);
        if (by_name_.count(name)) throw std::invalid_argument("ParamMap: duplicate parameter name " + name);
        by_name_[name] = items_.size();
        items_.push_back(Parameter{std::move(name), std::move(t), std::move(init_spec)});
    }

    bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

    Parameter& at(const std::string& name) {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw std::out_of_range("ParamMap: no parameter named " + name);
        return items_[it->second];
    }
    const Parameter& at(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw std::out_of_range("ParamMap: no parameter named " + name);
        return items_[it->second];
    }

    size_t size() const { return items_.size(); }
    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& p : items_) n += p.tensor.numel();
        return n;
    }

    void zero_grads() {
        for (auto& p : items_) p.tensor.zero_grad();
    }

  private:
    std::vector<Parameter> items_;
    std::unordered_map<std::string, size_t> by_name_;
};

// ---- initializers ----------------------------------------------------------

inline Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape)).set_requires_grad(); }

// uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]
inline Tensor fanin_uniform_param(Shape shape, int64_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> data(static_cast<size_t>(shape_numel(shape)));
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Tensor::from(std::move(shape), std::move(data)).set_requires_grad();
}

inline std::string fanin_spec(int64_t fan_in) { return "fanin_uniform(" + std::to_string(fan_in) + ")"; }

}  // namespace ctxagg
