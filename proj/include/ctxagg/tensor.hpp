// Dense double-precision n-d tensors with a reverse-mode gradient tape.
//
// Every differentiable operation records a node holding its output values,
// references to its inputs, and a closure that routes output gradients back
// to them. Tensor is a cheap value handle onto a shared node; node values are
// written once by the op that creates them and never mutated afterwards
// (leaves may be edited between passes). backward() replays the recorded
// graph in reverse topological order, visiting each node exactly once.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace ctxagg {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
    os << "]";
    return os.str();
}

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on first use
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

inline std::vector<int64_t> contiguous_strides(const Shape& s) {
    std::vector<int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

}  // namespace detail

// Thread-local switch: when disabled, ops compute values but record no graph.
class GradMode {
  public:
    static bool enabled() { return flag(); }
    static void set_enabled(bool on) { flag() = on; }

  private:
    static bool& flag() {
        thread_local bool on = true;
        return on;
    }
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    bool prev_;
};

// Reverse topological order over the recorded graph, rooted at one output.
struct Tape {
    std::vector<detail::Node*> order;  // parents always precede consumers

    static Tape record(detail::Node* root) {
        Tape tape;
        if (!root->requires_grad) return tape;
        std::unordered_set<detail::Node*> seen;
        // iterative post-order; pair = (node, next parent index to visit)
        std::vector<std::pair<detail::Node*, size_t>> stack;
        stack.emplace_back(root, 0);
        seen.insert(root);
        while (!stack.empty()) {
            auto& [node, idx] = stack.back();
            bool descended = false;
            while (idx < node->parents.size()) {
                detail::Node* p = node->parents[idx++].get();
                if (p->requires_grad && !seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                    descended = true;
                    break;
                }
            }
            if (!descended) {
                tape.order.push_back(node);
                stack.pop_back();
            }
        }
        return tape;
    }

    void run_backward() {
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::Node* n = *it;
            if (n->backward) {
                n->ensure_grad();
                n->backward(*n);
            }
        }
    }
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }

    static Tensor full(Shape shape, double v) {
        auto n = std::make_shared<detail::Node>();
        n->shape = std::move(shape);
        n->value.assign(shape_numel(n->shape), v);
        return Tensor(std::move(n));
    }

    static Tensor from(Shape shape, std::vector<double> data) {
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " does not match data length " +
                                        std::to_string(data.size()));
        auto n = std::make_shared<detail::Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        return Tensor(std::move(n));
    }

    static Tensor scalar(double v) { return full({1}, v); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t dim(size_t i) const { return node_->shape.at(i); }
    size_t rank() const { return node_->shape.size(); }
    int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

    const std::vector<double>& values() const { return node_->value; }
    std::vector<double>& values() { return node_->value; }
    const double* data() const { return node_->value.data(); }
    double* data() { return node_->value.data(); }

    double item() const {
        if (numel() != 1) throw std::logic_error("Tensor::item: tensor has " + std::to_string(numel()) + " elements");
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) {
        node_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    std::vector<double>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

    // Reverse pass from a scalar output. Each recorded op runs exactly once.
    void backward() const {
        if (numel() != 1) throw std::logic_error("backward: root must be scalar, got shape " + shape_str(shape()));
        if (!node_->requires_grad)
            throw std::logic_error("backward: root does not require grad (was the graph recorded?)");
        Tape tape = Tape::record(node_.get());
        node_->ensure_grad();
        node_->grad[0] += 1.0;
        tape.run_backward();
    }

    detail::NodePtr node() const { return node_; }

  private:
    detail::NodePtr node_;
};

namespace detail {

inline NodePtr make_op_node(Shape shape, const char* op, std::vector<NodePtr> parents) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.resize(shape_numel(n->shape));
    n->op = op;
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    if (rg && GradMode::enabled()) {
        n->requires_grad = true;
        n->parents = std::move(parents);
    }
    return n;
}

inline void check_finite(const Node& n) {
    for (double v : n.value)
        if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite value produced by op ") + n.op);
}

// ---- broadcasting ---------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(op) + ": rank mismatch between " + shape_str(a) + " and " +
                                    shape_str(b));
    Shape out(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i] || b[i] == 1)
            out[i] = a[i];
        else if (a[i] == 1)
            out[i] = b[i];
        else
            throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                                        shape_str(b));
    }
    return out;
}

// strides into `from` when iterating over `to`; 0 on broadcast axes
inline std::vector<int64_t> strides_into(const Shape& from, const Shape& to) {
    auto st = contiguous_strides(from);
    for (size_t i = 0; i < from.size(); ++i)
        if (from[i] == 1 && to[i] != 1) st[i] = 0;
    return st;
}

// Walks a broadcast output shape, calling fn(out_index, a_offset, b_offset).
template <typename Fn>
inline void for_each_broadcast(const Shape& out, const std::vector<int64_t>& sa, const std::vector<int64_t>& sb,
                               Fn&& fn) {
    const size_t r = out.size();
    const int64_t n = shape_numel(out);
    std::vector<int64_t> idx(r, 0);
    int64_t oa = 0, ob = 0;
    for (int64_t i = 0; i < n; ++i) {
        fn(i, oa, ob);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out[d]) break;
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

}  // namespace detail

// ---- elementwise binary ops ------------------------------------------------

namespace detail {

template <typename Fwd, typename BwdA, typename BwdB>
inline Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, BwdA dfa, BwdB dfb) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa == sb) {
        auto n = make_op_node(sa, name, {a.node(), b.node()});
        const double* pa = a.data();
        const double* pb = b.data();
        double* po = n->value.data();
        const int64_t cnt = a.numel();
        for (int64_t i = 0; i < cnt; ++i) po[i] = fwd(pa[i], pb[i]);
        if (n->requires_grad) {
            n->backward = [dfa, dfb](Node& self) {
                Node& na = *self.parents[0];
                Node& nb = *self.parents[1];
                const int64_t cnt = static_cast<int64_t>(self.value.size());
                if (na.requires_grad) {
                    na.ensure_grad();
                    for (int64_t i = 0; i < cnt; ++i) na.grad[i] += self.grad[i] * dfa(na.value[i], nb.value[i]);
                }
                if (nb.requires_grad) {
                    nb.ensure_grad();
                    for (int64_t i = 0; i < cnt; ++i) nb.grad[i] += self.grad[i] * dfb(na.value[i], nb.value[i]);
                }
            };
        }
        return Tensor(n);
    }
    Shape out = broadcast_shape(sa, sb, name);
    auto n = make_op_node(out, name, {a.node(), b.node()});
    auto stra = strides_into(sa, out);
    auto strb = strides_into(sb, out);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = n->value.data();
    for_each_broadcast(out, stra, strb, [&](int64_t i, int64_t oa, int64_t ob) { po[i] = fwd(pa[oa], pb[ob]); });
    if (n->requires_grad) {
        n->backward = [out, stra, strb, dfa, dfb](Node& self) {
            Node& na = *self.parents[0];
            Node& nb = *self.parents[1];
            if (na.requires_grad) na.ensure_grad();
            if (nb.requires_grad) nb.ensure_grad();
            for_each_broadcast(out, stra, strb, [&](int64_t i, int64_t oa, int64_t ob) {
                if (na.requires_grad) na.grad[oa] += self.grad[i] * dfa(na.value[oa], nb.value[ob]);
                if (nb.requires_grad) nb.grad[ob] += self.grad[i] * dfb(na.value[oa], nb.value[ob]);
            });
        };
    }
    return Tensor(n);
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

// ---- elementwise unary ops -------------------------------------------------

namespace detail {

template <typename Fwd, typename Bwd>
inline Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Bwd grad_from_in_out) {
    auto n = make_op_node(x.shape(), name, {x.node()});
    const double* px = x.data();
    double* po = n->value.data();
    const int64_t cnt = x.numel();
    for (int64_t i = 0; i < cnt; ++i) po[i] = fwd(px[i]);
    if (n->requires_grad) {
        n->backward = [grad_from_in_out](Node& self) {
            Node& nx = *self.parents[0];
            if (!nx.requires_grad) return;
            nx.ensure_grad();
            const int64_t cnt = static_cast<int64_t>(self.value.size());
            for (int64_t i = 0; i < cnt; ++i) nx.grad[i] += self.grad[i] * grad_from_in_out(nx.value[i], self.value[i]);
        };
    }
    return Tensor(n);
}

}  // namespace detail

// subgradient at 0 is defined as 0
inline Tensor relu(const Tensor& x) {
    return detail::unary_op(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& x) {
    return detail::unary_op(
        x, "sigmoid",
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor scale(const Tensor& x, double c) {
    return detail::unary_op(
        x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

// ---- reshape / concat / gather --------------------------------------------

inline Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
    auto n = detail::make_op_node(new_shape, "reshape", {x.node()});
    n->value = x.values();
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

inline Tensor concat(std::span<const Tensor> parts, size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw std::invalid_argument("concat: axis out of range");
    Shape out = first;
    out[axis] = 0;
    for (const Tensor& t : parts) {
        const Shape& s = t.shape();
        if (s.size() != first.size()) throw std::invalid_argument("concat: rank mismatch");
        for (size_t d = 0; d < s.size(); ++d)
            if (d != axis && s[d] != first[d])
                throw std::invalid_argument("concat: shapes " + shape_str(first) + " and " + shape_str(s) +
                                            " differ outside axis " + std::to_string(axis));
        out[axis] += s[axis];
    }
    std::vector<detail::NodePtr> ps;
    for (const Tensor& t : parts) ps.push_back(t.node());
    auto n = detail::make_op_node(out, "concat", std::move(ps));

    int64_t outer = 1;
    for (size_t d = 0; d < axis; ++d) outer *= out[d];
    int64_t inner = 1;
    for (size_t d = axis + 1; d < out.size(); ++d) inner *= out[d];
    const int64_t out_slab = out[axis] * inner;

    std::vector<int64_t> slabs;  // per-part axis*inner extents
    for (const Tensor& t : parts) slabs.push_back(t.shape()[axis] * inner);

    double* po = n->value.data();
    int64_t off = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
        const double* pp = parts[k].data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(po + o * out_slab + off, pp + o * slabs[k], static_cast<size_t>(slabs[k]) * sizeof(double));
        off += slabs[k];
    }
    if (n->requires_grad) {
        n->backward = [outer, out_slab, slabs](detail::Node& self) {
            int64_t off = 0;
            for (size_t k = 0; k < self.parents.size(); ++k) {
                detail::Node& p = *self.parents[k];
                if (p.requires_grad) {
                    p.ensure_grad();
                    for (int64_t o = 0; o < outer; ++o) {
                        const double* g = self.grad.data() + o * out_slab + off;
                        double* gp = p.grad.data() + o * slabs[k];
                        for (int64_t i = 0; i < slabs[k]; ++i) gp[i] += g[i];
                    }
                }
                off += slabs[k];
            }
        };
    }
    return Tensor(n);
}

inline Tensor concat_channels(std::span<const Tensor> parts) { return concat(parts, 1); }

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor parts[2] = {a, b};
    return concat(std::span<const Tensor>(parts, 2), 1);
}

// gather rows along axis 0 (duplicates allowed); backward scatters
inline Tensor take_rows(const Tensor& x, const std::vector<int64_t>& rows) {
    const Shape& s = x.shape();
    if (s.empty()) throw std::invalid_argument("take_rows: scalar input");
    Shape out = s;
    out[0] = static_cast<int64_t>(rows.size());
    int64_t row_sz = 1;
    for (size_t d = 1; d < s.size(); ++d) row_sz *= s[d];
    for (int64_t r : rows)
        if (r < 0 || r >= s[0]) throw std::out_of_range("take_rows: row " + std::to_string(r) + " out of range");
    auto n = detail::make_op_node(out, "take_rows", {x.node()});
    double* po = n->value.data();
    const double* px = x.data();
    for (size_t k = 0; k < rows.size(); ++k)
        std::memcpy(po + k * row_sz, px + rows[k] * row_sz, static_cast<size_t>(row_sz) * sizeof(double));
    if (n->requires_grad) {
        n->backward = [rows, row_sz](detail::Node& self) {
            detail::Node& nx = *self.parents[0];
            if (!nx.requires_grad) return;
            nx.ensure_grad();
            for (size_t k = 0; k < rows.size(); ++k) {
                const double* g = self.grad.data() + k * row_sz;
                double* gx = nx.grad.data() + rows[k] * row_sz;
                for (int64_t i = 0; i < row_sz; ++i) gx[i] += g[i];
            }
        };
    }
    return Tensor(n);
}

// ---- reductions ------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
    auto n = detail::make_op_node({1}, "sum", {x.node()});
    double acc = 0.0;
    const double* px = x.data();
    const int64_t cnt = x.numel();
    for (int64_t i = 0; i < cnt; ++i) acc += px[i];
    n->value[0] = acc;
    if (n->requires_grad) {
        n->backward = [](detail::Node& self) {
            detail::Node& nx = *self.parents[0];
            if (!nx.requires_grad) return;
            nx.ensure_grad();
            const double g = self.grad[0];
            for (double& gv : nx.grad) gv += g;
        };
    }
    return Tensor(n);
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

// mean over H and W of an NCHW map, keeping 1x1 spatial dims
inline Tensor spatial_mean(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("spatial_mean: expected NCHW, got " + shape_str(x.shape()));
    const int64_t nb = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    auto n = detail::make_op_node({nb, c, 1, 1}, "spatial_mean", {x.node()});
    const double* px = x.data();
    double* po = n->value.data();
    const double inv = 1.0 / static_cast<double>(hw);
    for (int64_t i = 0; i < nb * c; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < hw; ++j) acc += px[i * hw + j];
        po[i] = acc * inv;
    }
    if (n->requires_grad) {
        n->backward = [hw, inv](detail::Node& self) {
            detail::Node& nx = *self.parents[0];
            if (!nx.requires_grad) return;
            nx.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const double g = self.grad[i] * inv;
                double* gx = nx.grad.data() + static_cast<int64_t>(i) * hw;
                for (int64_t j = 0; j < hw; ++j) gx[j] += g;
            }
        };
    }
    return Tensor(n);
}

// sum over H and W of an NCHW map, keeping 1x1 spatial dims
inline Tensor spatial_sum(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("spatial_sum: expected NCHW, got " + shape_str(x.shape()));
    const int64_t nb = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    auto n = detail::make_op_node({nb, c, 1, 1}, "spatial_sum", {x.node()});
    const double* px = x.data();
    double* po = n->value.data();
    for (int64_t i = 0; i < nb * c; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < hw; ++j) acc += px[i * hw + j];
        po[i] = acc;
    }
    if (n->requires_grad) {
        n->backward = [hw](detail::Node& self) {
            detail::Node& nx = *self.parents[0];
            if (!nx.requires_grad) return;
            nx.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const double g = self.grad[i];
                double* gx = nx.grad.data() + static_cast<int64_t>(i) * hw;
                for (int64_t j = 0; j < hw; ++j) gx[j] += g;
            }
        };
    }
    return Tensor(n);
}

// ---- softmax ----------------------------------------------------------------

// softmax along one axis, computed with max subtraction
inline Tensor softmax(const Tensor& x, size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) throw std::invalid_argument("softmax: axis out of range for " + shape_str(s));
    auto n = detail::make_op_node(s, "softmax", {x.node()});
    int64_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= s[d];
    for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const int64_t len = s[axis];
    const double* px = x.data();
    double* po = n->value.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * len * inner + in;
            double mx = px[base];
            for (int64_t l = 1; l < len; ++l) mx = std::max(mx, px[base + l * inner]);
            double z = 0.0;
            for (int64_t l = 0; l < len; ++l) {
                double e = std::exp(px[base + l * inner] - mx);
                po[base + l * inner] = e;
                z += e;
            }
            const double invz = 1.0 / z;
            for (int64_t l = 0; l < len; ++l) po[base + l * inner] *= invz;
        }
    }
    if (n->requires_grad) {
        n->backward = [outer, inner, len](detail::Node& self) {
            detail::Node& nx = *self.parents[0];
            if (!nx.requires_grad) return;
            nx.ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t in = 0; in < inner; ++in) {
                    const int64_t base = o * len * inner + in;
                    double dot = 0.0;
                    for (int64_t l = 0; l < len; ++l) dot += self.grad[base + l * inner] * self.value[base + l * inner];
                    for (int64_t l = 0; l < len; ++l) {
                        const int64_t k = base + l * inner;
                        nx.grad[k] += self.value[k] * (self.grad[k] - dot);
                    }
                }
            }
        };
    }
    return Tensor(n);
}

// softmax jointly over the H and W axes of an NCHW map
inline Tensor softmax_spatial(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("softmax_spatial: expected NCHW, got " + shape_str(x.shape()));
    const Shape s = x.shape();
    Tensor flat = reshape(x, {s[0], s[1], s[2] * s[3]});
    return reshape(softmax(flat, 2), s);
}

// ---- weighted sum of equal-shape maps ---------------------------------------

// out = sum_k maps[k] * w[k]; w has shape {k}
inline Tensor weighted_sum(std::span<const Tensor> maps, const Tensor& w) {
    if (maps.empty()) throw std::invalid_argument("weighted_sum: no inputs");
    if (w.rank() != 1 || w.dim(0) != static_cast<int64_t>(maps.size()))
        throw std::invalid_argument("weighted_sum: weight shape " + shape_str(w.shape()) + " does not match " +
                                    std::to_string(maps.size()) + " maps");
    const Shape& s = maps[0].shape();
    for (const Tensor& m : maps)
        if (m.shape() != s)
            throw std::invalid_argument("weighted_sum: map shapes differ: " + shape_str(s) + " vs " +
                                        shape_str(m.shape()));
    std::vector<detail::NodePtr> ps;
    for (const Tensor& m : maps) ps.push_back(m.node());
    ps.push_back(w.node());
    auto n = detail::make_op_node(s, "weighted_sum", std::move(ps));
    const int64_t cnt = shape_numel(s);
    double* po = n->value.data();
    std::fill(po, po + cnt, 0.0);
    for (size_t k = 0; k < maps.size(); ++k) {
        const double wk = w.data()[k];
        const double* pm = maps[k].data();
        for (int64_t i = 0; i < cnt; ++i) po[i] += wk * pm[i];
    }
    if (n->requires_grad) {
        const size_t nmaps = maps.size();
        n->backward = [cnt, nmaps](detail::Node& self) {
            detail::Node& nw = *self.parents[nmaps];
            for (size_t k = 0; k < nmaps; ++k) {
                detail::Node& nm = *self.parents[k];
                const double wk = nw.value[k];
                if (nm.requires_grad) {
                    nm.ensure_grad();
                    for (int64_t i = 0; i < cnt; ++i) nm.grad[i] += wk * self.grad[i];
                }
                if (nw.requires_grad) {
                    nw.ensure_grad();
                    double acc = 0.0;
                    for (int64_t i = 0; i < cnt; ++i) acc += self.grad[i] * nm.value[i];
                    nw.grad[k] += acc;
                }
            }
        };
    }
    return Tensor(n);
}

}  // namespace ctxagg
