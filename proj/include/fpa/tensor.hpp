#pragma once

// Dense tensor with reverse-mode automatic differentiation.
// Define-by-run: every op records its backward rule on the node graph;
// backward() walks the graph once in reverse topological order.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace fpa {

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

inline size_t shape_numel(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
        if (d < 1) throw std::invalid_argument("non-positive dimension in shape " + shape_str(s));
        n *= static_cast<size_t>(d);
    }
    return n;
}

// Thread-local switch: with grad disabled, ops do not record backward rules.
struct GradMode {
    static bool& enabled() {
        thread_local bool on = true;
        return on;
    }
};

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
    ~NoGradGuard() { GradMode::enabled() = prev; }
};

template <typename T>
struct TensorNode {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // sized lazily during backward
    bool requires_grad = false;
    bool needs_grad = false;  // this node or an ancestor requires grad
    bool backward_done = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;

    size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : node_(std::make_shared<TensorNode<T>>()) {
        node_->shape = std::move(shape);
        node_->value.assign(shape_numel(node_->shape), T(0));
    }

    Tensor(std::vector<int> shape, std::vector<T> data) : node_(std::make_shared<TensorNode<T>>()) {
        size_t n = shape_numel(shape);
        if (data.size() != n)
            throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        node_->shape = std::move(shape);
        node_->value = std::move(data);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, T v) {
        Tensor t(std::move(shape));
        for (auto& x : t.node_->value) x = v;
        return t;
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    size_t numel() const { return node_->numel(); }
    int dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
    int ndim() const { return static_cast<int>(node_->shape.size()); }

    const std::vector<T>& data() const { return node_->value; }
    std::vector<T>& mutable_data() { return node_->value; }
    T item() const {
        if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
        return node_->value[0];
    }

    Tensor& set_requires_grad(bool rg = true) {
        if (rg && (node_->backprop || !node_->parents.empty()))
            throw std::invalid_argument("requires_grad can only be set on leaf tensors");
        node_->requires_grad = rg;
        node_->needs_grad = rg;
        return *this;
    }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<T>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    std::vector<T>& mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    // Value copy detached from the graph.
    Tensor detach() const { return Tensor(node_->shape, node_->value); }

    std::shared_ptr<TensorNode<T>> node() const { return node_; }

    static Tensor from_node(std::shared_ptr<TensorNode<T>> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_op(std::vector<int> shape, std::vector<T> value,
                  std::vector<Tensor<T>> parents,
                  std::function<void(TensorNode<T>&)> backprop) {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (GradMode::enabled()) {
        bool any = false;
        for (auto& p : parents) any = any || p.node()->needs_grad;
        if (any) {
            n->needs_grad = true;
            for (auto& p : parents) n->parents.push_back(p.node());
            n->backprop = std::move(backprop);
        }
    }
    return Tensor<T>::from_node(std::move(n));
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    // scalar operands broadcast
    if (a.numel() == 1 && b.numel() != 1) return add(b, a);
    if (b.numel() == 1 && a.numel() != 1) {
        T bv = b.data()[0];
        std::vector<T> out(a.data());
        for (auto& x : out) x += bv;
        auto an = a.node(), bn = b.node();
        return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& n) {
            an->ensure_grad();
            bn->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) {
                an->grad[i] += n.grad[i];
                bn->grad[0] += n.grad[i];
            }
        });
    }
    detail::check_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& n) {
        an->ensure_grad();
        bn->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            an->grad[i] += n.grad[i];
            bn->grad[i] += n.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& n) {
        an->ensure_grad();
        bn->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            an->grad[i] += n.grad[i];
            bn->grad[i] -= n.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.numel() == 1 && b.numel() != 1) return mul(b, a);
    if (b.numel() == 1 && a.numel() != 1) {
        T bv = b.data()[0];
        std::vector<T> out(a.numel());
        for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * bv;
        auto an = a.node(), bn = b.node();
        return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& n) {
            an->ensure_grad();
            bn->ensure_grad();
            T bv2 = bn->value[0];
            for (size_t i = 0; i < n.grad.size(); ++i) {
                an->grad[i] += n.grad[i] * bv2;
                bn->grad[0] += n.grad[i] * an->value[i];
            }
        });
    }
    detail::check_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& n) {
        an->ensure_grad();
        bn->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            an->grad[i] += n.grad[i] * bn->value[i];
            bn->grad[i] += n.grad[i] * an->value[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an, c](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * c;
    });
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& a, T c) {
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return scale(a, T(-1));
}

// ---------------------------------------------------------------------------
// activations

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-a.data()[i]));
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            T y = n.value[i];
            an->grad[i] += n.grad[i] * y * (T(1) - y);
        }
    });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            T y = n.value[i];
            an->grad[i] += n.grad[i] * (T(1) - y * y);
        }
    });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (an->value[i] > T(0)) an->grad[i] += n.grad[i];
    });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? a.data()[i] : slope * a.data()[i];
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an, slope](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            an->grad[i] += n.grad[i] * (an->value[i] > T(0) ? T(1) : slope);
    });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.data()[i]);
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            an->grad[i] += n.grad[i] * (an->value[i] >= T(0) ? T(1) : T(-1));
    });
}

// Pass-through gradient inside [lo, hi], zero outside.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, a.data()[i]));
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an, lo, hi](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (an->value[i] > lo && an->value[i] < hi) an->grad[i] += n.grad[i];
    });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
    if (a.ndim() != 1) throw std::invalid_argument("softmax: expected 1-D input, got " + shape_str(a.shape()));
    T mx = a.data()[0];
    for (T v : a.data()) {
        if (std::isnan(v)) throw std::domain_error("softmax: NaN input");
        mx = std::max(mx, v);
    }
    std::vector<T> out(a.numel());
    T z = T(0);
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(a.data()[i] - mx);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        T dot = T(0);
        for (size_t i = 0; i < n.grad.size(); ++i) dot += n.grad[i] * n.value[i];
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.value[i] * (n.grad[i] - dot);
    });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a) {
    if (a.ndim() != 1) throw std::invalid_argument("log_softmax: expected 1-D input");
    T mx = a.data()[0];
    for (T v : a.data()) mx = std::max(mx, v);
    T z = T(0);
    for (T v : a.data()) z += std::exp(v - mx);
    T logz = std::log(z) + mx;
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - logz;
    auto an = a.node();
    return detail::make_op<T>(a.shape(), std::move(out), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        T gsum = T(0);
        for (size_t i = 0; i < n.grad.size(); ++i) gsum += n.grad[i];
        for (size_t i = 0; i < n.grad.size(); ++i)
            an->grad[i] += n.grad[i] - std::exp(n.value[i]) * gsum;
    });
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T s = std::accumulate(a.data().begin(), a.data().end(), T(0));
    auto an = a.node();
    return detail::make_op<T>({1}, {s}, {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (auto& g : an->grad) g += n.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    T inv = T(1) / static_cast<T>(a.numel());
    T s = std::accumulate(a.data().begin(), a.data().end(), T(0)) * inv;
    auto an = a.node();
    return detail::make_op<T>({1}, {s}, {a}, [an, inv](TensorNode<T>& n) {
        an->ensure_grad();
        for (auto& g : an->grad) g += n.grad[0] * inv;
    });
}

template <typename T>
Tensor<T> dot(const Tensor<T>& u, const Tensor<T>& v) {
    detail::check_same_shape(u, v, "dot");
    T s = T(0);
    for (size_t i = 0; i < u.numel(); ++i) s += u.data()[i] * v.data()[i];
    auto un = u.node(), vn = v.node();
    return detail::make_op<T>({1}, {s}, {u, v}, [un, vn](TensorNode<T>& n) {
        un->ensure_grad();
        vn->ensure_grad();
        for (size_t i = 0; i < un->value.size(); ++i) {
            un->grad[i] += n.grad[0] * vn->value[i];
            vn->grad[i] += n.grad[0] * un->value[i];
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(static_cast<size_t>(m) * n, T(0));
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            T av = a.data()[static_cast<size_t>(i) * k + p];
            for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += av * b.data()[static_cast<size_t>(p) * n + j];
        }
    auto an = a.node(), bn = b.node();
    return detail::make_op<T>({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode<T>& nd) {
        an->ensure_grad();
        bn->ensure_grad();
        // dA = dC * B^T ; dB = A^T * dC
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                T g = nd.grad[static_cast<size_t>(i) * n + j];
                if (g == T(0)) continue;
                for (int p = 0; p < k; ++p) {
                    an->grad[static_cast<size_t>(i) * k + p] += g * bn->value[static_cast<size_t>(p) * n + j];
                    bn->grad[static_cast<size_t>(p) * n + j] += g * an->value[static_cast<size_t>(i) * k + p];
                }
            }
    });
}

template <typename T>
Tensor<T> matvec(const Tensor<T>& a, const Tensor<T>& x) {
    if (a.ndim() != 2 || x.ndim() != 1 || a.dim(1) != x.dim(0))
        throw std::invalid_argument("matvec: incompatible shapes " + shape_str(a.shape()) + " and " +
                                    shape_str(x.shape()));
    int m = a.dim(0), k = a.dim(1);
    std::vector<T> out(static_cast<size_t>(m), T(0));
    for (int i = 0; i < m; ++i) {
        T s = T(0);
        const T* row = a.data().data() + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) s += row[p] * x.data()[p];
        out[static_cast<size_t>(i)] = s;
    }
    auto an = a.node(), xn = x.node();
    return detail::make_op<T>({m}, std::move(out), {a, x}, [an, xn, m, k](TensorNode<T>& nd) {
        an->ensure_grad();
        xn->ensure_grad();
        for (int i = 0; i < m; ++i) {
            T g = nd.grad[static_cast<size_t>(i)];
            if (g == T(0)) continue;
            for (int p = 0; p < k; ++p) {
                an->grad[static_cast<size_t>(i) * k + p] += g * xn->value[p];
                xn->grad[p] += g * an->value[static_cast<size_t>(i) * k + p];
            }
        }
    });
}

template <typename T>
Tensor<T> outer(const Tensor<T>& u, const Tensor<T>& v) {
    if (u.ndim() != 1 || v.ndim() != 1)
        throw std::invalid_argument("outer: expected 1-D inputs, got " + shape_str(u.shape()) + " and " +
                                    shape_str(v.shape()));
    int m = u.dim(0), n = v.dim(0);
    std::vector<T> out(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] = u.data()[i] * v.data()[j];
    auto un = u.node(), vn = v.node();
    return detail::make_op<T>({m, n}, std::move(out), {u, v}, [un, vn, m, n](TensorNode<T>& nd) {
        un->ensure_grad();
        vn->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                T g = nd.grad[static_cast<size_t>(i) * n + j];
                un->grad[i] += g * vn->value[j];
                vn->grad[j] += g * un->value[i];
            }
    });
}

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<int> new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(new_shape));
    auto an = a.node();
    return detail::make_op<T>(std::move(new_shape), std::vector<T>(a.data()), {a}, [an](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty input list");
    std::vector<int> tail(parts[0].shape().begin() + 1, parts[0].shape().end());
    int d0 = 0;
    size_t total = 0;
    for (auto& p : parts) {
        std::vector<int> ptail(p.shape().begin() + 1, p.shape().end());
        if (ptail != tail)
            throw std::invalid_argument("concat: trailing dims mismatch " + shape_str(p.shape()) +
                                        " vs " + shape_str(parts[0].shape()));
        d0 += p.dim(0);
        total += p.numel();
    }
    std::vector<int> shape = parts[0].shape();
    shape[0] = d0;
    std::vector<T> out;
    out.reserve(total);
    for (auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (auto& p : parts) nodes.push_back(p.node());
    return detail::make_op<T>(std::move(shape), std::move(out), parts, [nodes](TensorNode<T>& n) {
        size_t off = 0;
        for (auto& pn : nodes) {
            pn->ensure_grad();
            for (size_t i = 0; i < pn->value.size(); ++i) pn->grad[i] += n.grad[off + i];
            off += pn->value.size();
        }
    });
}

// Slice along the leading axis: rows [start, start+len).
template <typename T>
Tensor<T> slice(const Tensor<T>& a, int start, int len) {
    if (start < 0 || len < 1 || start + len > a.dim(0))
        throw std::invalid_argument("slice: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + len) + ") out of bounds for " +
                                    shape_str(a.shape()));
    size_t stride = a.numel() / static_cast<size_t>(a.dim(0));
    std::vector<int> shape = a.shape();
    shape[0] = len;
    std::vector<T> out(a.data().begin() + start * stride, a.data().begin() + (start + len) * stride);
    auto an = a.node();
    return detail::make_op<T>(std::move(shape), std::move(out), {a}, [an, start, stride](TensorNode<T>& n) {
        an->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[static_cast<size_t>(start) * stride + i] += n.grad[i];
    });
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, int chunk) {
    if (chunk < 1 || a.dim(0) % chunk != 0)
        throw std::invalid_argument("split: leading dim " + std::to_string(a.dim(0)) +
                                    " not divisible by " + std::to_string(chunk));
    std::vector<Tensor<T>> out;
    for (int s = 0; s < a.dim(0); s += chunk) out.push_back(slice(a, s, chunk));
    return out;
}

// ---------------------------------------------------------------------------
// image ops ([C,H,W] layout)

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad) {
    if (x.ndim() != 3 || w.ndim() != 4 || x.dim(0) != w.dim(1))
        throw std::invalid_argument("conv2d: incompatible shapes " + shape_str(x.shape()) + " and " +
                                    shape_str(w.shape()));
    int ci = x.dim(0), h = x.dim(1), ww = x.dim(2);
    int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (b.ndim() != 1 || b.dim(0) != co)
        throw std::invalid_argument("conv2d: bias shape " + shape_str(b.shape()) + " does not match " +
                                    std::to_string(co) + " output channels");
    int oh = (h + 2 * pad - kh) / stride + 1;
    int ow = (ww + 2 * pad - kw) / stride + 1;
    if (oh < 1 || ow < 1) throw std::invalid_argument("conv2d: kernel larger than padded input");
    std::vector<T> out(static_cast<size_t>(co) * oh * ow);
    const T* xd = x.data().data();
    const T* wd = w.data().data();
    for (int o = 0; o < co; ++o)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                T s = b.data()[o];
                for (int i = 0; i < ci; ++i)
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const T* xrow = xd + (static_cast<size_t>(i) * h + iy) * ww;
                        const T* wrow = wd + ((static_cast<size_t>(o) * ci + i) * kh + ky) * kw;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= ww) continue;
                            s += xrow[ix] * wrow[kx];
                        }
                    }
                out[(static_cast<size_t>(o) * oh + oy) * ow + ox] = s;
            }
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return detail::make_op<T>({co, oh, ow}, std::move(out), {x, w, b},
                              [xn, wn, bn, ci, h, ww, co, kh, kw, oh, ow, stride, pad](TensorNode<T>& n) {
                                  xn->ensure_grad();
                                  wn->ensure_grad();
                                  bn->ensure_grad();
                                  for (int o = 0; o < co; ++o)
                                      for (int oy = 0; oy < oh; ++oy)
                                          for (int ox = 0; ox < ow; ++ox) {
                                              T g = n.grad[(static_cast<size_t>(o) * oh + oy) * ow + ox];
                                              if (g == T(0)) continue;
                                              bn->grad[o] += g;
                                              for (int i = 0; i < ci; ++i)
                                                  for (int ky = 0; ky < kh; ++ky) {
                                                      int iy = oy * stride + ky - pad;
                                                      if (iy < 0 || iy >= h) continue;
                                                      size_t xoff = (static_cast<size_t>(i) * h + iy) * ww;
                                                      size_t woff = ((static_cast<size_t>(o) * ci + i) * kh + ky) * kw;
                                                      for (int kx = 0; kx < kw; ++kx) {
                                                          int ix = ox * stride + kx - pad;
                                                          if (ix < 0 || ix >= ww) continue;
                                                          xn->grad[xoff + ix] += g * wn->value[woff + kx];
                                                          wn->grad[woff + kx] += g * xn->value[xoff + ix];
                                                      }
                                                  }
                                          }
                              });
}

// Transposed convolution; weight layout [Cin, Cout, kh, kw].
// Output size: (in - 1) * stride - 2 * pad + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad) {
    if (x.ndim() != 3 || w.ndim() != 4 || x.dim(0) != w.dim(0))
        throw std::invalid_argument("conv_transpose2d: incompatible shapes " + shape_str(x.shape()) +
                                    " and " + shape_str(w.shape()));
    int ci = x.dim(0), h = x.dim(1), ww = x.dim(2);
    int co = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (b.ndim() != 1 || b.dim(0) != co)
        throw std::invalid_argument("conv_transpose2d: bias shape mismatch");
    int oh = (h - 1) * stride - 2 * pad + kh;
    int ow = (ww - 1) * stride - 2 * pad + kw;
    if (oh < 1 || ow < 1) throw std::invalid_argument("conv_transpose2d: degenerate output size");
    std::vector<T> out(static_cast<size_t>(co) * oh * ow);
    for (int o = 0; o < co; ++o)
        for (size_t p = 0; p < static_cast<size_t>(oh) * ow; ++p) out[static_cast<size_t>(o) * oh * ow + p] = b.data()[o];
    for (int i = 0; i < ci; ++i)
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < ww; ++ix) {
                T xv = x.data()[(static_cast<size_t>(i) * h + iy) * ww + ix];
                for (int o = 0; o < co; ++o)
                    for (int ky = 0; ky < kh; ++ky) {
                        int oy = iy * stride + ky - pad;
                        if (oy < 0 || oy >= oh) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ox = ix * stride + kx - pad;
                            if (ox < 0 || ox >= ow) continue;
                            out[(static_cast<size_t>(o) * oh + oy) * ow + ox] +=
                                xv * w.data()[((static_cast<size_t>(i) * co + o) * kh + ky) * kw + kx];
                        }
                    }
            }
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return detail::make_op<T>({co, oh, ow}, std::move(out), {x, w, b},
                              [xn, wn, bn, ci, h, ww, co, kh, kw, oh, ow, stride, pad](TensorNode<T>& n) {
                                  xn->ensure_grad();
                                  wn->ensure_grad();
                                  bn->ensure_grad();
                                  for (int o = 0; o < co; ++o)
                                      for (size_t p = 0; p < static_cast<size_t>(oh) * ow; ++p)
                                          bn->grad[o] += n.grad[static_cast<size_t>(o) * oh * ow + p];
                                  for (int i = 0; i < ci; ++i)
                                      for (int iy = 0; iy < h; ++iy)
                                          for (int ix = 0; ix < ww; ++ix) {
                                              size_t xidx = (static_cast<size_t>(i) * h + iy) * ww + ix;
                                              for (int o = 0; o < co; ++o)
                                                  for (int ky = 0; ky < kh; ++ky) {
                                                      int oy = iy * stride + ky - pad;
                                                      if (oy < 0 || oy >= oh) continue;
                                                      for (int kx = 0; kx < kw; ++kx) {
                                                          int ox = ix * stride + kx - pad;
                                                          if (ox < 0 || ox >= ow) continue;
                                                          size_t widx = ((static_cast<size_t>(i) * co + o) * kh + ky) * kw + kx;
                                                          T g = n.grad[(static_cast<size_t>(o) * oh + oy) * ow + ox];
                                                          xn->grad[xidx] += g * wn->value[widx];
                                                          wn->grad[widx] += g * xn->value[xidx];
                                                      }
                                                  }
                                          }
                              });
}

// Average pooling with a factor x factor box filter.
template <typename T>
Tensor<T> box_downsample(const Tensor<T>& x, int factor) {
    if (x.ndim() != 3) throw std::invalid_argument("box_downsample: expected [C,H,W], got " + shape_str(x.shape()));
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (factor < 1 || h % factor != 0 || w % factor != 0)
        throw std::invalid_argument("box_downsample: " + shape_str(x.shape()) + " not divisible by factor " +
                                    std::to_string(factor));
    int oh = h / factor, ow = w / factor;
    T inv = T(1) / static_cast<T>(factor * factor);
    std::vector<T> out(static_cast<size_t>(c) * oh * ow, T(0));
    for (int i = 0; i < c; ++i)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                T s = T(0);
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        s += x.data()[(static_cast<size_t>(i) * h + oy * factor + dy) * w + ox * factor + dx];
                out[(static_cast<size_t>(i) * oh + oy) * ow + ox] = s * inv;
            }
    auto xn = x.node();
    return detail::make_op<T>({c, oh, ow}, std::move(out), {x}, [xn, c, h, w, oh, ow, factor, inv](TensorNode<T>& n) {
        xn->ensure_grad();
        for (int i = 0; i < c; ++i)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    T g = n.grad[(static_cast<size_t>(i) * oh + oy) * ow + ox] * inv;
                    for (int dy = 0; dy < factor; ++dy)
                        for (int dx = 0; dx < factor; ++dx)
                            xn->grad[(static_cast<size_t>(i) * h + oy * factor + dy) * w + ox * factor + dx] += g;
                }
    });
}

// ---------------------------------------------------------------------------
// backward

template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
    for (T v : loss.data())
        if (std::isnan(v)) throw std::domain_error("backward: loss is NaN");
    auto root = loss.node();
    if (root->backward_done) throw std::logic_error("backward: tape already consumed for this loss");

    // iterative DFS topological sort
    std::vector<TensorNode<T>*> topo;
    std::vector<std::pair<TensorNode<T>*, size_t>> stack;
    std::unordered_map<TensorNode<T>*, int> state;  // 0 unseen, 1 in-stack, 2 done
    stack.push_back({root.get(), 0});
    state[root.get()] = 1;
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            TensorNode<T>* p = n->parents[idx++].get();
            if (state[p] == 0) {
                state[p] = 1;
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(n);
            state[n] = 2;
            stack.pop_back();
        }
    }
    for (auto* n : topo) n->ensure_grad();
    root->grad[0] = T(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
    root->backward_done = true;
    // release the recorded graph; leaf gradients stay accessible
    for (auto* n : topo)
        if (n->backprop) {
            n->backprop = nullptr;
            n->parents.clear();
        }
}

}  // namespace fpa
