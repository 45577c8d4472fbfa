#pragma once

// Outer-product weight update rules shared by the painter and the
// sequence-processing fast-weight network. All three rules take the
// already-normalized key (softmax applied by the caller) and are
// differentiable end-to-end.

#include <stdexcept>
#include <string>

#include "fpa/tensor.hpp"

namespace fpa {

enum class RuleKind { Delta, Additive, Oja };

inline std::string rule_name(RuleKind k) {
    switch (k) {
        case RuleKind::Delta: return "delta";
        case RuleKind::Additive: return "additive";
        case RuleKind::Oja: return "oja";
    }
    throw std::logic_error("rule_name: bad enum");
}

inline RuleKind rule_from_name(const std::string& s) {
    if (s == "delta") return RuleKind::Delta;
    if (s == "additive") return RuleKind::Additive;
    if (s == "oja") return RuleKind::Oja;
    throw std::invalid_argument("unknown learning rule '" + s + "' (expected delta|additive|oja)");
}

template <typename T>
struct RuleStep {
    Tensor<T> key;    // normalized key, [d_key]
    Tensor<T> value;  // [d_value]
    Tensor<T> lr;     // scalar in (0, 1)
};

namespace detail {
template <typename T>
void check_rule_shapes(const Tensor<T>& w, const RuleStep<T>& s) {
    if (w.ndim() != 2 || s.key.ndim() != 1 || s.value.ndim() != 1 || w.dim(0) != s.value.dim(0) ||
        w.dim(1) != s.key.dim(0))
        throw std::invalid_argument("learning rule: W " + shape_str(w.shape()) + " incompatible with key " +
                                    shape_str(s.key.shape()) + " / value " + shape_str(s.value.shape()));
}
}  // namespace detail

// W + lr * (v - W k) (x) k
template <typename T>
Tensor<T> apply_delta(const Tensor<T>& w, const RuleStep<T>& s) {
    detail::check_rule_shapes(w, s);
    Tensor<T> err = sub(s.value, matvec(w, s.key));
    return add(w, mul(outer(err, s.key), s.lr));
}

// W + lr * v (x) k
template <typename T>
Tensor<T> apply_additive(const Tensor<T>& w, const RuleStep<T>& s) {
    detail::check_rule_shapes(w, s);
    return add(w, mul(outer(s.value, s.key), s.lr));
}

// W + lr * v (x) (k - W^T v)
template <typename T>
Tensor<T> apply_oja(const Tensor<T>& w, const RuleStep<T>& s) {
    detail::check_rule_shapes(w, s);
    // W^T v as (v^T W)^T, avoiding an explicit transpose op
    int m = w.dim(0), n = w.dim(1);
    Tensor<T> vrow = reshape(s.value, {1, m});
    Tensor<T> wtv = reshape(matmul(vrow, w), {n});
    Tensor<T> post = sub(s.key, wtv);
    return add(w, mul(outer(s.value, post), s.lr));
}

template <typename T>
Tensor<T> apply_rule(RuleKind kind, const Tensor<T>& w, const RuleStep<T>& s) {
    switch (kind) {
        case RuleKind::Delta: return apply_delta(w, s);
        case RuleKind::Additive: return apply_additive(w, s);
        case RuleKind::Oja: return apply_oja(w, s);
    }
    throw std::logic_error("apply_rule: bad enum");
}

}  // namespace fpa
