#pragma once

// Central finite-difference gradient verification (64-bit).

#include <algorithm>
#include <functional>
#include <vector>

#include "fpa/tensor.hpp"

namespace fpa {

struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool ok(double tol) const { return max_rel_error < tol; }
};

// f must rebuild the computation from the current leaf values on every call.
inline GradCheckResult grad_check(const std::function<Tensor<double>()>& f,
                                  std::vector<Tensor<double>> leaves, double eps = 1e-4) {
    for (auto& leaf : leaves) leaf.zero_grad();  // grads accumulate across backward calls
    Tensor<double> loss = f();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    GradCheckResult res;
    NoGradGuard ng;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& vals = leaves[li].mutable_data();
        for (size_t i = 0; i < vals.size(); ++i) {
            double orig = vals[i];
            vals[i] = orig + eps;
            double fp = f().item();
            vals[i] = orig - eps;
            double fm = f().item();
            vals[i] = orig;
            double fd = (fp - fm) / (2.0 * eps);
            double an = analytic[li][i];
            double abs_err = std::fabs(fd - an);
            // floor keeps fd round-off noise from dominating near-zero gradients
            double denom = std::max({std::fabs(fd), std::fabs(an), 1e-3});
            res.max_abs_error = std::max(res.max_abs_error, abs_err);
            res.max_rel_error = std::max(res.max_rel_error, abs_err / denom);
        }
    }
    return res;
}

}  // namespace fpa
