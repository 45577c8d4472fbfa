#pragma once

// Adam with bias correction. beta1 defaults to 0.5, the usual GAN setting.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fpa/nn.hpp"

namespace fpa {

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m, v;
    long long t = 0;
};

template <typename T>
void adam_step(ParamList<T>& params, AdamState<T>& st, T lr, T beta1 = T(0.5),
               T beta2 = T(0.999), T eps = T(1e-8)) {
    if (st.m.empty()) {
        for (auto& p : params) {
            st.m.emplace_back(p.tensor.numel(), T(0));
            st.v.emplace_back(p.tensor.numel(), T(0));
        }
    }
    if (st.m.size() != params.size())
        throw std::invalid_argument("adam_step: state does not match parameter list");
    ++st.t;
    T bc1 = T(1) - std::pow(beta1, static_cast<T>(st.t));
    T bc2 = T(1) - std::pow(beta2, static_cast<T>(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& val = params[i].tensor.mutable_data();
        const auto& grad = params[i].tensor.grad();
        if (val.size() != st.m[i].size())
            throw std::invalid_argument("adam_step: shape drift in parameter " + params[i].name);
        for (size_t j = 0; j < val.size(); ++j) {
            T g = grad[j];
            if (std::isnan(g))
                throw std::domain_error("adam_step: NaN gradient in parameter " + params[i].name);
            st.m[i][j] = beta1 * st.m[i][j] + (T(1) - beta1) * g;
            st.v[i][j] = beta2 * st.v[i][j] + (T(1) - beta2) * g * g;
            T mhat = st.m[i][j] / bc1;
            T vhat = st.v[i][j] / bc2;
            val[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

template <typename T>
void zero_grads(ParamList<T>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace fpa
