#pragma once

// Small parametric building blocks on top of the tensor engine:
// linear maps, an LSTM cell stack, and the parameter registry used by
// the optimizer and the checkpoint writer.

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fpa/tensor.hpp"

namespace fpa {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<Param<T>>;

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
template <typename T>
Tensor<T> init_uniform(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
    T bound = T(1) / std::sqrt(static_cast<T>(fan_in));
    std::uniform_real_distribution<T> dist(-bound, bound);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = dist(rng);
    t.set_requires_grad(true);
    return t;
}

template <typename T>
Tensor<T> init_gaussian(std::vector<int> shape, T stddev, std::mt19937_64& rng) {
    std::normal_distribution<T> dist(T(0), stddev);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = dist(rng);
    t.set_requires_grad(true);
    return t;
}

template <typename T>
struct Linear {
    Tensor<T> weight;  // [out, in]
    Tensor<T> bias;    // [out]
    bool has_bias = true;

    Linear() = default;
    Linear(int in, int out, std::mt19937_64& rng, bool with_bias = true) : has_bias(with_bias) {
        weight = init_uniform<T>({out, in}, in, rng);
        bias = with_bias ? init_uniform<T>({out}, in, rng)
                         : Tensor<T>::zeros({out});
        if (!with_bias) bias.set_requires_grad(false);
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> y = matvec(weight, x);
        return has_bias ? add(y, bias) : y;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".weight", weight});
        if (has_bias) out.push_back({prefix + ".bias", bias});
    }
};

// Single LSTM cell; gate order i, f, g, o. Forget-gate bias starts at +1.
template <typename T>
struct LstmCell {
    Tensor<T> w_ih;  // [4H, in]
    Tensor<T> w_hh;  // [4H, H]
    Tensor<T> bias;  // [4H]
    int hidden = 0;

    LstmCell() = default;
    LstmCell(int in, int h, std::mt19937_64& rng) : hidden(h) {
        w_ih = init_uniform<T>({4 * h, in}, in, rng);
        w_hh = init_uniform<T>({4 * h, h}, h, rng);
        bias = init_uniform<T>({4 * h}, h, rng);
        for (int i = h; i < 2 * h; ++i) bias.mutable_data()[i] += T(1);
    }

    std::pair<Tensor<T>, Tensor<T>> step(const Tensor<T>& x, const Tensor<T>& h,
                                         const Tensor<T>& c) const {
        Tensor<T> g = add(add(matvec(w_ih, x), matvec(w_hh, h)), bias);
        Tensor<T> i_g = sigmoid(slice(g, 0, hidden));
        Tensor<T> f_g = sigmoid(slice(g, hidden, hidden));
        Tensor<T> g_g = tanh(slice(g, 2 * hidden, hidden));
        Tensor<T> o_g = sigmoid(slice(g, 3 * hidden, hidden));
        Tensor<T> c_new = add(mul(f_g, c), mul(i_g, g_g));
        Tensor<T> h_new = mul(o_g, tanh(c_new));
        return {h_new, c_new};
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".w_ih", w_ih});
        out.push_back({prefix + ".w_hh", w_hh});
        out.push_back({prefix + ".bias", bias});
    }
};

template <typename T>
struct Conv2d {
    Tensor<T> weight;  // [Cout, Cin, k, k]
    Tensor<T> bias;    // [Cout]
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride_, int pad_, std::mt19937_64& rng)
        : stride(stride_), pad(pad_) {
        int fan_in = cin * k * k;
        weight = init_uniform<T>({cout, cin, k, k}, fan_in, rng);
        bias = init_uniform<T>({cout}, fan_in, rng);
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, stride, pad); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

template <typename T>
struct ConvTranspose2d {
    Tensor<T> weight;  // [Cin, Cout, k, k]
    Tensor<T> bias;    // [Cout]
    int stride = 1, pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(int cin, int cout, int k, int stride_, int pad_, std::mt19937_64& rng)
        : stride(stride_), pad(pad_) {
        int fan_in = cin * k * k;
        weight = init_uniform<T>({cin, cout, k, k}, fan_in, rng);
        bias = init_uniform<T>({cout}, fan_in, rng);
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        return conv_transpose2d(x, weight, bias, stride, pad);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

}  // namespace fpa
