#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fpa/adversary.hpp"
#include "fpa/gradcheck.hpp"

using fpa::Discriminator;
using fpa::Tensor;

namespace {

template <typename T>
void set_all(fpa::ParamList<T>& params, T v) {
    for (auto& p : params)
        for (auto& x : p.tensor.mutable_data()) x = v;
}

template <typename T>
Tensor<T> random_image(int c, int res, std::mt19937_64& rng) {
    std::uniform_real_distribution<T> dist(T(-1), T(1));
    Tensor<T> x({c, res, res});
    for (auto& v : x.mutable_data()) v = dist(rng);
    return x;
}

// scalar-loop conv oracle, double accumulation
std::vector<double> conv_ref(const std::vector<double>& x, int cin, int hin, int win,
                             const std::vector<double>& w, const std::vector<double>& b, int cout,
                             int k, int stride, int pad, int& hout, int& wout) {
    hout = (hin + 2 * pad - k) / stride + 1;
    wout = (win + 2 * pad - k) / stride + 1;
    std::vector<double> y(static_cast<size_t>(cout) * hout * wout);
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < hout; ++oy)
            for (int ox = 0; ox < wout; ++ox) {
                double s = b[co];
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= hin || ix < 0 || ix >= win) continue;
                            s += x[(static_cast<size_t>(ci) * hin + iy) * win + ix] *
                                 w[((static_cast<size_t>(co) * cin + ci) * k + ky) * k + kx];
                        }
                y[(static_cast<size_t>(co) * hout + oy) * wout + ox] = s;
            }
    return y;
}

std::vector<double> conv_t_ref(const std::vector<double>& x, int cin, int hin, int win,
                               const std::vector<double>& w, const std::vector<double>& b, int cout,
                               int k, int stride, int pad, int& hout, int& wout) {
    hout = (hin - 1) * stride - 2 * pad + k;
    wout = (win - 1) * stride - 2 * pad + k;
    std::vector<double> y(static_cast<size_t>(cout) * hout * wout);
    for (int co = 0; co < cout; ++co)
        for (size_t i = 0; i < static_cast<size_t>(hout) * wout; ++i)
            y[co * static_cast<size_t>(hout) * wout + i] = b[co];
    for (int ci = 0; ci < cin; ++ci)
        for (int iy = 0; iy < hin; ++iy)
            for (int ix = 0; ix < win; ++ix) {
                double v = x[(static_cast<size_t>(ci) * hin + iy) * win + ix];
                for (int co = 0; co < cout; ++co)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            int oy = iy * stride - pad + ky, ox = ix * stride - pad + kx;
                            if (oy < 0 || oy >= hout || ox < 0 || ox >= wout) continue;
                            y[(static_cast<size_t>(co) * hout + oy) * wout + ox] +=
                                v * w[((static_cast<size_t>(ci) * cout + co) * k + ky) * k + kx];
                        }
            }
    return y;
}

void leaky_ref(std::vector<double>& v, double slope) {
    for (auto& x : v)
        if (x < 0) x *= slope;
}

std::vector<double> tensor_values(const fpa::ParamList<double>& params, const std::string& name) {
    for (const auto& p : params)
        if (p.name == name) return p.tensor.data();
    FAIL("param not found: " << name);
    return {};
}

}  // namespace

TEST_CASE("zero-weight discriminator outputs zero score and mid reconstructions") {
    std::mt19937_64 rng(1);
    Discriminator<float> d(1, 16, rng);
    fpa::ParamList<float> params;
    d.collect_params(params);
    set_all(params, 0.f);
    Tensor<float> x = random_image<float>(1, 16, rng);
    auto out = d.forward(x);
    CHECK(out.score.data()[0] == 0.f);
    for (float v : out.recon8.data()) CHECK(v == 0.f);
    for (float v : out.recon16.data()) CHECK(v == 0.f);
    CHECK(out.recon8.shape() == std::vector<int>{1, 8, 8});
    CHECK(out.recon16.shape() == std::vector<int>{1, 16, 16});
}

TEST_CASE("forward is deterministic") {
    std::mt19937_64 rng(2);
    Discriminator<float> d(3, 16, rng);
    Tensor<float> x = random_image<float>(3, 16, rng);
    auto a = d.forward(x);
    auto b = d.forward(x);
    CHECK(a.score.data() == b.score.data());
    CHECK(a.recon8.data() == b.recon8.data());
    CHECK(a.recon16.data() == b.recon16.data());
}

TEST_CASE("forward rejects wrong resolution") {
    std::mt19937_64 rng(3);
    Discriminator<float> d(3, 16, rng);
    Tensor<float> x = random_image<float>(3, 32, rng);
    CHECK_THROWS_AS(d.forward(x), std::invalid_argument);
    CHECK_THROWS_AS(Discriminator<float>(3, 12, rng), std::invalid_argument);
}

TEST_CASE("scalar-loop oracle reproduces the full forward pass") {
    std::mt19937_64 rng(4);
    Discriminator<double> d(1, 16, rng);
    fpa::ParamList<double> params;
    d.collect_params(params);
    Tensor<double> x = random_image<double>(1, 16, rng);
    auto out = d.forward(x);

    const double slope = 0.2;
    int h = 16, w = 16;
    auto f8 = conv_ref(x.data(), 1, 16, 16, tensor_values(params, "disc.ladder0.weight"),
                       tensor_values(params, "disc.ladder0.bias"), 32, 4, 2, 1, h, w);
    leaky_ref(f8, slope);
    auto f4 = conv_ref(f8, 32, 8, 8, tensor_values(params, "disc.ladder1.weight"),
                       tensor_values(params, "disc.ladder1.bias"), 64, 4, 2, 1, h, w);
    leaky_ref(f4, slope);
    auto score = conv_ref(f4, 64, 4, 4, tensor_values(params, "disc.head.weight"),
                          tensor_values(params, "disc.head.bias"), 1, 4, 1, 0, h, w);
    CHECK(out.score.data()[0] == doctest::Approx(score[0]).epsilon(1e-10));

    auto up8 = conv_t_ref(f4, 64, 4, 4, tensor_values(params, "disc.dec8_up.weight"),
                          tensor_values(params, "disc.dec8_up.bias"), 16, 4, 2, 1, h, w);
    leaky_ref(up8, slope);
    auto rec8 = conv_ref(up8, 16, 8, 8, tensor_values(params, "disc.dec8_out.weight"),
                         tensor_values(params, "disc.dec8_out.bias"), 1, 3, 1, 1, h, w);
    for (size_t i = 0; i < rec8.size(); ++i)
        CHECK(out.recon8.data()[i] == doctest::Approx(std::tanh(rec8[i])).epsilon(1e-10));

    auto up16 = conv_t_ref(f8, 32, 8, 8, tensor_values(params, "disc.dec16_up.weight"),
                           tensor_values(params, "disc.dec16_up.bias"), 16, 4, 2, 1, h, w);
    leaky_ref(up16, slope);
    auto rec16 = conv_ref(up16, 16, 16, 16, tensor_values(params, "disc.dec16_out.weight"),
                          tensor_values(params, "disc.dec16_out.bias"), 1, 3, 1, 1, h, w);
    for (size_t i = 0; i < rec16.size(); ++i)
        CHECK(out.recon16.data()[i] == doctest::Approx(std::tanh(rec16[i])).epsilon(1e-10));
}

TEST_CASE("hinge discriminator loss hand cases") {
    auto val = [](std::vector<float> r, std::vector<float> f) {
        int nr = static_cast<int>(r.size()), nf = static_cast<int>(f.size());
        return fpa::hinge_d_loss(Tensor<float>({nr}, std::move(r)), Tensor<float>({nf}, std::move(f)))
            .data()[0];
    };
    CHECK(val({2.f}, {-2.f}) == 0.f);
    CHECK(val({0.f}, {0.f}) == 2.f);
    CHECK(val({1.f, -1.f}, {0.5f}) == doctest::Approx(2.5).epsilon(1e-7));
}

TEST_CASE("hinge generator loss hand cases") {
    auto val = [](std::vector<float> f) {
        int nf = static_cast<int>(f.size());
        return fpa::hinge_g_loss(Tensor<float>({nf}, std::move(f))).data()[0];
    };
    CHECK(val({0.f}) == 0.f);
    CHECK(val({1.f, 3.f}) == -2.f);
    CHECK(val({-5.f}) == 5.f);
}

TEST_CASE("reconstruction loss hand cases and oracle") {
    std::mt19937_64 rng(5);
    Tensor<float> real = random_image<float>(1, 16, rng);
    Tensor<float> t8 = fpa::box_downsample(real, 2);
    Tensor<float> t16 = real;
    CHECK(fpa::recon_loss(t8, t16, real).data()[0] == 0.f);

    Tensor<float> ones({1, 16, 16}, std::vector<float>(256, 1.f));
    Tensor<float> z8 = Tensor<float>::zeros({1, 8, 8});
    Tensor<float> z16 = Tensor<float>::zeros({1, 16, 16});
    CHECK(fpa::recon_loss(z8, z16, ones).data()[0] == doctest::Approx(2.0).epsilon(1e-7));

    // random case against a scalar MAE oracle
    Tensor<float> r8 = random_image<float>(1, 8, rng);
    Tensor<float> r16 = random_image<float>(1, 16, rng);
    double want = 0;
    {
        auto d8 = fpa::box_downsample(real, 2).data();
        double s = 0;
        for (size_t i = 0; i < d8.size(); ++i) s += std::abs(double(r8.data()[i]) - d8[i]);
        want += s / d8.size();
        s = 0;
        for (size_t i = 0; i < real.data().size(); ++i)
            s += std::abs(double(r16.data()[i]) - real.data()[i]);
        want += s / real.data().size();
    }
    CHECK(fpa::recon_loss(r8, r16, real).data()[0] == doctest::Approx(want).epsilon(1e-5));
}

TEST_CASE("inactive hinge margin gives exactly zero gradient") {
    Tensor<float> r = Tensor<float>({2}, {2.f, 3.f}).set_requires_grad(true);
    Tensor<float> f = Tensor<float>({2}, {-2.f, -4.f}).set_requires_grad(true);
    Tensor<float> loss = fpa::hinge_d_loss(r, f);
    fpa::backward(loss);
    for (float g : r.grad()) CHECK(g == 0.f);
    for (float g : f.grad()) CHECK(g == 0.f);
}

TEST_CASE("finite differences validate loss and network gradients") {
    std::mt19937_64 rng(6);
    // scores away from the hinge kink
    Tensor<double> r = Tensor<double>({2}, {0.3, -0.4}).set_requires_grad(true);
    Tensor<double> f = Tensor<double>({2}, {0.2, -0.6}).set_requires_grad(true);
    double err = fpa::grad_check([&] { return fpa::hinge_d_loss(r, f); }, {r, f}).max_rel_error;
    CHECK(err < 1e-6);

    Discriminator<double> d(1, 16, rng);
    fpa::ParamList<double> params;
    d.collect_params(params);
    Tensor<double> x = random_image<double>(1, 16, rng);
    auto loss = [&] {
        auto out = d.forward(x);
        return fpa::add(fpa::recon_loss(out.recon8, out.recon16, x), fpa::mean(out.score));
    };
    std::vector<Tensor<double>> leaves;
    for (auto& p : params)
        if (p.name == "disc.ladder0.weight" || p.name == "disc.head.bias" ||
            p.name == "disc.dec8_out.bias" || p.name == "disc.dec16_up.bias")
            leaves.push_back(p.tensor);
    CHECK(fpa::grad_check(loss, leaves, 1e-6).max_rel_error < 1e-5);
}
