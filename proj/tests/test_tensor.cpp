#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fpa/gradcheck.hpp"
#include "fpa/tensor.hpp"

using fpa::Tensor;

namespace {

// Independent scalar-loop oracles. These deliberately repeat the math with
// plain index loops so the library kernels are checked against code that
// shares nothing with them.

std::vector<double> matmul_oracle(const std::vector<double>& a, const std::vector<double>& b,
                                  int m, int k, int n) {
    std::vector<double> c(m * n, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
    return c;
}

std::vector<double> outer_oracle(const std::vector<double>& u, const std::vector<double>& v) {
    std::vector<double> c(u.size() * v.size());
    for (size_t i = 0; i < u.size(); ++i)
        for (size_t j = 0; j < v.size(); ++j) c[i * v.size() + j] = u[i] * v[j];
    return c;
}

std::vector<double> conv_oracle(const std::vector<double>& x, int ci, int h, int w,
                                const std::vector<double>& wt, int co, int kh, int kw,
                                const std::vector<double>& bias, int stride, int pad) {
    int oh = (h + 2 * pad - kh) / stride + 1;
    int ow = (w + 2 * pad - kw) / stride + 1;
    std::vector<double> y(co * oh * ow, 0.0);
    for (int o = 0; o < co; ++o)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double s = bias[o];
                for (int i = 0; i < ci; ++i)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            int iy = oy * stride + ky - pad;
                            int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            s += x[(i * h + iy) * w + ix] * wt[((o * ci + i) * kh + ky) * kw + kx];
                        }
                y[(o * oh + oy) * ow + ox] = s;
            }
    return y;
}

Tensor<double> rand_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -2.0,
                           double hi = 2.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor<double> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = d(rng);
    return t;
}

}  // namespace

TEST_CASE("matmul: examples") {
    Tensor<double> id({2, 2}, {1, 0, 0, 1});
    Tensor<double> v({2, 1}, {2, 3});
    CHECK(fpa::matmul(id, v).data() == std::vector<double>{2, 3});

    Tensor<double> a({2, 2}, {1, 2, 3, 4});
    Tensor<double> b({2, 1}, {5, 6});
    // frozen from the scalar-loop oracle
    CHECK(matmul_oracle(a.data(), b.data(), 2, 2, 1) == std::vector<double>{17, 39});
    CHECK(fpa::matmul(a, b).data() == std::vector<double>{17, 39});

    Tensor<double> z = Tensor<double>::zeros({2, 3});
    Tensor<double> c({3, 2}, {1, 2, 3, 4, 5, 6});
    auto zc = fpa::matmul(z, c);
    for (double x : zc.data()) CHECK(x == 0.0);

    CHECK_THROWS_AS(fpa::matmul(a, Tensor<double>({3, 1}, {1, 2, 3})), std::invalid_argument);
}

TEST_CASE("matmul/outer/conv agree with scalar-loop oracles on random sizes") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> dim(2, 8);
    for (int rep = 0; rep < 20; ++rep) {
        int m = dim(rng), k = dim(rng), n = dim(rng);
        auto a = rand_tensor({m, k}, rng);
        auto b = rand_tensor({k, n}, rng);
        auto got = fpa::matmul(a, b).data();
        auto want = matmul_oracle(a.data(), b.data(), m, k, n);
        for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

        auto u = rand_tensor({m}, rng);
        auto v = rand_tensor({n}, rng);
        auto og = fpa::outer(u, v).data();
        auto ow = outer_oracle(u.data(), v.data());
        for (size_t i = 0; i < ow.size(); ++i) CHECK(og[i] == doctest::Approx(ow[i]).epsilon(1e-12));
    }
    for (int rep = 0; rep < 8; ++rep) {
        int ci = dim(rng) % 3 + 1, co = dim(rng) % 3 + 1, h = dim(rng), w = dim(rng);
        int kk = std::min({3, h, w});
        int stride = 1 + rep % 2, pad = rep % 2;
        auto x = rand_tensor({ci, h, w}, rng);
        auto wt = rand_tensor({co, ci, kk, kk}, rng);
        auto bias = rand_tensor({co}, rng);
        auto got = fpa::conv2d(x, wt, bias, stride, pad).data();
        auto want = conv_oracle(x.data(), ci, h, w, wt.data(), co, kk, kk, bias.data(), stride, pad);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("outer: examples and rank errors") {
    Tensor<double> e1({2}, {1, 0});
    Tensor<double> e2({2}, {0, 1});
    CHECK(fpa::outer(e1, e2).data() == std::vector<double>{0, 1, 0, 0});
    Tensor<double> u({2}, {2, 3});
    Tensor<double> v({2}, {4, 5});
    CHECK(fpa::outer(u, v).data() == std::vector<double>{8, 10, 12, 15});
    auto uz = fpa::outer(u, Tensor<double>::zeros({3}));
    for (double x : uz.data()) CHECK(x == 0.0);
    CHECK_THROWS_AS(fpa::outer(Tensor<double>::zeros({2, 2}), v), std::invalid_argument);
}

TEST_CASE("softmax: symmetry, saturation, 64-bit reference, invariants") {
    auto s = fpa::softmax(Tensor<double>({2}, {0, 0}));
    CHECK(s.data()[0] == doctest::Approx(0.5));
    CHECK(s.data()[1] == doctest::Approx(0.5));

    auto sat = fpa::softmax(Tensor<double>({2}, {1000, 0}));
    CHECK(sat.data()[0] == doctest::Approx(1.0));
    CHECK(sat.data()[1] < 1e-300);

    // reference evaluated with long-double arithmetic
    long double e1 = expl(1.0L), e2 = expl(2.0L), e3 = expl(3.0L);
    long double z = e1 + e2 + e3;
    auto sm = fpa::softmax(Tensor<double>({3}, {1, 2, 3}));
    CHECK(sm.data()[0] == doctest::Approx((double)(e1 / z)).epsilon(1e-12));
    CHECK(sm.data()[1] == doctest::Approx((double)(e2 / z)).epsilon(1e-12));
    CHECK(sm.data()[2] == doctest::Approx((double)(e3 / z)).epsilon(1e-12));

    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        auto x = rand_tensor({8}, rng, -30.0, 30.0);
        auto y = fpa::softmax(x);
        double total = 0;
        for (double v : y.data()) {
            CHECK(v > 0.0);
            total += v;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }

    CHECK_THROWS_AS(fpa::softmax(Tensor<double>({2}, {std::nan(""), 0})), std::domain_error);
}

TEST_CASE("simple op examples") {
    CHECK(fpa::sigmoid(Tensor<double>::scalar(0)).item() == doctest::Approx(0.5));

    auto ones = Tensor<double>::full({1, 4, 4}, 1.0);
    auto down = fpa::box_downsample(ones, 2);
    CHECK(down.shape() == std::vector<int>{1, 2, 2});
    for (double v : down.data()) CHECK(v == doctest::Approx(1.0));

    std::mt19937_64 rng(3);
    auto img = rand_tensor({1, 3, 3}, rng);
    auto k2 = Tensor<double>({1, 1, 1, 1}, {2.0});
    auto scaled = fpa::conv2d(img, k2, Tensor<double>::zeros({1}), 1, 0);
    for (size_t i = 0; i < img.numel(); ++i) CHECK(scaled.data()[i] == doctest::Approx(2 * img.data()[i]));
}

TEST_CASE("backward: trivial gradients and usage errors") {
    std::mt19937_64 rng(7);
    auto x = rand_tensor({3, 4}, rng);
    x.set_requires_grad(true);
    auto loss = fpa::sum(x);
    fpa::backward(loss);
    for (double g : x.grad()) CHECK(g == 1.0);

    auto y = rand_tensor({5}, rng);
    y.set_requires_grad(true);
    auto loss2 = fpa::sum(fpa::mul(y, y));
    fpa::backward(loss2);
    for (size_t i = 0; i < y.numel(); ++i) CHECK(y.grad()[i] == doctest::Approx(2 * y.data()[i]));

    CHECK_THROWS_AS(fpa::backward(loss2), std::logic_error);       // double backward
    CHECK_THROWS_AS(fpa::backward(y), std::invalid_argument);      // non-scalar loss
}

TEST_CASE("finite differences: every differentiable op") {
    std::mt19937_64 rng(42);
    auto check = [&](const char* name, std::vector<Tensor<double>> leaves,
                     std::function<Tensor<double>()> f) {
        for (auto& l : leaves) l.set_requires_grad(true);
        auto res = fpa::grad_check(f, leaves);
        INFO(name << " max rel err " << res.max_rel_error);
        CHECK(res.max_rel_error < 1e-5);
    };

    {
        auto a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 2}, rng);
        check("matmul", {a, b}, [=] { return fpa::sum(fpa::tanh(fpa::matmul(a, b))); });
    }
    {
        auto u = rand_tensor({4}, rng), v = rand_tensor({3}, rng);
        check("outer", {u, v}, [=] { return fpa::sum(fpa::sigmoid(fpa::outer(u, v))); });
    }
    {
        auto a = rand_tensor({5}, rng), x = rand_tensor({5}, rng);
        check("add/mul/softmax", {a, x},
              [=] { return fpa::sum(fpa::mul(fpa::softmax(a), fpa::add(a, x))); });
    }
    {
        auto x = rand_tensor({6}, rng);
        check("log_softmax", {x}, [=] { return fpa::dot(fpa::log_softmax(x), x); });
    }
    {
        auto a = rand_tensor({2, 5}, rng), x = rand_tensor({5}, rng);
        check("matvec/mean", {a, x}, [=] { return fpa::mean(fpa::tanh(fpa::matvec(a, x))); });
    }
    {
        // keep samples away from the relu kink
        auto x = rand_tensor({8}, rng);
        for (auto& v : x.mutable_data())
            if (std::fabs(v) < 0.05) v += 0.1;
        check("relu/leaky/abs", {x}, [=] {
            return fpa::sum(fpa::add(fpa::relu(x), fpa::add(fpa::leaky_relu(x, 0.2), fpa::abs(x))));
        });
    }
    {
        auto x = rand_tensor({2, 4, 4}, rng);
        auto w = rand_tensor({3, 2, 3, 3}, rng);
        auto b = rand_tensor({3}, rng);
        check("conv2d", {x, w, b}, [=] { return fpa::sum(fpa::tanh(fpa::conv2d(x, w, b, 2, 1))); });
    }
    {
        auto x = rand_tensor({2, 3, 3}, rng);
        auto w = rand_tensor({2, 3, 4, 4}, rng);
        auto b = rand_tensor({3}, rng);
        check("conv_transpose2d", {x, w, b},
              [=] { return fpa::sum(fpa::tanh(fpa::conv_transpose2d(x, w, b, 2, 1))); });
    }
    {
        auto x = rand_tensor({2, 4, 4}, rng);
        check("box_downsample", {x}, [=] { return fpa::sum(fpa::tanh(fpa::box_downsample(x, 2))); });
    }
    {
        auto a = rand_tensor({3}, rng), b = rand_tensor({2}, rng);
        check("concat/slice", {a, b}, [=] {
            auto c = fpa::concat<double>({a, b});
            return fpa::sum(fpa::mul(fpa::slice(c, 1, 3), fpa::slice(c, 2, 3)));
        });
    }
    {
        auto x = rand_tensor({4}, rng);
        check("scale/sub/clamp", {x}, [=] {
            return fpa::sum(fpa::sub(fpa::scale(x, 1.7), fpa::clamp(fpa::sigmoid(x), 1e-6, 1.0 - 1e-6)));
        });
    }
}

TEST_CASE("shape errors name both shapes") {
    Tensor<double> a({2, 3});
    Tensor<double> b({2, 3});
    try {
        fpa::matmul(a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
    }
}
