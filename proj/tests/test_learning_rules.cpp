#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fpa/gradcheck.hpp"
#include "fpa/learning_rules.hpp"
#include "fpa/metrics.hpp"

using fpa::RuleKind;
using fpa::RuleStep;
using fpa::Tensor;

namespace {

// scalar-loop oracle of the three rules, independent of the tensor engine
std::vector<double> rule_oracle(RuleKind kind, std::vector<double> w, int m, int n,
                                const std::vector<double>& k, const std::vector<double>& v,
                                double lr) {
    std::vector<double> out = w;
    if (kind == RuleKind::Delta) {
        for (int i = 0; i < m; ++i) {
            double wk = 0;
            for (int j = 0; j < n; ++j) wk += w[i * n + j] * k[j];
            for (int j = 0; j < n; ++j) out[i * n + j] += lr * (v[i] - wk) * k[j];
        }
    } else if (kind == RuleKind::Additive) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) out[i * n + j] += lr * v[i] * k[j];
    } else {
        for (int j = 0; j < n; ++j) {
            double wtv = 0;
            for (int i = 0; i < m; ++i) wtv += w[i * n + j] * v[i];
            for (int i = 0; i < m; ++i) out[i * n + j] += lr * v[i] * (k[j] - wtv);
        }
    }
    return out;
}

RuleStep<double> make_step(std::vector<double> k, std::vector<double> v, double lr) {
    RuleStep<double> s;
    int kn = static_cast<int>(k.size()), vn = static_cast<int>(v.size());
    s.key = Tensor<double>({kn}, std::move(k));
    s.value = Tensor<double>({vn}, std::move(v));
    s.lr = Tensor<double>::scalar(lr);
    return s;
}

}  // namespace

TEST_CASE("rule kind names round-trip") {
    for (auto k : {RuleKind::Delta, RuleKind::Additive, RuleKind::Oja})
        CHECK(fpa::rule_from_name(fpa::rule_name(k)) == k);
    CHECK_THROWS_AS(fpa::rule_from_name("hebbian"), std::invalid_argument);
}

TEST_CASE("delta rule: spec examples") {
    auto w0 = Tensor<double>::zeros({2, 2});
    auto s = make_step({1, 0}, {0.5, -0.3}, 1.0);
    auto w1 = fpa::apply_delta(w0, s);
    CHECK(w1.data() == std::vector<double>{0.5, 0, -0.3, 0});

    // one-hot key with lr=1: applying the same step again is a fixed point
    auto w2 = fpa::apply_delta(w1, s);
    for (size_t i = 0; i < 4; ++i) CHECK(w2.data()[i] == w1.data()[i]);

    auto wi = Tensor<double>({2, 2}, {1, 0, 0, 1});
    auto s2 = make_step({0.5, 0.5}, {1, 1}, 0.5);
    auto w3 = fpa::apply_delta(wi, s2);
    auto want = rule_oracle(RuleKind::Delta, {1, 0, 0, 1}, 2, 2, {0.5, 0.5}, {1, 1}, 0.5);
    CHECK(want == std::vector<double>{1.125, 0.125, 0.125, 1.125});
    for (size_t i = 0; i < 4; ++i) CHECK(w3.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));

    CHECK_THROWS_AS(fpa::apply_delta(w0, make_step({1, 0, 0}, {1, 1}, 1.0)), std::invalid_argument);
}

TEST_CASE("additive rule: spec examples") {
    auto w0 = Tensor<double>::zeros({2, 2});
    auto s = make_step({0.25, 0.75}, {2, -1}, 1.0);
    auto w1 = fpa::apply_additive(w0, s);
    auto vk = fpa::outer(s.value, s.key);
    for (size_t i = 0; i < 4; ++i) CHECK(w1.data()[i] == vk.data()[i]);

    auto wb = Tensor<double>({2, 2}, {1, 1, 1, 1});
    auto s2 = make_step({1, 0}, {2, 2}, 0.5);
    auto w2 = fpa::apply_additive(wb, s2);
    CHECK(w2.data() == std::vector<double>{2, 1, 2, 1});
}

TEST_CASE("oja rule: spec examples") {
    auto s = make_step({1, 0}, {0.3, 0.4}, 0.7);
    auto w1 = fpa::apply_oja(Tensor<double>::zeros({2, 2}), s);
    auto want = rule_oracle(RuleKind::Oja, {0, 0, 0, 0}, 2, 2, {1, 0}, {0.3, 0.4}, 0.7);
    for (size_t i = 0; i < 4; ++i) CHECK(w1.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));

    auto wx = Tensor<double>({2, 2}, {1, 2, 3, 4});
    auto w2 = fpa::apply_oja(wx, make_step({1, 0}, {0, 0}, 1.0));
    CHECK(w2.data() == wx.data());  // v = 0 leaves W unchanged

    auto wi = Tensor<double>({2, 2}, {1, 0, 0, 1});
    auto w3 = fpa::apply_oja(wi, make_step({1, 0}, {0, 1}, 1.0));
    CHECK(w3.data() == std::vector<double>{1, 0, 1, 0});
}

TEST_CASE("all rules agree with the scalar-loop oracle on random inputs") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-2, 2);
    std::uniform_real_distribution<double> ulr(0.05, 0.95);
    for (int rep = 0; rep < 30; ++rep) {
        int m = 2 + rep % 4, n = 2 + (rep / 2) % 4;
        std::vector<double> w(m * n), k(n), v(m);
        for (auto& x : w) x = u(rng);
        for (auto& x : k) x = u(rng);
        for (auto& x : v) x = u(rng);
        double lr = ulr(rng);
        Tensor<double> wt({m, n}, w);
        auto step = make_step(k, v, lr);
        for (auto kind : {RuleKind::Delta, RuleKind::Additive, RuleKind::Oja}) {
            auto got = fpa::apply_rule(kind, wt, step);
            auto want = rule_oracle(kind, w, m, n, k, v, lr);
            for (size_t i = 0; i < want.size(); ++i)
                CHECK(got.data()[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("delta == additive when W k = 0, retrieval is exact") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int rep = 0; rep < 20; ++rep) {
        // W has support only on columns where k is zero, so W k = 0
        int m = 3, n = 4;
        std::vector<double> w(m * n, 0.0), k(n, 0.0), v(m);
        k[0] = 0.3;
        k[1] = 0.7;
        for (int i = 0; i < m; ++i) {
            w[i * n + 2] = u(rng);
            w[i * n + 3] = u(rng);
            v[i] = u(rng);
        }
        Tensor<double> wt({m, n}, w);
        auto step = make_step(k, v, 0.5);
        auto d = fpa::apply_delta(wt, step);
        auto a = fpa::apply_additive(wt, step);
        for (size_t i = 0; i < d.numel(); ++i)
            CHECK(d.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-12));
    }

    // one-hot key, lr=1: W' k == v exactly
    for (int rep = 0; rep < 10; ++rep) {
        int m = 4, n = 5;
        std::vector<double> w(m * n), k(n, 0.0), v(m);
        for (auto& x : w) x = u(rng);
        for (auto& x : v) x = u(rng);
        k[rep % n] = 1.0;
        auto wn = fpa::apply_delta(Tensor<double>({m, n}, w), make_step(k, v, 1.0));
        auto got = fpa::matvec(wn, Tensor<double>({n}, k));
        for (int i = 0; i < m; ++i) CHECK(got.data()[i] == doctest::Approx(v[i]).epsilon(1e-12));
    }
}

TEST_CASE("rank growth: T applications of any rule give rank <= T") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_real_distribution<double> ulr(0.1, 0.9);
    for (auto kind : {RuleKind::Delta, RuleKind::Additive, RuleKind::Oja}) {
        for (int size : {8, 64}) {
            int T = size == 8 ? 3 : 5;
            auto w = Tensor<double>::zeros({size, size});
            for (int t = 0; t < T; ++t) {
                std::vector<double> k(size), v(size);
                for (auto& x : k) x = u(rng);
                for (auto& x : v) x = u(rng);
                w = fpa::apply_rule(kind, w, make_step(k, v, ulr(rng)));
            }
            auto sv = fpa::singular_values(w.data(), size, size);
            REQUIRE(sv[0] > 0);
            for (size_t i = T; i < sv.size(); ++i) CHECK(sv[i] < 1e-6 * sv[0]);
        }
    }
}

TEST_CASE("gradient check through 4 chained applications") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto kind : {RuleKind::Delta, RuleKind::Additive, RuleKind::Oja}) {
        int m = 3, n = 3;
        auto w0 = Tensor<double>::zeros({m, n});
        w0.set_requires_grad(true);
        std::vector<Tensor<double>> leaves = {w0};
        std::vector<RuleStep<double>> steps;
        for (int t = 0; t < 4; ++t) {
            std::vector<double> kraw(n), vraw(m);
            for (auto& x : kraw) x = u(rng);
            for (auto& x : vraw) x = u(rng);
            RuleStep<double> s;
            s.key = Tensor<double>({n}, kraw).set_requires_grad(true);
            s.value = Tensor<double>({m}, vraw).set_requires_grad(true);
            s.lr = Tensor<double>::scalar(0.4 + 0.1 * t).set_requires_grad(true);
            leaves.push_back(s.key);
            leaves.push_back(s.value);
            leaves.push_back(s.lr);
            steps.push_back(s);
        }
        auto f = [&]() {
            auto w = Tensor<double>::from_node(w0.node());
            for (auto& s : steps) {
                RuleStep<double> norm;
                norm.key = fpa::softmax(s.key);  // normalized key path, as in the painter
                norm.value = s.value;
                norm.lr = s.lr;
                w = fpa::apply_rule(kind, w, norm);
            }
            return fpa::sum(fpa::tanh(w));
        };
        auto res = fpa::grad_check(f, leaves);
        INFO(fpa::rule_name(kind) << " max rel err " << res.max_rel_error);
        CHECK(res.max_rel_error < 1e-5);
    }
}
