#pragma once

// Finite-difference verification suite covering every differentiable op plus
// the composed generator, discriminator, refiner, and learning-rule chains.
// 64-bit throughout; per-op tolerance 1e-5, composite tolerance 1e-4.

#include <random>
#include <string>
#include <vector>

#include "fpa/adversary.hpp"
#include "fpa/config.hpp"
#include "fpa/gradcheck.hpp"
#include "fpa/painter.hpp"
#include "fpa/unet.hpp"

namespace fpa {

struct GradSuiteEntry {
    std::string name;
    double err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

namespace gradsuite_detail {

inline Tensor<double> randu(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<double> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = dist(rng);
    t.set_requires_grad(true);
    return t;
}

inline void run(std::vector<GradSuiteEntry>& out, const std::string& name, double tol,
                const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> leaves,
                double eps = 1e-4) {
    double err = grad_check(f, std::move(leaves), eps).max_rel_error;
    out.push_back({name, err, tol, err < tol});
}

inline void op_checks(std::vector<GradSuiteEntry>& out) {
    std::mt19937_64 rng(20240901);
    const double tol = 1e-5;
    auto a = randu({2, 3}, rng), b = randu({2, 3}, rng);
    auto v = randu({4}, rng), u = randu({3}, rng);
    auto m = randu({3, 4}, rng), m2 = randu({4, 2}, rng);
    // keep relu/leaky/abs/clamp inputs away from their kinks
    auto k = randu({5}, rng);
    for (auto& x : k.mutable_data())
        if (std::abs(x) < 0.05) x += 0.2;
    auto img = randu({2, 4, 4}, rng);
    auto cw = randu({3, 2, 3, 3}, rng), cb = randu({3}, rng);
    auto tw = randu({2, 3, 4, 4}, rng), tb = randu({3}, rng);

    run(out, "add", tol, [&] { return sum(add(a, b)); }, {a, b});
    run(out, "sub", tol, [&] { return sum(sub(a, b)); }, {a, b});
    run(out, "mul", tol, [&] { return sum(mul(a, b)); }, {a, b});
    run(out, "scale", tol, [&] { return sum(scale(a, 1.7)); }, {a});
    run(out, "add_const", tol, [&] { return sum(add_const(a, 0.3)); }, {a});
    run(out, "neg", tol, [&] { return sum(neg(a)); }, {a});
    run(out, "sigmoid", tol, [&] { return sum(sigmoid(a)); }, {a});
    run(out, "tanh", tol, [&] { return sum(tanh(a)); }, {a});
    run(out, "relu", tol, [&] { return sum(relu(k)); }, {k});
    run(out, "leaky_relu", tol, [&] { return sum(leaky_relu(k, 0.2)); }, {k});
    run(out, "abs", tol, [&] { return sum(abs(k)); }, {k});
    run(out, "clamp", tol, [&] { return sum(clamp(k, -0.5, 0.5)); }, {k});
    auto smask = randu({4}, rng).detach();
    run(out, "softmax", tol, [&] { return sum(mul(softmax(v), smask)); }, {v});
    run(out, "log_softmax", tol, [&] { return slice(log_softmax(v), 1, 1); }, {v});
    run(out, "sum", tol, [&] { return sum(a); }, {a});
    run(out, "mean", tol, [&] { return mean(a); }, {a});
    run(out, "dot", tol, [&] { return dot(v, v); }, {v});
    run(out, "matmul", tol, [&] { return sum(matmul(m, m2)); }, {m, m2});
    run(out, "matvec", tol, [&] { return sum(matvec(m, v)); }, {m, v});
    run(out, "outer", tol, [&] { return sum(outer(u, v)); }, {u, v});
    run(out, "reshape", tol, [&] { return sum(mul(reshape(a, {6}), reshape(b, {6}))); }, {a, b});
    run(out, "concat", tol, [&] { return sum(mul(concat<double>({u, v}), concat<double>({u, v}))); }, {u, v});
    run(out, "slice", tol, [&] { return sum(slice(v, 1, 2)); }, {v});
    run(out, "conv2d", tol, [&] { return sum(conv2d(img, cw, cb, 1, 1)); }, {img, cw, cb});
    run(out, "conv_transpose2d", tol, [&] { return sum(conv_transpose2d(img, tw, tb, 2, 1)); },
        {img, tw, tb});
    run(out, "box_downsample", tol, [&] { return sum(box_downsample(img, 2)); }, {img});
}

inline void rule_checks(std::vector<GradSuiteEntry>& out) {
    std::mt19937_64 rng(7);
    const double tol = 1e-5;
    for (RuleKind rule : {RuleKind::Delta, RuleKind::Additive, RuleKind::Oja}) {
        auto w0 = randu({3, 4}, rng);
        std::vector<Tensor<double>> leaves{w0};
        std::vector<Tensor<double>> raw_k, raw_v, raw_b;
        for (int t = 0; t < 3; ++t) {
            raw_k.push_back(randu({4}, rng));
            raw_v.push_back(randu({3}, rng));
            raw_b.push_back(randu({1}, rng));
            leaves.push_back(raw_k.back());
            leaves.push_back(raw_v.back());
            leaves.push_back(raw_b.back());
        }
        auto f = [&] {
            Tensor<double> w = w0;
            for (int t = 0; t < 3; ++t) {
                RuleStep<double> s;
                s.key = softmax(raw_k[t]);
                s.value = raw_v[t];
                s.lr = sigmoid(raw_b[t]);
                w = apply_rule(rule, w, s);
            }
            return sum(mul(w, w));
        };
        run(out, std::string("rule_chain_") + rule_name(rule), tol, f, leaves);
    }
}

inline void painter_check(std::vector<GradSuiteEntry>& out) {
    // composed forward per the acceptance spec: T=4, 8x8, single channel
    FpaConfig cfg;
    cfg.T = 4;
    cfg.c = 1;
    cfg.d_key = 8;
    cfg.d_value = 8;
    cfg.d_latent = 6;
    cfg.d_in = 3;
    cfg.d_in_prime = 0;
    cfg.d_hidden = 6;
    std::mt19937_64 rng(11);
    Painter<double> painter(cfg, rng);
    ParamList<double> params;
    painter.collect_params(params);
    Tensor<double> z = sample_latent<double>(cfg.d_latent, rng);
    Tensor<double> mask = randu({1, 8, 8}, rng).detach();
    auto f = [&] { return mean(mul(painter.generate(z), mask)); };
    std::vector<Tensor<double>> leaves;
    for (auto& p : params) leaves.push_back(p.tensor);
    run(out, "painter_composite", 1e-4, f, leaves, 1e-6);
}

inline void adversary_check(std::vector<GradSuiteEntry>& out) {
    std::mt19937_64 rng(13);
    Discriminator<double> d(1, 16, rng);
    ParamList<double> params;
    d.collect_params(params);
    Tensor<double> x = randu({1, 16, 16}, rng).detach();
    auto f = [&] {
        auto o = d.forward(x);
        return add(mean(o.score), recon_loss(o.recon8, o.recon16, x));
    };
    std::vector<Tensor<double>> leaves;
    for (auto& p : params)
        if (p.name == "disc.ladder0.weight" || p.name == "disc.ladder0.bias" ||
            p.name == "disc.head.weight" || p.name == "disc.head.bias" ||
            p.name == "disc.dec8_out.bias" || p.name == "disc.dec16_out.bias")
            leaves.push_back(p.tensor);
    run(out, "adversary_composite", 1e-4, f, leaves, 1e-6);
}

inline void unet_check(std::vector<GradSuiteEntry>& out) {
    std::mt19937_64 rng(17);
    UNet<double> net(1, 2, rng);
    ParamList<double> params;
    net.collect_params(params);
    Tensor<double> x = randu({1, 8, 8}, rng).detach();
    Tensor<double> mask = randu({1, 8, 8}, rng).detach();
    auto f = [&] { return mean(mul(net.refine(x), mask)); };
    std::vector<Tensor<double>> leaves;
    for (auto& p : params) leaves.push_back(p.tensor);
    run(out, "unet_composite", 1e-4, f, leaves, 1e-6);
}

}  // namespace gradsuite_detail

// module: all | ops | rules | painter | adversary | unet
inline std::vector<GradSuiteEntry> run_grad_suite(const std::string& module = "all") {
    using namespace gradsuite_detail;
    std::vector<GradSuiteEntry> out;
    bool all = module == "all";
    if (all || module == "ops") op_checks(out);
    if (all || module == "rules") rule_checks(out);
    if (all || module == "painter") painter_check(out);
    if (all || module == "adversary") adversary_check(out);
    if (all || module == "unet") unet_check(out);
    if (out.empty()) throw std::invalid_argument("unknown gradcheck module '" + module + "'");
    return out;
}

}  // namespace fpa
