#pragma once

// Fast Weight Painter generator: latent vector -> input sequence -> stacked
// LSTM -> per-step key/value/learning-rate projection -> T rank-1 image
// updates. Optionally records the full painting trace for visualisation.

#include <optional>
#include <random>
#include <vector>

#include "fpa/config.hpp"
#include "fpa/learning_rules.hpp"
#include "fpa/nn.hpp"
#include "fpa/tensor.hpp"

namespace fpa {

template <typename T>
struct PaintStepRecord {
    std::vector<std::vector<T>> keys;    // per channel, [d_key], post-softmax
    std::vector<std::vector<T>> values;  // per channel, [d_value]
    std::vector<T> lrs;                  // per channel scalar
    std::vector<T> update;               // rank-1 image delta, c*h*w
    std::vector<T> cumulative;           // running pre-tanh image, c*h*w
};

template <typename T>
struct PaintTrace {
    int c = 0, h = 0, w = 0;
    std::vector<PaintStepRecord<T>> steps;
    std::vector<T> final_pre_tanh;
};

template <typename T>
class Painter {
public:
    Painter() = default;

    Painter(const FpaConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
        cfg.validate();
        int rnn_in = lstm_input_dim();
        if (cfg.input_gen == InputGenKind::V2) {
            input_map_ = Linear<T>(cfg.d_latent, cfg.T * cfg.d_in, rng);
            if (cfg.d_in_prime > 0) pre_rnn_ = Linear<T>(cfg.d_in, cfg.d_in_prime, rng);
        }
        for (int l = 0; l < cfg.num_rnn_layers; ++l)
            lstm_.emplace_back(l == 0 ? rnn_in : cfg.d_hidden, cfg.d_hidden, rng);
        if (cfg.latent_to_init) {
            for (int l = 0; l < cfg.num_rnn_layers; ++l) {
                init_h_.emplace_back(cfg.d_latent, cfg.d_hidden, rng);
                init_c_.emplace_back(cfg.d_latent, cfg.d_hidden, rng);
            }
        }
        w_slow_ = init_uniform<T>({cfg.c * (cfg.d_key + cfg.d_value + 1), cfg.d_hidden},
                                  cfg.d_hidden, rng);
    }

    const FpaConfig& config() const { return cfg_; }

    int lstm_input_dim() const {
        if (cfg_.input_gen == InputGenKind::V1) return cfg_.d_latent;
        return cfg_.d_in_prime > 0 ? cfg_.d_in_prime : cfg_.d_in;
    }

    // Latent vector -> T per-step inputs. V1 repeats z; V2 maps z to a
    // T*d_in vector, optionally tanh (applied before the split), splits, and
    // optionally projects each chunk to d_in'.
    std::vector<Tensor<T>> input_generate(const Tensor<T>& z) const {
        return input_generate(z, cfg_.T);
    }

    std::vector<Tensor<T>> input_generate(const Tensor<T>& z, int steps) const {
        if (z.ndim() != 1 || z.dim(0) != cfg_.d_latent)
            throw std::invalid_argument("painter: latent shape " + shape_str(z.shape()) +
                                        " does not match d_latent " + std::to_string(cfg_.d_latent));
        std::vector<Tensor<T>> xs;
        if (cfg_.input_gen == InputGenKind::V1) {
            for (int t = 0; t < steps; ++t) xs.push_back(z);
            return xs;
        }
        if (steps != cfg_.T)
            throw std::invalid_argument("painter: v2 input generator is fixed to T=" +
                                        std::to_string(cfg_.T) + " steps");
        Tensor<T> flat = input_map_(z);
        if (cfg_.input_gen_tanh) flat = tanh(flat);
        for (int t = 0; t < cfg_.T; ++t) {
            Tensor<T> x = slice(flat, t * cfg_.d_in, cfg_.d_in);
            if (cfg_.d_in_prime > 0) x = pre_rnn_(x);
            xs.push_back(x);
        }
        return xs;
    }

    // Stacked LSTM over the generated inputs; initial states come from the
    // latent maps when configured, otherwise zeros.
    std::vector<Tensor<T>> sequence_process(const std::vector<Tensor<T>>& xs,
                                            const Tensor<T>& z) const {
        int layers = cfg_.num_rnn_layers;
        std::vector<Tensor<T>> h(layers), c(layers);
        for (int l = 0; l < layers; ++l) {
            if (cfg_.latent_to_init) {
                h[l] = init_h_[l](z);
                c[l] = init_c_[l](z);
            } else {
                h[l] = Tensor<T>::zeros({cfg_.d_hidden});
                c[l] = Tensor<T>::zeros({cfg_.d_hidden});
            }
        }
        std::vector<Tensor<T>> out;
        for (const auto& x : xs) {
            Tensor<T> inp = x;
            for (int l = 0; l < layers; ++l) {
                auto [hn, cn] = lstm_[l].step(inp, h[l], c[l]);
                h[l] = hn;
                c[l] = cn;
                inp = hn;
            }
            out.push_back(inp);
        }
        return out;
    }

    // One painting step: project h_t to [k, v, beta], split per channel,
    // apply the configured rule to every channel image.
    std::vector<Tensor<T>> paint_step(const std::vector<Tensor<T>>& w_prev, const Tensor<T>& h_t,
                                      PaintStepRecord<T>* rec = nullptr) const {
        Tensor<T> proj = matvec(w_slow_, h_t);
        int dk = cfg_.d_key, dv = cfg_.d_value, c = cfg_.c;
        std::vector<Tensor<T>> w_next(c);
        for (int i = 0; i < c; ++i) {
            RuleStep<T> step;
            step.key = softmax(slice(proj, i * dk, dk));
            step.value = slice(proj, c * dk + i * dv, dv);
            Tensor<T> beta = slice(proj, c * (dk + dv) + i, 1);
            step.lr = clamp(sigmoid(beta), T(1e-6), T(1) - T(1e-6));
            if (cfg_.rule == RuleKind::Additive && cfg_.additive_unit_lr)
                step.lr = Tensor<T>::scalar(T(1));
            w_next[i] = apply_rule(cfg_.rule, w_prev[i], step);
            if (rec) {
                rec->keys.push_back(step.key.data());
                rec->values.push_back(step.value.data());
                rec->lrs.push_back(step.lr.data()[0]);
            }
        }
        return w_next;
    }

    // Full generation. Returns the output image [c, d_value, d_key] (tanh
    // applied when configured) and optionally the per-step trace.
    Tensor<T> generate(const Tensor<T>& z, PaintTrace<T>* trace = nullptr) const {
        auto xs = input_generate(z);
        auto hs = sequence_process(xs, z);
        return paint_from_states(hs, trace);
    }

    // V1 models can roll out an arbitrary number of steps.
    Tensor<T> generate_steps(const Tensor<T>& z, int steps, PaintTrace<T>* trace = nullptr) const {
        auto xs = input_generate(z, steps);
        auto hs = sequence_process(xs, z);
        return paint_from_states(hs, trace);
    }

    void collect_params(ParamList<T>& out) {
        if (cfg_.input_gen == InputGenKind::V2) {
            input_map_.collect("painter.input_map", out);
            if (cfg_.d_in_prime > 0) pre_rnn_.collect("painter.pre_rnn", out);
        }
        for (size_t l = 0; l < lstm_.size(); ++l)
            lstm_[l].collect("painter.lstm" + std::to_string(l), out);
        for (size_t l = 0; l < init_h_.size(); ++l) {
            init_h_[l].collect("painter.init_h" + std::to_string(l), out);
            init_c_[l].collect("painter.init_c" + std::to_string(l), out);
        }
        out.push_back({"painter.w_slow", w_slow_});
    }

    Tensor<T>& w_slow() { return w_slow_; }

private:
    Tensor<T> paint_from_states(const std::vector<Tensor<T>>& hs, PaintTrace<T>* trace) const {
        int c = cfg_.c, h = cfg_.d_value, w = cfg_.d_key;
        std::vector<Tensor<T>> chans(c);
        for (int i = 0; i < c; ++i) chans[i] = Tensor<T>::zeros({h, w});
        if (trace) {
            *trace = PaintTrace<T>{};
            trace->c = c;
            trace->h = h;
            trace->w = w;
        }
        std::vector<T> prev_flat;
        for (const auto& h_t : hs) {
            PaintStepRecord<T> rec;
            auto next = paint_step(chans, h_t, trace ? &rec : nullptr);
            if (trace) {
                rec.cumulative.reserve(static_cast<size_t>(c) * h * w);
                for (int i = 0; i < c; ++i)
                    rec.cumulative.insert(rec.cumulative.end(), next[i].data().begin(),
                                          next[i].data().end());
                rec.update.resize(rec.cumulative.size());
                if (prev_flat.empty()) prev_flat.assign(rec.cumulative.size(), T(0));
                for (size_t p = 0; p < rec.update.size(); ++p)
                    rec.update[p] = rec.cumulative[p] - prev_flat[p];
                prev_flat = rec.cumulative;
                trace->steps.push_back(std::move(rec));
            }
            chans = std::move(next);
        }
        std::vector<Tensor<T>> stacked;
        for (int i = 0; i < c; ++i) stacked.push_back(reshape(chans[i], {1, h, w}));
        Tensor<T> image = concat(stacked);
        if (trace) trace->final_pre_tanh = image.data();
        return cfg_.output_tanh ? tanh(image) : image;
    }

    FpaConfig cfg_;
    Linear<T> input_map_;
    Linear<T> pre_rnn_;
    std::vector<LstmCell<T>> lstm_;
    std::vector<Linear<T>> init_h_, init_c_;
    Tensor<T> w_slow_;
};

// Latent sampler: unit Gaussian, the GAN input convention.
template <typename T>
Tensor<T> sample_latent(int d, std::mt19937_64& rng) {
    std::normal_distribution<T> dist(T(0), T(1));
    Tensor<T> z({d});
    for (auto& v : z.mutable_data()) v = dist(rng);
    return z;
}

}  // namespace fpa
