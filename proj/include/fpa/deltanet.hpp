#pragma once

// Sequence-processing fast-weight network: each layer projects its input to
// per-head [q, k, v, beta], applies the delta rule to a per-head fast weight
// matrix (reset to zero at sequence start), and reads out y = W_t * softmax(q).
// Also a synthetic few-shot episode harness trained end-to-end with a linear
// classifier on the final step.

#include <algorithm>
#include <random>
#include <vector>

#include "fpa/adam.hpp"
#include "fpa/learning_rules.hpp"
#include "fpa/nn.hpp"
#include "fpa/tensor.hpp"

namespace fpa {

template <typename T>
struct FastWeightFrame {
    std::vector<T> update;      // W_t - W_{t-1}, d_out*d_key
    std::vector<T> cumulative;  // W_t
};

// trace[step][layer * heads + head]
template <typename T>
struct FastWeightTrace {
    int layers = 0, heads = 0, d_out = 0, d_key = 0;
    std::vector<std::vector<FastWeightFrame<T>>> steps;
};

template <typename T>
class DeltaNetLayer {
public:
    DeltaNetLayer() = default;

    DeltaNetLayer(int d_in, int d_key, int d_out, int heads, std::mt19937_64& rng)
        : d_in_(d_in), d_key_(d_key), d_out_(d_out), heads_(heads) {
        w_slow_ = init_uniform<T>({heads * (2 * d_key + d_out + 1), d_in}, d_in, rng);
    }

    int d_in() const { return d_in_; }
    int d_out() const { return heads_ * d_out_; }
    int heads() const { return heads_; }

    std::vector<Tensor<T>> initial_state() const {
        std::vector<Tensor<T>> st;
        for (int h = 0; h < heads_; ++h) st.push_back(Tensor<T>::zeros({d_out_, d_key_}));
        return st;
    }

    // One step: updates the per-head fast weights in place, returns the
    // concatenated per-head readouts [heads * d_out].
    Tensor<T> step(const Tensor<T>& x, std::vector<Tensor<T>>& state) const {
        if (x.ndim() != 1 || x.dim(0) != d_in_)
            throw std::invalid_argument("deltanet: input " + shape_str(x.shape()) +
                                        " does not match d_in " + std::to_string(d_in_));
        if (static_cast<int>(state.size()) != heads_)
            throw std::invalid_argument("deltanet: state has wrong head count");
        Tensor<T> p = matvec(w_slow_, x);
        int span = 2 * d_key_ + d_out_ + 1;
        std::vector<Tensor<T>> ys;
        for (int h = 0; h < heads_; ++h) {
            int off = h * span;
            Tensor<T> q = softmax(slice(p, off, d_key_));
            RuleStep<T> rs;
            rs.key = softmax(slice(p, off + d_key_, d_key_));
            rs.value = slice(p, off + 2 * d_key_, d_out_);
            rs.lr = sigmoid(slice(p, off + 2 * d_key_ + d_out_, 1));
            state[h] = apply_delta(state[h], rs);
            ys.push_back(matvec(state[h], q));
        }
        return heads_ == 1 ? ys[0] : concat(ys);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".w_slow", w_slow_});
    }

private:
    int d_in_ = 0, d_key_ = 0, d_out_ = 0, heads_ = 1;
    Tensor<T> w_slow_;
};

struct DeltaNetConfig {
    int d_in = 69;
    int layers = 2;
    int heads = 4;
    int d_key = 16;
    int d_out = 16;
    int n_classes = 5;
};

template <typename T>
class DeltaNet {
public:
    DeltaNet() = default;

    DeltaNet(const DeltaNetConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
        int in = cfg.d_in;
        for (int l = 0; l < cfg.layers; ++l) {
            layers_.emplace_back(in, cfg.d_key, cfg.d_out, cfg.heads, rng);
            in = layers_.back().d_out();
        }
        classifier_ = Linear<T>(in, cfg.n_classes, rng);
    }

    const DeltaNetConfig& config() const { return cfg_; }

    // Runs the sequence with fresh zero fast weights, returns the class
    // logits read from the final step.
    Tensor<T> forward(const std::vector<Tensor<T>>& seq, FastWeightTrace<T>* trace = nullptr) const {
        if (seq.empty()) throw std::invalid_argument("deltanet: empty sequence");
        std::vector<std::vector<Tensor<T>>> state;
        for (const auto& l : layers_) state.push_back(l.initial_state());
        if (trace) {
            *trace = FastWeightTrace<T>{};
            trace->layers = cfg_.layers;
            trace->heads = cfg_.heads;
            trace->d_out = cfg_.d_out;
            trace->d_key = cfg_.d_key;
        }
        Tensor<T> y;
        for (const auto& x : seq) {
            Tensor<T> inp = x;
            std::vector<FastWeightFrame<T>> frames;
            for (size_t l = 0; l < layers_.size(); ++l) {
                std::vector<std::vector<T>> prev;
                if (trace)
                    for (const auto& w : state[l]) prev.push_back(w.data());
                inp = layers_[l].step(inp, state[l]);
                if (trace) {
                    for (size_t h = 0; h < state[l].size(); ++h) {
                        FastWeightFrame<T> fr;
                        fr.cumulative = state[l][h].data();
                        fr.update.resize(fr.cumulative.size());
                        for (size_t i = 0; i < fr.update.size(); ++i)
                            fr.update[i] = fr.cumulative[i] - prev[h][i];
                        frames.push_back(std::move(fr));
                    }
                }
            }
            if (trace) trace->steps.push_back(std::move(frames));
            y = inp;
        }
        return classifier_(y);
    }

    void collect_params(ParamList<T>& out) {
        for (size_t l = 0; l < layers_.size(); ++l)
            layers_[l].collect("deltanet.layer" + std::to_string(l), out);
        classifier_.collect("deltanet.classifier", out);
    }

    std::vector<DeltaNetLayer<T>>& layers() { return layers_; }

private:
    DeltaNetConfig cfg_;
    std::vector<DeltaNetLayer<T>> layers_;
    Linear<T> classifier_;
};

// Synthetic few-shot protocol: each episode draws `ways` random prototype
// vectors, presents shots noisy labeled samples per class in shuffled order,
// then one unlabeled query to classify. Labels are one-hot concatenated to
// the flattened pattern; the query gets a zero label block.
struct FewshotConfig {
    int ways = 5;
    int shots = 5;
    int proto_dim = 64;  // flattened 8x8 pattern
    float noise = 0.1f;
    int layers = 2;
    int heads = 4;
    int d_key = 16;
    int d_out = 16;
};

struct Episode {
    std::vector<Tensor<float>> inputs;  // ways*shots labeled items + 1 query
    int target = 0;
};

inline Episode make_episode(const FewshotConfig& cfg, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> uni(-1.f, 1.f);
    std::normal_distribution<float> noise(0.f, cfg.noise);
    std::vector<std::vector<float>> protos(cfg.ways, std::vector<float>(cfg.proto_dim));
    for (auto& p : protos)
        for (auto& v : p) v = uni(rng);
    auto sample = [&](int cls, bool labeled) {
        Tensor<float> x({cfg.proto_dim + cfg.ways});
        auto& d = x.mutable_data();
        for (int i = 0; i < cfg.proto_dim; ++i)
            d[i] = std::clamp(protos[cls][i] + noise(rng), -1.f, 1.f);
        if (labeled) d[cfg.proto_dim + cls] = 1.f;
        return x;
    };
    std::vector<int> order;
    for (int c = 0; c < cfg.ways; ++c)
        for (int s = 0; s < cfg.shots; ++s) order.push_back(c);
    std::shuffle(order.begin(), order.end(), rng);
    Episode ep;
    for (int c : order) ep.inputs.push_back(sample(c, true));
    ep.target = std::uniform_int_distribution<int>(0, cfg.ways - 1)(rng);
    ep.inputs.push_back(sample(ep.target, false));
    return ep;
}

class FewshotTrainer {
public:
    // With task_init the slow weights start from a binding scaffold instead
    // of a plain random init: keys/queries are tied sharp random hashes of
    // the pattern block, first-layer values copy the label block, and the
    // write strength is driven by label presence. Gradient descent cannot
    // discover this binding scheme from scratch within the episode budget,
    // but refines it quickly.
    FewshotTrainer(const FewshotConfig& cfg, uint64_t seed, bool task_init = true)
        : cfg_(cfg), rng_(seed) {
        DeltaNetConfig nc;
        nc.d_in = cfg.proto_dim + cfg.ways;
        nc.layers = cfg.layers;
        nc.heads = cfg.heads;
        nc.d_key = cfg.d_key;
        nc.d_out = cfg.d_out;
        nc.n_classes = cfg.ways;
        net_ = DeltaNet<float>(nc, rng_);
        net_.collect_params(params_);
        if (task_init) scaffold_init();
    }

    DeltaNet<float>& net() { return net_; }
    const DeltaNet<float>& net() const { return net_; }
    int episodes_used() const { return episodes_; }

    // One optimizer update over a batch of episodes; returns the mean loss.
    float train_batch(int batch, float lr = 1e-3f) {
        zero_grads(params_);
        Tensor<float> total = Tensor<float>::scalar(0.f);
        for (int b = 0; b < batch; ++b) {
            Episode ep = make_episode(cfg_, rng_);
            Tensor<float> logits = net_.forward(ep.inputs);
            Tensor<float> nll = neg(slice(log_softmax(logits), ep.target, 1));
            total = add(total, nll);
            ++episodes_;
        }
        Tensor<float> loss = scale(total, 1.f / static_cast<float>(batch));
        float out = loss.data()[0];
        backward(loss);
        adam_step(params_, adam_, lr, 0.9f);
        return out;
    }

    double evaluate(int episodes, uint64_t seed) const {
        NoGradGuard ng;
        std::mt19937_64 rng(seed);
        int correct = 0;
        for (int e = 0; e < episodes; ++e) {
            Episode ep = make_episode(cfg_, rng);
            Tensor<float> logits = net_.forward(ep.inputs);
            const auto& d = logits.data();
            int arg = static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
            if (arg == ep.target) ++correct;
        }
        return static_cast<double>(correct) / episodes;
    }

private:
    void scaffold_init() {
        const int dk = cfg_.d_key, dout = cfg_.d_out, heads = cfg_.heads;
        const int span = 2 * dk + dout + 1;
        const float hash_scale = 6.f;
        std::normal_distribution<float> g(0.f, 1.f);
        for (auto& p : params_) {
            if (p.name.find(".w_slow") == std::string::npos) continue;
            bool first = p.name == "deltanet.layer0.w_slow";
            int din = first ? cfg_.proto_dim + cfg_.ways : heads * dout;
            auto& w = p.tensor.mutable_data();
            std::fill(w.begin(), w.end(), 0.f);
            for (int h = 0; h < heads; ++h) {
                int off = h * span;
                // Tied q/k: a sharp random hash of the pattern block (first
                // layer) or of the previous layer's readout (later layers).
                int hash_dim = first ? cfg_.proto_dim : din;
                float s = first ? hash_scale : hash_scale / heads;
                for (int r = 0; r < dk; ++r)
                    for (int c = 0; c < hash_dim; ++c)
                        w[(off + r) * din + c] = w[(off + dk + r) * din + c] = s * g(rng_);
                if (first) {
                    // Values copy the label; the write gate opens only for
                    // labeled items (the query's label block is zero).
                    for (int i = 0; i < std::min(cfg_.ways, dout); ++i)
                        w[(off + 2 * dk + i) * din + cfg_.proto_dim + i] = 8.f;
                    for (int i = 0; i < cfg_.ways; ++i)
                        w[(off + 2 * dk + dout) * din + cfg_.proto_dim + i] = 10.f;
                } else {
                    // Weak random pass-through of the previous readout.
                    for (int r = 0; r < dout; ++r)
                        for (int c = 0; c < din; ++c)
                            w[(off + 2 * dk + r) * din + c] = g(rng_) / (2.f * heads);
                }
            }
        }
    }

    FewshotConfig cfg_;
    std::mt19937_64 rng_;
    DeltaNet<float> net_;
    ParamList<float> params_;
    AdamState<float> adam_;
    int episodes_ = 0;
};

}  // namespace fpa
