#include "fpa/training.hpp"

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "fpa/metrics.hpp"

namespace fpa {

namespace {

constexpr uint64_t kEvalRealSalt = 0x9e3779b97f4a7c15ULL;
constexpr uint64_t kEvalFakeSalt = 0xbf58476d1ce4e5b9ULL;
constexpr uint64_t kFeatureSeed = 0x52FFDULL;

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string rng_to_string(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& s) {
    std::istringstream is(s);
    is >> rng;
    if (!is) throw std::invalid_argument("checkpoint: malformed rng state");
}


void store_moments(CheckpointData& out, const std::string& prefix, const ParamList<float>& params,
                   const AdamState<float>& st) {
    if (st.m.empty()) return;
    for (size_t i = 0; i < params.size(); ++i) {
        int n = static_cast<int>(st.m[i].size());
        out.tensors.emplace_back(prefix + ".m." + params[i].name,
                                 Tensor<float>({n}, std::vector<float>(st.m[i])));
        out.tensors.emplace_back(prefix + ".v." + params[i].name,
                                 Tensor<float>({n}, std::vector<float>(st.v[i])));
    }
}

void load_moments(const CheckpointData& ckpt, const std::string& prefix,
                  const ParamList<float>& params, AdamState<float>& st, long long t) {
    st = AdamState<float>{};
    st.t = t;
    if (t == 0) return;
    for (const auto& p : params) {
        const Tensor<float>* m = ckpt.find(prefix + ".m." + p.name);
        const Tensor<float>* v = ckpt.find(prefix + ".v." + p.name);
        if (!m || !v) throw std::invalid_argument("checkpoint: missing optimizer state for " + p.name);
        if (m->numel() != static_cast<int>(p.tensor.numel()) || v->numel() != m->numel())
            throw std::invalid_argument("checkpoint: optimizer state size mismatch for " + p.name);
        st.m.emplace_back(m->data().begin(), m->data().end());
        st.v.emplace_back(v->data().begin(), v->data().end());
    }
}

}  // namespace

void load_params(ParamList<float>& params, const CheckpointData& ckpt) {
    for (auto& p : params) {
        const Tensor<float>* t = ckpt.find(p.name);
        if (!t) throw std::invalid_argument("checkpoint: missing tensor " + p.name);
        if (t->shape() != p.tensor.shape())
            throw std::invalid_argument("checkpoint: shape mismatch for " + p.name + ": " +
                                        shape_str(t->shape()) + " vs " + shape_str(p.tensor.shape()));
        p.tensor.mutable_data() = t->data();
    }
}

double evaluate_rffd_images(const DatasetHandle& data, uint64_t seed,
                            const std::function<Tensor<float>(std::mt19937_64&)>& gen, int n) {
    NoGradGuard ng;
    std::vector<Tensor<float>> real;
    std::vector<size_t> order = data.epoch_order(seed ^ kEvalRealSalt, 0);
    for (int i = 0; i < n; ++i) real.push_back(data.image(order[i % order.size()]));
    auto sampler = [&gen, seed](int idx) {
        std::mt19937_64 r(mix64(seed ^ kEvalFakeSalt ^ static_cast<uint64_t>(idx)));
        return gen(r);
    };
    return rffd(real, sampler, n, kFeatureSeed);
}

Tensor<float> GeneratorBundle::generate(const Tensor<float>& z) const {
    Tensor<float> img = painter.generate(z);
    return mode == TrainMode::Refiner ? unet->refine(img) : img;
}

Tensor<float> GeneratorBundle::sample(std::mt19937_64& rng) const {
    NoGradGuard ng;
    return generate(sample_latent<float>(cfg.fpa.d_latent, rng));
}

GeneratorBundle load_generator(const CheckpointData& ckpt) {
    nlohmann::json j = nlohmann::json::parse(ckpt.config_json);
    GeneratorBundle b;
    b.cfg = parse_config(j.at("config").dump());
    std::string mode = j.at("mode").get<std::string>();
    if (mode != "painter" && mode != "refiner")
        throw std::invalid_argument("checkpoint: unknown mode '" + mode + "'");
    b.mode = mode == "refiner" ? TrainMode::Refiner : TrainMode::Painter;
    std::mt19937_64 rng(0);  // values are overwritten from the checkpoint
    b.painter = Painter<float>(b.cfg.fpa, rng);
    ParamList<float> params;
    b.painter.collect_params(params);
    if (b.mode == TrainMode::Refiner) {
        b.unet = std::make_unique<UNet<float>>(b.cfg.fpa.c, 16, rng);
        b.unet->collect_params(params);
    }
    load_params(params, ckpt);
    for (auto& p : params) p.tensor.set_requires_grad(false);
    return b;
}

Trainer::Trainer(const Config& cfg, DatasetHandle data)
    : cfg_(cfg), data_(std::move(data)), mode_(TrainMode::Painter), rng_(cfg.train.seed) {
    init_networks();
    gen_params_ = painter_params_;
}

Trainer::Trainer(const Config& cfg, DatasetHandle data, const CheckpointData& painter_ckpt)
    : cfg_(cfg), data_(std::move(data)), mode_(TrainMode::Refiner), rng_(cfg.train.seed) {
    init_networks();
    nlohmann::json j = nlohmann::json::parse(painter_ckpt.config_json);
    Config src = parse_config(j.at("config").dump());
    if (!(src.fpa == cfg_.fpa))
        throw std::invalid_argument("refiner: painter checkpoint architecture does not match config");
    load_params(painter_params_, painter_ckpt);
    for (auto& p : painter_params_) p.tensor.set_requires_grad(false);
    unet_ = std::make_unique<UNet<float>>(cfg_.fpa.c, 16, rng_);
    unet_->collect_params(gen_params_);
}

void Trainer::init_networks() {
    cfg_.fpa.validate();
    cfg_.train.validate();
    if (cfg_.fpa.d_key != cfg_.fpa.d_value)
        throw std::invalid_argument("trainer: discriminator needs square images (d_key == d_value)");
    if (data_.resolution() != cfg_.fpa.d_key)
        throw std::invalid_argument("trainer: dataset resolution " +
                                    std::to_string(data_.resolution()) + " != image size " +
                                    std::to_string(cfg_.fpa.d_key));
    if (data_.channels() != cfg_.fpa.c)
        throw std::invalid_argument("trainer: dataset channels != configured c");
    painter_ = Painter<float>(cfg_.fpa, rng_);
    disc_ = Discriminator<float>(cfg_.fpa.c, cfg_.fpa.d_key, rng_);
    painter_.collect_params(painter_params_);
    disc_.collect_params(disc_params_);
}

UNet<float>& Trainer::unet() {
    if (!unet_) throw std::logic_error("trainer: no refiner network in painter mode");
    return *unet_;
}

Tensor<float> Trainer::next_real() {
    if (epoch_ < 0 || pos_ >= order_.size()) {
        ++epoch_;
        order_ = data_.epoch_order(cfg_.train.seed, epoch_);
        pos_ = 0;
    }
    return data_.image(order_[pos_++]);
}

Tensor<float> Trainer::generate_fake(std::mt19937_64& rng, bool with_grad) const {
    Tensor<float> z = sample_latent<float>(cfg_.fpa.d_latent, rng);
    if (mode_ == TrainMode::Painter) {
        if (with_grad) return painter_.generate(z);
        NoGradGuard ng;
        return painter_.generate(z);
    }
    Tensor<float> base;
    {
        NoGradGuard ng;
        base = painter_.generate(z);
    }
    if (with_grad) return unet_->refine(base);
    NoGradGuard ng;
    return unet_->refine(base);
}

constexpr float kEmaDecay = 0.995f;

void Trainer::update_ema() {
    if (ema_.empty()) {
        ema_.resize(gen_params_.size());
        for (size_t i = 0; i < gen_params_.size(); ++i)
            ema_[i].assign(gen_params_[i].tensor.numel(), 0.f);
    }
    ++ema_t_;
    for (size_t i = 0; i < gen_params_.size(); ++i) {
        const std::vector<float>& w = gen_params_[i].tensor.data();
        for (size_t j = 0; j < w.size(); ++j)
            ema_[i][j] = kEmaDecay * ema_[i][j] + (1.f - kEmaDecay) * w[j];
    }
}

// Temporarily swaps the bias-corrected EMA weights into the refiner for
// evaluation, sampling and checkpointing; restores the raw training weights
// on destruction.
class EmaGuard {
public:
    explicit EmaGuard(const Trainer& t) : t_(const_cast<Trainer&>(t)) {
        if (t_.mode_ != TrainMode::Refiner || t_.ema_t_ == 0) return;
        float corr = 1.f / (1.f - std::pow(kEmaDecay, static_cast<float>(t_.ema_t_)));
        saved_.resize(t_.gen_params_.size());
        for (size_t i = 0; i < t_.gen_params_.size(); ++i) {
            std::vector<float>& w = t_.gen_params_[i].tensor.mutable_data();
            saved_[i] = w;
            for (size_t j = 0; j < w.size(); ++j) w[j] = corr * t_.ema_[i][j];
        }
    }
    ~EmaGuard() {
        for (size_t i = 0; i < saved_.size(); ++i)
            t_.gen_params_[i].tensor.mutable_data() = saved_[i];
    }
    EmaGuard(const EmaGuard&) = delete;
    EmaGuard& operator=(const EmaGuard&) = delete;

private:
    Trainer& t_;
    std::vector<std::vector<float>> saved_;
};

Tensor<float> Trainer::sample_image(std::mt19937_64& rng) const {
    NoGradGuard ng;
    EmaGuard ema(*this);
    std::mt19937_64 r = rng;
    Tensor<float> img = generate_fake(r, false);
    rng = r;
    return img;
}

void Trainer::d_update() {
    zero_grads(disc_params_);
    zero_grads(gen_params_);
    int b = cfg_.train.batch_size;
    std::vector<Tensor<float>> real_scores, fake_scores, recon_terms;
    for (int i = 0; i < b; ++i) {
        Tensor<float> real = next_real();
        auto out = disc_.forward(real);
        real_scores.push_back(out.score);
        recon_terms.push_back(recon_loss(out.recon8, out.recon16, real));
    }
    for (int i = 0; i < b; ++i) {
        Tensor<float> fake = generate_fake(rng_, false);
        fake_scores.push_back(disc_.forward(fake).score);
    }
    Tensor<float> loss = hinge_d_loss(concat(real_scores), concat(fake_scores));
    if (cfg_.train.recon_weight > 0)
        loss = add(loss, scale(mean(concat(recon_terms)), static_cast<float>(cfg_.train.recon_weight)));
    last_d_loss_ = loss.data()[0];
    backward(loss);
    adam_step(disc_params_, adam_d_, static_cast<float>(cfg_.train.lr));
}

void Trainer::g_update() {
    zero_grads(disc_params_);
    zero_grads(gen_params_);
    int b = cfg_.train.batch_size;

    // Refiner warm-up: the U-Net head is not residual (a zero net outputs a
    // zero image), so a freshly initialised refiner destroys the frozen
    // painter's distribution and the adversarial signal alone cannot recover
    // it within a short run. Anchor the refiner to the identity with a
    // reconstruction term that decays to zero over the first steps.
    constexpr float kAnchorInit = 1.f;
    constexpr float kAnchorFloor = 0.05f;
    constexpr int kAnchorSteps = 500;
    // Targets live in pre-tanh space: anchoring in pixel space would drive
    // the head into tanh saturation (pixels near +-1 need unbounded logits)
    // and kill the adversarial gradient.
    constexpr float kAnchorClip = 0.997f;  // atanh(0.997) ~ 3.25
    float anchor = 0.f;
    if (mode_ == TrainMode::Refiner)
        anchor = std::max(kAnchorFloor,
                          kAnchorInit * (1.f - static_cast<float>(step_) / kAnchorSteps));

    // The refiner is additionally trained as a denoiser: real images must
    // pass through it unchanged, which makes it a stable projection onto the
    // data manifold instead of a free adversarial generator.
    constexpr float kRealRecon = 1.f;

    auto pre_target = [&](const Tensor<float>& img) {
        std::vector<float> tgt = img.data();
        for (auto& v : tgt) v = std::atanh(std::clamp(v, -kAnchorClip, kAnchorClip));
        return Tensor<float>(img.shape(), tgt);
    };

    std::vector<Tensor<float>> fake_scores;
    std::vector<Tensor<float>> recon_terms;
    for (int i = 0; i < b; ++i) {
        if (anchor > 0.f) {
            Tensor<float> z = sample_latent<float>(cfg_.fpa.d_latent, rng_);
            Tensor<float> base;
            {
                NoGradGuard ng;
                base = painter_.generate(z);
            }
            Tensor<float> pre = unet_->refine_pre(base);
            fake_scores.push_back(disc_.forward(tanh(pre)).score);
            Tensor<float> diff = sub(pre, pre_target(base));
            recon_terms.push_back(scale(mean(mul(diff, diff)), anchor));
        } else {
            Tensor<float> fake = generate_fake(rng_, true);
            fake_scores.push_back(disc_.forward(fake).score);
        }
        if (mode_ == TrainMode::Refiner) {
            Tensor<float> real = next_real();
            Tensor<float> rdiff = sub(unet_->refine_pre(real), pre_target(real));
            recon_terms.push_back(scale(mean(mul(rdiff, rdiff)), kRealRecon));
        }
    }
    Tensor<float> loss = hinge_g_loss(concat(fake_scores));
    if (!recon_terms.empty())
        loss = add(loss, mean(concat(recon_terms)));
    last_g_loss_ = loss.data()[0];
    backward(loss);
    adam_step(gen_params_, adam_g_, static_cast<float>(cfg_.train.lr));
    if (mode_ == TrainMode::Refiner) update_ema();
}

void Trainer::train(int steps, const std::function<void(int)>& on_eval) {
    for (int s = 0; s < steps; ++s) {
        try {
            for (int k = 0; k < cfg_.train.d_steps_per_g_step; ++k) d_update();
            g_update();
        } catch (const std::domain_error& e) {
            throw DivergenceError("training diverged at step " + std::to_string(step_ + 1) + ": " +
                                  e.what());
        }
        ++step_;
        if (on_eval && cfg_.train.eval_every > 0 && step_ % cfg_.train.eval_every == 0)
            on_eval(step_);
    }
}

double Trainer::evaluate_rffd(int n) const {
    EmaGuard ema(*this);
    return evaluate_rffd_images(
        data_, cfg_.train.seed, [this](std::mt19937_64& r) { return generate_fake(r, false); }, n);
}

CheckpointData Trainer::to_checkpoint() const {
    EmaGuard ema(*this);
    CheckpointData out;
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(render_config(cfg_));
    j["mode"] = mode_ == TrainMode::Painter ? "painter" : "refiner";
    j["step"] = step_;
    j["rng"] = rng_to_string(rng_);
    j["adam_g_t"] = adam_g_.t;
    j["adam_d_t"] = adam_d_.t;
    j["data_epoch"] = epoch_;
    j["data_pos"] = pos_;
    out.config_json = j.dump(2);
    auto add_params = [&out](const ParamList<float>& ps) {
        for (const auto& p : ps) {
            Tensor<float> copy(p.tensor.shape(), std::vector<float>(p.tensor.data()));
            out.tensors.emplace_back(p.name, copy);
        }
    };
    add_params(painter_params_);
    if (mode_ == TrainMode::Refiner) add_params(gen_params_);
    add_params(disc_params_);
    store_moments(out, "adam_g", gen_params_, adam_g_);
    store_moments(out, "adam_d", disc_params_, adam_d_);
    return out;
}

void Trainer::restore(const CheckpointData& ckpt) {
    nlohmann::json j = nlohmann::json::parse(ckpt.config_json);
    Config src = parse_config(j.at("config").dump());
    if (!(src == cfg_)) throw std::invalid_argument("checkpoint: config does not match trainer");
    std::string mode = j.at("mode").get<std::string>();
    if (mode != (mode_ == TrainMode::Painter ? "painter" : "refiner"))
        throw std::invalid_argument("checkpoint: mode does not match trainer");
    load_params(painter_params_, ckpt);
    if (mode_ == TrainMode::Refiner) load_params(gen_params_, ckpt);
    load_params(disc_params_, ckpt);
    load_moments(ckpt, "adam_g", gen_params_, adam_g_, j.at("adam_g_t").get<long long>());
    load_moments(ckpt, "adam_d", disc_params_, adam_d_, j.at("adam_d_t").get<long long>());
    step_ = j.at("step").get<int>();
    epoch_ = j.at("data_epoch").get<int>();
    pos_ = j.at("data_pos").get<size_t>();
    if (epoch_ >= 0) order_ = data_.epoch_order(cfg_.train.seed, epoch_);
    rng_from_string(rng_, j.at("rng").get<std::string>());
    // The checkpoint holds the averaged refiner weights; restart the average
    // from them rather than mixing in the discarded raw weights.
    ema_.clear();
    ema_t_ = 0;
}

}  // namespace fpa
