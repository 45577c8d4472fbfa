#pragma once

// Alternating GAN optimisation: hinge-loss discriminator updates with the
// auxiliary reconstruction loss on real samples, generator updates against
// the frozen discriminator. Also drives the refiner mode, where a U-Net is
// trained on top of a frozen pre-trained painter.

#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>

#include "fpa/adam.hpp"
#include "fpa/adversary.hpp"
#include "fpa/checkpoint.hpp"
#include "fpa/config.hpp"
#include "fpa/data_io.hpp"
#include "fpa/painter.hpp"
#include "fpa/unet.hpp"

namespace fpa {

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TrainMode { Painter, Refiner };

// Copies checkpoint tensors into the parameter list by name; throws when a
// tensor is missing or shaped differently.
void load_params(ParamList<float>& params, const CheckpointData& ckpt);

// Shared RFFD protocol: n real images in a seeded shuffle order against n
// generated images, each drawn from a per-index seeded RNG handed to gen.
double evaluate_rffd_images(const DatasetHandle& data, uint64_t seed,
                            const std::function<Tensor<float>(std::mt19937_64&)>& gen, int n);

// Generator reconstructed from a checkpoint: painter plus the refiner U-Net
// when the checkpoint came from a refiner run.
struct GeneratorBundle {
    Config cfg;
    TrainMode mode = TrainMode::Painter;
    Painter<float> painter;
    std::unique_ptr<UNet<float>> unet;

    Tensor<float> generate(const Tensor<float>& z) const;
    Tensor<float> sample(std::mt19937_64& rng) const;
};

GeneratorBundle load_generator(const CheckpointData& ckpt);

class Trainer {
public:
    // Fresh painter GAN.
    Trainer(const Config& cfg, DatasetHandle data);

    // U-Net refiner on a frozen painter loaded from a checkpoint.
    Trainer(const Config& cfg, DatasetHandle data, const CheckpointData& painter_ckpt);

    void train(int steps, const std::function<void(int)>& on_eval = {});

    // Deterministic sample using the caller's RNG stream.
    Tensor<float> sample_image(std::mt19937_64& rng) const;

    // RFFD against the training dataset; deterministic per (config seed, n).
    double evaluate_rffd(int n) const;

    CheckpointData to_checkpoint() const;
    void restore(const CheckpointData& ckpt);

    int step() const { return step_; }
    TrainMode mode() const { return mode_; }
    const Config& config() const { return cfg_; }
    Painter<float>& painter() { return painter_; }
    const Painter<float>& painter() const { return painter_; }
    UNet<float>& unet();
    ParamList<float>& generator_params() { return gen_params_; }
    ParamList<float>& discriminator_params() { return disc_params_; }

    float last_d_loss() const { return last_d_loss_; }
    float last_g_loss() const { return last_g_loss_; }

private:
    friend class EmaGuard;

    void init_networks();
    void update_ema();
    Tensor<float> next_real();
    Tensor<float> generate_fake(std::mt19937_64& rng, bool with_grad) const;
    void d_update();
    void g_update();

    Config cfg_;
    DatasetHandle data_;
    TrainMode mode_ = TrainMode::Painter;
    std::mt19937_64 rng_;
    Painter<float> painter_;
    std::unique_ptr<UNet<float>> unet_;
    Discriminator<float> disc_;
    ParamList<float> gen_params_, disc_params_, painter_params_;
    AdamState<float> adam_g_, adam_d_;
    int step_ = 0;
    int epoch_ = -1;
    size_t pos_ = 0;
    std::vector<size_t> order_;
    float last_d_loss_ = 0.f, last_g_loss_ = 0.f;
    // Exponential moving average of the refiner weights; the averaged network
    // is what gets evaluated, sampled and checkpointed (standard GAN practice
    // to smooth out the oscillation of the adversarial game).
    std::vector<std::vector<float>> ema_;
    long long ema_t_ = 0;
};

}  // namespace fpa
