#pragma once

// Run configuration: generator architecture (FpaConfig) and trainer settings
// (TrainConfig). Serialized as one flat JSON object whose keys match the
// field names; unknown keys are rejected.

#include <string>

#include "fpa/learning_rules.hpp"

namespace fpa {

enum class InputGenKind { V1, V2 };

struct FpaConfig {
    int T = 16;               // painting steps
    int c = 3;                // image channels
    int d_key = 16;           // image width
    int d_value = 16;         // image height
    int d_latent = 64;
    int d_in = 8;             // per-step input size (V2); equals d_latent for V1
    int d_in_prime = 32;      // 0 disables the extra pre-RNN linear
    int d_hidden = 128;
    int num_rnn_layers = 1;
    InputGenKind input_gen = InputGenKind::V2;
    bool input_gen_tanh = false;
    bool latent_to_init = false;
    bool output_tanh = true;
    RuleKind rule = RuleKind::Delta;
    bool additive_unit_lr = false;  // drop the sigmoid gate for the additive rule

    void validate() const;
    bool operator==(const FpaConfig&) const = default;
};

struct TrainConfig {
    int batch_size = 20;
    double lr = 2e-4;
    int steps = 5000;
    int d_steps_per_g_step = 1;
    unsigned long long seed = 1;
    int eval_every = 5000;
    int eval_n = 1024;        // samples per side for the RFFD evaluation
    double recon_weight = 1.0;
    std::string dataset = "blobs";  // synthetic kind or image folder path

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct Config {
    FpaConfig fpa;
    TrainConfig train;
    bool operator==(const Config&) const = default;
};

std::string render_config(const Config& cfg);   // deterministic JSON text
Config parse_config(const std::string& json);   // throws on unknown keys / bad values

}  // namespace fpa
