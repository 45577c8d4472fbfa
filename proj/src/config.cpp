#include "fpa/config.hpp"

#include <set>
#include <stdexcept>

#include <json.hpp>

namespace fpa {

using nlohmann::json;

void FpaConfig::validate() const {
    if (T < 1) throw std::invalid_argument("config: T must be >= 1");
    if (c < 1 || d_key < 1 || d_value < 1 || d_latent < 1 || d_in < 1 || d_hidden < 1 ||
        num_rnn_layers < 1 || d_in_prime < 0)
        throw std::invalid_argument("config: all dimensions must be positive");
    if (input_gen == InputGenKind::V1 && d_in != d_latent)
        throw std::invalid_argument("config: input_gen v1 requires d_in == d_latent");
}

void TrainConfig::validate() const {
    if (batch_size < 1 || steps < 0 || d_steps_per_g_step < 1 || eval_every < 1 || eval_n < 1)
        throw std::invalid_argument("config: non-positive training setting");
    if (lr <= 0.0) throw std::invalid_argument("config: lr must be positive");
    if (dataset.empty()) throw std::invalid_argument("config: dataset must be set");
}

std::string render_config(const Config& cfg) {
    json j;
    j["T"] = cfg.fpa.T;
    j["c"] = cfg.fpa.c;
    j["d_key"] = cfg.fpa.d_key;
    j["d_value"] = cfg.fpa.d_value;
    j["d_latent"] = cfg.fpa.d_latent;
    j["d_in"] = cfg.fpa.d_in;
    j["d_in_prime"] = cfg.fpa.d_in_prime;
    j["d_hidden"] = cfg.fpa.d_hidden;
    j["num_rnn_layers"] = cfg.fpa.num_rnn_layers;
    j["input_gen"] = cfg.fpa.input_gen == InputGenKind::V1 ? "v1" : "v2";
    j["input_gen_tanh"] = cfg.fpa.input_gen_tanh;
    j["latent_to_init"] = cfg.fpa.latent_to_init;
    j["output_tanh"] = cfg.fpa.output_tanh;
    j["rule"] = rule_name(cfg.fpa.rule);
    j["additive_unit_lr"] = cfg.fpa.additive_unit_lr;
    j["batch_size"] = cfg.train.batch_size;
    j["lr"] = cfg.train.lr;
    j["steps"] = cfg.train.steps;
    j["d_steps_per_g_step"] = cfg.train.d_steps_per_g_step;
    j["seed"] = cfg.train.seed;
    j["eval_every"] = cfg.train.eval_every;
    j["eval_n"] = cfg.train.eval_n;
    j["recon_weight"] = cfg.train.recon_weight;
    j["dataset"] = cfg.train.dataset;
    return j.dump(2);
}

Config parse_config(const std::string& text) {
    json j = json::parse(text);
    if (!j.is_object()) throw std::invalid_argument("config: top-level JSON must be an object");
    static const std::set<std::string> known = {
        "T",  "c",  "d_key", "d_value", "d_latent", "d_in", "d_in_prime", "d_hidden",
        "num_rnn_layers", "input_gen", "input_gen_tanh", "latent_to_init", "output_tanh",
        "rule", "additive_unit_lr", "batch_size", "lr", "steps", "d_steps_per_g_step",
        "seed", "eval_every", "eval_n", "recon_weight", "dataset"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "'");

    Config cfg;
    auto get = [&](const char* k, auto& field) {
        if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    get("T", cfg.fpa.T);
    get("c", cfg.fpa.c);
    get("d_key", cfg.fpa.d_key);
    get("d_value", cfg.fpa.d_value);
    get("d_latent", cfg.fpa.d_latent);
    get("d_in", cfg.fpa.d_in);
    get("d_in_prime", cfg.fpa.d_in_prime);
    get("d_hidden", cfg.fpa.d_hidden);
    get("num_rnn_layers", cfg.fpa.num_rnn_layers);
    if (j.contains("input_gen")) {
        std::string v = j.at("input_gen").get<std::string>();
        if (v == "v1") cfg.fpa.input_gen = InputGenKind::V1;
        else if (v == "v2") cfg.fpa.input_gen = InputGenKind::V2;
        else throw std::invalid_argument("config: input_gen must be 'v1' or 'v2'");
    }
    get("input_gen_tanh", cfg.fpa.input_gen_tanh);
    get("latent_to_init", cfg.fpa.latent_to_init);
    get("output_tanh", cfg.fpa.output_tanh);
    if (j.contains("rule")) cfg.fpa.rule = rule_from_name(j.at("rule").get<std::string>());
    get("additive_unit_lr", cfg.fpa.additive_unit_lr);
    get("batch_size", cfg.train.batch_size);
    get("lr", cfg.train.lr);
    get("steps", cfg.train.steps);
    get("d_steps_per_g_step", cfg.train.d_steps_per_g_step);
    get("seed", cfg.train.seed);
    get("eval_every", cfg.train.eval_every);
    get("eval_n", cfg.train.eval_n);
    get("recon_weight", cfg.train.recon_weight);
    get("dataset", cfg.train.dataset);
    cfg.fpa.validate();
    cfg.train.validate();
    return cfg;
}

}  // namespace fpa
