// Single command-line entry point for training, sampling, trace rendering,
// evaluation, gradient verification, the few-shot demo, refiner training,
// and synthetic dataset generation.
//
// Exit codes: 0 success, 1 usage error, 2 numeric failure (NaN abort),
// 3 gradient check failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "fpa/deltanet.hpp"
#include "fpa/gradsuite.hpp"
#include "fpa/training.hpp"
#include "fpa/viz.hpp"

namespace {

constexpr int kSynthDatasetSize = 2048;

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct CommonTrainArgs {
    std::string config_path, data, synth, out;
    long long seed = -1;
    std::string rule;
    int steps_t = 0;
    int steps = -1;
};

fpa::Config resolve_config(const CommonTrainArgs& a) {
    fpa::Config cfg;
    if (!a.config_path.empty()) cfg = fpa::parse_config(read_file(a.config_path));
    if (!a.data.empty()) cfg.train.dataset = a.data;
    if (!a.synth.empty()) cfg.train.dataset = a.synth;
    if (a.seed >= 0) cfg.train.seed = static_cast<unsigned long long>(a.seed);
    if (!a.rule.empty()) cfg.fpa.rule = fpa::rule_from_name(a.rule);
    if (a.steps_t > 0) cfg.fpa.T = a.steps_t;
    if (a.steps >= 0) cfg.train.steps = a.steps;
    return cfg;
}

void run_training(fpa::Trainer& trainer, const fpa::Config& cfg, const std::string& out) {
    std::filesystem::create_directories(out);
    {
        std::ofstream f(out + "/config.json");
        f << fpa::render_config(cfg) << "\n";
    }
    auto save = [&](const std::string& name) {
        fpa::save_checkpoint(out + "/" + name, trainer.to_checkpoint());
    };
    trainer.train(cfg.train.steps, [&](int step) {
        double d = trainer.evaluate_rffd(cfg.train.eval_n);
        std::printf("step %d  rffd %.6f  d_loss %.4f  g_loss %.4f\n", step, d,
                    trainer.last_d_loss(), trainer.last_g_loss());
        std::fflush(stdout);
        save("checkpoint_" + std::to_string(step) + ".bin");
    });
    save("checkpoint_final.bin");
    std::printf("wrote %s/checkpoint_final.bin at step %d\n", out.c_str(), trainer.step());
}

int cmd_train(const CommonTrainArgs& a) {
    fpa::Config cfg = resolve_config(a);
    fpa::DatasetHandle data =
        fpa::open_dataset(cfg.train.dataset, cfg.fpa.d_key, kSynthDatasetSize, cfg.train.seed);
    fpa::Trainer trainer(cfg, std::move(data));
    run_training(trainer, cfg, a.out);
    return 0;
}

int cmd_refine_train(const std::string& ckpt_path, const CommonTrainArgs& a) {
    fpa::CheckpointData ckpt = fpa::load_checkpoint(ckpt_path);
    fpa::GeneratorBundle bundle = fpa::load_generator(ckpt);
    fpa::Config cfg = bundle.cfg;
    if (!a.data.empty()) cfg.train.dataset = a.data;
    if (!a.synth.empty()) cfg.train.dataset = a.synth;
    if (a.seed >= 0) cfg.train.seed = static_cast<unsigned long long>(a.seed);
    if (a.steps >= 0) cfg.train.steps = a.steps;
    fpa::DatasetHandle data =
        fpa::open_dataset(cfg.train.dataset, cfg.fpa.d_key, kSynthDatasetSize, cfg.train.seed);
    fpa::Trainer trainer(cfg, std::move(data), ckpt);
    run_training(trainer, cfg, a.out);
    return 0;
}

int cmd_sample(const std::string& ckpt_path, int n, const std::string& out, uint64_t seed) {
    fpa::GeneratorBundle g = fpa::load_generator(fpa::load_checkpoint(ckpt_path));
    std::filesystem::create_directories(out);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n; ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "sample_%04d.png", i);
        fpa::write_image(out + "/" + name, g.sample(rng));
    }
    std::printf("wrote %d samples to %s\n", n, out.c_str());
    return 0;
}

int cmd_paint(const std::string& ckpt_path, uint64_t seed, const std::string& out, bool raw) {
    fpa::GeneratorBundle g = fpa::load_generator(fpa::load_checkpoint(ckpt_path));
    std::filesystem::create_directories(out);
    std::mt19937_64 rng(seed);
    fpa::Tensor<float> z = fpa::sample_latent<float>(g.cfg.fpa.d_latent, rng);
    fpa::NoGradGuard ng;
    fpa::PaintTrace<float> trace;
    fpa::Tensor<float> img = g.painter.generate(z, &trace);
    fpa::write_image(out + "/final.png", img);
    if (g.mode == fpa::TrainMode::Refiner)
        fpa::write_image(out + "/refined.png", g.unet->refine(img));
    fpa::render_trace(trace, out, raw);
    std::printf("wrote %zu-step trace to %s\n", trace.steps.size(), out.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_spec, int n) {
    fpa::GeneratorBundle g = fpa::load_generator(fpa::load_checkpoint(ckpt_path));
    std::string spec = data_spec.empty() ? g.cfg.train.dataset : data_spec;
    fpa::DatasetHandle data =
        fpa::open_dataset(spec, g.cfg.fpa.d_key, kSynthDatasetSize, g.cfg.train.seed);
    double d = fpa::evaluate_rffd_images(
        data, g.cfg.train.seed, [&](std::mt19937_64& r) { return g.sample(r); }, n);
    std::printf("rffd %.6f  (dataset %s, n %d, rule %s, T %d)\n", d, spec.c_str(), n,
                fpa::rule_name(g.cfg.fpa.rule).c_str(), g.cfg.fpa.T);
    return 0;
}

int cmd_gradcheck(const std::string& module) {
    auto results = fpa::run_grad_suite(module);
    bool ok = true;
    for (const auto& e : results) {
        std::printf("%-28s max_rel_err %.3e  tol %.0e  %s\n", e.name.c_str(), e.err, e.tol,
                    e.pass ? "pass" : "FAIL");
        ok = ok && e.pass;
    }
    return ok ? 0 : 3;
}

int cmd_fewshot(int ways, int shots, int episodes, uint64_t seed, const std::string& render_dir) {
    fpa::FewshotConfig cfg;
    cfg.ways = ways;
    cfg.shots = shots;
    fpa::FewshotTrainer trainer(cfg, seed);
    const int batch = 8;
    while (trainer.episodes_used() < episodes) {
        float loss = trainer.train_batch(batch);
        int used = trainer.episodes_used();
        if (used % 1000 < batch) {
            double acc = trainer.evaluate(200, seed ^ 0xACCULL);
            std::printf("episodes %d  loss %.4f  acc %.3f\n", used, loss, acc);
            std::fflush(stdout);
        }
    }
    double acc = trainer.evaluate(1000, seed ^ 0xF1A1ULL);
    std::printf("final accuracy %.3f over 1000 episodes (%d training episodes)\n", acc,
                trainer.episodes_used());
    if (!render_dir.empty()) {
        std::mt19937_64 rng(seed ^ 0x51DELL);
        fpa::Episode ep = fpa::make_episode(cfg, rng);
        fpa::NoGradGuard ng;
        fpa::FastWeightTrace<float> trace;
        trainer.net().forward(ep.inputs, &trace);
        fpa::render_fastweights(trace, 0, 0, render_dir);
        std::printf("wrote fast-weight frames to %s\n", render_dir.c_str());
    }
    return 0;
}

int cmd_synth_data(const std::string& kind, int n, int res, uint64_t seed, const std::string& out) {
    fpa::SynthKind k = fpa::synth_from_name(kind);
    std::filesystem::create_directories(out);
    for (int i = 0; i < n; ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%05d.png", kind.c_str(), i);
        fpa::write_image(out + "/" + name, fpa::synth_image(k, res, seed, i));
    }
    std::printf("wrote %d %s images (%dx%d) to %s\n", n, kind.c_str(), res, res, out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fast-weight painter: rank-1-update image generation"};
    app.require_subcommand(1);

    CommonTrainArgs ta;
    auto* train = app.add_subcommand("train", "adversarial painter training");
    train->add_option("--config", ta.config_path, "JSON config file");
    train->add_option("--data", ta.data, "image folder dataset");
    train->add_option("--synth", ta.synth, "synthetic dataset kind (blobs|stripes|squares)");
    train->add_option("--out", ta.out, "output directory")->required();
    train->add_option("--seed", ta.seed, "training seed");
    train->add_option("--rule", ta.rule, "learning rule (delta|additive|oja)");
    train->add_option("--steps-t", ta.steps_t, "painting steps T");
    train->add_option("--steps", ta.steps, "training steps");

    std::string ckpt, data_spec, out_dir, module = "all", kind = "blobs", render_dir;
    int n = 16, res = 16, ways = 5, shots = 5, episodes = 20000;
    uint64_t seed = 1;
    bool raw = false;

    auto* sample = app.add_subcommand("sample", "write generated samples as PNG");
    sample->add_option("--ckpt", ckpt, "checkpoint file")->required();
    sample->add_option("--n", n, "number of samples");
    sample->add_option("--out", out_dir, "output directory")->required();
    sample->add_option("--seed", seed, "sampling seed");

    auto* paint = app.add_subcommand("paint", "generate one image and render its painting trace");
    paint->add_option("--ckpt", ckpt, "checkpoint file")->required();
    paint->add_option("--seed", seed, "latent seed");
    paint->add_option("--out", out_dir, "output directory")->required();
    paint->add_flag("--raw", raw, "also dump pre-normalisation update frames as .f32 files");

    auto* eval = app.add_subcommand("eval", "print RFFD of a checkpoint against a dataset");
    eval->add_option("--ckpt", ckpt, "checkpoint file")->required();
    eval->add_option("--data", data_spec, "dataset folder or synthetic kind");
    eval->add_option("--n", n, "samples per side");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    grad->add_option("--module", module, "all|ops|rules|painter|adversary|unet");

    auto* fewshot = app.add_subcommand("fewshot", "train the few-shot sequence model demo");
    fewshot->add_option("--ways", ways, "classes per episode");
    fewshot->add_option("--shots", shots, "labeled samples per class");
    fewshot->add_option("--steps", episodes, "training episodes");
    fewshot->add_option("--seed", seed, "seed");
    fewshot->add_option("--render", render_dir, "render fast-weight frames to this directory");

    auto* refine = app.add_subcommand("refine-train", "train a refiner on a frozen painter");
    refine->add_option("--ckpt", ckpt, "painter checkpoint")->required();
    refine->add_option("--data", ta.data, "image folder dataset");
    refine->add_option("--synth", ta.synth, "synthetic dataset kind");
    refine->add_option("--out", ta.out, "output directory")->required();
    refine->add_option("--seed", ta.seed, "training seed");
    refine->add_option("--steps", ta.steps, "training steps");

    auto* synth = app.add_subcommand("synth-data", "materialise a synthetic dataset as PNGs");
    synth->add_option("--kind", kind, "blobs|stripes|squares");
    synth->add_option("--n", n, "image count");
    synth->add_option("--res", res, "resolution");
    synth->add_option("--seed", seed, "seed");
    synth->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(ta);
        if (sample->parsed()) return cmd_sample(ckpt, n, out_dir, seed);
        if (paint->parsed()) return cmd_paint(ckpt, seed, out_dir, raw);
        if (eval->parsed()) return cmd_eval(ckpt, data_spec, n);
        if (grad->parsed()) return cmd_gradcheck(module);
        if (fewshot->parsed()) return cmd_fewshot(ways, shots, episodes, seed, render_dir);
        if (refine->parsed()) return cmd_refine_train(ckpt, ta);
        if (synth->parsed()) return cmd_synth_data(kind, n, res, seed, out_dir);
    } catch (const fpa::DivergenceError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 2;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
