#include "eagleeye/config.hpp"

#include <fstream>

#include <json.hpp>

namespace eagleeye {

namespace {

using nlohmann::json;

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_train(const json& j, TrainConfig& t) {
    maybe(j, "learning_rate", t.learning_rate);
    maybe(j, "momentum", t.momentum);
    maybe(j, "batch", t.batch);
    maybe(j, "epochs", t.epochs);
    maybe(j, "s_improve", t.s_improve);
    maybe(j, "s_worsen", t.s_worsen);
    maybe(j, "temperature", t.temperature);
    maybe(j, "stop_at_eval_accuracy", t.stop_at_eval_accuracy);
    maybe(j, "grad_chunk", t.grad_chunk);
    if (j.contains("defense")) {
        const json& d = j.at("defense");
        std::string mode = defense_mode_name(t.defense.mode);
        maybe(d, "mode", mode);
        t.defense.mode = defense_mode_from_name(mode);
        if (d.contains("attack"))
            t.defense.attack = attack_kind_from_name(d.at("attack").get<std::string>());
        maybe(d, "alpha", t.defense.alpha);
        if (d.contains("norm"))
            t.defense.norm = robust_norm_from_name(d.at("norm").get<std::string>());
        maybe(d, "budget", t.defense.budget);
        maybe(d, "tau", t.defense.distill_tau);
    }
}

void parse_attack(const json& j, AttackConfig& a) {
    if (j.contains("kind")) a.kind = attack_kind_from_name(j.at("kind").get<std::string>());
    if (j.contains("target") && !j.at("target").is_null()) a.target = j.at("target").get<int>();
    maybe(j, "delta_budget", a.delta_budget);
    maybe(j, "delta_resolution", a.delta_resolution);
    maybe(j, "pixel_budget", a.pixel_budget);
    if (j.contains("temperature_override") && !j.at("temperature_override").is_null())
        a.temperature_override = j.at("temperature_override").get<double>();
    maybe(j, "seed", a.seed);
}

void parse_probe(const json& j, ProbeParams& p) {
    maybe(j, "region_size", p.region_size);
    maybe(j, "regions", p.region_count);
    maybe(j, "ranking_c", p.ranking_c);
    maybe(j, "shadows", p.shadow_count);
    maybe(j, "threshold", p.threshold);
    maybe(j, "trials", p.trials_per_level);
    maybe(j, "theta_resolution", p.theta_resolution);
    maybe(j, "seed", p.seed);
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("config: parse error in " + path + ": " + e.what());
    }

    RunConfig cfg;
    maybe(j, "seed", cfg.seed);
    maybe(j, "out_dir", cfg.out_dir);
    maybe(j, "threads", cfg.threads);
    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        maybe(d, "source", cfg.dataset.source);
        maybe(d, "train_per_class", cfg.dataset.train_per_class);
        maybe(d, "test_per_class", cfg.dataset.test_per_class);
        maybe(d, "blob_classes", cfg.dataset.blob_classes);
        maybe(d, "blob_per_class", cfg.dataset.blob_per_class);
        maybe(d, "blob_spread", cfg.dataset.blob_spread);
        maybe(d, "train_images", cfg.dataset.train_images);
        maybe(d, "train_labels", cfg.dataset.train_labels);
        maybe(d, "test_images", cfg.dataset.test_images);
        maybe(d, "test_labels", cfg.dataset.test_labels);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        maybe(m, "arch", cfg.model.arch);
        maybe(m, "scale", cfg.model.scale);
        maybe(m, "input_dim", cfg.model.input_dim);
        maybe(m, "hidden", cfg.model.hidden);
        maybe(m, "classes", cfg.model.classes);
    }
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("attack")) parse_attack(j.at("attack"), cfg.attack);
    if (j.contains("probe")) parse_probe(j.at("probe"), cfg.probe);
    if (j.contains("bench")) {
        const json& b = j.at("bench");
        maybe(b, "resilience_pool", cfg.bench.resilience);
        maybe(b, "ratios_pool", cfg.bench.ratios);
        maybe(b, "counter_pool", cfg.bench.counter);
        maybe(b, "synergy_pool", cfg.bench.synergy);
    }
    cfg.train.seed = cfg.seed;
    if (cfg.train.threads == 0) cfg.train.threads = cfg.threads;
    if (cfg.attack.seed == 0) cfg.attack.seed = cfg.seed;
    if (cfg.probe.seed == 0) cfg.probe.seed = cfg.seed;
    return cfg;
}

LoadedData load_dataset(const RunConfig& cfg) {
    LoadedData out;
    const DatasetConfig& d = cfg.dataset;
    if (d.source == "synth-digits") {
        out.train = synth_digits(d.train_per_class, cfg.seed, "train");
        out.test = synth_digits(d.test_per_class, cfg.seed, "test");
    } else if (d.source == "synth-blobs") {
        out.train = synth_blobs(d.blob_classes, d.blob_per_class, d.blob_spread, cfg.seed);
        out.test = synth_blobs(d.blob_classes, std::max(1, d.blob_per_class / 4), d.blob_spread,
                               cfg.seed + 1);
        out.train.split = "train";
        out.test.split = "test";
    } else if (d.source == "idx") {
        out.train = load_idx(d.train_images, d.train_labels);
        out.test = load_idx(d.test_images, d.test_labels);
        out.train.split = "train";
        out.test.split = "test";
    } else {
        throw std::runtime_error("config: unknown dataset source " + d.source);
    }
    return out;
}

NetworkSpec build_model(const RunConfig& cfg) {
    if (cfg.model.arch == "mnist-cnn") return build_mnist_cnn(cfg.model.scale);
    if (cfg.model.arch == "mlp")
        return build_synthetic_mlp(cfg.model.input_dim, cfg.model.hidden, cfg.model.classes);
    throw std::runtime_error("config: unknown model arch " + cfg.model.arch);
}

}  // namespace eagleeye
