// eagleeye CLI: train/harden models, craft adversarial inputs, probe and
// analyze tampering, and run the benchmark studies. Every run is driven by a
// JSON config plus flag overrides and writes its results under --out.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eagleeye/attacks.hpp"
#include "eagleeye/bench.hpp"
#include "eagleeye/config.hpp"
#include "eagleeye/detector.hpp"
#include "eagleeye/io.hpp"
#include "eagleeye/network.hpp"
#include "eagleeye/trainer.hpp"

namespace fs = std::filesystem;
using namespace eagleeye;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCompute = 4;

int classify_error(const std::string& what) {
    if (what.rfind("config:", 0) == 0) return kExitConfig;
    if (what.rfind("idx:", 0) == 0) return kExitData;
    if (what.rfind("load_checkpoint:", 0) == 0) return kExitData;
    return kExitCompute;
}

struct Cli {
    std::string config_path;
    std::string out_override;
    std::string model_path;
    std::string distilled_path;
    std::string images_path, labels_path;
    std::vector<std::string> extra_models;  // name=path
    std::string kind;
    int index = 0;
    int count = 0;
    std::uint64_t seed_override = 0;
};

RunConfig load_cfg(const Cli& cli) {
    RunConfig cfg = load_run_config(cli.config_path);
    if (!cli.out_override.empty()) cfg.out_dir = cli.out_override;
    if (cli.seed_override != 0) {
        cfg.seed = cli.seed_override;
        cfg.train.seed = cli.seed_override;
        cfg.attack.seed = cli.seed_override;
        cfg.probe.seed = cli.seed_override;
    }
    fs::create_directories(cfg.out_dir);
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (fs::path(cfg.out_dir) / name).string();
}

void report_training(const TrainOutcome& out) {
    const EpochStats& last = out.report.epochs.back();
    std::printf("trained %zu epochs, loss %.4f, train acc %.2f%%", out.report.epochs.size(),
                last.loss, 100.0 * last.accuracy);
    if (last.eval_accuracy) std::printf(", test acc %.2f%%", 100.0 * *last.eval_accuracy);
    std::printf("\n");
}

int cmd_train(const Cli& cli, DefenseMode mode) {
    RunConfig cfg = load_cfg(cli);
    LoadedData data = load_dataset(cfg);
    NetworkSpec spec = build_model(cfg);

    if (mode == DefenseMode::Distill) {
        DistillOutcome out = distill(spec, data.train, cfg.train, &data.test);
        save_checkpoint(out.teacher, out_path(cfg, "teacher.json"));
        save_checkpoint(out.student, out_path(cfg, "distilled.json"));
        save_train_report(out.teacher_report, out_path(cfg, "teacher_report.jsonl"));
        save_train_report(out.student_report, out_path(cfg, "student_report.jsonl"));
        write_run_meta(out_path(cfg, "run_meta.json"), "defend distill");
        std::printf("teacher acc %.2f%%, student acc %.2f%% (tau=%g)\n",
                    100.0 * evaluate_accuracy(out.teacher, data.test),
                    100.0 * evaluate_accuracy(out.student, data.test), cfg.train.defense.distill_tau);
        return 0;
    }

    TrainConfig tc = cfg.train;
    TrainOutcome out = [&] {
        switch (mode) {
            case DefenseMode::Augmented:
                tc.defense.attack_config = cfg.attack;
                return train_augmented(spec, data.train, tc, tc.defense.attack, &data.test);
            case DefenseMode::Robust:
                return train_robust(spec, data.train, tc, &data.test);
            default:
                return train(spec, data.train, tc, &data.test);
        }
    }();
    save_checkpoint(out.checkpoint, out_path(cfg, "ckpt.json"));
    save_train_report(out.report, out_path(cfg, "train_report.jsonl"));
    write_run_meta(out_path(cfg, "run_meta.json"), "train");
    report_training(out);
    return 0;
}

Dataset detect_input_set(const Cli& cli, const RunConfig& cfg) {
    if (!cli.images_path.empty()) return load_idx(cli.images_path, cli.labels_path);
    return load_dataset(cfg).test;
}

int cmd_attack(const Cli& cli) {
    RunConfig cfg = load_cfg(cli);
    Checkpoint ckpt = load_checkpoint(cli.model_path);
    Dataset test = detect_input_set(cli, cfg);

    AttackConfig ac = cfg.attack;
    if (!cli.kind.empty()) ac.kind = attack_kind_from_name(cli.kind);
    const int pool_n = cli.count > 0 ? cli.count : cfg.bench.resilience;
    const std::vector<int> pool = correctly_classified_pool(ckpt, test, pool_n);

    std::vector<AttackResult> results;
    int successes = 0;
    for (int idx : pool) {
        AttackConfig one = ac;
        one.target = random_target(cfg.seed, idx, test.label(idx), ckpt.spec.classes);
        one.true_label = test.label(idx);
        AttackResult r = run_attack(ckpt, test.example(idx), one);
        successes += r.success ? 1 : 0;
        results.push_back(std::move(r));
    }
    write_attack_results(results, out_path(cfg, std::string("attack_") +
                                                    attack_kind_name(ac.kind) + ".jsonl"));
    write_run_meta(out_path(cfg, "run_meta.json"), "attack");
    std::printf("%s-Attack: %d/%zu succeeded (%.1f%%)\n", attack_kind_name(ac.kind), successes,
                pool.size(), pool.empty() ? 0.0 : 100.0 * successes / pool.size());
    return 0;
}

int cmd_probe(const Cli& cli) {
    RunConfig cfg = load_cfg(cli);
    Checkpoint ckpt = load_checkpoint(cli.model_path);
    Dataset test = detect_input_set(cli, cfg);
    const Tensor x = test.example(cli.index);

    ProbeParams pp = cfg.probe.with_seed(RngStream(cfg.seed, "cli-probe", cli.index).next_u64());
    SaliencyRegionSet regions = select_saliency_regions(ckpt, x, pp);
    ProbeResult pr = estimate_probe(ckpt, x, regions, pp);
    if (pr.found())
        std::printf("input %d: probe theta* = %.6f (%zu levels searched)\n", cli.index,
                    *pr.theta_star, pr.log.size());
    else
        std::printf("input %d: probe not found (class stable under rate-1 flips)\n", cli.index);

    std::FILE* f = std::fopen(out_path(cfg, "probe.json").c_str(), "wb");
    if (!f) throw std::runtime_error("io: cannot open probe.json");
    std::fprintf(f, "{\"input\":%d,\"theta_star\":", cli.index);
    if (pr.found())
        std::fprintf(f, "%.17g", *pr.theta_star);
    else
        std::fprintf(f, "null");
    std::fprintf(f, ",\"levels\":[");
    for (std::size_t i = 0; i < pr.log.size(); ++i)
        std::fprintf(f, "%s{\"theta\":%.17g,\"trials\":%d,\"successes\":%d}", i ? "," : "",
                     pr.log[i].theta, pr.log[i].trials, pr.log[i].successes);
    std::fprintf(f, "]}\n");
    std::fclose(f);
    write_run_meta(out_path(cfg, "run_meta.json"), "probe");
    return 0;
}

int cmd_detect(const Cli& cli) {
    RunConfig cfg = load_cfg(cli);
    Checkpoint ckpt = load_checkpoint(cli.model_path);
    Dataset test = detect_input_set(cli, cfg);

    std::vector<int> indices;
    if (cli.count > 0)
        for (int i = 0; i < std::min(cli.count, test.size()); ++i) indices.push_back(i);
    else
        indices.push_back(cli.index);

    std::vector<DetectionReport> reports;
    for (int idx : indices) {
        ProbeParams pp = cfg.probe.with_seed(RngStream(cfg.seed, "analyze", idx).next_u64());
        DetectionReport rep = analyze(ckpt, test.example(idx), pp, idx);
        std::printf("input %d: class %d, verdict %s", idx, rep.predicted_class,
                    rep.verdict == Verdict::Genuine ? "genuine" : "suspicious");
        if (rep.recovered_class) std::printf(", recovered class %d", *rep.recovered_class);
        if (rep.indeterminate) std::printf(" (indeterminate)");
        std::printf(", score %.4f\n", rep.score);
        reports.push_back(std::move(rep));
    }
    write_detection_reports(reports, out_path(cfg, "detection_reports.jsonl"));
    write_run_meta(out_path(cfg, "run_meta.json"), "detect");
    return 0;
}

int cmd_bench(const Cli& cli, const std::string& study) {
    RunConfig cfg = load_cfg(cli);
    Checkpoint ckpt = load_checkpoint(cli.model_path);
    LoadedData data = load_dataset(cfg);

    if (study == "ratios") {
        MinimalityOptions mo;
        mo.pool = cfg.bench.ratios;
        mo.seed = cfg.seed;
        mo.attack = cfg.attack;
        mo.threads = cfg.threads;
        MinimalityOutcome out = minimality_ratios(ckpt, data.test, mo);
        write_ratio_distribution(out.nearest_genuine, out_path(cfg, "ratios_nearest.csv"));
        write_ratio_distribution(out.double_perturb, out_path(cfg, "ratios_double.csv"));
        std::printf("attacked %d, succeeded %d; double-perturb ratios below 0.3: %.1f%%\n",
                    out.attacked, out.succeeded,
                    100.0 * out.double_perturb.fraction_below(0.3));
    } else if (study == "resilience") {
        std::vector<std::pair<std::string, const Checkpoint*>> models{{"model", &ckpt}};
        std::vector<Checkpoint> extras;
        extras.reserve(cli.extra_models.size());
        std::vector<std::string> names;
        for (const std::string& spec : cli.extra_models) {
            const auto eq = spec.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config: --extra expects name=path");
            names.push_back(spec.substr(0, eq));
            extras.push_back(load_checkpoint(spec.substr(eq + 1)));
        }
        for (std::size_t i = 0; i < extras.size(); ++i)
            models.push_back({names[i], &extras[i]});
        ResilienceOptions ro;
        ro.pool = cfg.bench.resilience;
        ro.seed = cfg.seed;
        ro.attack = cfg.attack;
        ro.threads = cfg.threads;
        ResilienceMatrix m = resilience_matrix(
            models, {AttackKind::G, AttackKind::H, AttackKind::P, AttackKind::C}, data.test, ro);
        write_resilience_matrix(m, out_path(cfg, "resilience.json"),
                                out_path(cfg, "resilience.txt"));
        for (std::size_t i = 0; i < m.model_names.size(); ++i) {
            std::printf("%-20s", m.model_names[i].c_str());
            for (double v : m.success_rates[i]) std::printf(" %6.1f%%", 100.0 * v);
            std::printf("\n");
        }
    } else if (study == "counter") {
        CounterOptions co;
        co.pool = cfg.bench.counter;
        co.seed = cfg.seed;
        co.attack = cfg.attack;
        co.probe = cfg.probe;
        co.threads = cfg.threads;
        CounterOutcome out = countermeasure_study(
            ckpt, data.test, {AttackKind::G, AttackKind::H, AttackKind::P, AttackKind::C}, co);
        write_counter_outcome(out, out_path(cfg, "counter.json"), out_path(cfg, "counter.txt"));
        for (std::size_t i = 0; i < out.attacks.size(); ++i)
            std::printf("%s-Attack: %d base successes, %.1f%% fail to reach genuine probes\n",
                        attack_kind_name(out.attacks[i]), out.base_successes[i],
                        100.0 * out.failure_rates[i]);
        if (!out.amplified_ratios.empty())
            std::printf("median amplitude ratio (minimality abandoned): %.2f\n",
                        out.amplified_ratios.median());
    } else if (study == "synergy") {
        if (cli.distilled_path.empty())
            throw std::runtime_error("config: bench synergy needs --distilled");
        Checkpoint distilled = load_checkpoint(cli.distilled_path);
        SynergyOptions so;
        so.pool = cfg.bench.synergy;
        so.seed = cfg.seed;
        so.attack = cfg.attack;
        so.probe = cfg.probe;
        so.threads = cfg.threads;
        SynergyOutcome out = synergy_study(ckpt, distilled, data.test, so);
        write_synergy_outcome(out, out_path(cfg, "synergy.json"), out_path(cfg, "synergy.txt"));
        std::printf("defended cases: %d (flagged %.1f%%), penetrating cases: %d (flagged %.1f%%)\n",
                    out.defended_cases,
                    out.defended_detection_rate ? 100.0 * *out.defended_detection_rate : 0.0,
                    out.penetrating_cases,
                    out.penetrating_detection_rate ? 100.0 * *out.penetrating_detection_rate : 0.0);
    } else {
        throw std::runtime_error("config: unknown bench study " + study);
    }
    write_run_meta(out_path(cfg, "run_meta.json"), "bench " + study);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial-input laboratory: attacks, hardened training, and "
                 "attack-agnostic tampering analysis"};
    app.require_subcommand(1);

    Cli cli;

    auto add_common = [&](CLI::App* cmd, bool needs_model) {
        cmd->add_option("--config", cli.config_path, "run config (JSON)")->required();
        cmd->add_option("--out", cli.out_override, "output directory override");
        cmd->add_option("--seed", cli.seed_override, "seed override");
        if (needs_model)
            cmd->add_option("--model", cli.model_path, "checkpoint file")->required();
    };

    CLI::App* train_cmd = app.add_subcommand("train", "train a model on the configured dataset");
    add_common(train_cmd, false);

    CLI::App* defend = app.add_subcommand("defend", "train a defense-hardened model");
    defend->require_subcommand(1);
    CLI::App* d_aug = defend->add_subcommand("augment", "adversarial data augmentation");
    CLI::App* d_rob = defend->add_subcommand("robust", "robust minimax optimization");
    CLI::App* d_dis = defend->add_subcommand("distill", "defensive distillation");
    add_common(d_aug, false);
    add_common(d_rob, false);
    add_common(d_dis, false);

    CLI::App* attack_cmd = app.add_subcommand("attack", "craft adversarial inputs");
    add_common(attack_cmd, true);
    attack_cmd->add_option("--kind", cli.kind, "attack kind: G|H|P|C");
    attack_cmd->add_option("--count", cli.count, "evaluation pool size");

    CLI::App* probe_cmd = app.add_subcommand("probe", "estimate an input's probe");
    add_common(probe_cmd, true);
    probe_cmd->add_option("--index", cli.index, "test-set input index");
    probe_cmd->add_option("--images", cli.images_path, "IDX image file instead of the test set");
    probe_cmd->add_option("--labels", cli.labels_path, "IDX label file");

    CLI::App* detect_cmd = app.add_subcommand("detect", "tampering analysis report");
    add_common(detect_cmd, true);
    detect_cmd->add_option("--index", cli.index, "test-set input index");
    detect_cmd->add_option("--count", cli.count, "analyze the first N test inputs");
    detect_cmd->add_option("--images", cli.images_path, "IDX image file instead of the test set");
    detect_cmd->add_option("--labels", cli.labels_path, "IDX label file");

    CLI::App* bench_cmd = app.add_subcommand("bench", "experiment harness");
    bench_cmd->require_subcommand(1);
    const char* studies[] = {"ratios", "resilience", "counter", "synergy"};
    for (const char* s : studies) {
        CLI::App* sub = bench_cmd->add_subcommand(s);
        add_common(sub, true);
        if (std::string(s) == "resilience")
            sub->add_option("--extra", cli.extra_models, "additional models, name=path");
        if (std::string(s) == "synergy")
            sub->add_option("--distilled", cli.distilled_path, "distilled checkpoint");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) return cmd_train(cli, DefenseMode::None);
        if (defend->parsed()) {
            if (d_aug->parsed()) return cmd_train(cli, DefenseMode::Augmented);
            if (d_rob->parsed()) return cmd_train(cli, DefenseMode::Robust);
            if (d_dis->parsed()) return cmd_train(cli, DefenseMode::Distill);
        }
        if (attack_cmd->parsed()) return cmd_attack(cli);
        if (probe_cmd->parsed()) return cmd_probe(cli);
        if (detect_cmd->parsed()) return cmd_detect(cli);
        if (bench_cmd->parsed()) {
            for (const char* s : studies)
                if (bench_cmd->get_subcommand(s)->parsed()) return cmd_bench(cli, s);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return classify_error(e.what());
    }
    return 1;
}
