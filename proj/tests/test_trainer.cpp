#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "eagleeye/dataset.hpp"
#include "eagleeye/trainer.hpp"

using namespace eagleeye;

TEST_SUITE("nesterov") {
    TEST_CASE("zero velocity reduces to plain SGD") {
        Tensor w({2}, {1.0, 1.0});
        Tensor v({2});
        Tensor g({2}, {1.0, -2.0});
        auto [w2, v2] = nesterov_step(w, v, g, 0.1, 0.9);
        CHECK(v2[0] == doctest::Approx(-0.1).epsilon(1e-15));
        CHECK(v2[1] == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(w2[0] == doctest::Approx(0.9).epsilon(1e-15));
        CHECK(w2[1] == doctest::Approx(1.2).epsilon(1e-15));
    }

    TEST_CASE("zero gradient coasts on momentum") {
        Tensor w({2}, {1.0, -1.0});
        Tensor v({2}, {0.4, -0.2});
        Tensor g({2});
        auto [w2, v2] = nesterov_step(w, v, g, 0.1, 0.9);
        CHECK(v2[0] == doctest::Approx(0.36).epsilon(1e-15));
        CHECK(v2[1] == doctest::Approx(-0.18).epsilon(1e-15));
        CHECK(w2[0] == doctest::Approx(1.36).epsilon(1e-15));
        CHECK(w2[1] == doctest::Approx(-1.18).epsilon(1e-15));
    }

    TEST_CASE("two chained steps on a quadratic match the hand recurrence") {
        // loss = w^2/2, gradient at the lookahead point w + mu v
        double w = 1.0, v = 0.0;
        const double lam = 0.1, mu = 0.9;
        auto step = [&](double& w_, double& v_) {
            const double g = w_ + mu * v_;
            Tensor wt({1}, {w_}), vt({1}, {v_}), gt({1}, {g});
            auto [w2, v2] = nesterov_step(wt, vt, gt, lam, mu);
            w_ = w2[0];
            v_ = v2[0];
        };
        step(w, v);
        CHECK(w == doctest::Approx(0.9).epsilon(1e-15));
        CHECK(v == doctest::Approx(-0.1).epsilon(1e-15));
        step(w, v);
        // pencil-and-paper: v2 = 0.9*(-0.1) - 0.1*0.81 = -0.171, w2 = 0.729
        CHECK(v == doctest::Approx(-0.171).epsilon(1e-15));
        CHECK(w == doctest::Approx(0.729).epsilon(1e-15));
    }

    TEST_CASE("shape mismatch is rejected") {
        CHECK_THROWS_AS(nesterov_step(Tensor({2}), Tensor({3}), Tensor({2}), 0.1, 0.9),
                        std::invalid_argument);
    }
}

TEST_SUITE("adaptive_lr") {
    TEST_CASE("improvement branch uses s = 2.5") {
        CHECK(adaptive_lr_update(0.1, 1.0, 0.5) ==
              doctest::Approx(0.1 * std::exp(0.5 / 2.5)).epsilon(1e-15));
        CHECK(adaptive_lr_update(0.1, 1.0, 0.5) == doctest::Approx(0.12214).epsilon(1e-4));
    }

    TEST_CASE("equal loss leaves lambda unchanged") {
        CHECK(adaptive_lr_update(0.1, 0.7, 0.7) == doctest::Approx(0.1).epsilon(1e-15));
    }

    TEST_CASE("worsening branch uses s = 0.75") {
        CHECK(adaptive_lr_update(0.1, 0.5, 1.0) ==
              doctest::Approx(0.1 * std::exp(-0.5 / 0.75)).epsilon(1e-15));
        CHECK(adaptive_lr_update(0.1, 0.5, 1.0) == doctest::Approx(0.05134).epsilon(1e-4));
    }

    TEST_CASE("result stays positive") {
        CHECK(adaptive_lr_update(1e-9, 0.0, 100.0) > 0.0);
        CHECK_THROWS_AS(adaptive_lr_update(0.0, 1.0, 0.5), std::invalid_argument);
    }
}

TEST_SUITE("robust_perturbation") {
    TEST_CASE("l-inf is a scaled sign map") {
        Tensor g({2}, {0.3, -0.2});
        Tensor r = robust_perturbation(g, RobustNorm::LInf, 0.2);
        CHECK(r[0] == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(r[1] == doctest::Approx(-0.2).epsilon(1e-15));
    }

    TEST_CASE("l1 stacks the budget on the largest gradients") {
        Tensor g({3}, {0.5, 0.1, -0.4});
        Tensor r = robust_perturbation(g, RobustNorm::L1, 4.0);
        CHECK(r[0] == doctest::Approx(2.0).epsilon(1e-15));
        CHECK(r[1] == 0.0);
        CHECK(r[2] == doctest::Approx(-2.0).epsilon(1e-15));
    }

    TEST_CASE("l1 greedy choice maximizes the inner product over extreme points") {
        Tensor g({3}, {0.5, 0.1, -0.4});
        Tensor r = robust_perturbation(g, RobustNorm::L1, 4.0);
        // brute force over all r with components in {-2, 0, 2} and l1 <= 4
        double best = -1e9;
        const double vals[3] = {-2.0, 0.0, 2.0};
        for (double a : vals)
            for (double b : vals)
                for (double c : vals) {
                    if (std::abs(a) + std::abs(b) + std::abs(c) > 4.0 + 1e-12) continue;
                    best = std::max(best, g[0] * a + g[1] * b + g[2] * c);
                }
        CHECK(dot(g, r) == doctest::Approx(best).epsilon(1e-12));
    }

    TEST_CASE("zero gradient gives a zero perturbation") {
        Tensor g({4});
        CHECK(norm_l1(robust_perturbation(g, RobustNorm::LInf, 0.2)) == 0.0);
        CHECK(norm_l1(robust_perturbation(g, RobustNorm::L1, 4.0)) == 0.0);
    }

    TEST_CASE("budget must be positive") {
        CHECK_THROWS_AS(robust_perturbation(Tensor({2}), RobustNorm::L1, 0.0),
                        std::invalid_argument);
    }
}

namespace {

TrainConfig toy_config(int epochs = 40) {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.momentum = 0.9;
    cfg.batch = 16;
    cfg.epochs = epochs;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST_SUITE("train") {
    TEST_CASE("separable blobs reach 99% train accuracy") {
        Dataset d = synth_blobs(2, 100, 0.1, 7);
        NetworkSpec spec = build_synthetic_mlp(2, {16}, 2);
        TrainOutcome out = train(spec, d, toy_config(50));
        CHECK(out.report.epochs.back().accuracy >= 0.99);
        CHECK(out.report.final_loss < out.report.epochs.front().loss);
        CHECK(out.report.epochs.size() <= 50);
    }

    TEST_CASE("single epoch performs exactly ceil(N/batch) updates") {
        Dataset d = synth_blobs(2, 5, 0.1, 7);  // N = 10
        NetworkSpec spec = build_synthetic_mlp(2, {}, 2);
        TrainConfig cfg = toy_config(1);
        cfg.batch = 4;
        TrainOutcome out = train(spec, d, cfg);
        CHECK(out.report.epochs.size() == 1);
        CHECK(out.report.epochs[0].steps == 3);  // ceil(10/4)
    }

    TEST_CASE("identical seeds give bit-identical checkpoints") {
        Dataset d = synth_blobs(3, 30, 0.15, 9);
        NetworkSpec spec = build_synthetic_mlp(2, {8}, 3);
        TrainOutcome a = train(spec, d, toy_config(5));
        TrainOutcome b = train(spec, d, toy_config(5));
        CHECK(a.checkpoint == b.checkpoint);
        // a different seed moves the weights
        TrainConfig other = toy_config(5);
        other.seed = 4;
        TrainOutcome c = train(spec, d, other);
        CHECK(!(c.checkpoint == a.checkpoint));
    }

    TEST_CASE("empty dataset and bad labels are rejected") {
        NetworkSpec spec = build_synthetic_mlp(2, {}, 2);
        Dataset empty;
        empty.images = Tensor({0, 2});
        CHECK_THROWS_AS(train(spec, empty, toy_config()), std::invalid_argument);
        Dataset bad = synth_blobs(3, 5, 0.1, 1);  // labels reach 2
        CHECK_THROWS_AS(train(build_synthetic_mlp(2, {}, 2), bad, toy_config()),
                        std::invalid_argument);
    }

    TEST_CASE("divergence reports the epoch") {
        // heavily overlapping classes keep gradients alive, so an absurd
        // learning rate grows the two layers multiplicatively to overflow
        Dataset d = synth_blobs(2, 40, 2.0, 7);
        NetworkSpec spec = build_synthetic_mlp(2, {8}, 2);
        TrainConfig cfg = toy_config(20);
        cfg.learning_rate = 1e6;
        try {
            train(spec, d, cfg);
            FAIL("expected divergence");
        } catch (const DivergenceError& e) {
            CHECK(e.epoch >= 0);
        }
    }

    TEST_CASE("config validation") {
        TrainConfig cfg = toy_config();
        cfg.momentum = 1.0;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
        cfg = toy_config();
        cfg.temperature = 0.5;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
        cfg = toy_config();
        cfg.defense.alpha = 1.5;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
}

TEST_SUITE("defenses") {
    TEST_CASE("alpha = 1 augmentation is trajectory-identical to plain training") {
        Dataset d = synth_blobs(2, 40, 0.15, 5);
        NetworkSpec spec = build_synthetic_mlp(2, {8}, 2);
        TrainConfig cfg = toy_config(6);
        cfg.defense.alpha = 1.0;
        TrainOutcome plain = train(spec, d, toy_config(6));
        TrainOutcome aug = train_augmented(spec, d, cfg, AttackKind::G);
        CHECK(plain.checkpoint == aug.checkpoint);
    }

    TEST_CASE("budget = 0 robust training is trajectory-identical to plain training") {
        Dataset d = synth_blobs(2, 40, 0.15, 5);
        NetworkSpec spec = build_synthetic_mlp(2, {8}, 2);
        TrainConfig cfg = toy_config(6);
        cfg.defense.budget = 0.0;
        TrainOutcome plain = train(spec, d, toy_config(6));
        TrainOutcome rob = train_robust(spec, d, cfg);
        CHECK(plain.checkpoint == rob.checkpoint);
    }

    TEST_CASE("G-hardened model resists the G-attack better than the baseline") {
        Dataset d = synth_blobs(3, 60, 0.3, 5);
        NetworkSpec spec = build_synthetic_mlp(2, {12}, 3);
        TrainConfig cfg = toy_config(25);
        cfg.defense.alpha = 0.5;
        cfg.defense.attack_config.delta_budget = 0.25;
        TrainOutcome plain = train(spec, d, toy_config(30));
        TrainOutcome aug = train_augmented(spec, d, cfg, AttackKind::G);

        auto g_success = [&](const Checkpoint& ckpt) {
            int ok = 0, n = 0;
            for (int i = 0; i < d.size(); i += 3) {
                const Tensor x = d.example(i);
                if (classify(ckpt, x) != d.label(i)) continue;
                AttackConfig ac;
                ac.kind = AttackKind::G;
                ac.true_label = d.label(i);
                AttackResult r = g_attack(ckpt, x, ac);
                ok += r.success ? 1 : 0;
                ++n;
            }
            return std::pair<int, int>{ok, n};
        };
        auto [base_ok, base_n] = g_success(plain.checkpoint);
        auto [hard_ok, hard_n] = g_success(aug.checkpoint);
        const double base_rate = static_cast<double>(base_ok) / base_n;
        const double hard_rate = static_cast<double>(hard_ok) / hard_n;
        CHECK(base_rate > 0.0);  // the toy model must be attackable at all
        CHECK(hard_rate < base_rate);
    }

    TEST_CASE("l-inf robust training reduces G-attack success") {
        Dataset d = synth_blobs(3, 60, 0.22, 5);
        NetworkSpec spec = build_synthetic_mlp(2, {12}, 3);
        TrainConfig cfg = toy_config(30);
        cfg.defense.norm = RobustNorm::LInf;
        cfg.defense.budget = 0.2;
        TrainOutcome plain = train(spec, d, toy_config(30));
        TrainOutcome rob = train_robust(spec, d, cfg);

        auto g_success = [&](const Checkpoint& ckpt) {
            int ok = 0, n = 0;
            for (int i = 0; i < d.size(); i += 3) {
                const Tensor x = d.example(i);
                if (classify(ckpt, x) != d.label(i)) continue;
                AttackConfig ac;
                ac.kind = AttackKind::G;
                ac.true_label = d.label(i);
                AttackResult r = g_attack(ckpt, x, ac);
                ok += r.success ? 1 : 0;
                ++n;
            }
            return static_cast<double>(ok) / n;
        };
        CHECK(g_success(rob.checkpoint) <= g_success(plain.checkpoint));
    }

    TEST_CASE("distillation: temperature must exceed one") {
        Dataset d = synth_blobs(2, 10, 0.1, 5);
        NetworkSpec spec = build_synthetic_mlp(2, {}, 2);
        TrainConfig cfg = toy_config(2);
        cfg.defense.distill_tau = 1.0;
        CHECK_THROWS_AS(distill(spec, d, cfg), std::invalid_argument);
    }

    TEST_CASE("student of a confident teacher matches its hard-label accuracy") {
        Dataset d = synth_blobs(2, 80, 0.12, 5);
        NetworkSpec spec = build_synthetic_mlp(2, {10}, 2);
        TrainConfig cfg = toy_config(40);
        cfg.defense.distill_tau = 40.0;
        DistillOutcome out = distill(spec, d, cfg);
        CHECK(out.teacher.meta.temperature == 40.0);
        CHECK(out.student.meta.temperature == 40.0);
        const double teacher_acc = evaluate_accuracy(out.teacher, d);
        const double student_acc = evaluate_accuracy(out.student, d);
        CHECK(teacher_acc >= 0.98);
        CHECK(std::abs(teacher_acc - student_acc) <= 0.02);
    }
}
