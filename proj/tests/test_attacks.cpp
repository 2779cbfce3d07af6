#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "eagleeye/attacks.hpp"
#include "eagleeye/dataset.hpp"
#include "eagleeye/detector.hpp"
#include "eagleeye/trainer.hpp"

using namespace eagleeye;

namespace {

// 1-D logistic model: logits (w x, b2); the class boundary sits at x = b2/w
Checkpoint boundary_model(double w, double b2) {
    NetworkSpec spec = build_synthetic_mlp(1, {}, 2);
    Checkpoint c = init_checkpoint(spec, 1);
    c.params.at("l0.w") = Tensor({2, 1}, {w, 0.0});
    c.params.at("l0.b") = Tensor({2}, {0.0, b2});
    return c;
}

Checkpoint linear_model(const Tensor& w, const Tensor& b) {
    NetworkSpec spec = build_synthetic_mlp(w.dim(1), {}, w.dim(0));
    Checkpoint c = init_checkpoint(spec, 1);
    c.params.at("l0.w") = w;
    c.params.at("l0.b") = b;
    return c;
}

Checkpoint trained_blob_mlp(int classes = 3, double spread = 0.25, std::uint64_t seed = 7) {
    Dataset d = synth_blobs(classes, 60, spread, seed);
    NetworkSpec spec = build_synthetic_mlp(2, {12}, classes);
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.batch = 16;
    cfg.epochs = 30;
    cfg.seed = seed;
    return train(spec, d, cfg).checkpoint;
}

}  // namespace

TEST_SUITE("g_attack") {
    TEST_CASE("known 1-D boundary: minimal grid delta is found") {
        // boundary 0.0951 from x = 0; at delta = 0.10 the tie-break flips
        Checkpoint c = boundary_model(1.0, 0.0951);
        Tensor x({1}, {0.0});
        CHECK(classify(c, x) == 1);

        AttackConfig cfg;
        cfg.kind = AttackKind::G;
        cfg.delta_budget = 0.25;
        cfg.delta_resolution = 0.01;
        AttackResult r = g_attack(c, x, cfg);
        REQUIRE(r.success);
        CHECK(r.amplitude == doctest::Approx(0.10).epsilon(1e-12));
        CHECK(r.class_after == 0);
        // minimality: one grid step less does not cross
        CHECK(classify(c, Tensor({1}, {0.09})) == 1);
    }

    TEST_CASE("zero gradient components receive zero perturbation") {
        // second input feeds nothing, so its loss gradient is exactly zero
        Tensor w({2, 2}, {1.0, 0.0, -1.0, 0.0});
        Checkpoint c = linear_model(w, Tensor({2}));
        Tensor x({2}, {0.1, 0.5});
        AttackConfig cfg;
        cfg.kind = AttackKind::G;
        AttackResult r = g_attack(c, x, cfg);
        REQUIRE(r.success);
        CHECK(r.perturbation[1] == 0.0);
        CHECK(std::abs(r.perturbation[0]) > 0.0);
    }

    TEST_CASE("target equal to the current class is rejected") {
        Checkpoint c = boundary_model(1.0, 0.5);
        Tensor x({1}, {0.0});
        AttackConfig cfg;
        cfg.target = classify(c, x);
        CHECK_THROWS_AS(g_attack(c, x, cfg), std::invalid_argument);
    }

    TEST_CASE("adversarial inputs stay inside the pixel domain") {
        Checkpoint c = trained_blob_mlp();
        Dataset d = synth_blobs(3, 20, 0.25, 7);
        for (int i = 0; i < d.size(); i += 5) {
            AttackConfig cfg;
            cfg.true_label = d.label(i);
            AttackResult r = g_attack(c, d.example(i), cfg);
            for (std::int64_t j = 0; j < r.x_adv.numel(); ++j) {
                CHECK(r.x_adv[j] >= -1.0);
                CHECK(r.x_adv[j] <= 1.0);
            }
        }
    }

    TEST_CASE("an already-misclassified input succeeds with zero perturbation") {
        Checkpoint c = boundary_model(1.0, -0.3);  // x = 0 classifies as 0
        Tensor x({1}, {0.0});
        CHECK(classify(c, x) == 0);
        AttackConfig cfg;
        cfg.true_label = 1;  // supposedly a class-1 input
        AttackResult r = g_attack(c, x, cfg);
        CHECK(r.success);
        CHECK(r.iterations == 0);
        CHECK(norm_l1(r.perturbation) == 0.0);
    }
}

TEST_SUITE("h_attack") {
    TEST_CASE("zero Jacobian difference fails cleanly") {
        Checkpoint c = linear_model(Tensor({2, 2}), Tensor({2}, {0.2, 0.0}));
        Tensor x({2}, {0.3, 0.3});
        AttackConfig cfg;
        AttackResult r = h_attack(c, x, cfg);
        CHECK(!r.success);
    }

    TEST_CASE("on a 2-class linear model G and H pick the same sign direction") {
        Tensor w({2, 3}, {0.8, -0.5, 0.2, -0.1, 0.6, -0.7});
        Checkpoint c = linear_model(w, Tensor({2}, {0.05, -0.05}));
        Tensor x({3}, {0.2, -0.1, 0.4});
        AttackConfig cfg;
        cfg.target = 1 - classify(c, x);
        cfg.delta_budget = 2.0;  // wide budget so both cross
        AttackResult rg = g_attack(c, x, cfg);
        AttackResult rh = h_attack(c, x, cfg);
        REQUIRE(rg.success);
        REQUIRE(rh.success);
        for (int i = 0; i < 3; ++i)
            CHECK(sign(rg.perturbation)[i] == sign(rh.perturbation)[i]);
        CHECK(rg.amplitude == doctest::Approx(rh.amplitude).epsilon(1e-12));
    }

    TEST_CASE("grid minimality holds for sign-step successes") {
        Checkpoint c = trained_blob_mlp();
        Dataset d = synth_blobs(3, 30, 0.25, 17);
        int checked = 0;
        for (int i = 0; i < d.size() && checked < 8; ++i) {
            const Tensor x = d.example(i);
            if (classify(c, x) != d.label(i)) continue;
            AttackConfig cfg;
            cfg.kind = AttackKind::H;
            cfg.true_label = d.label(i);
            AttackResult r = h_attack(c, x, cfg);
            if (!r.success || r.amplitude <= cfg.delta_resolution) continue;
            ++checked;
            // the same direction one grid step earlier still classifies as the
            // original class
            Tensor dir = sign(r.perturbation);
            Tensor weaker = clamp(axpy(r.amplitude - cfg.delta_resolution, dir, x), -1.0, 1.0);
            CHECK(classify(c, weaker) == r.class_before);
        }
        CHECK(checked > 0);
    }
}

TEST_SUITE("saliency_attacks") {
    TEST_CASE("p_attack's first pair matches the brute-force (-alpha*beta) argmax") {
        Tensor w({3, 4}, {0.9, -0.4, 0.15, 0.3,
                          -0.2, 0.7, -0.45, 0.1,
                          -0.5, -0.3, 0.35, -0.6});
        Checkpoint c = linear_model(w, Tensor({3}, {0.02, -0.01, 0.0}));
        Tensor x({4}, {0.2, -0.3, 0.1, -0.2});
        const int orig = classify(c, x);
        const int target = (orig + 1) % 3;

        SaliencyPair sp = attack_saliency(c, x, target, 1.0);
        // exhaustive top-two among non-saturated components
        std::vector<std::pair<double, int>> scored;
        for (int i = 0; i < 4; ++i) {
            const double flip_to = sp.alpha[i] > 0.0 ? 1.0 : -1.0;
            if (x[i] == flip_to) continue;
            scored.push_back({-(sp.alpha[i] * sp.beta[i]), i});
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        std::set<int> expected{scored[0].second, scored[1].second};

        AttackConfig cfg;
        cfg.kind = AttackKind::P;
        cfg.target = target;
        cfg.pixel_budget = 2;  // exactly one round
        AttackResult r = p_attack(c, x, cfg);
        std::set<int> flipped;
        for (int i = 0; i < 4; ++i)
            if (r.x_adv[i] != x[i]) flipped.insert(i);
        CHECK(flipped == expected);
    }

    TEST_CASE("c_attack's pair matches the brute-force |alpha-beta| argmax") {
        Tensor w({3, 4}, {0.9, -0.4, 0.15, 0.3,
                          -0.2, 0.7, -0.45, 0.1,
                          -0.5, -0.3, 0.35, -0.6});
        Checkpoint c = linear_model(w, Tensor({3}, {0.02, -0.01, 0.0}));
        Tensor x({4}, {0.2, -0.3, 0.1, -0.2});
        const int orig = classify(c, x);
        const int target = (orig + 1) % 3;

        SaliencyPair sp = attack_saliency(c, x, target, 1.0);
        std::vector<std::pair<double, int>> scored;
        for (int i = 0; i < 4; ++i) {
            const double flip_to = sp.alpha[i] > 0.0 ? 1.0 : -1.0;
            if (x[i] == flip_to) continue;
            scored.push_back({std::abs(sp.alpha[i] - sp.beta[i]), i});
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        std::set<int> expected{scored[0].second, scored[1].second};

        AttackConfig cfg;
        cfg.kind = AttackKind::C;
        cfg.target = target;
        cfg.pixel_budget = 2;
        AttackResult r = c_attack(c, x, cfg);
        std::set<int> flipped;
        for (int i = 0; i < 4; ++i)
            if (r.x_adv[i] != x[i]) flipped.insert(i);
        CHECK(flipped == expected);
    }

    TEST_CASE("a zero Jacobian burns the budget and fails") {
        // constant network: every saliency is exactly zero and no flip can
        // change the class, so the attack exhausts its budget
        Checkpoint c = linear_model(Tensor({2, 6}), Tensor({2}, {0.2, 0.0}));
        Tensor x({6}, {0.5, 0.5, 0.5, 0.1, 0.1, 0.1});
        AttackConfig cfg;
        cfg.kind = AttackKind::P;
        cfg.pixel_budget = 6;
        AttackResult r = p_attack(c, x, cfg);
        CHECK(!r.success);
        CHECK(r.iterations > 0);
    }

    TEST_CASE("the distillation temperature revives the c_attack") {
        // logit gap ~1000 underflows the tau=1 softmax Jacobian to exact
        // zeros, so P flips zero-weight components by index order and runs
        // out of budget; C reads the checkpoint's training temperature,
        // sees usable gradients, and crosses in one round
        Tensor w({2, 6}, {0.0, 0.0, 0.0, 0.0, 400.0, 300.0,
                          0.0, 0.0, 0.0, 0.0, -400.0, -300.0});
        Checkpoint c = linear_model(w, Tensor({2}));
        c.meta.temperature = 40.0;
        Tensor x({6}, {0.5, 0.4, 0.5, 0.3, 0.8, 0.6});
        REQUIRE(classify(c, x) == 0);

        AttackConfig cfg;
        cfg.pixel_budget = 4;
        cfg.kind = AttackKind::P;
        AttackResult rp = p_attack(c, x, cfg);
        cfg.kind = AttackKind::C;
        AttackResult rc = c_attack(c, x, cfg);
        CHECK(!rp.success);
        CHECK(rc.success);
    }

    TEST_CASE("untargeted flips keep the original class until the final round") {
        Checkpoint c = trained_blob_mlp(3, 0.3, 23);
        Dataset d = synth_blobs(3, 30, 0.3, 23);
        int verified = 0;
        for (int i = 0; i < d.size() && verified < 6; ++i) {
            const Tensor x = d.example(i);
            if (classify(c, x) != d.label(i)) continue;
            AttackConfig cfg;
            cfg.kind = AttackKind::P;
            cfg.pixel_budget = 2;  // 2-D toy input
            cfg.true_label = d.label(i);
            AttackResult r = p_attack(c, x, cfg);
            if (!r.success || r.iterations == 0) continue;
            ++verified;
            for (const IterationRecord& rec : r.trace) CHECK(rec.class_before == r.class_before);
        }
        CHECK(verified > 0);
    }

    TEST_CASE("flipped-component count respects the budget") {
        Checkpoint c = trained_blob_mlp();
        Dataset d = synth_blobs(3, 10, 0.25, 31);
        for (int i = 0; i < d.size(); i += 4) {
            AttackConfig cfg;
            cfg.kind = AttackKind::P;
            cfg.pixel_budget = 2;
            cfg.true_label = d.label(i);
            AttackResult r = p_attack(c, d.example(i), cfg);
            int flips = 0;
            for (std::int64_t j = 0; j < r.x_adv.numel(); ++j)
                if (r.x_adv[j] != d.example(i)[j]) ++flips;
            CHECK(flips <= 2);
        }
    }
}

TEST_SUITE("attack_result") {
    TEST_CASE("a false success claim is rejected at construction") {
        Checkpoint c = boundary_model(1.0, 0.5);
        Tensor x({1}, {0.0});
        CHECK_THROWS_AS(
            make_attack_result(c, AttackKind::G, x, x, true, classify(c, x), 0, false, 0, 0.0, {}),
            std::logic_error);
    }

    TEST_CASE("config validation catches out-of-range targets") {
        Checkpoint c = boundary_model(1.0, 0.5);
        AttackConfig cfg;
        cfg.target = 7;
        CHECK_THROWS_AS(g_attack(c, Tensor({1}, {0.0}), cfg), std::invalid_argument);
        cfg = AttackConfig{};
        cfg.delta_resolution = 0.0;
        CHECK_THROWS_AS(g_attack(c, Tensor({1}, {0.0}), cfg), std::invalid_argument);
    }

    TEST_CASE("determinism: the same attack twice gives identical results") {
        Checkpoint c = trained_blob_mlp();
        Dataset d = synth_blobs(3, 10, 0.25, 7);
        AttackConfig cfg;
        cfg.kind = AttackKind::P;
        cfg.true_label = d.label(2);
        AttackResult a = p_attack(c, d.example(2), cfg);
        AttackResult b = p_attack(c, d.example(2), cfg);
        CHECK(a.x_adv == b.x_adv);
        CHECK(a.success == b.success);
        CHECK(a.iterations == b.iterations);
    }
}

TEST_SUITE("countermeasures") {
    TEST_CASE("theta goal zero returns the base result unchanged") {
        Checkpoint c = trained_blob_mlp();
        Dataset d = synth_blobs(3, 10, 0.25, 7);
        AttackConfig cfg;
        cfg.kind = AttackKind::G;
        cfg.true_label = d.label(1);
        ProbeParams pp;
        pp.seed = 5;
        AmplifiedOptions opt;
        opt.theta_goal = 0.0;
        AmplifiedResult amp = amplified_attack(c, d.example(1), cfg, pp, opt);
        AttackResult base = g_attack(c, d.example(1), cfg);
        if (base.success) {
            CHECK(amp.probe_goal_met);
            CHECK(amp.amplitude_ratio == 1.0);
            CHECK(amp.result.x_adv == base.x_adv);
        } else {
            CHECK(!amp.result.success);
        }
    }

    TEST_CASE("amplification preserves the adversarial class and grows the amplitude") {
        Checkpoint c = trained_blob_mlp(3, 0.3, 23);
        Dataset d = synth_blobs(3, 30, 0.3, 23);
        ProbeParams pp;
        pp.seed = 5;
        pp.trials_per_level = 8;
        int seen = 0;
        for (int i = 0; i < d.size() && seen < 4; ++i) {
            const Tensor x = d.example(i);
            if (classify(c, x) != d.label(i)) continue;
            AttackConfig cfg;
            cfg.kind = AttackKind::G;
            cfg.true_label = d.label(i);
            AttackResult base = g_attack(c, x, cfg);
            if (!base.success) continue;
            ++seen;
            AmplifiedOptions opt;
            opt.theta_goal = 0.9;  // nearly unreachable: forces amplification
            opt.enlarged_delta = 1.0;
            AmplifiedResult amp = amplified_attack(c, x, cfg, pp, opt);
            REQUIRE(amp.result.success);
            CHECK(amp.result.class_after == base.class_after);
            CHECK(amp.result.amplitude >= base.amplitude);
            CHECK(amp.amplitude_ratio >= 1.0);
        }
        CHECK(seen > 0);
    }

    TEST_CASE("random amplification with a zero flip budget leaves the input unchanged") {
        Checkpoint c = trained_blob_mlp(3, 0.3, 23);
        Dataset d = synth_blobs(3, 30, 0.3, 23);
        ProbeParams pp;
        pp.seed = 5;
        pp.trials_per_level = 8;
        for (int i = 0; i < d.size(); ++i) {
            const Tensor x = d.example(i);
            if (classify(c, x) != d.label(i)) continue;
            AttackConfig cfg;
            cfg.kind = AttackKind::G;
            cfg.true_label = d.label(i);
            AttackResult base = g_attack(c, x, cfg);
            if (!base.success) continue;
            AmplifiedOptions opt;
            opt.theta_goal = 0.9;
            opt.enlarged_pixels = 0;
            AmplifiedResult rnd = random_amplification(c, x, base, pp, opt, 77);
            CHECK(rnd.result.x_adv == base.x_adv);
            break;
        }
    }
}
