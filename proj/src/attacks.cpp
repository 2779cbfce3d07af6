#include "eagleeye/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "eagleeye/detector.hpp"
#include "eagleeye/rng.hpp"

namespace eagleeye {

const char* attack_kind_name(AttackKind k) {
    switch (k) {
        case AttackKind::G: return "G";
        case AttackKind::H: return "H";
        case AttackKind::P: return "P";
        case AttackKind::C: return "C";
    }
    throw std::logic_error("unknown attack kind");
}

AttackKind attack_kind_from_name(const std::string& s) {
    if (s == "G" || s == "g") return AttackKind::G;
    if (s == "H" || s == "h") return AttackKind::H;
    if (s == "P" || s == "p") return AttackKind::P;
    if (s == "C" || s == "c") return AttackKind::C;
    throw std::invalid_argument("unknown attack kind: " + s);
}

void AttackConfig::validate(int classes) const {
    if (delta_budget < 0.0) throw std::invalid_argument("attack: delta budget must be >= 0");
    if (delta_resolution <= 0.0)
        throw std::invalid_argument("attack: delta resolution must be > 0");
    if (pixel_budget < 0) throw std::invalid_argument("attack: pixel budget must be >= 0");
    if (target && (*target < 0 || *target >= classes))
        throw std::invalid_argument("attack: target class out of range");
    if (temperature_override && *temperature_override <= 0.0)
        throw std::invalid_argument("attack: temperature override must be positive");
}

AttackResult make_attack_result(const Checkpoint& ckpt, AttackKind kind, const Tensor& x,
                                Tensor x_adv, bool success, int class_before, int target,
                                bool targeted, int iterations, double amplitude,
                                std::vector<IterationRecord> trace) {
    AttackResult r;
    r.kind = kind;
    r.success = success;
    r.class_before = class_before;
    r.target = target;
    r.iterations = iterations;
    r.amplitude = amplitude;
    r.trace = std::move(trace);
    r.class_after = classify(ckpt, x_adv);
    r.perturbation = sub(x_adv, x);
    r.x_adv = std::move(x_adv);
    for (std::int64_t i = 0; i < r.x_adv.numel(); ++i)
        if (r.x_adv[i] < -1.0 || r.x_adv[i] > 1.0)
            throw std::logic_error("attack result: adversarial input escaped [-1,1]");
    if (success) {
        const bool ok = targeted ? r.class_after == target : r.class_after != class_before;
        if (!ok) throw std::logic_error("attack result: success claim failed re-verification");
    }
    return r;
}

namespace {

struct AttackSetup {
    int orig_class = -1;       // the class the input is supposed to belong to
    int current_class = -1;    // classification right now
    int target = -1;
    bool targeted = false;
    bool already_adversarial = false;
};

AttackSetup setup_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg) {
    cfg.validate(ckpt.spec.classes);
    AttackSetup s;
    auto [cls, probs] = classify_with_probs(ckpt, x);
    s.current_class = cls;
    s.targeted = cfg.target.has_value();
    if (s.targeted) {
        s.target = *cfg.target;
        if (s.target == cls)
            throw std::invalid_argument("attack: target equals the current class");
        s.orig_class = cls;
        return s;
    }
    // untargeted: aim at the runner-up class; a known-mislabelled input is
    // already adversarial and needs no perturbation
    s.orig_class = cfg.true_label.value_or(cls);
    if (cfg.true_label && cls != *cfg.true_label) {
        s.already_adversarial = true;
        s.target = cls;
        return s;
    }
    double best = -1.0;
    int runner = -1;
    for (std::int64_t i = 0; i < probs.numel(); ++i) {
        if (static_cast<int>(i) == cls) continue;
        if (probs[i] > best) {
            best = probs[i];
            runner = static_cast<int>(i);
        }
    }
    s.target = runner;
    return s;
}

AttackResult immediate_success(const Checkpoint& ckpt, AttackKind kind, const Tensor& x,
                               const AttackSetup& s) {
    return make_attack_result(ckpt, kind, x, x, true, s.orig_class, s.target, false, 0, 0.0, {});
}

/// Shared minimal-delta grid scan for the sign-step attacks. `direction` is
/// applied as x + delta * direction, clamped to the pixel domain.
AttackResult grid_attack(const Checkpoint& ckpt, AttackKind kind, const Tensor& x,
                         const AttackConfig& cfg, const AttackSetup& s, const Tensor& direction) {
    bool all_zero = true;
    for (std::int64_t i = 0; i < direction.numel(); ++i)
        if (direction[i] != 0.0) {
            all_zero = false;
            break;
        }

    std::vector<double> deltas;
    for (int k = 1;; ++k) {
        const double d = k * cfg.delta_resolution;
        if (d > cfg.delta_budget + 1e-12) break;
        deltas.push_back(std::min(d, cfg.delta_budget));
    }

    if (all_zero || deltas.empty())
        return make_attack_result(ckpt, kind, x, x, false, s.orig_class, s.target, s.targeted, 0,
                                  0.0, {});

    // evaluate the whole grid in one batched forward
    const std::int64_t D = x.numel();
    std::vector<int> shape{static_cast<int>(deltas.size())};
    shape.insert(shape.end(), x.shape().begin(), x.shape().end());
    Tensor batch(shape);
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        double* row = batch.data() + static_cast<std::int64_t>(k) * D;
        for (std::int64_t i = 0; i < D; ++i)
            row[i] = std::min(1.0, std::max(-1.0, x[i] + deltas[k] * direction[i]));
    }
    const std::vector<int> classes = classify_batch(ckpt, batch);

    std::vector<IterationRecord> trace;
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        const int cls = classes[k];
        trace.push_back({static_cast<int>(k), cls, deltas[k]});
        const bool hit = s.targeted ? cls == s.target : cls != s.orig_class;
        if (hit) {
            Tensor x_adv(x.shape());
            std::memcpy(x_adv.data(), batch.data() + static_cast<std::int64_t>(k) * D,
                        static_cast<std::size_t>(D) * sizeof(double));
            return make_attack_result(ckpt, kind, x, std::move(x_adv), true, s.orig_class,
                                      s.target, s.targeted, static_cast<int>(k) + 1, deltas[k],
                                      std::move(trace));
        }
    }
    return make_attack_result(ckpt, kind, x, x, false, s.orig_class, s.target, s.targeted,
                              static_cast<int>(deltas.size()), 0.0, std::move(trace));
}

}  // namespace

AttackResult g_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg) {
    AttackSetup s = setup_attack(ckpt, x, cfg);
    if (s.already_adversarial) return immediate_success(ckpt, AttackKind::G, x, s);

    ForwardOptions opt;
    opt.record = true;
    opt.param_grad = false;
    ForwardEval fe = forward_eval(ckpt, x, opt);
    std::vector<int> tgt{s.target};
    attach_loss_hard(fe, tgt);
    Tensor g = input_gradient(fe);
    // descend the loss toward the target: r = -delta * sign(grad)
    Tensor dir = scale(sign(g), -1.0);
    return grid_attack(ckpt, AttackKind::G, x, cfg, s, dir);
}

AttackResult h_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg) {
    AttackSetup s = setup_attack(ckpt, x, cfg);
    if (s.already_adversarial) return immediate_success(ckpt, AttackKind::H, x, s);

    const Tensor jac = input_jacobian(ckpt, x, 1.0);
    const std::int64_t D = jac.dim(1);
    Tensor delta_j({static_cast<int>(D)});
    for (std::int64_t i = 0; i < D; ++i)
        delta_j[i] = jac[static_cast<std::int64_t>(s.target) * D + i] -
                     jac[static_cast<std::int64_t>(s.current_class) * D + i];
    Tensor dir = sign(delta_j).reshaped(x.shape());
    return grid_attack(ckpt, AttackKind::H, x, cfg, s, dir);
}

SaliencyPair attack_saliency(const Checkpoint& ckpt, const Tensor& x, int target,
                             double temperature) {
    const Tensor jac = input_jacobian(ckpt, x, temperature);
    const int C = jac.dim(0);
    const std::int64_t D = jac.dim(1);
    SaliencyPair sp;
    sp.alpha = Tensor({static_cast<int>(D)});
    sp.beta = Tensor({static_cast<int>(D)});
    for (std::int64_t i = 0; i < D; ++i) {
        double a = jac[static_cast<std::int64_t>(target) * D + i];
        double b = 0.0;
        for (int j = 0; j < C; ++j)
            if (j != target) b += jac[static_cast<std::int64_t>(j) * D + i];
        sp.alpha[i] = a;
        sp.beta[i] = b;
    }
    return sp;
}

namespace {

AttackResult flip_attack(const Checkpoint& ckpt, AttackKind kind, const Tensor& x,
                         const AttackConfig& cfg, double temperature) {
    AttackSetup s = setup_attack(ckpt, x, cfg);
    if (s.already_adversarial) return immediate_success(ckpt, kind, x, s);

    const std::int64_t D = x.numel();
    Tensor x_cur = x;
    std::vector<IterationRecord> trace;
    // each component is flipped at most once; re-flipping previously chosen
    // components oscillates and burns the budget without progress
    std::vector<bool> locked(static_cast<std::size_t>(D), false);
    int flipped = 0;
    const int max_rounds = std::max(1, cfg.pixel_budget);

    for (int round = 0;; ++round) {
        const int cls = classify(ckpt, x_cur);
        const bool hit = s.targeted ? cls == s.target : cls != s.orig_class;
        if (hit)
            return make_attack_result(ckpt, kind, x, x_cur, true, s.orig_class, s.target,
                                      s.targeted, round, flipped, std::move(trace));
        if (round >= max_rounds || flipped + 2 > cfg.pixel_budget) break;

        SaliencyPair sp = attack_saliency(ckpt, x_cur, s.target, temperature);

        // pick the two best unused, non-saturated components; ties to the
        // lower index
        int best[2] = {-1, -1};
        double best_score[2] = {0.0, 0.0};
        for (std::int64_t i = 0; i < D; ++i) {
            if (locked[static_cast<std::size_t>(i)]) continue;
            const double flip_to = sp.alpha[i] > 0.0 ? 1.0 : -1.0;
            if (x_cur[i] == flip_to) continue;  // saturated
            const double score = kind == AttackKind::C
                                     ? std::abs(sp.alpha[i] - sp.beta[i])
                                     : -(sp.alpha[i] * sp.beta[i]);
            if (best[0] < 0 || score > best_score[0]) {
                best[1] = best[0];
                best_score[1] = best_score[0];
                best[0] = static_cast<int>(i);
                best_score[0] = score;
            } else if (best[1] < 0 || score > best_score[1]) {
                best[1] = static_cast<int>(i);
                best_score[1] = score;
            }
        }
        if (best[0] < 0) break;  // everything saturated or used

        for (int b = 0; b < 2; ++b) {
            if (best[b] < 0) continue;
            const std::int64_t i = best[b];
            x_cur[i] = sp.alpha[i] > 0.0 ? 1.0 : -1.0;
            locked[static_cast<std::size_t>(i)] = true;
        }
        flipped = 0;
        for (std::int64_t i = 0; i < D; ++i)
            if (x_cur[i] != x[i]) ++flipped;
        trace.push_back({round, cls, static_cast<double>(flipped)});
    }
    const int rounds_run = static_cast<int>(trace.size());
    return make_attack_result(ckpt, kind, x, x_cur, false, s.orig_class, s.target, s.targeted,
                              rounds_run, flipped, std::move(trace));
}

}  // namespace

AttackResult p_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg) {
    return flip_attack(ckpt, AttackKind::P, x, cfg, 1.0);
}

AttackResult c_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg) {
    const double tau =
        cfg.temperature_override.value_or(ckpt.meta.temperature > 0 ? ckpt.meta.temperature : 1.0);
    return flip_attack(ckpt, AttackKind::C, x, cfg, tau);
}

AttackResult run_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg) {
    switch (cfg.kind) {
        case AttackKind::G: return g_attack(ckpt, x, cfg);
        case AttackKind::H: return h_attack(ckpt, x, cfg);
        case AttackKind::P: return p_attack(ckpt, x, cfg);
        case AttackKind::C: return c_attack(ckpt, x, cfg);
    }
    throw std::logic_error("unknown attack kind");
}

// ---------------------------------------------------------------------------
// Countermeasure variants

namespace {

struct ProbeCheck {
    bool met = false;
    std::optional<double> value;
};

ProbeCheck check_probe_goal(const Checkpoint& ckpt, const Tensor& x, double theta_goal,
                            const ProbeParams& pp, int check_idx) {
    ProbeParams local = pp.with_seed(RngStream(pp.seed, "ampprobe", check_idx).next_u64());
    SaliencyRegionSet regions = select_saliency_regions(ckpt, x, local);
    ProbeResult pr = estimate_probe(ckpt, x, regions, local);
    ProbeCheck out;
    out.value = pr.theta_star;
    // a not-found probe means the class survives even rate-1 flips: the goal
    // is met a fortiori
    out.met = !pr.found() || *pr.theta_star >= theta_goal - 1e-12;
    return out;
}

}  // namespace

AmplifiedResult amplified_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg,
                                 const ProbeParams& probe_params, const AmplifiedOptions& opt) {
    AmplifiedResult out;
    AttackResult base = run_attack(ckpt, x, cfg);
    out.base_amplitude = base.amplitude;
    if (!base.success) {
        out.result = std::move(base);
        return out;
    }
    if (opt.theta_goal <= 0.0) {
        out.result = std::move(base);
        out.probe_goal_met = true;
        out.amplitude_ratio = 1.0;
        return out;
    }

    const int keep_class = base.class_after;
    const std::int64_t D = x.numel();
    int check_idx = 0;

    if (cfg.kind == AttackKind::P || cfg.kind == AttackKind::C) {
        const double tau = cfg.kind == AttackKind::C
                               ? cfg.temperature_override.value_or(
                                     ckpt.meta.temperature > 0 ? ckpt.meta.temperature : 1.0)
                               : 1.0;
        Tensor x_cur = base.x_adv;
        int flipped = static_cast<int>(base.amplitude);
        std::vector<bool> banned(static_cast<std::size_t>(D), false);
        const int interval =
            opt.probe_check_rounds > 0 ? opt.probe_check_rounds : std::max(1, opt.enlarged_pixels / 20);
        int accepted = 0;
        bool met = false;
        std::optional<double> probe_val;

        {
            ProbeCheck pc = check_probe_goal(ckpt, x_cur, opt.theta_goal, probe_params, check_idx++);
            met = pc.met;
            probe_val = pc.value;
        }

        while (!met) {
            if (flipped + 2 > opt.enlarged_pixels) break;
            SaliencyPair sp = attack_saliency(ckpt, x_cur, base.target, tau);
            int best[2] = {-1, -1};
            double best_score[2] = {0.0, 0.0};
            for (std::int64_t i = 0; i < D; ++i) {
                if (banned[static_cast<std::size_t>(i)]) continue;
                const double flip_to = sp.alpha[i] > 0.0 ? 1.0 : -1.0;
                if (x_cur[i] == flip_to) continue;
                const double score = cfg.kind == AttackKind::C
                                         ? std::abs(sp.alpha[i] - sp.beta[i])
                                         : -(sp.alpha[i] * sp.beta[i]);
                if (best[0] < 0 || score > best_score[0]) {
                    best[1] = best[0];
                    best_score[1] = best_score[0];
                    best[0] = static_cast<int>(i);
                    best_score[0] = score;
                } else if (best[1] < 0 || score > best_score[1]) {
                    best[1] = static_cast<int>(i);
                    best_score[1] = score;
                }
            }
            if (best[0] < 0) break;

            double saved[2] = {0.0, 0.0};
            for (int b = 0; b < 2; ++b)
                if (best[b] >= 0) {
                    saved[b] = x_cur[best[b]];
                    x_cur[best[b]] = sp.alpha[best[b]] > 0.0 ? 1.0 : -1.0;
                }
            if (classify(ckpt, x_cur) != keep_class) {
                for (int b = 0; b < 2; ++b)
                    if (best[b] >= 0) {
                        x_cur[best[b]] = saved[b];
                        banned[static_cast<std::size_t>(best[b])] = true;
                    }
                continue;
            }
            ++accepted;
            flipped = 0;
            for (std::int64_t i = 0; i < D; ++i)
                if (x_cur[i] != x[i]) ++flipped;
            if (accepted % interval == 0) {
                ProbeCheck pc =
                    check_probe_goal(ckpt, x_cur, opt.theta_goal, probe_params, check_idx++);
                met = pc.met;
                probe_val = pc.value;
            }
        }
        if (!met) {
            ProbeCheck pc = check_probe_goal(ckpt, x_cur, opt.theta_goal, probe_params, check_idx++);
            met = pc.met;
            probe_val = pc.value;
        }
        out.result = make_attack_result(ckpt, cfg.kind, x, std::move(x_cur), true,
                                        base.class_before, base.target, cfg.target.has_value(),
                                        base.iterations + accepted, flipped, {});
        out.probe_goal_met = met;
        out.achieved_probe = probe_val;
        out.amplitude_ratio =
            static_cast<double>(flipped) / std::max(1.0, out.base_amplitude);
        return out;
    }

    // G/H: push farther along the recorded sign direction
    Tensor dir = sign(base.perturbation);
    Tensor x_best = base.x_adv;
    double delta_best = base.amplitude;
    bool met = false;
    std::optional<double> probe_val;
    {
        ProbeCheck pc = check_probe_goal(ckpt, x_best, opt.theta_goal, probe_params, check_idx++);
        met = pc.met;
        probe_val = pc.value;
    }
    int steps_total = 0;
    for (double d = base.amplitude; !met;) {
        d += cfg.delta_resolution * 10;  // coarser continuation grid
        if (d > opt.enlarged_delta + 1e-12) break;
        Tensor x_try(x.shape());
        for (std::int64_t i = 0; i < D; ++i)
            x_try[i] = std::min(1.0, std::max(-1.0, x[i] + d * dir[i]));
        if (classify(ckpt, x_try) != keep_class) continue;
        x_best = std::move(x_try);
        delta_best = d;
        ++steps_total;
        ProbeCheck pc = check_probe_goal(ckpt, x_best, opt.theta_goal, probe_params, check_idx++);
        met = pc.met;
        probe_val = pc.value;
    }
    out.result = make_attack_result(ckpt, cfg.kind, x, std::move(x_best), true, base.class_before,
                                    base.target, cfg.target.has_value(),
                                    base.iterations + steps_total, delta_best, {});
    out.probe_goal_met = met;
    out.achieved_probe = probe_val;
    out.amplitude_ratio = delta_best / std::max(1e-12, out.base_amplitude);
    return out;
}

AmplifiedResult random_amplification(const Checkpoint& ckpt, const Tensor& x_orig,
                                     const AttackResult& base, const ProbeParams& probe_params,
                                     const AmplifiedOptions& opt, std::uint64_t seed) {
    if (!base.success) throw std::invalid_argument("random_amplification: base attack must succeed");
    AmplifiedResult out;
    out.base_amplitude = base.amplitude;

    const int keep_class = base.class_after;
    const std::int64_t D = x_orig.numel();
    Tensor x_cur = base.x_adv;
    RngStream rng(seed, "random-amp");
    int check_idx = 0;

    auto flipped_count = [&]() {
        int f = 0;
        for (std::int64_t i = 0; i < D; ++i)
            if (x_cur[i] != x_orig[i]) ++f;
        return f;
    };

    bool met = false;
    std::optional<double> probe_val;
    if (opt.theta_goal <= 0.0) {
        met = true;
    } else {
        ProbeCheck pc = check_probe_goal(ckpt, x_cur, opt.theta_goal, probe_params, check_idx++);
        met = pc.met;
        probe_val = pc.value;
    }

    const int interval =
        opt.probe_check_rounds > 0 ? opt.probe_check_rounds : std::max(1, opt.enlarged_pixels / 20);
    int accepted = 0;
    const long max_attempts = 20L * std::max(1, opt.enlarged_pixels);
    for (long attempt = 0; !met && attempt < max_attempts; ++attempt) {
        if (flipped_count() >= opt.enlarged_pixels) break;
        const std::int64_t i = static_cast<std::int64_t>(rng.uniform_int(static_cast<std::uint64_t>(D)));
        const double saved = x_cur[i];
        const double target = saved >= 0.0 ? -1.0 : 1.0;  // farther extreme
        if (saved == target) continue;
        x_cur[i] = target;
        if (classify(ckpt, x_cur) != keep_class) {
            x_cur[i] = saved;
            continue;
        }
        ++accepted;
        if (accepted % interval == 0) {
            ProbeCheck pc = check_probe_goal(ckpt, x_cur, opt.theta_goal, probe_params, check_idx++);
            met = pc.met;
            probe_val = pc.value;
        }
    }
    if (!met && opt.theta_goal > 0.0) {
        ProbeCheck pc = check_probe_goal(ckpt, x_cur, opt.theta_goal, probe_params, check_idx++);
        met = pc.met;
        probe_val = pc.value;
    }

    const int flips = flipped_count();
    out.result = make_attack_result(ckpt, base.kind, x_orig, std::move(x_cur), true,
                                    base.class_before, base.target, false, accepted, flips, {});
    out.probe_goal_met = met;
    out.achieved_probe = probe_val;
    if (base.kind == AttackKind::P || base.kind == AttackKind::C) {
        out.amplitude_ratio = static_cast<double>(flips) / std::max(1.0, base.amplitude);
    } else {
        out.amplitude_ratio = norm_linf(out.result.perturbation) / std::max(1e-12, base.amplitude);
    }
    return out;
}

}  // namespace eagleeye
