#include "eagleeye/bench.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eagleeye/parallel.hpp"
#include "eagleeye/rng.hpp"

namespace eagleeye {

PrecisionRecall precision_recall(const ConfusionCounts& c) {
    if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0)
        throw std::invalid_argument("precision_recall: negative counts");
    PrecisionRecall pr;
    if (c.tp + c.fp > 0) pr.precision = static_cast<double>(c.tp) / (c.tp + c.fp);
    if (c.tp + c.fn > 0) pr.recall = static_cast<double>(c.tp) / (c.tp + c.fn);
    return pr;
}

double recovery_rate(const std::vector<DetectionReport>& reports,
                     const std::vector<int>& true_labels) {
    if (reports.empty()) throw std::invalid_argument("recovery_rate: empty report set");
    if (reports.size() != true_labels.size())
        throw std::invalid_argument("recovery_rate: label count mismatch");
    long correct = 0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (reports[i].verdict != Verdict::Suspicious || !reports[i].recovered_class)
            throw std::invalid_argument("recovery_rate: report without a recovered class");
        if (*reports[i].recovered_class == true_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / reports.size();
}

RatioDistribution RatioDistribution::from(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    RatioDistribution d;
    d.ratios = std::move(values);
    return d;
}

double RatioDistribution::quantile(double q) const {
    if (ratios.empty()) throw std::invalid_argument("quantile of empty distribution");
    if (q <= 0.0) return ratios.front();
    if (q >= 1.0) return ratios.back();
    const auto idx = static_cast<std::size_t>(std::ceil(q * ratios.size())) - 1;
    return ratios[std::min(idx, ratios.size() - 1)];
}

double RatioDistribution::fraction_below(double t) const {
    if (ratios.empty()) return 0.0;
    const auto it = std::upper_bound(ratios.begin(), ratios.end(), t);
    return static_cast<double>(it - ratios.begin()) / ratios.size();
}

std::vector<int> correctly_classified_pool(const Checkpoint& ckpt, const Dataset& data, int pool) {
    std::vector<int> out;
    for (int i = 0; i < data.size() && static_cast<int>(out.size()) < pool; ++i) {
        if (classify(ckpt, data.example(i)) == data.label(i)) out.push_back(i);
    }
    return out;
}

int random_target(std::uint64_t seed, int example_index, int true_label, int classes) {
    RngStream rng(seed, "target", example_index);
    const int pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(classes - 1)));
    return pick >= true_label ? pick + 1 : pick;
}

namespace {

double attack_norm(AttackKind kind, const Tensor& a, const Tensor& b) {
    Tensor d = sub(a, b);
    return (kind == AttackKind::G || kind == AttackKind::H) ? norm_linf(d) : norm_l1(d);
}

}  // namespace

MinimalityOutcome minimality_ratios(const Checkpoint& ckpt, const Dataset& data,
                                    const MinimalityOptions& opt) {
    const std::vector<int> pool = correctly_classified_pool(ckpt, data, opt.pool);
    if (pool.empty()) throw std::invalid_argument("minimality_ratios: empty evaluation pool");

    // every class must appear or the nearest-counterpart search is undefined
    std::vector<bool> present(static_cast<std::size_t>(ckpt.spec.classes), false);
    for (int i = 0; i < data.size(); ++i) present[static_cast<std::size_t>(data.label(i))] = true;
    for (int c = 0; c < ckpt.spec.classes; ++c)
        if (!present[static_cast<std::size_t>(c)])
            throw std::invalid_argument("minimality_ratios: class " + std::to_string(c) +
                                        " absent from dataset");

    struct Row {
        bool success = false;
        std::optional<double> r1, r2;
    };
    std::vector<Row> rows(pool.size());

    parallel_for(
        pool.size(),
        [&](std::size_t pi) {
            const int idx = pool[pi];
            const Tensor x = data.example(idx);
            const int label = data.label(idx);
            AttackConfig cfg = opt.attack;
            if (opt.random_targets)
                cfg.target = random_target(opt.seed, idx, label, ckpt.spec.classes);
            cfg.true_label = label;
            AttackResult res = run_attack(ckpt, x, cfg);
            if (!res.success) return;
            Row& row = rows[pi];
            row.success = true;

            const double d_adv = attack_norm(cfg.kind, x, res.x_adv);

            // closest genuine counterpart in the achieved class
            double d_star = 0.0;
            bool found = false;
            for (int j = 0; j < data.size(); ++j) {
                if (data.label(j) != res.class_after || j == idx) continue;
                const double d = attack_norm(cfg.kind, x, data.example(j));
                if (!found || d < d_star) {
                    d_star = d;
                    found = true;
                }
            }
            if (found && d_star > 0.0) row.r1 = d_adv / d_star;

            // push the adversarial input back toward the original class
            AttackConfig back = opt.attack;
            back.target = label;
            AttackResult res2 = run_attack(ckpt, res.x_adv, back);
            if (res2.success && d_adv > 0.0)
                row.r2 = attack_norm(cfg.kind, res.x_adv, res2.x_adv) / d_adv;
        },
        opt.threads);

    MinimalityOutcome out;
    std::vector<double> r1, r2;
    for (const Row& row : rows) {
        ++out.attacked;
        if (!row.success) continue;
        ++out.succeeded;
        if (row.r1) r1.push_back(*row.r1);
        if (row.r2) r2.push_back(*row.r2);
    }
    out.nearest_genuine = RatioDistribution::from(std::move(r1));
    out.double_perturb = RatioDistribution::from(std::move(r2));
    return out;
}

ResilienceMatrix resilience_matrix(
    const std::vector<std::pair<std::string, const Checkpoint*>>& models,
    const std::vector<AttackKind>& attacks, const Dataset& data, const ResilienceOptions& opt) {
    if (models.empty() || attacks.empty())
        throw std::invalid_argument("resilience_matrix: empty model or attack list");

    ResilienceMatrix m;
    for (const auto& [name, ckpt] : models) m.model_names.push_back(name);
    m.attacks = attacks;
    m.success_rates.assign(models.size(), std::vector<double>(attacks.size(), 0.0));

    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        const Checkpoint& ckpt = *models[mi].second;
        const std::vector<int> pool = correctly_classified_pool(ckpt, data, opt.pool);
        if (pool.empty())
            throw std::invalid_argument("resilience_matrix: no correctly classified inputs for " +
                                        models[mi].first);
        for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
            std::vector<int> success(pool.size(), 0);
            parallel_for(
                pool.size(),
                [&](std::size_t pi) {
                    const int idx = pool[pi];
                    AttackConfig cfg = opt.attack;
                    cfg.kind = attacks[ai];
                    cfg.target =
                        random_target(opt.seed, idx, data.label(idx), ckpt.spec.classes);
                    cfg.true_label = data.label(idx);
                    AttackResult res = run_attack(ckpt, data.example(idx), cfg);
                    success[pi] = res.success ? 1 : 0;
                },
                opt.threads);
            long s = 0;
            for (int v : success) s += v;
            m.success_rates[mi][ai] = static_cast<double>(s) / pool.size();
        }
    }
    return m;
}

CounterOutcome countermeasure_study(const Checkpoint& ckpt, const Dataset& data,
                                    const std::vector<AttackKind>& attacks,
                                    const CounterOptions& opt) {
    const std::vector<int> pool = correctly_classified_pool(ckpt, data, opt.pool);
    if (pool.empty()) throw std::invalid_argument("countermeasure_study: empty pool");

    CounterOutcome out;
    out.attacks = attacks;
    out.failure_rates.assign(attacks.size(), 0.0);
    out.base_successes.assign(attacks.size(), 0);

    // genuine probes define the per-input goal the adversary must match
    std::vector<double> goals(pool.size(), 1.0);
    parallel_for(
        pool.size(),
        [&](std::size_t pi) {
            const int idx = pool[pi];
            const Tensor x = data.example(idx);
            ProbeParams pp = opt.probe.with_seed(RngStream(opt.seed, "goal", idx).next_u64());
            SaliencyRegionSet regions = select_saliency_regions(ckpt, x, pp);
            ProbeResult pr = estimate_probe(ckpt, x, regions, pp);
            goals[pi] = pr.found() ? *pr.theta_star : 1.0;
        },
        opt.threads);

    std::vector<double> amp_ratios, rnd_ratios;
    for (std::size_t ai = 0; ai < attacks.size(); ++ai) {
        std::vector<int> base_ok(pool.size(), 0), met(pool.size(), 0);
        std::vector<std::optional<double>> amp_r(pool.size()), rnd_r(pool.size());
        parallel_for(
            pool.size(),
            [&](std::size_t pi) {
                const int idx = pool[pi];
                const Tensor x = data.example(idx);
                AttackConfig cfg = opt.attack;
                cfg.kind = attacks[ai];
                cfg.target = random_target(opt.seed, idx, data.label(idx), ckpt.spec.classes);
                cfg.true_label = data.label(idx);
                cfg.seed = RngStream(opt.seed, "counter", idx).next_u64();

                AmplifiedOptions ao = opt.amplified;
                ao.theta_goal = goals[pi];
                ProbeParams pp =
                    opt.probe.with_seed(RngStream(opt.seed, "counter-probe", idx).next_u64());

                AmplifiedResult amp = amplified_attack(ckpt, x, cfg, pp, ao);
                if (!amp.result.success) return;
                base_ok[pi] = 1;
                if (amp.probe_goal_met) {
                    met[pi] = 1;
                    amp_r[pi] = amp.amplitude_ratio;
                }

                AttackResult base = run_attack(ckpt, x, cfg);
                if (base.success) {
                    AmplifiedResult rnd = random_amplification(
                        ckpt, x, base, pp, ao, RngStream(opt.seed, "rand-amp", idx).next_u64());
                    if (rnd.probe_goal_met) rnd_r[pi] = rnd.amplitude_ratio;
                }
            },
            opt.threads);

        long bases = 0, mets = 0;
        for (std::size_t pi = 0; pi < pool.size(); ++pi) {
            bases += base_ok[pi];
            mets += met[pi];
            if (amp_r[pi]) amp_ratios.push_back(*amp_r[pi]);
            if (rnd_r[pi]) rnd_ratios.push_back(*rnd_r[pi]);
        }
        out.base_successes[ai] = static_cast<int>(bases);
        out.failure_rates[ai] = bases > 0 ? 1.0 - static_cast<double>(mets) / bases : 0.0;
    }
    out.amplified_ratios = RatioDistribution::from(std::move(amp_ratios));
    out.random_ratios = RatioDistribution::from(std::move(rnd_ratios));
    return out;
}

SynergyOutcome synergy_study(const Checkpoint& original, const Checkpoint& distilled,
                             const Dataset& data, const SynergyOptions& opt) {
    const std::vector<int> pool = correctly_classified_pool(original, data, opt.pool);
    if (pool.empty()) throw std::invalid_argument("synergy_study: empty pool");

    struct Row {
        int defended = -1;     // -1 n/a, 0 missed, 1 flagged
        int penetrating = -1;
        int p_success = 0;
        int c_success = 0;
    };
    std::vector<Row> rows(pool.size());

    parallel_for(
        pool.size(),
        [&](std::size_t pi) {
            const int idx = pool[pi];
            const Tensor x = data.example(idx);
            const int label = data.label(idx);
            Row& row = rows[pi];

            AttackConfig pc = opt.attack;
            pc.kind = AttackKind::P;
            pc.target = random_target(opt.seed, idx, label, original.spec.classes);
            pc.true_label = label;

            // adversarial against the original model, defused by distillation
            AttackResult pres = run_attack(original, x, pc);
            if (pres.success && classify(distilled, pres.x_adv) == label) {
                ProbeParams pp =
                    opt.probe.with_seed(RngStream(opt.seed, "synergy-d", idx).next_u64());
                DetectionReport rep = analyze(distilled, pres.x_adv, pp, idx);
                row.defended = rep.verdict == Verdict::Suspicious ? 1 : 0;
            }

            // straight through the distilled model
            AttackConfig cc = pc;
            cc.kind = AttackKind::C;
            if (classify(distilled, x) == label) {
                AttackResult cres = run_attack(distilled, x, cc);
                row.c_success = cres.success ? 1 : 0;
                if (cres.success) {
                    ProbeParams pp =
                        opt.probe.with_seed(RngStream(opt.seed, "synergy-p", idx).next_u64());
                    DetectionReport rep = analyze(distilled, cres.x_adv, pp, idx);
                    row.penetrating = rep.verdict == Verdict::Suspicious ? 1 : 0;
                }
                AttackConfig pd = pc;
                AttackResult pres2 = run_attack(distilled, x, pd);
                row.p_success = pres2.success ? 1 : 0;
            }
        },
        opt.threads);

    SynergyOutcome out;
    long def_flag = 0, pen_flag = 0, p_succ = 0, c_succ = 0, dist_pool = 0;
    for (const Row& r : rows) {
        if (r.defended >= 0) {
            ++out.defended_cases;
            def_flag += r.defended;
        }
        if (r.penetrating >= 0) {
            ++out.penetrating_cases;
            pen_flag += r.penetrating;
        }
        p_succ += r.p_success;
        c_succ += r.c_success;
        ++dist_pool;
    }
    if (out.defended_cases > 0)
        out.defended_detection_rate = static_cast<double>(def_flag) / out.defended_cases;
    if (out.penetrating_cases > 0)
        out.penetrating_detection_rate = static_cast<double>(pen_flag) / out.penetrating_cases;
    out.p_success_on_distilled = static_cast<double>(p_succ) / dist_pool;
    out.c_success_on_distilled = static_cast<double>(c_succ) / dist_pool;
    return out;
}

}  // namespace eagleeye
