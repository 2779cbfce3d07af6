#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eagleeye/attacks.hpp"
#include "eagleeye/dataset.hpp"
#include "eagleeye/detector.hpp"
#include "eagleeye/network.hpp"

namespace eagleeye {

/// Adversarial = positive.
struct ConfusionCounts {
    long tp = 0, fp = 0, fn = 0, tn = 0;
    long total() const { return tp + fp + fn + tn; }
};

struct PrecisionRecall {
    std::optional<double> precision;  // empty when tp+fp == 0
    std::optional<double> recall;     // empty when tp+fn == 0
};

PrecisionRecall precision_recall(const ConfusionCounts& c);

/// Fraction of suspicious reports whose recovered class matches the true
/// label. Reports without a recovered class are rejected.
double recovery_rate(const std::vector<DetectionReport>& reports,
                     const std::vector<int>& true_labels);

struct RatioDistribution {
    std::vector<double> ratios;  // ascending

    static RatioDistribution from(std::vector<double> values);
    double quantile(double q) const;     // nearest-rank
    double fraction_below(double t) const;  // CDF at t (inclusive)
    double median() const { return quantile(0.5); }
    bool empty() const { return ratios.empty(); }
};

struct MinimalityOptions {
    int pool = 200;           // attacked inputs
    std::uint64_t seed = 7;
    AttackConfig attack;      // kind + budgets
    bool random_targets = true;  // false = untargeted forward attack
    unsigned threads = 0;
};

struct MinimalityOutcome {
    RatioDistribution nearest_genuine;  // |x - x_adv| / |x - nearest genuine in the target class|
    RatioDistribution double_perturb;   // |x_adv - x_adv2| / |x - x_adv|
    int attacked = 0;
    int succeeded = 0;
};

/// Both Fig.-3-style distributions over successfully attacked inputs; the
/// nearest genuine counterpart comes from an exhaustive scan of the dataset
/// under the attack's own norm (l-inf for G/H, l1 for P/C).
MinimalityOutcome minimality_ratios(const Checkpoint& ckpt, const Dataset& data,
                                    const MinimalityOptions& opt);

struct ResilienceOptions {
    int pool = 200;
    std::uint64_t seed = 7;
    AttackConfig attack;  // budgets; kind is overridden per column
    unsigned threads = 0;
};

struct ResilienceMatrix {
    std::vector<std::string> model_names;
    std::vector<AttackKind> attacks;
    std::vector<std::vector<double>> success_rates;  // [model][attack]
};

ResilienceMatrix resilience_matrix(const std::vector<std::pair<std::string, const Checkpoint*>>& models,
                                   const std::vector<AttackKind>& attacks, const Dataset& data,
                                   const ResilienceOptions& opt);

struct CounterOptions {
    int pool = 48;
    std::uint64_t seed = 7;
    AttackConfig attack;      // budgets for the base attack
    ProbeParams probe;
    AmplifiedOptions amplified;  // enlarged budgets; theta_goal filled per input
    unsigned threads = 0;
};

struct CounterOutcome {
    std::vector<AttackKind> attacks;
    std::vector<double> failure_rates;       // probe goal unmet among base successes
    std::vector<int> base_successes;
    RatioDistribution amplified_ratios;      // pooled over attacks, met cases only
    RatioDistribution random_ratios;
};

CounterOutcome countermeasure_study(const Checkpoint& ckpt, const Dataset& data,
                                    const std::vector<AttackKind>& attacks,
                                    const CounterOptions& opt);

struct SynergyOptions {
    int pool = 200;
    std::uint64_t seed = 7;
    AttackConfig attack;
    ProbeParams probe;
    unsigned threads = 0;
};

struct SynergyOutcome {
    int defended_cases = 0;     // fooled the original model, classified right by the student
    int penetrating_cases = 0;  // fooled the distilled student
    std::optional<double> defended_detection_rate;
    std::optional<double> penetrating_detection_rate;
    double p_success_on_distilled = 0.0;
    double c_success_on_distilled = 0.0;
};

SynergyOutcome synergy_study(const Checkpoint& original, const Checkpoint& distilled,
                             const Dataset& data, const SynergyOptions& opt);

/// Indices of the first `pool` examples the checkpoint classifies correctly.
std::vector<int> correctly_classified_pool(const Checkpoint& ckpt, const Dataset& data, int pool);

/// Deterministic per-example adversarial target: uniform over classes other
/// than the true label.
int random_target(std::uint64_t seed, int example_index, int true_label, int classes);

}  // namespace eagleeye
