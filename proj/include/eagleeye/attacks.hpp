#pragma once

#include <optional>
#include <string>
#include <vector>

#include "eagleeye/network.hpp"
#include "eagleeye/tensor.hpp"

namespace eagleeye {

enum class AttackKind { G, H, P, C };

const char* attack_kind_name(AttackKind k);
AttackKind attack_kind_from_name(const std::string& s);

struct AttackConfig {
    AttackKind kind = AttackKind::G;
    std::optional<int> target;      // absent = untargeted (second-best class)
    std::optional<int> true_label;  // when known: already-misclassified inputs
                                    // succeed immediately with r = 0
    double delta_budget = 0.25;     // G/H distortion limit (l-inf)
    double delta_resolution = 0.01;
    int pixel_budget = 112;         // P/C flipped-component limit
    std::optional<double> temperature_override;  // C only
    std::uint64_t seed = 0;

    void validate(int classes) const;
};

struct IterationRecord {
    int round = 0;
    int class_before = -1;  // classification entering this round
    double amplitude = 0.0;
};

struct AttackResult {
    bool success = false;
    AttackKind kind = AttackKind::G;
    Tensor x_adv;
    Tensor perturbation;  // x_adv - x
    int class_before = -1;
    int class_after = -1;
    int target = -1;
    int iterations = 0;
    double amplitude = 0.0;  // l-inf delta for G/H, flipped-component count for P/C
    std::vector<IterationRecord> trace;
};

/// Builds a result and re-verifies a success claim against classify();
/// throws std::logic_error if the claim does not hold.
AttackResult make_attack_result(const Checkpoint& ckpt, AttackKind kind, const Tensor& x,
                                Tensor x_adv, bool success, int class_before, int target,
                                bool targeted, int iterations, double amplitude,
                                std::vector<IterationRecord> trace);

/// Single gradient-sign step, minimal delta located on the ascending grid
/// {res, 2 res, ..., budget}.
AttackResult g_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg);

/// Sign step along the Jacobian row difference J_target - J_current.
AttackResult h_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg);

/// Iterative saliency-pair flipping, scores (-alpha * beta), two flips per
/// round; amplitude counts distinct flipped components.
AttackResult p_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg);

/// As p_attack with softmax evaluated at the checkpoint's training
/// temperature (or the override) and |alpha - beta| scores.
AttackResult c_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg);

AttackResult run_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg);

/// Saliency scores used by the nonlinear attacks at one state; exposed for
/// oracle tests. alpha = row `target` of the Jacobian, beta = sum of the
/// other rows.
struct SaliencyPair {
    Tensor alpha;
    Tensor beta;
};
SaliencyPair attack_saliency(const Checkpoint& ckpt, const Tensor& x, int target,
                             double temperature);

struct AmplifiedOptions {
    double theta_goal = 0.0;       // probe level to reach (0 = keep base result)
    double enlarged_delta = 1.0;   // G/H continuation budget
    int enlarged_pixels = 448;     // P/C continuation budget
    int probe_check_rounds = 0;    // 0 = every ceil(budget/10)
};

struct ProbeParams;  // detector.hpp

struct AmplifiedResult {
    AttackResult result;
    bool probe_goal_met = false;
    std::optional<double> achieved_probe;
    double base_amplitude = 0.0;
    double amplitude_ratio = 1.0;  // final / base
};

/// Runs the base attack, then keeps applying its selection rule (accepting
/// only class-preserving moves) until the probe estimate of the adversarial
/// input reaches theta_goal or the enlarged budget runs out.
AmplifiedResult amplified_attack(const Checkpoint& ckpt, const Tensor& x, const AttackConfig& cfg,
                                 const ProbeParams& probe_params, const AmplifiedOptions& opt);

/// Countermeasure baseline: uniformly random class-preserving flips applied
/// to an already-adversarial input until the probe goal or budget is hit.
AmplifiedResult random_amplification(const Checkpoint& ckpt, const Tensor& x_orig,
                                     const AttackResult& base, const ProbeParams& probe_params,
                                     const AmplifiedOptions& opt, std::uint64_t seed);

}  // namespace eagleeye
