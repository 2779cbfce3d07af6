#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eagleeye/attacks.hpp"
#include "eagleeye/dataset.hpp"
#include "eagleeye/network.hpp"

namespace eagleeye {

enum class DefenseMode { None, Augmented, Robust, Distill };
enum class RobustNorm { L1, LInf };

const char* defense_mode_name(DefenseMode m);
DefenseMode defense_mode_from_name(const std::string& s);
const char* robust_norm_name(RobustNorm n);
RobustNorm robust_norm_from_name(const std::string& s);

struct DefenseConfig {
    DefenseMode mode = DefenseMode::None;
    AttackKind attack = AttackKind::G;  // augmented
    double alpha = 0.5;                 // genuine weight in the augmented loss
    RobustNorm norm = RobustNorm::LInf;
    double budget = 0.2;  // 0.2 for l-inf, 4 (two full-range pixels) for l1
    double distill_tau = 40.0;
    AttackConfig attack_config;  // budgets for the crafting attack
};

struct TrainConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    int batch = 128;
    int epochs = 30;
    double s_improve = 2.5;  // adaptive-LR divisor when the loss improves
    double s_worsen = 0.75;
    std::uint64_t seed = 1;
    double temperature = 1.0;
    DefenseConfig defense;

    // harness conveniences; 0 disables
    double stop_at_eval_accuracy = 0.0;
    int grad_chunk = 16;  // examples per parallel gradient chunk
    unsigned threads = 0;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;  // argmax agreement on the training passes
    double learning_rate = 0.0;
    int steps = 0;  // parameter updates this epoch
    std::optional<double> eval_accuracy;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double final_loss = 0.0;
    bool early_stopped = false;
};

/// Training diverged (non-finite loss); carries the epoch index.
struct DivergenceError : std::runtime_error {
    DivergenceError(int epoch, const std::string& msg) : std::runtime_error(msg), epoch(epoch) {}
    int epoch;
};

/// v' = mu v - lambda g, w' = w + v'. The gradient must already be evaluated
/// at the lookahead point w + mu v. Pure; no hidden state.
std::pair<Tensor, Tensor> nesterov_step(const Tensor& weights, const Tensor& velocity,
                                        const Tensor& gradient_at_lookahead, double lambda,
                                        double mu);

/// lambda' = lambda * exp((best - current) / s); s = s_improve when the best
/// loss so far is >= the epoch loss, s_worsen otherwise.
double adaptive_lr_update(double lambda, double best_loss, double epoch_loss,
                          double s_improve = 2.5, double s_worsen = 0.75);

/// Eq.-style linear-ascent perturbation: l-inf takes budget * sign(g); l1
/// stacks the budget on the largest-|g| components, each clipped to the full
/// flip range of 2.
Tensor robust_perturbation(const Tensor& gradient, RobustNorm norm, double budget);

struct TrainOutcome {
    Checkpoint checkpoint;
    TrainReport report;
};

TrainOutcome train(const NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg,
                   const Dataset* eval_set = nullptr);

TrainOutcome train_augmented(const NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg,
                             AttackKind attack, const Dataset* eval_set = nullptr);

TrainOutcome train_robust(const NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg,
                          const Dataset* eval_set = nullptr);

struct DistillOutcome {
    Checkpoint teacher;
    Checkpoint student;
    TrainReport teacher_report;
    TrainReport student_report;
};

/// Teacher trained on hard labels at temperature tau, student trained at the
/// same tau on the teacher's full soft-label distributions.
DistillOutcome distill(const NetworkSpec& teacher_spec, const Dataset& data,
                       const TrainConfig& cfg, const Dataset* eval_set = nullptr);

/// Mean argmax agreement of a checkpoint on a dataset (dropout off).
double evaluate_accuracy(const Checkpoint& ckpt, const Dataset& data, double temperature = 1.0);

void save_train_report(const TrainReport& report, const std::string& path);

}  // namespace eagleeye
