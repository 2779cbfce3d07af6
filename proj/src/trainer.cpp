#include "eagleeye/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "eagleeye/parallel.hpp"
#include "eagleeye/rng.hpp"

namespace eagleeye {

const char* defense_mode_name(DefenseMode m) {
    switch (m) {
        case DefenseMode::None: return "none";
        case DefenseMode::Augmented: return "augment";
        case DefenseMode::Robust: return "robust";
        case DefenseMode::Distill: return "distill";
    }
    throw std::logic_error("unknown defense mode");
}

DefenseMode defense_mode_from_name(const std::string& s) {
    if (s == "none") return DefenseMode::None;
    if (s == "augment" || s == "augmented") return DefenseMode::Augmented;
    if (s == "robust") return DefenseMode::Robust;
    if (s == "distill") return DefenseMode::Distill;
    throw std::invalid_argument("unknown defense mode: " + s);
}

const char* robust_norm_name(RobustNorm n) { return n == RobustNorm::L1 ? "l1" : "linf"; }

RobustNorm robust_norm_from_name(const std::string& s) {
    if (s == "l1") return RobustNorm::L1;
    if (s == "linf") return RobustNorm::LInf;
    throw std::invalid_argument("unknown robust norm: " + s);
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("train: momentum must lie in [0,1)");
    if (batch < 1) throw std::invalid_argument("train: batch size must be >= 1");
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (temperature < 1.0) throw std::invalid_argument("train: temperature must be >= 1");
    if (defense.alpha < 0.0 || defense.alpha > 1.0)
        throw std::invalid_argument("train: alpha must lie in [0,1]");
    if (!(s_improve > 0.0) || !(s_worsen > 0.0))
        throw std::invalid_argument("train: adaptive-LR constants must be > 0");
    if (grad_chunk < 1) throw std::invalid_argument("train: gradient chunk must be >= 1");
}

std::pair<Tensor, Tensor> nesterov_step(const Tensor& weights, const Tensor& velocity,
                                        const Tensor& gradient_at_lookahead, double lambda,
                                        double mu) {
    ensure_same_shape(weights, velocity, "nesterov_step");
    ensure_same_shape(weights, gradient_at_lookahead, "nesterov_step");
    Tensor v(weights.shape());
    Tensor w(weights.shape());
    for (std::int64_t i = 0; i < weights.numel(); ++i) {
        v[i] = mu * velocity[i] - lambda * gradient_at_lookahead[i];
        w[i] = weights[i] + v[i];
    }
    return {std::move(w), std::move(v)};
}

double adaptive_lr_update(double lambda, double best_loss, double epoch_loss, double s_improve,
                          double s_worsen) {
    if (!(lambda > 0.0)) throw std::invalid_argument("adaptive_lr_update: lambda must be > 0");
    const double s = best_loss >= epoch_loss ? s_improve : s_worsen;
    return lambda * std::exp((best_loss - epoch_loss) / s);
}

Tensor robust_perturbation(const Tensor& gradient, RobustNorm norm, double budget) {
    if (!(budget > 0.0)) throw std::invalid_argument("robust_perturbation: budget must be > 0");
    Tensor r(gradient.shape());
    if (norm == RobustNorm::LInf) {
        for (std::int64_t i = 0; i < gradient.numel(); ++i)
            r[i] = budget * (gradient[i] > 0.0 ? 1.0 : (gradient[i] < 0.0 ? -1.0 : 0.0));
        return r;
    }
    // l1: spend the budget on the largest-|g| components, each capped at the
    // full flip range of 2
    std::vector<int> order(static_cast<std::size_t>(gradient.numel()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double va = std::abs(gradient[a]), vb = std::abs(gradient[b]);
        if (va != vb) return va > vb;
        return a < b;
    });
    double remaining = budget;
    for (int i : order) {
        if (remaining <= 0.0) break;
        if (gradient[i] == 0.0) break;  // no ascent direction left
        const double m = std::min(2.0, remaining);
        r[i] = gradient[i] > 0.0 ? m : -m;
        remaining -= m;
    }
    return r;
}

double evaluate_accuracy(const Checkpoint& ckpt, const Dataset& data, double temperature) {
    if (data.size() == 0) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    const int B = 256;
    const std::int64_t stride = data.images.numel() / data.size();
    int correct = 0;
    for (int start = 0; start < data.size(); start += B) {
        const int n = std::min(B, data.size() - start);
        std::vector<int> shape = data.images.shape();
        shape[0] = n;
        Tensor batch(shape);
        std::memcpy(batch.data(), data.images.data() + start * stride,
                    static_cast<std::size_t>(n * stride) * sizeof(double));
        const std::vector<int> cls = classify_batch(ckpt, batch, temperature);
        for (int i = 0; i < n; ++i)
            if (cls[static_cast<std::size_t>(i)] == data.label(start + i)) ++correct;
    }
    return static_cast<double>(correct) / data.size();
}

namespace {

struct ChunkOut {
    std::map<std::string, Tensor> grads;
    double loss = 0.0;
    int correct = 0;
};

struct BatchRows {
    Tensor inputs;                 // [M, ...input]
    Tensor targets;                // [M, C]
    std::vector<double> weights;   // absolute weights, sum to 1 per batch
    std::vector<int> count_label;  // label for accuracy rows, -1 = skip
};

Tensor one_hot(const std::vector<int>& labels, int classes) {
    Tensor t({static_cast<int>(labels.size()), classes});
    for (std::size_t i = 0; i < labels.size(); ++i)
        t[static_cast<std::int64_t>(i) * classes + labels[i]] = 1.0;
    return t;
}

Checkpoint lookahead_checkpoint(const Checkpoint& ckpt,
                                const std::map<std::string, Tensor>& velocity, double mu) {
    Checkpoint look = ckpt;
    for (auto& [name, w] : look.params) {
        const Tensor& v = velocity.at(name);
        for (std::int64_t i = 0; i < w.numel(); ++i) w[i] += mu * v[i];
    }
    return look;
}

/// Per-example loss-input gradients at the given weights, dropout off.
std::vector<Tensor> batch_input_gradients(const Checkpoint& ckpt, const Tensor& inputs,
                                          const Tensor& targets, double temperature) {
    ForwardOptions opt;
    opt.temperature = temperature;
    opt.record = true;
    opt.param_grad = false;
    ForwardEval fe = forward_eval(ckpt, inputs, opt);
    const int M = inputs.dim(0);
    // sum (not mean) so each row's gradient is independent of batch size
    fe.loss_node = fe.tape->cross_entropy_weighted(
        fe.logits_node, targets, std::vector<double>(static_cast<std::size_t>(M), 1.0),
        temperature);
    Tensor g = input_gradient(fe);
    std::vector<Tensor> out;
    const std::int64_t stride = g.numel() / M;
    std::vector<int> shape(inputs.shape().begin() + 1, inputs.shape().end());
    for (int i = 0; i < M; ++i) {
        Tensor gi(shape);
        std::memcpy(gi.data(), g.data() + i * stride,
                    static_cast<std::size_t>(stride) * sizeof(double));
        out.push_back(std::move(gi));
    }
    return out;
}

}  // namespace

static TrainOutcome train_impl(const NetworkSpec& spec, const Dataset& data,
                               const TrainConfig& cfg, const Dataset* eval_set,
                               const Tensor* soft_targets) {
    cfg.validate();
    spec.validate();
    if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
    for (int i = 0; i < data.size(); ++i)
        if (data.label(i) < 0 || data.label(i) >= spec.classes)
            throw std::invalid_argument("train: label out of class range");
    if (cfg.defense.mode == DefenseMode::Distill)
        throw std::invalid_argument("train: distillation runs through distill()");

    const int N = data.size();
    const int C = spec.classes;
    const std::int64_t in_stride = data.images.numel() / N;
    std::vector<int> in_shape(data.images.shape().begin() + 1, data.images.shape().end());

    Checkpoint ckpt = init_checkpoint(spec, cfg.seed);
    std::map<std::string, Tensor> velocity;
    for (const auto& [name, w] : ckpt.params) velocity.emplace(name, Tensor(w.shape()));

    const bool augmented = cfg.defense.mode == DefenseMode::Augmented && cfg.defense.alpha < 1.0;
    const bool robust = cfg.defense.mode == DefenseMode::Robust && cfg.defense.budget > 0.0;

    TrainReport report;
    double lr = cfg.learning_rate;
    double best_loss = 0.0;
    double prev_epoch_loss = 0.0;
    int stable_epochs = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(N));
        std::iota(order.begin(), order.end(), 0);
        RngStream shuffle_rng(cfg.seed, "shuffle", epoch);
        for (int i = N - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
        }

        double epoch_loss_sum = 0.0;
        int epoch_correct = 0, epoch_counted = 0;

        const int steps = (N + cfg.batch - 1) / cfg.batch;
        for (int step = 0; step < steps; ++step) {
            const int lo = step * cfg.batch;
            const int B = std::min(cfg.batch, N - lo);

            std::vector<int> labels(static_cast<std::size_t>(B));
            Tensor genuine({B, 0});
            {
                std::vector<int> shape{B};
                shape.insert(shape.end(), in_shape.begin(), in_shape.end());
                genuine = Tensor(shape);
                for (int i = 0; i < B; ++i) {
                    const int src = order[static_cast<std::size_t>(lo + i)];
                    std::memcpy(genuine.data() + i * in_stride,
                                data.images.data() + src * in_stride,
                                static_cast<std::size_t>(in_stride) * sizeof(double));
                    labels[static_cast<std::size_t>(i)] = data.label(src);
                }
            }
            Tensor targets = soft_targets ? Tensor({B, C}) : one_hot(labels, C);
            if (soft_targets) {
                for (int i = 0; i < B; ++i) {
                    const int src = order[static_cast<std::size_t>(lo + i)];
                    std::memcpy(targets.data() + static_cast<std::int64_t>(i) * C,
                                soft_targets->data() + static_cast<std::int64_t>(src) * C,
                                static_cast<std::size_t>(C) * sizeof(double));
                }
            }

            const Checkpoint look = lookahead_checkpoint(ckpt, velocity, cfg.momentum);

            BatchRows rows;
            if (augmented) {
                // partners are crafted against the pre-step iterate
                std::vector<Tensor> partners(static_cast<std::size_t>(B));
                parallel_for(
                    static_cast<std::size_t>(B),
                    [&](std::size_t i) {
                        AttackConfig ac = cfg.defense.attack_config;
                        ac.kind = cfg.defense.attack;
                        ac.true_label = labels[i];
                        Tensor xi(in_shape);
                        std::memcpy(xi.data(),
                                    genuine.data() + static_cast<std::int64_t>(i) * in_stride,
                                    static_cast<std::size_t>(in_stride) * sizeof(double));
                        AttackResult res = run_attack(ckpt, xi, ac);
                        partners[i] = res.success ? res.x_adv : xi;
                    },
                    cfg.threads);
                std::vector<int> shape{2 * B};
                shape.insert(shape.end(), in_shape.begin(), in_shape.end());
                rows.inputs = Tensor(shape);
                std::memcpy(rows.inputs.data(), genuine.data(),
                            static_cast<std::size_t>(B * in_stride) * sizeof(double));
                for (int i = 0; i < B; ++i)
                    std::memcpy(rows.inputs.data() + (B + i) * in_stride, partners[i].data(),
                                static_cast<std::size_t>(in_stride) * sizeof(double));
                rows.targets = Tensor({2 * B, C});
                std::memcpy(rows.targets.data(), targets.data(),
                            static_cast<std::size_t>(targets.numel()) * sizeof(double));
                std::memcpy(rows.targets.data() + targets.numel(), targets.data(),
                            static_cast<std::size_t>(targets.numel()) * sizeof(double));
                const double a = cfg.defense.alpha;
                rows.weights.assign(static_cast<std::size_t>(2 * B), 0.0);
                for (int i = 0; i < B; ++i) {
                    rows.weights[static_cast<std::size_t>(i)] = a / B;
                    rows.weights[static_cast<std::size_t>(B + i)] = (1.0 - a) / B;
                }
                rows.count_label.assign(static_cast<std::size_t>(2 * B), -1);
                for (int i = 0; i < B; ++i)
                    rows.count_label[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)];
            } else if (robust) {
                // inner maximization: linear ascent step per example at the
                // lookahead iterate, then the usual loss on x + r
                std::vector<Tensor> grads =
                    batch_input_gradients(look, genuine, targets, cfg.temperature);
                rows.inputs = genuine;
                for (int i = 0; i < B; ++i) {
                    Tensor r = robust_perturbation(grads[static_cast<std::size_t>(i)],
                                                   cfg.defense.norm, cfg.defense.budget);
                    double* dst = rows.inputs.data() + static_cast<std::int64_t>(i) * in_stride;
                    for (std::int64_t j = 0; j < in_stride; ++j)
                        dst[j] = std::min(1.0, std::max(-1.0, dst[j] + r[j]));
                }
                rows.targets = targets;
                rows.weights.assign(static_cast<std::size_t>(B), 1.0 / B);
                rows.count_label.assign(labels.begin(), labels.end());
            } else {
                rows.inputs = genuine;
                rows.targets = targets;
                rows.weights.assign(static_cast<std::size_t>(B), 1.0 / B);
                if (soft_targets) {
                    rows.count_label.resize(static_cast<std::size_t>(B));
                    for (int i = 0; i < B; ++i) {
                        std::span<const double> row(
                            rows.targets.data() + static_cast<std::int64_t>(i) * C,
                            static_cast<std::size_t>(C));
                        rows.count_label[static_cast<std::size_t>(i)] =
                            static_cast<int>(argmax_lowest(row));
                    }
                } else {
                    rows.count_label.assign(labels.begin(), labels.end());
                }
            }

            // chunked gradient evaluation; chunks reduce in index order so
            // the result is independent of scheduling
            const int M = rows.inputs.dim(0);
            const int chunk = cfg.grad_chunk;
            const int n_chunks = (M + chunk - 1) / chunk;
            std::vector<ChunkOut> outs(static_cast<std::size_t>(n_chunks));
            try {
            parallel_for(
                static_cast<std::size_t>(n_chunks),
                [&](std::size_t ci) {
                    const int clo = static_cast<int>(ci) * chunk;
                    const int cn = std::min(chunk, M - clo);
                    std::vector<int> shape{cn};
                    shape.insert(shape.end(), in_shape.begin(), in_shape.end());
                    Tensor cin(shape);
                    std::memcpy(cin.data(), rows.inputs.data() + clo * in_stride,
                                static_cast<std::size_t>(cn * in_stride) * sizeof(double));
                    Tensor ctg({cn, C});
                    std::memcpy(ctg.data(), rows.targets.data() + static_cast<std::int64_t>(clo) * C,
                                static_cast<std::size_t>(cn) * C * sizeof(double));
                    std::vector<double> cw(rows.weights.begin() + clo,
                                           rows.weights.begin() + clo + cn);

                    RngStream dropout_rng(cfg.seed, "dropout", epoch, step, static_cast<int>(ci));
                    ForwardOptions opt;
                    opt.temperature = cfg.temperature;
                    opt.record = true;
                    opt.input_grad = false;
                    opt.training = true;
                    opt.dropout_rng = &dropout_rng;
                    ForwardEval fe = forward_eval(look, cin, opt);
                    fe.loss_node =
                        fe.tape->cross_entropy_weighted(fe.logits_node, ctg, cw, cfg.temperature);
                    ChunkOut& co = outs[ci];
                    co.loss = fe.tape->value(fe.loss_node)[0];
                    co.grads = parameter_gradients(fe);
                    for (int i = 0; i < cn; ++i) {
                        const int lbl = rows.count_label[static_cast<std::size_t>(clo + i)];
                        if (lbl < 0) continue;
                        std::span<const double> row(
                            fe.probs.data() + static_cast<std::int64_t>(i) * C,
                            static_cast<std::size_t>(C));
                        if (static_cast<int>(argmax_lowest(row)) == lbl) ++co.correct;
                    }
                },
                cfg.threads);
            } catch (const std::runtime_error& e) {
                if (std::string(e.what()).find("non-finite") != std::string::npos)
                    throw DivergenceError(epoch, "train: diverged at epoch " +
                                                     std::to_string(epoch) + " (" + e.what() + ")");
                throw;
            }

            double batch_loss = 0.0;
            std::map<std::string, Tensor> grads;
            for (int ci = 0; ci < n_chunks; ++ci) {
                batch_loss += outs[static_cast<std::size_t>(ci)].loss;
                for (auto& [name, g] : outs[static_cast<std::size_t>(ci)].grads) {
                    auto it = grads.find(name);
                    if (it == grads.end())
                        grads.emplace(name, std::move(g));
                    else
                        for (std::int64_t i = 0; i < g.numel(); ++i) it->second[i] += g[i];
                }
                epoch_correct += outs[static_cast<std::size_t>(ci)].correct;
            }
            epoch_counted += B;

            if (!std::isfinite(batch_loss))
                throw DivergenceError(epoch, "train: non-finite loss at epoch " +
                                                 std::to_string(epoch));
            epoch_loss_sum += batch_loss * B;

            for (auto& [name, w] : ckpt.params) {
                auto [w2, v2] = nesterov_step(w, velocity.at(name), grads.at(name), lr,
                                              cfg.momentum);
                w = std::move(w2);
                velocity.at(name) = std::move(v2);
            }
        }

        const double epoch_loss = epoch_loss_sum / N;
        const double epoch_acc = static_cast<double>(epoch_correct) / epoch_counted;
        if (epoch == 0) best_loss = epoch_loss;

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = epoch_loss;
        stats.accuracy = epoch_acc;
        stats.learning_rate = lr;
        stats.steps = steps;
        if (eval_set) stats.eval_accuracy = evaluate_accuracy(ckpt, *eval_set, cfg.temperature);
        report.epochs.push_back(stats);

        lr = adaptive_lr_update(lr, best_loss, epoch_loss, cfg.s_improve, cfg.s_worsen);
        best_loss = std::min(best_loss, epoch_loss);

        if (epoch > 0 && epoch_acc >= 1.0 && std::abs(epoch_loss - prev_epoch_loss) < 1e-6) {
            if (++stable_epochs >= 5) {
                report.early_stopped = true;
                break;
            }
        } else {
            stable_epochs = 0;
        }
        prev_epoch_loss = epoch_loss;
        if (cfg.stop_at_eval_accuracy > 0.0 && stats.eval_accuracy &&
            *stats.eval_accuracy >= cfg.stop_at_eval_accuracy) {
            report.early_stopped = true;
            break;
        }
    }

    report.final_loss = report.epochs.back().loss;
    ckpt.meta.epochs = static_cast<int>(report.epochs.size());
    ckpt.meta.final_loss = report.final_loss;
    ckpt.meta.temperature = cfg.temperature;
    return {std::move(ckpt), std::move(report)};
}

TrainOutcome train(const NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg,
                   const Dataset* eval_set) {
    if (cfg.defense.mode == DefenseMode::Augmented || cfg.defense.mode == DefenseMode::Robust)
        return train_impl(spec, data, cfg, eval_set, nullptr);
    TrainConfig plain = cfg;
    plain.defense.mode = DefenseMode::None;
    return train_impl(spec, data, plain, eval_set, nullptr);
}

TrainOutcome train_augmented(const NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg,
                             AttackKind attack, const Dataset* eval_set) {
    TrainConfig c = cfg;
    c.defense.mode = DefenseMode::Augmented;
    c.defense.attack = attack;
    return train_impl(spec, data, c, eval_set, nullptr);
}

TrainOutcome train_robust(const NetworkSpec& spec, const Dataset& data, const TrainConfig& cfg,
                          const Dataset* eval_set) {
    TrainConfig c = cfg;
    c.defense.mode = DefenseMode::Robust;
    return train_impl(spec, data, c, eval_set, nullptr);
}

DistillOutcome distill(const NetworkSpec& teacher_spec, const Dataset& data,
                       const TrainConfig& cfg, const Dataset* eval_set) {
    const double tau = cfg.defense.distill_tau;
    if (!(tau > 1.0)) throw std::invalid_argument("distill: temperature must be > 1");

    TrainConfig tcfg = cfg;
    tcfg.defense.mode = DefenseMode::None;
    tcfg.temperature = tau;
    TrainOutcome teacher = train_impl(teacher_spec, data, tcfg, eval_set, nullptr);

    // soft labels: the teacher's full output distribution at temperature tau
    const int N = data.size();
    const int C = teacher_spec.classes;
    const std::int64_t stride = data.images.numel() / N;
    Tensor soft({N, C});
    const int B = 256;
    for (int start = 0; start < N; start += B) {
        const int n = std::min(B, N - start);
        std::vector<int> shape = data.images.shape();
        shape[0] = n;
        Tensor batch(shape);
        std::memcpy(batch.data(), data.images.data() + start * stride,
                    static_cast<std::size_t>(n * stride) * sizeof(double));
        ForwardOptions opt;
        opt.temperature = tau;
        ForwardEval fe = forward_eval(teacher.checkpoint, batch, opt);
        std::memcpy(soft.data() + static_cast<std::int64_t>(start) * C, fe.probs.data(),
                    static_cast<std::size_t>(n) * C * sizeof(double));
    }

    TrainConfig scfg = cfg;
    scfg.defense.mode = DefenseMode::None;
    scfg.temperature = tau;
    scfg.seed = RngStream(cfg.seed, "distill-student").next_u64();
    TrainOutcome student = train_impl(teacher_spec, data, scfg, eval_set, &soft);

    DistillOutcome out;
    out.teacher = std::move(teacher.checkpoint);
    out.student = std::move(student.checkpoint);
    out.teacher_report = std::move(teacher.report);
    out.student_report = std::move(student.report);
    return out;
}

void save_train_report(const TrainReport& report, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("save_train_report: cannot open " + path);
    for (const EpochStats& e : report.epochs) {
        std::fprintf(f, "{\"epoch\":%d,\"loss\":%.17g,\"accuracy\":%.17g,\"lr\":%.17g", e.epoch,
                     e.loss, e.accuracy, e.learning_rate);
        if (e.eval_accuracy) std::fprintf(f, ",\"eval_accuracy\":%.17g", *e.eval_accuracy);
        std::fprintf(f, "}\n");
    }
    if (std::fclose(f) != 0) throw std::runtime_error("save_train_report: write failed " + path);
}

}  // namespace eagleeye
