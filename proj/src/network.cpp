#include "eagleeye/network.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace eagleeye {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Affine: return "affine";
        case LayerKind::Softmax: return "softmax";
    }
    throw std::logic_error("unknown layer kind");
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "conv2d") return LayerKind::Conv2d;
    if (name == "maxpool2d") return LayerKind::MaxPool2d;
    if (name == "relu") return LayerKind::Relu;
    if (name == "dropout") return LayerKind::Dropout;
    if (name == "flatten") return LayerKind::Flatten;
    if (name == "affine") return LayerKind::Affine;
    if (name == "softmax") return LayerKind::Softmax;
    throw std::invalid_argument("unknown layer kind: " + name);
}

LayerSpec LayerSpec::conv2d(int filters, int kernel, int padding) {
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.filters = filters;
    l.kernel = kernel;
    l.padding = padding;
    return l;
}
LayerSpec LayerSpec::maxpool2d(int window, int stride) {
    LayerSpec l;
    l.kind = LayerKind::MaxPool2d;
    l.window = window;
    l.stride = stride;
    return l;
}
LayerSpec LayerSpec::relu() {
    LayerSpec l;
    l.kind = LayerKind::Relu;
    return l;
}
LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec l;
    l.kind = LayerKind::Dropout;
    l.rate = rate;
    return l;
}
LayerSpec LayerSpec::flatten() {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    return l;
}
LayerSpec LayerSpec::affine(int units) {
    LayerSpec l;
    l.kind = LayerKind::Affine;
    l.units = units;
    return l;
}
LayerSpec LayerSpec::softmax() {
    LayerSpec l;
    l.kind = LayerKind::Softmax;
    return l;
}

std::vector<std::vector<int>> NetworkSpec::layer_shapes() const {
    std::vector<std::vector<int>> shapes;
    std::vector<int> cur = input_shape;
    if (cur.empty()) throw std::invalid_argument("network: empty input shape");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerKind::Conv2d: {
                if (cur.size() != 3)
                    throw std::invalid_argument("network: conv2d needs a [C,H,W] input");
                if (l.filters < 1 || l.kernel < 1 || l.padding < 0)
                    throw std::invalid_argument("network: bad conv2d hyperparameters");
                const int oh = cur[1] + 2 * l.padding - l.kernel + 1;
                const int ow = cur[2] + 2 * l.padding - l.kernel + 1;
                if (oh < 1 || ow < 1)
                    throw std::invalid_argument("network: conv2d kernel exceeds input");
                cur = {l.filters, oh, ow};
                break;
            }
            case LayerKind::MaxPool2d: {
                if (cur.size() != 3)
                    throw std::invalid_argument("network: maxpool2d needs a [C,H,W] input");
                if (l.window < 1 || l.stride < 1)
                    throw std::invalid_argument("network: bad maxpool2d hyperparameters");
                if (cur[1] < l.window || cur[2] < l.window)
                    throw std::invalid_argument("network: pool window exceeds input");
                cur = {cur[0], (cur[1] - l.window) / l.stride + 1,
                       (cur[2] - l.window) / l.stride + 1};
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::Dropout:
                if (l.rate < 0.0 || l.rate >= 1.0)
                    throw std::invalid_argument("network: dropout rate must be in [0,1)");
                break;
            case LayerKind::Flatten: {
                int d = 1;
                for (int v : cur) d *= v;
                cur = {d};
                break;
            }
            case LayerKind::Affine: {
                if (cur.size() != 1)
                    throw std::invalid_argument("network: affine needs a flat input");
                if (l.units < 1) throw std::invalid_argument("network: affine units must be >= 1");
                cur = {l.units};
                break;
            }
            case LayerKind::Softmax: {
                if (i + 1 != layers.size())
                    throw std::invalid_argument("network: softmax must be the final layer");
                if (cur.size() != 1 || cur[0] != classes)
                    throw std::invalid_argument("network: softmax input must match class count");
                break;
            }
        }
        shapes.push_back(cur);
    }
    return shapes;
}

void NetworkSpec::validate() const {
    if (classes < 2) throw std::invalid_argument("network: needs at least 2 classes");
    if (layers.empty() || layers.back().kind != LayerKind::Softmax)
        throw std::invalid_argument("network: final layer must be softmax");
    (void)layer_shapes();
}

std::vector<std::pair<std::string, std::vector<int>>> NetworkSpec::parameter_shapes() const {
    std::vector<std::pair<std::string, std::vector<int>>> out;
    std::vector<int> cur = input_shape;
    auto shapes = layer_shapes();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const std::string base = "l" + std::to_string(i);
        if (l.kind == LayerKind::Conv2d) {
            out.push_back({base + ".w", {l.filters, cur[0], l.kernel, l.kernel}});
            out.push_back({base + ".b", {l.filters}});
        } else if (l.kind == LayerKind::Affine) {
            out.push_back({base + ".w", {l.units, cur[0]}});
            out.push_back({base + ".b", {l.units}});
        }
        cur = shapes[i];
    }
    return out;
}

std::int64_t NetworkSpec::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, shape] : parameter_shapes()) {
        std::int64_t k = 1;
        for (int d : shape) k *= d;
        n += k;
    }
    return n;
}

namespace {

int scaled_units(int base, double scale) {
    return std::max(4, static_cast<int>(std::ceil(base * scale)));
}

}  // namespace

NetworkSpec build_mnist_cnn(double scale) {
    if (!(scale > 0.0) || scale > 1.0)
        throw std::invalid_argument("build_mnist_cnn: scale must be in (0,1]");
    NetworkSpec s;
    s.input_shape = {1, 28, 28};
    s.classes = 10;
    const int c1 = scaled_units(32, scale);
    const int c2 = scaled_units(64, scale);
    const int d1 = scaled_units(256, scale);
    s.layers = {
        LayerSpec::conv2d(c1, 3), LayerSpec::relu(),
        LayerSpec::conv2d(c1, 3), LayerSpec::relu(),
        LayerSpec::maxpool2d(2, 1),
        LayerSpec::conv2d(c2, 3), LayerSpec::relu(),
        LayerSpec::conv2d(c2, 3), LayerSpec::relu(),
        LayerSpec::maxpool2d(2, 1),
        LayerSpec::flatten(),
        LayerSpec::affine(d1), LayerSpec::relu(), LayerSpec::dropout(0.5),
        LayerSpec::affine(d1), LayerSpec::relu(), LayerSpec::dropout(0.5),
        LayerSpec::affine(10),
        LayerSpec::softmax(),
    };
    s.validate();
    return s;
}

NetworkSpec build_synthetic_mlp(int input_dim, const std::vector<int>& hidden, int classes) {
    if (input_dim < 1) throw std::invalid_argument("build_synthetic_mlp: input_dim must be >= 1");
    if (classes < 2) throw std::invalid_argument("build_synthetic_mlp: classes must be >= 2");
    NetworkSpec s;
    s.input_shape = {input_dim};
    s.classes = classes;
    for (int h : hidden) {
        if (h < 1) throw std::invalid_argument("build_synthetic_mlp: hidden dims must be >= 1");
        s.layers.push_back(LayerSpec::affine(h));
        s.layers.push_back(LayerSpec::relu());
    }
    s.layers.push_back(LayerSpec::affine(classes));
    s.layers.push_back(LayerSpec::softmax());
    s.validate();
    return s;
}

const Tensor& Checkpoint::param(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("checkpoint: missing parameter " + name);
    return it->second;
}

Checkpoint init_checkpoint(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Checkpoint c;
    c.spec = spec;
    const auto shapes = spec.parameter_shapes();
    // the classifier head starts at zero so training begins from uniform
    // probabilities; hidden layers use He initialization
    const std::string head = shapes.empty() ? "" : shapes.back().first;
    for (const auto& [name, shape] : shapes) {
        Tensor t(shape);
        const bool is_head_w = !head.empty() && name.substr(0, name.find('.')) ==
                                                    head.substr(0, head.find('.'));
        if (name.ends_with(".w") && !is_head_w) {
            std::int64_t fan_in = 1;
            for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
            const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
            RngStream rng(seed, "init", name);
            for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = sd * rng.normal();
        }
        c.params.emplace(name, std::move(t));
    }
    return c;
}

// ---------------------------------------------------------------------------

ForwardEval forward_eval(const Checkpoint& ckpt, const Tensor& input, const ForwardOptions& opt) {
    const NetworkSpec& spec = ckpt.spec;
    if (opt.temperature <= 0.0)
        throw std::invalid_argument("forward_eval: temperature must be positive");

    const int in_rank = static_cast<int>(spec.input_shape.size());
    bool batched;
    Tensor batch;
    if (input.rank() == in_rank && std::equal(input.shape().begin(), input.shape().end(),
                                              spec.input_shape.begin())) {
        batched = false;
        std::vector<int> shape{1};
        shape.insert(shape.end(), spec.input_shape.begin(), spec.input_shape.end());
        batch = input.reshaped(shape);
    } else if (input.rank() == in_rank + 1 &&
               std::equal(input.shape().begin() + 1, input.shape().end(),
                          spec.input_shape.begin())) {
        batched = true;
        batch = input;
    } else {
        throw std::invalid_argument("forward_eval: input shape " + input.shape_str() +
                                    " does not match network input");
    }
    ensure_finite(batch, "forward_eval input");

    ForwardEval fe;
    fe.batched = batched;
    fe.tape = std::make_shared<Tape>();
    Tape& tape = *fe.tape;

    const bool rec = opt.record;
    fe.input_node = tape.leaf(std::move(batch), rec && opt.input_grad);

    // Parameter leaves in layer order so tests can map them back by name.
    std::map<std::string, NodeId> pnode;
    for (const auto& [name, shape] : spec.parameter_shapes()) {
        NodeId id = tape.leaf(ckpt.param(name), rec && opt.param_grad);
        pnode[name] = id;
        fe.param_nodes.push_back({name, id});
    }

    NodeId cur = fe.input_node;
    const int N = tape.value(cur).dim(0);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const std::string base = "l" + std::to_string(i);
        switch (l.kind) {
            case LayerKind::Conv2d:
                cur = tape.conv2d(cur, pnode[base + ".w"], pnode[base + ".b"], l.padding);
                break;
            case LayerKind::MaxPool2d:
                cur = tape.maxpool2d(cur, l.window, l.stride);
                break;
            case LayerKind::Relu:
                cur = tape.relu(cur);
                break;
            case LayerKind::Dropout:
                if (opt.training) {
                    if (!opt.dropout_rng)
                        throw std::invalid_argument("forward_eval: training dropout needs an rng");
                    cur = tape.dropout(cur, l.rate, *opt.dropout_rng);
                }
                break;
            case LayerKind::Flatten:
                cur = tape.flatten(cur);
                break;
            case LayerKind::Affine:
                if (tape.value(cur).rank() != 2) cur = tape.flatten(cur);
                cur = tape.affine(cur, pnode[base + ".w"], pnode[base + ".b"]);
                break;
            case LayerKind::Softmax:
                fe.logits_node = cur;
                cur = tape.softmax(cur, opt.temperature);
                fe.probs_node = cur;
                break;
        }
    }

    Tensor logits = tape.value(fe.logits_node);
    Tensor probs = tape.value(fe.probs_node);
    if (!batched) {
        logits = logits.reshaped({spec.classes});
        probs = probs.reshaped({spec.classes});
    }
    fe.logits = std::move(logits);
    fe.probs = std::move(probs);
    fe.temperature = opt.temperature;
    (void)N;
    if (!rec) fe.tape.reset();
    return fe;
}

double attach_loss(ForwardEval& fe, const Tensor& targets) {
    if (!fe.tape) throw std::invalid_argument("attach_loss: forward was not recorded");
    Tensor t = targets;
    if (t.rank() == 1) t = t.reshaped({1, t.dim(0)});
    fe.loss_node = fe.tape->cross_entropy_mean(fe.logits_node, t, fe.temperature);
    return fe.tape->value(fe.loss_node)[0];
}

double attach_loss_hard(ForwardEval& fe, const std::vector<int>& labels) {
    if (!fe.tape) throw std::invalid_argument("attach_loss: forward was not recorded");
    const Tensor& logits = fe.tape->value(fe.logits_node);
    const int N = logits.dim(0), C = logits.dim(1);
    if (static_cast<int>(labels.size()) != N)
        throw std::invalid_argument("attach_loss: label count mismatch");
    Tensor onehot({N, C});
    for (int n = 0; n < N; ++n) {
        if (labels[static_cast<std::size_t>(n)] < 0 || labels[static_cast<std::size_t>(n)] >= C)
            throw std::invalid_argument("attach_loss: label out of range");
        onehot[static_cast<std::int64_t>(n) * C + labels[static_cast<std::size_t>(n)]] = 1.0;
    }
    return attach_loss(fe, onehot);
}

Tensor input_gradient(ForwardEval& fe) {
    if (!fe.tape) throw std::invalid_argument("input_gradient: forward was not recorded");
    if (fe.loss_node < 0) throw std::invalid_argument("input_gradient: tape has no loss node");
    fe.tape->zero_grads();
    fe.tape->backward(fe.loss_node);
    Tensor g = fe.tape->grad(fe.input_node);
    ensure_finite(g, "input_gradient");
    if (!fe.batched) {
        std::vector<int> shape(g.shape().begin() + 1, g.shape().end());
        g = g.reshaped(shape);
    }
    return g;
}

std::map<std::string, Tensor> parameter_gradients(ForwardEval& fe) {
    if (!fe.tape) throw std::invalid_argument("parameter_gradients: forward was not recorded");
    if (fe.loss_node < 0)
        throw std::invalid_argument("parameter_gradients: tape has no loss node");
    fe.tape->zero_grads();
    fe.tape->backward(fe.loss_node);
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : fe.param_nodes) {
        Tensor g = fe.tape->grad(id);
        ensure_finite(g, "parameter_gradients");
        out.emplace(name, std::move(g));
    }
    return out;
}

Tensor input_jacobian(const Checkpoint& ckpt, const Tensor& input, double temperature) {
    ForwardOptions opt;
    opt.temperature = temperature;
    opt.record = true;
    opt.param_grad = false;  // rows only need d(sigma)/d(input)
    ForwardEval fe = forward_eval(ckpt, input, opt);
    fe.temperature = temperature;
    const int C = ckpt.spec.classes;
    const Tensor& probs = fe.tape->value(fe.probs_node);
    const int N = probs.dim(0);
    if (N != 1) throw std::invalid_argument("input_jacobian: expects a single input");
    const std::int64_t D = fe.tape->value(fe.input_node).numel();

    Tensor jac({C, static_cast<int>(D)});
    for (int j = 0; j < C; ++j) {
        fe.tape->zero_grads();
        Tensor seed({1, C});
        seed[j] = 1.0;
        fe.tape->backward(fe.probs_node, seed);
        const Tensor& g = fe.tape->grad(fe.input_node);
        std::memcpy(jac.data() + static_cast<std::int64_t>(j) * D, g.data(),
                    static_cast<std::size_t>(D) * sizeof(double));
    }
    ensure_finite(jac, "input_jacobian");
    return jac;
}

Tensor finite_difference_gradient(const Checkpoint& ckpt, const Tensor& input, int target_class,
                                  double h, double temperature) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be > 0");
    if (target_class < 0 || target_class >= ckpt.spec.classes)
        throw std::invalid_argument("finite_difference_gradient: bad target class");

    auto loss_at = [&](const Tensor& x) {
        ForwardOptions opt;
        opt.temperature = temperature;
        ForwardEval fe = forward_eval(ckpt, x, opt);
        const Tensor& logits = fe.batched ? fe.logits : fe.logits.reshaped({1, ckpt.spec.classes});
        const int C = ckpt.spec.classes;
        const double* zr = logits.data();
        double m = zr[0] / temperature;
        for (int c = 1; c < C; ++c) m = std::max(m, zr[c] / temperature);
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += std::exp(zr[c] / temperature - m);
        return m + std::log(s) - zr[target_class] / temperature;
    };

    Tensor g(input.shape());
    Tensor x = input;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double orig = x[i];
        x[i] = orig + h;
        const double lp = loss_at(x);
        x[i] = orig - h;
        const double lm = loss_at(x);
        x[i] = orig;
        g[i] = (lp - lm) / (2.0 * h);
    }
    return g;
}

int classify(const Checkpoint& ckpt, const Tensor& input, double temperature) {
    return classify_with_probs(ckpt, input, temperature).first;
}

std::pair<int, Tensor> classify_with_probs(const Checkpoint& ckpt, const Tensor& input,
                                           double temperature) {
    ForwardOptions opt;
    opt.temperature = temperature;
    ForwardEval fe = forward_eval(ckpt, input, opt);
    if (fe.batched && fe.probs.dim(0) != 1)
        throw std::invalid_argument("classify: expects a single input");
    Tensor probs = fe.batched ? fe.probs.reshaped({ckpt.spec.classes}) : fe.probs;
    const int cls = static_cast<int>(argmax_lowest(probs.values()));
    return {cls, std::move(probs)};
}

std::vector<int> classify_batch(const Checkpoint& ckpt, const Tensor& batch, double temperature) {
    ForwardOptions opt;
    opt.temperature = temperature;
    ForwardEval fe = forward_eval(ckpt, batch, opt);
    const Tensor& probs = fe.batched ? fe.probs : fe.probs.reshaped({1, ckpt.spec.classes});
    const int N = probs.dim(0), C = probs.dim(1);
    std::vector<int> out(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        std::span<const double> row(probs.data() + static_cast<std::int64_t>(n) * C,
                                    static_cast<std::size_t>(C));
        out[static_cast<std::size_t>(n)] = static_cast<int>(argmax_lowest(row));
    }
    return out;
}

double confidence(const Checkpoint& ckpt, const Tensor& input) {
    if (ckpt.spec.classes < 2) throw std::invalid_argument("confidence: needs >= 2 classes");
    auto [cls, probs] = classify_with_probs(ckpt, input);
    double top1 = -1.0, top2 = -1.0;
    for (std::int64_t i = 0; i < probs.numel(); ++i) {
        if (probs[i] > top1) {
            top2 = top1;
            top1 = probs[i];
        } else if (probs[i] > top2) {
            top2 = probs[i];
        }
    }
    return std::sqrt(2.0) * (top1 - top2);
}

double frobenius_radius_bound(const Checkpoint& ckpt, const Tensor& input) {
    double prod = 1.0;
    bool any = false;
    for (const auto& [name, t] : ckpt.params) {
        if (!name.ends_with(".w")) continue;
        prod *= frobenius_norm(t);  // conv kernels enter flattened
        any = true;
    }
    if (!any) throw std::invalid_argument("frobenius_radius_bound: network has no weight matrix");
    const double phi = confidence(ckpt, input);
    if (phi == 0.0) return 0.0;
    return phi / prod;
}

}  // namespace eagleeye
