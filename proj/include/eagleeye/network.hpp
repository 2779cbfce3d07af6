#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eagleeye/autodiff.hpp"
#include "eagleeye/tensor.hpp"

namespace eagleeye {

enum class LayerKind { Conv2d, MaxPool2d, Relu, Dropout, Flatten, Affine, Softmax };

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
    LayerKind kind;
    int filters = 0;  // conv2d
    int kernel = 0;   // conv2d
    int padding = 0;  // conv2d
    int window = 0;   // maxpool2d
    int stride = 1;   // maxpool2d
    int units = 0;    // affine
    double rate = 0.0;  // dropout

    static LayerSpec conv2d(int filters, int kernel, int padding = 0);
    static LayerSpec maxpool2d(int window, int stride);
    static LayerSpec relu();
    static LayerSpec dropout(double rate);
    static LayerSpec flatten();
    static LayerSpec affine(int units);
    static LayerSpec softmax();

    bool has_params() const { return kind == LayerKind::Conv2d || kind == LayerKind::Affine; }

    bool operator==(const LayerSpec&) const = default;
};

/// Ordered layer stack ending in a softmax head. Shape compatibility of
/// adjacent layers is validated at construction time.
struct NetworkSpec {
    std::vector<int> input_shape;  // [D] for dense inputs, [C,H,W] for images
    int classes = 0;
    std::vector<LayerSpec> layers;

    /// Throws std::invalid_argument on any inter-layer shape conflict.
    void validate() const;

    /// Output shape after each layer, starting from input_shape.
    std::vector<std::vector<int>> layer_shapes() const;

    /// (name, shape) of every trainable parameter, in layer order.
    /// Names are "l<i>.w" / "l<i>.b" for layer index i.
    std::vector<std::pair<std::string, std::vector<int>>> parameter_shapes() const;

    std::int64_t parameter_count() const;

    bool operator==(const NetworkSpec&) const = default;
};

/// Table-4 style convolutional stack for 28x28 single-channel digits:
/// two 3x3 conv pairs with 2x2/stride-1 max pooling, two dense layers with
/// dropout 0.5, softmax over 10 classes. `scale` multiplies filter and unit
/// counts (rounded up, minimum 4); scale = 1 reproduces the full stack.
NetworkSpec build_mnist_cnn(double scale);

/// ReLU MLP with a softmax head; hidden may be empty (linear classifier).
NetworkSpec build_synthetic_mlp(int input_dim, const std::vector<int>& hidden, int classes);

struct TrainMeta {
    int epochs = 0;
    double final_loss = 0.0;
    double temperature = 1.0;  // softmax temperature used in training

    bool operator==(const TrainMeta&) const = default;
};

struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    NetworkSpec spec;
    std::map<std::string, Tensor> params;
    TrainMeta meta;

    const Tensor& param(const std::string& name) const;

    bool operator==(const Checkpoint&) const = default;
};

/// Fresh checkpoint with He-initialized weights, zero biases. Streams are
/// keyed by parameter name, so initialization order is irrelevant.
Checkpoint init_checkpoint(const NetworkSpec& spec, std::uint64_t seed);

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct ForwardOptions {
    double temperature = 1.0;
    bool record = false;      // build and return a tape
    bool input_grad = true;   // input participates in backward (if record)
    bool param_grad = true;   // parameters participate in backward (if record)
    bool training = false;    // dropout active
    RngStream* dropout_rng = nullptr;  // required if training and spec has dropout
};

struct ForwardEval {
    Tensor logits;  // [N,C], or [C] for a single input
    Tensor probs;
    std::shared_ptr<Tape> tape;  // present iff options.record
    NodeId input_node = -1;
    NodeId logits_node = -1;
    NodeId probs_node = -1;
    NodeId loss_node = -1;  // set by attach_loss
    std::vector<std::pair<std::string, NodeId>> param_nodes;
    bool batched = false;
    double temperature = 1.0;
};

/// Runs the layer stack on a single input or a batch (leading N axis).
/// probs = softmax(logits / temperature); all intermediates are checked
/// finite.
ForwardEval forward_eval(const Checkpoint& ckpt, const Tensor& input, const ForwardOptions& opt = {});

/// Adds a mean cross-entropy loss node against per-row target distributions
/// (shape [N,C]); returns its value.
double attach_loss(ForwardEval& fe, const Tensor& targets);
double attach_loss_hard(ForwardEval& fe, const std::vector<int>& labels);

/// d(loss)/d(input), same shape as the input. Requires a recorded tape with
/// a loss node.
Tensor input_gradient(ForwardEval& fe);

/// One gradient per trainable parameter, keyed like Checkpoint::params.
std::map<std::string, Tensor> parameter_gradients(ForwardEval& fe);

/// J[j][i] = d sigma_j / d x_i at softmax temperature `temperature`;
/// shape [classes, input_components].
Tensor input_jacobian(const Checkpoint& ckpt, const Tensor& input, double temperature = 1.0);

/// Central-difference estimate of d(cross_entropy(softmax(z/tau), target))/dx.
/// Independent of the tape machinery; used as a gradient oracle.
Tensor finite_difference_gradient(const Checkpoint& ckpt, const Tensor& input, int target_class,
                                  double h, double temperature = 1.0);

int classify(const Checkpoint& ckpt, const Tensor& input, double temperature = 1.0);
std::pair<int, Tensor> classify_with_probs(const Checkpoint& ckpt, const Tensor& input,
                                           double temperature = 1.0);
std::vector<int> classify_batch(const Checkpoint& ckpt, const Tensor& batch,
                                double temperature = 1.0);

/// sqrt(2) * (top1 - top2) of the softmax output; in [0, sqrt(2)].
double confidence(const Checkpoint& ckpt, const Tensor& input);

/// confidence(x) / prod_l ||W_l||_F over affine and convolution kernels.
double frobenius_radius_bound(const Checkpoint& ckpt, const Tensor& input);

}  // namespace eagleeye
