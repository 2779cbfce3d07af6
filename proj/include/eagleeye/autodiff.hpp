#pragma once

#include <functional>
#include <vector>

#include "eagleeye/rng.hpp"
#include "eagleeye/tensor.hpp"

namespace eagleeye {

using NodeId = int;

/// Reverse-mode tape. A forward pass records one node per primitive
/// operation; backward() replays the record once in reverse, accumulating
/// adjoints additively so tensors feeding several operations get the sum of
/// their downstream gradients. A tape belongs to the evaluation that
/// produced it and is not shared across threads.
class Tape {
public:
    NodeId leaf(Tensor value, bool requires_grad);

    /// x:[N,D] w:[K,D] b:[K] -> [N,K], y = x w^T + b
    NodeId affine(NodeId x, NodeId w, NodeId b);

    /// x:[N,C,H,W] w:[F,C,kh,kw] b:[F], stride 1, zero padding
    NodeId conv2d(NodeId x, NodeId w, NodeId b, int padding);

    /// x:[N,C,H,W], square window, configurable stride
    NodeId maxpool2d(NodeId x, int window, int stride);

    NodeId relu(NodeId x);

    /// Inverted dropout; kept units scaled by 1/(1-rate). Train-time only.
    NodeId dropout(NodeId x, double rate, RngStream& rng);

    /// [N, ...] -> [N, D]
    NodeId flatten(NodeId x);

    /// Row-wise softmax(z / temperature).
    NodeId softmax(NodeId z, double temperature);

    /// Mean over rows of H(target_row, softmax(z_row / temperature)),
    /// computed from log-softmax in one fused step. targets holds one
    /// probability distribution per row (one-hot for hard labels).
    NodeId cross_entropy_mean(NodeId z, const Tensor& targets, double temperature);

    /// sum_n weights[n] * H(target_n, softmax(z_n / temperature)); the caller
    /// owns the normalization. Used for mixed-batch objectives.
    NodeId cross_entropy_weighted(NodeId z, const Tensor& targets,
                                  const std::vector<double>& weights, double temperature);

    NodeId sum_all(NodeId x);
    NodeId hadamard(NodeId a, NodeId b);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    int size() const { return static_cast<int>(nodes_.size()); }

    /// Adjoint of a node after backward(); zero tensor if it never received one.
    const Tensor& grad(NodeId id);

    void zero_grads();

    /// Seed the adjoint of `node` (1.0 for a scalar) and sweep the tape in
    /// reverse. May be called repeatedly with zero_grads() in between, e.g.
    /// once per output row when assembling a Jacobian.
    void backward(NodeId node);
    void backward(NodeId node, const Tensor& seed);

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily
        bool requires_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves
    };

    NodeId push(Tensor value, bool requires_grad, std::function<void(Tape&)> back);
    Tensor& grad_buf(NodeId id);
    void accumulate(NodeId id, const Tensor& g);

    std::vector<Node> nodes_;

    friend struct TapeOps;
};

}  // namespace eagleeye
