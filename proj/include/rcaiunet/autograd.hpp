#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rcaiunet/kernels.hpp"
#include "rcaiunet/tensor.hpp"

namespace rca::ag {

struct Node;
using Var = std::shared_ptr<Node>;

/// Maps the upstream gradient of a node to one gradient per parent. An
/// undefined tensor means "no contribution".
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

struct Node {
  Tensor value;
  std::vector<Var> parents;
  BackwardFn backward;
  bool requires_grad = false;
  std::uint64_t serial = 0;  // creation order; larger is later
};

/// Leaf holding a constant value.
Var constant(Tensor value);
/// Leaf whose gradient is tracked.
Var parameter(Tensor value);

/// Interior node. Parents and the backward rule are only retained when
/// recording is enabled and some parent requires a gradient.
Var make_node(Tensor value, std::vector<Var> parents, BackwardFn backward);

bool grad_enabled();

/// Disables graph recording for its lifetime (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// While alive, folds every piecewise branch taken on this thread (ReLU sign,
/// clamp range, max-pool argmax) into a fingerprint. Two evaluations with
/// equal fingerprints ran on the same smooth piece.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void mix(std::uint64_t word);

 private:
  BranchTrace* previous_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

/// Gradients produced by one backward pass, keyed by node.
class Gradients {
 public:
  /// Gradient of `v`; a zero tensor when `v` did not influence the root.
  Tensor operator[](const Var& v) const;
  bool contains(const Var& v) const { return grads_.count(v.get()) != 0; }
  const Tensor* find(const Node* node) const;
  void accumulate(const Node* node, Tensor g);

 private:
  std::unordered_map<const Node*, Tensor> grads_;
};

/// Reverse topological replay of every recorded node reachable from a root.
///
/// Backward never mutates the nodes, so replaying the same tape twice yields
/// identical gradients.
class Tape {
 public:
  explicit Tape(const Var& root);

  std::size_t size() const { return nodes_.size(); }
  std::span<const Node* const> nodes() const { return nodes_; }

  Gradients backward() const;

 private:
  Var root_;
  std::vector<const Node*> nodes_;  // reverse creation order
};

/// d(root)/d(node) for every node reachable from a scalar root.
/// Throws NonScalarRoot when the root has more than one element.
Gradients backward(const Var& root);

// ---- differentiable operations ------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var log(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var sum(const Var& a);
Var mean(const Var& a);

Var concat_channels(std::span<const Var> parts);
Var mul_channel_broadcast(const Var& x, const Var& a);
Var resize_bilinear(const Var& x, std::size_t out_h, std::size_t out_w);

Var depthwise_conv2d(const Var& x, const Var& w, std::size_t stride, kernels::Padding padding);
Var pointwise_conv(const Var& x, const Var& w);
Var add_channel_bias(const Var& x, const Var& b);
Var conv_transpose2x2(const Var& x, const Var& w);
Var max_pool2d(const Var& x, std::size_t kernel, std::size_t stride, kernels::Padding padding);
Var spectral_pool(const Var& x, std::size_t out_h, std::size_t out_w);
Var spectral_lowpass(const Var& x);

/// Training-mode batch normalisation over (N, H, W) per channel. The batch
/// statistics (biased variance) are written to `batch_mean` / `batch_var`.
Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps,
                     Tensor* batch_mean = nullptr, Tensor* batch_var = nullptr);

/// Inference-mode batch normalisation with fixed statistics.
Var batch_norm_eval(const Var& x, const Var& gamma, const Var& beta, const Tensor& mean,
                    const Tensor& var, double eps);

}  // namespace rca::ag
