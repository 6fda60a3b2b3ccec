#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rcaiunet/autograd.hpp"
#include "rcaiunet/gradcheck.hpp"
#include "rcaiunet/random.hpp"

namespace rca::nn {

using ag::Var;
using kernels::Padding;

enum class Mode { Train, Eval };

// ---- convolution cost model ---------------------------------------------------

/// Square-kernel convolution hyperparameters: kernel size f, kernel count r,
/// input depth d, and an input size from which the output size p follows.
struct ConvSpec {
  std::size_t kernel = 3;    // f
  std::size_t kernels = 1;   // r
  std::size_t depth = 1;     // d
  std::size_t stride = 1;
  Padding padding = Padding::Same;
  std::size_t input_size = 1;

  std::size_t output_size() const;  // p
  /// Throws BadConfig unless f in {1,3,5}, stride in {1,2} and r, d >= 1.
  void validate() const;
};

enum class ConvKind { Standard, DepthwiseSeparable };

struct ConvCost {
  std::uint64_t multiplications = 0;
  std::uint64_t parameters = 0;
};

/// Standard: M = r p^2 f^2 d, P = r f^2 d.  Separable: M = d p^2 (f^2 + r), P = d (f^2 + r).
ConvCost cost_model(const ConvSpec& spec, ConvKind kind);

/// Reduced fraction with positive denominator.
struct Rational {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  static Rational reduced(std::uint64_t num, std::uint64_t den);
  friend bool operator==(const Rational&, const Rational&) = default;
  Rational operator+(const Rational& o) const;
};

/// P_DSC / P_SC (equal to M_DSC / M_SC) as an exact fraction.
Rational separable_cost_ratio(const ConvSpec& spec);

// ---- parameter registry ---------------------------------------------------------

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

/// Flat list of named trainable tensors and non-trainable buffers.
struct Registry {
  std::vector<ag::NamedVar> params;
  std::vector<NamedBuffer> buffers;

  void add(std::string name, const Var& v) { params.push_back({std::move(name), v}); }
  void add_buffer(std::string name, Tensor* t) { buffers.push_back({std::move(name), t}); }
};

/// He-uniform gain of a kernel: sqrt(2) when a ReLU follows it, 1 otherwise.
enum class Init { Relu, Linear };

/// He-uniform kernel initialisation: U(-a, a) with a = gain * sqrt(3 / fan_in).
Tensor he_uniform(Rng& rng, Shape shape, std::size_t fan_in, Init init);

// ---- layers -------------------------------------------------------------------

/// 1x1 standard convolution with optional bias.
class Conv1x1 {
 public:
  Conv1x1() = default;
  Conv1x1(std::size_t in, std::size_t out, bool bias, Rng& rng, Init init = Init::Linear);

  Var forward(const Var& x) const;
  void collect(Registry& reg, const std::string& prefix) const;

  Var weight;  // [out, in, 1, 1]
  Var bias;    // [out] or null
};

/// Depthwise f x f convolution followed by a 1x1 pointwise projection.
class DscLayer {
 public:
  DscLayer() = default;
  /// `init` applies to the pointwise kernel; the depthwise kernel is linear.
  DscLayer(const ConvSpec& spec, bool bias, Rng& rng, Init init = Init::Relu);

  Var forward(const Var& x) const;
  /// Registers "<prefix>.dw<suffix>", "<prefix>.pw<suffix>" and the bias.
  void collect(Registry& reg, const std::string& prefix, const std::string& suffix = "") const;
  std::size_t parameter_count() const;

  ConvSpec spec;
  Var depthwise;  // [d, 1, f, f]
  Var pointwise;  // [r, d, 1, 1]
  Var bias;       // [r] or null
};

class BatchNorm {
 public:
  static constexpr double kMomentum = 0.9;
  static constexpr double kEpsilon = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels);

  /// Train mode normalises with batch statistics and folds them into the
  /// running estimates; eval mode uses the running estimates.
  Var forward(const Var& x, Mode mode);
  void collect(Registry& reg, const std::string& prefix);

  Var gamma, beta;
  Tensor running_mean, running_var;
};

/// Max-pool branch and spectral-pool branch merged by a 1x1 convolution.
/// Valid mode halves H and W; same mode keeps them.
class HybridPool {
 public:
  HybridPool() = default;
  HybridPool(std::size_t channels, Padding mode, Rng& rng, bool merge_bias = true);

  Var forward(const Var& x) const;
  /// Branch outputs before the merge, in concatenation order [max, spectral].
  std::pair<Var, Var> branches(const Var& x) const;
  void collect(Registry& reg, const std::string& prefix) const;

  Padding mode = Padding::Valid;
  Conv1x1 merge;  // 2C -> C
};

/// Parallel separable 1x1 / 3x3 / 5x5 branches plus a same-mode hybrid pool,
/// each followed by ReLU and batch norm, concatenated and merged by a 1x1
/// convolution.
class InceptionLayer {
 public:
  InceptionLayer() = default;
  InceptionLayer(std::size_t in, std::size_t out, Rng& rng);

  Var forward(const Var& x, Mode mode);
  void collect(Registry& reg, const std::string& prefix);

  DscLayer branch1, branch3, branch5;
  HybridPool pool;
  BatchNorm bn1, bn3, bn5, bn_pool;
  Conv1x1 merge;  // (3 out + in) -> out
};

/// Two inception layers plus a 1x1 separable shortcut, merged by addition.
class ResidualInceptionBlock {
 public:
  ResidualInceptionBlock() = default;
  ResidualInceptionBlock(std::size_t in, std::size_t out, Rng& rng);

  Var forward(const Var& x, Mode mode);
  void collect(Registry& reg, const std::string& prefix);

  InceptionLayer inc1, inc2;
  DscLayer shortcut;
};

/// Additive attention gate over a long skip connection fed by one or more
/// deeper feature maps:
///   alpha = sigmoid(psi(relu(proj_skip(skip) + sum_i resize(proj_i(gate_i)))))
///   out   = skip * alpha   (broadcast over channels)
class CrossSpatialAttention {
 public:
  CrossSpatialAttention() = default;
  CrossSpatialAttention(std::size_t skip_channels, const std::vector<std::size_t>& gate_channels, Rng& rng);

  struct Result {
    Var output;
    Var alpha;  // [N, 1, H, W]
  };

  Result forward(const Var& skip, const std::vector<Var>& gates) const;
  void collect(Registry& reg, const std::string& prefix) const;

  Conv1x1 proj_skip;
  std::vector<Conv1x1> proj_gates;
  Conv1x1 psi;  // gate width -> 1
};

/// 2x2 stride-2 transposed convolution with bias.
class Upsample {
 public:
  Upsample() = default;
  Upsample(std::size_t in, std::size_t out, Rng& rng);

  Var forward(const Var& x) const;
  void collect(Registry& reg, const std::string& prefix) const;

  Var weight;  // [in, out, 2, 2]
  Var bias;    // [out]
};

std::size_t trainable_count(const Registry& reg);

}  // namespace rca::nn
