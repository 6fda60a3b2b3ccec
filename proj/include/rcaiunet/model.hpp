#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcaiunet/layers.hpp"

namespace rca::model {

using nn::Mode;
using nn::Var;

/// Base width found by calibrate_width(2'900'000) for the default 256x256,
/// growth-1.5 network.
inline constexpr std::size_t kCalibratedBaseChannels = 40;
inline constexpr std::size_t kTargetParameters = 2'900'000;

struct ModelConfig {
  std::size_t stages = 4;
  std::size_t input_size = 256;
  std::size_t input_channels = 1;
  std::size_t base_channels = kCalibratedBaseChannels;  // C1
  double growth = 1.5;                                  // g

  /// Channel width of level s = 1 .. stages + 1 (the last is the bottleneck):
  /// round(C1 * g^(s-1)).
  std::size_t channels(std::size_t level) const;
  /// Deeper levels whose features gate the skip at `level`: level+1 and
  /// level+2 where they exist, with the bottleneck as the deepest source.
  std::vector<std::size_t> gate_levels(std::size_t level) const;
  /// Throws BadConfig when the input is not divisible by 2^stages or a
  /// field is out of range.
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ParamRow {
  std::string name;
  Shape shape;
  std::size_t count;
};

class RcaIUnet {
 public:
  RcaIUnet(const ModelConfig& config, std::uint64_t seed);

  RcaIUnet(const RcaIUnet&) = delete;
  RcaIUnet& operator=(const RcaIUnet&) = delete;
  RcaIUnet(RcaIUnet&& other) noexcept;
  RcaIUnet& operator=(RcaIUnet&& other) noexcept;

  /// Per-pixel foreground probability, shape [N, 1, H, W].
  Var forward(const Var& x, Mode mode);

  /// Intermediate activations of one forward pass. Stages run in the order
  /// enc1..encS, bottleneck, decS..dec1, head (2S + 2 stages in total).
  struct ForwardState {
    std::vector<Var> level;   // 1-based skip/bottleneck features
    std::vector<Var> pooled;  // 1-based pooled encoder outputs; pooled[0] is the input
    std::vector<Var> decoded; // 1-based decoder outputs; decoded[S+1] is the bottleneck
    Var output;
  };
  std::size_t stage_count() const { return 2 * config_.stages + 2; }
  /// Stage index of a registered tensor name (the first stage it influences).
  std::size_t stage_of(const std::string& name) const;
  /// Runs stages [from, stage_count()) on top of `state`, whose earlier
  /// entries must come from a previous pass with the same input.
  void run_stages(ForwardState& state, std::size_t from, Mode mode);
  Tensor predict(const Tensor& x);

  const ModelConfig& config() const { return config_; }

  /// Trainable tensors in registration order.
  const std::vector<ag::NamedVar>& parameters() const { return registry_.params; }
  const std::vector<nn::NamedBuffer>& buffers() const { return registry_.buffers; }

  std::size_t param_count() const;
  /// One row per trainable tensor; counts sum to param_count().
  std::vector<ParamRow> param_table() const;

  void freeze();
  void unfreeze();

  /// Model archive: u32 LE header length, JSON header with the config, then
  /// named RTEN records for every parameter and buffer.
  void save(const std::filesystem::path& path, DType dtype = DType::F64) const;
  void save(std::ostream& os, DType dtype = DType::F64) const;
  static RcaIUnet load(const std::filesystem::path& path);
  static RcaIUnet load(std::istream& is);

  /// Copies all parameter and buffer values from another model of the same config.
  void copy_from(const RcaIUnet& other);

  // submodules, exposed for tests and tooling
  std::vector<nn::ResidualInceptionBlock> encoders;
  std::vector<nn::HybridPool> pools;
  nn::ResidualInceptionBlock bottleneck;
  std::vector<nn::Upsample> upsamplers;   // index s-1 for level s
  std::vector<nn::CrossSpatialAttention> attention;
  std::vector<nn::ResidualInceptionBlock> decoders;
  nn::Conv1x1 head;

 private:
  void register_all();

  ModelConfig config_;
  nn::Registry registry_;
};

/// Smallest base width in [8, 64] whose model lands within +-15% of the target,
/// else the width minimising |count - target|. A non-positive target returns 8.
struct Calibration {
  std::size_t base_channels = 8;
  std::size_t param_count = 0;
  bool within_band = false;
  std::string warning;
};
Calibration calibrate_width(std::size_t target, ModelConfig base = {});

/// Trainable parameter count of a config without keeping the model.
std::size_t count_parameters(const ModelConfig& config);

}  // namespace rca::model
