#include "rcaiunet/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "rcaiunet/rten.hpp"

namespace rca::model {

// ---- ModelConfig --------------------------------------------------------------

std::size_t ModelConfig::channels(std::size_t level) const {
  return static_cast<std::size_t>(
      std::lround(static_cast<double>(base_channels) * std::pow(growth, static_cast<double>(level - 1))));
}

std::vector<std::size_t> ModelConfig::gate_levels(std::size_t level) const {
  std::vector<std::size_t> out;
  for (std::size_t l = level + 1; l <= std::min(level + 2, stages + 1); ++l) out.push_back(l);
  return out;
}

void ModelConfig::validate() const {
  if (stages < 1 || stages > 8) throw BadConfig("stages must be in [1, 8]");
  if (input_channels < 1) throw BadConfig("input_channels must be >= 1");
  if (base_channels < 1) throw BadConfig("base_channels must be >= 1");
  if (!(growth >= 1.0) || !std::isfinite(growth)) throw BadConfig("growth must be >= 1");
  const std::size_t div = std::size_t{1} << stages;
  if (input_size < div || input_size % div != 0) {
    throw BadConfig("input size " + std::to_string(input_size) + " is not divisible by 2^" +
                    std::to_string(stages));
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"stages", stages},
          {"input_size", input_size},
          {"input_channels", input_channels},
          {"base_channels", base_channels},
          {"growth", growth}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.stages = j.at("stages").get<std::size_t>();
  c.input_size = j.at("input_size").get<std::size_t>();
  c.input_channels = j.value("input_channels", std::size_t{1});
  c.base_channels = j.at("base_channels").get<std::size_t>();
  c.growth = j.at("growth").get<double>();
  c.validate();
  return c;
}

// ---- RcaIUnet -----------------------------------------------------------------

RcaIUnet::RcaIUnet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t S = config_.stages;
  std::size_t in = config_.input_channels;
  for (std::size_t s = 1; s <= S; ++s) {
    const std::size_t c = config_.channels(s);
    encoders.emplace_back(in, c, rng);
    pools.emplace_back(c, nn::Padding::Valid, rng);
    in = c;
  }
  bottleneck = nn::ResidualInceptionBlock(in, config_.channels(S + 1), rng);
  upsamplers.resize(S);
  attention.resize(S);
  decoders.resize(S);
  for (std::size_t s = S; s >= 1; --s) {
    const std::size_t c = config_.channels(s);
    upsamplers[s - 1] = nn::Upsample(config_.channels(s + 1), c, rng);
    std::vector<std::size_t> gate_channels;
    for (auto l : config_.gate_levels(s)) gate_channels.push_back(config_.channels(l));
    attention[s - 1] = nn::CrossSpatialAttention(c, gate_channels, rng);
    decoders[s - 1] = nn::ResidualInceptionBlock(2 * c, c, rng);
  }
  head = nn::Conv1x1(config_.channels(1), 1, true, rng);
  register_all();
}

RcaIUnet::RcaIUnet(RcaIUnet&& other) noexcept
    : encoders(std::move(other.encoders)),
      pools(std::move(other.pools)),
      bottleneck(std::move(other.bottleneck)),
      upsamplers(std::move(other.upsamplers)),
      attention(std::move(other.attention)),
      decoders(std::move(other.decoders)),
      head(std::move(other.head)),
      config_(other.config_) {
  register_all();
}

RcaIUnet& RcaIUnet::operator=(RcaIUnet&& other) noexcept {
  encoders = std::move(other.encoders);
  pools = std::move(other.pools);
  bottleneck = std::move(other.bottleneck);
  upsamplers = std::move(other.upsamplers);
  attention = std::move(other.attention);
  decoders = std::move(other.decoders);
  head = std::move(other.head);
  config_ = other.config_;
  register_all();
  return *this;
}

void RcaIUnet::register_all() {
  // Buffers are held by address, so this runs again after every move.
  registry_ = {};
  const std::size_t S = config_.stages;
  for (std::size_t s = 1; s <= S; ++s) {
    const std::string p = "enc" + std::to_string(s);
    encoders[s - 1].collect(registry_, p + ".block");
    pools[s - 1].collect(registry_, p + ".pool");
  }
  bottleneck.collect(registry_, "bottleneck.block");
  for (std::size_t s = S; s >= 1; --s) {
    const std::string p = "dec" + std::to_string(s);
    upsamplers[s - 1].collect(registry_, p + ".up");
    attention[s - 1].collect(registry_, p + ".att");
    decoders[s - 1].collect(registry_, p + ".block");
  }
  head.collect(registry_, "head");
}

Var RcaIUnet::forward(const Var& x, Mode mode) {
  const Dims4 d = dims4(x->value);
  if (d.c != config_.input_channels || d.h != d.w || d.h % (std::size_t{1} << config_.stages) != 0) {
    throw ShapeMismatch("model expects [N," + std::to_string(config_.input_channels) +
                        ",H,H] with H divisible by 2^" + std::to_string(config_.stages) + ", got " +
                        shape_str(x->value.shape()));
  }
  ForwardState state;
  state.level.resize(config_.stages + 2);
  state.pooled.resize(config_.stages + 1);
  state.decoded.resize(config_.stages + 2);
  state.pooled[0] = x;
  run_stages(state, 0, mode);
  return state.output;
}

std::size_t RcaIUnet::stage_of(const std::string& name) const {
  const std::size_t S = config_.stages;
  auto level_after = [&name](const std::string& tag) {
    return static_cast<std::size_t>(std::stoul(name.substr(tag.size())));
  };
  if (name.rfind("enc", 0) == 0) return level_after("enc") - 1;
  if (name.rfind("bottleneck", 0) == 0) return S;
  if (name.rfind("dec", 0) == 0) return S + 1 + (S - level_after("dec"));
  if (name.rfind("head", 0) == 0) return 2 * S + 1;
  throw BadConfig("unknown tensor name " + name);
}

void RcaIUnet::run_stages(ForwardState& st, std::size_t from, Mode mode) {
  const std::size_t S = config_.stages;
  for (std::size_t k = from; k < stage_count(); ++k) {
    if (k < S) {
      const std::size_t s = k + 1;
      st.level[s] = encoders[s - 1].forward(st.pooled[s - 1], mode);
      st.pooled[s] = pools[s - 1].forward(st.level[s]);
    } else if (k == S) {
      st.level[S + 1] = bottleneck.forward(st.pooled[S], mode);
      st.decoded[S + 1] = st.level[S + 1];
    } else if (k <= 2 * S) {
      const std::size_t s = S - (k - S - 1);
      Var up = upsamplers[s - 1].forward(st.decoded[s + 1]);
      std::vector<Var> gates;
      for (auto l : config_.gate_levels(s)) gates.push_back(st.level[l]);
      Var att = attention[s - 1].forward(st.level[s], gates).output;
      const Var parts[] = {att, up};
      st.decoded[s] = decoders[s - 1].forward(ag::concat_channels(parts), mode);
    } else {
      st.output = ag::sigmoid(head.forward(st.decoded[1]));
    }
  }
}

Tensor RcaIUnet::predict(const Tensor& x) {
  ag::NoGradGuard guard;
  return forward(ag::constant(x), Mode::Eval)->value;
}

std::size_t RcaIUnet::param_count() const { return nn::trainable_count(registry_); }

std::vector<ParamRow> RcaIUnet::param_table() const {
  std::vector<ParamRow> rows;
  for (const auto& p : registry_.params) {
    if (!p.var->requires_grad) continue;
    rows.push_back({p.name, p.var->value.shape(), p.var->value.numel()});
  }
  return rows;
}

void RcaIUnet::freeze() {
  for (const auto& p : registry_.params) p.var->requires_grad = false;
}

void RcaIUnet::unfreeze() {
  for (const auto& p : registry_.params) p.var->requires_grad = true;
}

void RcaIUnet::save(std::ostream& os, DType dtype) const {
  nlohmann::json header;
  header["format"] = "rcaiunet-model";
  header["version"] = 1;
  header["config"] = config_.to_json();
  nlohmann::json shapes = nlohmann::json::object();
  for (const auto& p : registry_.params) shapes[p.name] = p.var->value.shape();
  for (const auto& b : registry_.buffers) shapes[b.name] = b.tensor->shape();
  header["tensors"] = shapes;
  const std::string text = header.dump();
  const auto len = static_cast<std::uint32_t>(text.size());
  const char bytes[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                         static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
  os.write(bytes, 4);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : registry_.params) write_named(os, p.name, p.var->value.astype(dtype));
  for (const auto& b : registry_.buffers) write_named(os, b.name, b.tensor->astype(dtype));
  if (!os) throw IoError("model archive write failed");
}

void RcaIUnet::save(const std::filesystem::path& path, DType dtype) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  save(os, dtype);
}

RcaIUnet RcaIUnet::load(std::istream& is) {
  unsigned char len_bytes[4];
  if (!is.read(reinterpret_cast<char*>(len_bytes), 4)) throw FormatError("model archive: missing header");
  const std::uint32_t len = len_bytes[0] | (len_bytes[1] << 8) | (len_bytes[2] << 16) |
                            (static_cast<std::uint32_t>(len_bytes[3]) << 24);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw FormatError("model archive: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model archive: bad header: ") + e.what());
  }
  if (header.value("format", "") != "rcaiunet-model") throw FormatError("model archive: wrong format tag");
  RcaIUnet model(ModelConfig::from_json(header.at("config")), 0);

  std::map<std::string, Tensor*> slots;
  for (const auto& p : model.registry_.params) slots[p.name] = &p.var->value;
  for (const auto& b : model.registry_.buffers) slots[b.name] = b.tensor;

  const auto& shapes = header.at("tensors");
  if (shapes.size() != slots.size()) throw FormatError("model archive: header lists a different tensor set");
  for (const auto& [name, slot] : slots) {
    if (!shapes.contains(name) || shapes.at(name).get<Shape>() != slot->shape()) {
      throw FormatError("model archive: header shape mismatch for " + name);
    }
  }
  std::size_t loaded = 0;
  for (auto& [name, t] : read_named_all(is)) {
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError("model archive: unknown tensor " + name);
    if (t.shape() != it->second->shape()) {
      throw FormatError("model archive: shape mismatch for " + name + ": " + shape_str(t.shape()) + " vs " +
                        shape_str(it->second->shape()));
    }
    *it->second = t.astype(DType::F64);
    ++loaded;
  }
  if (loaded != slots.size()) throw FormatError("model archive: missing tensors");
  return model;
}

RcaIUnet RcaIUnet::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return load(is);
}

void RcaIUnet::copy_from(const RcaIUnet& other) {
  if (registry_.params.size() != other.registry_.params.size() ||
      registry_.buffers.size() != other.registry_.buffers.size()) {
    throw ShapeMismatch("copy_from: models differ in structure");
  }
  for (std::size_t i = 0; i < registry_.params.size(); ++i) {
    registry_.params[i].var->value = other.registry_.params[i].var->value;
  }
  for (std::size_t i = 0; i < registry_.buffers.size(); ++i) {
    *registry_.buffers[i].tensor = *other.registry_.buffers[i].tensor;
  }
}

// ---- calibration ----------------------------------------------------------------

std::size_t count_parameters(const ModelConfig& config) { return RcaIUnet(config, 0).param_count(); }

Calibration calibrate_width(std::size_t target, ModelConfig base) {
  Calibration best;
  if (target == 0) {
    base.base_channels = 8;
    best.base_channels = 8;
    best.param_count = count_parameters(base);
    best.warning = "non-positive parameter target; clamped to the minimum base width 8";
    return best;
  }
  const double lo = 0.85 * static_cast<double>(target);
  const double hi = 1.15 * static_cast<double>(target);
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t c1 = 8; c1 <= 64; ++c1) {
    base.base_channels = c1;
    const std::size_t count = count_parameters(base);
    const auto dc = static_cast<double>(count);
    if (dc >= lo && dc <= hi) return {c1, count, true, {}};
    const double gap = std::abs(dc - static_cast<double>(target));
    if (gap < best_gap) {
      best_gap = gap;
      best = {c1, count, false, {}};
    }
  }
  best.warning = "no base width in [8, 64] lands within 15% of the target";
  return best;
}

}  // namespace rca::model
