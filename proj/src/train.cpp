#include "rcaiunet/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rcaiunet/errors.hpp"
#include "rcaiunet/loss.hpp"
#include "rcaiunet/metrics.hpp"
#include "rcaiunet/random.hpp"

namespace rca::train {

// ---- config -------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw BadConfig(key + ": not a number: '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw BadConfig(key + ": not a non-negative integer: '" + v + "'");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw BadConfig(key + ": out of range: '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw BadConfig(key + ": not a boolean: '" + v + "'");
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void set_field(TrainConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "base_channels") c.model.base_channels = to_uint(key, v);
  else if (key == "growth") c.model.growth = to_double(key, v);
  else if (key == "stages") c.model.stages = to_uint(key, v);
  else if (key == "input_size") c.model.input_size = to_uint(key, v);
  else if (key == "input_channels") c.model.input_channels = to_uint(key, v);
  else if (key == "lr") c.lr = to_double(key, v);
  else if (key == "beta1") c.beta1 = to_double(key, v);
  else if (key == "beta2") c.beta2 = to_double(key, v);
  else if (key == "adam_epsilon") c.adam_epsilon = to_double(key, v);
  else if (key == "plateau_factor") c.plateau_factor = to_double(key, v);
  else if (key == "plateau_patience") c.plateau_patience = to_uint(key, v);
  else if (key == "min_delta") c.min_delta = to_double(key, v);
  else if (key == "early_stop_patience") c.early_stop_patience = to_uint(key, v);
  else if (key == "batch_size") c.batch_size = to_uint(key, v);
  else if (key == "max_epochs") c.max_epochs = to_uint(key, v);
  else if (key == "seed") c.seed = to_uint(key, v);
  else if (key == "test_fraction") c.test_fraction = to_double(key, v);
  else if (key == "val_fraction") c.val_fraction = to_double(key, v);
  else if (key == "val_on_train") c.val_on_train = to_bool(key, v);
  else if (key == "stop_at_train_dice") c.stop_at_train_dice = to_double(key, v);
  else if (key == "archive_dtype") c.archive_dtype = v;
  else throw BadConfig("unknown config key: " + key);
}

void apply_config_text(TrainConfig& cfg, std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw BadConfig("line " + std::to_string(lineno) + ": expected key=value");
    set_field(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  TrainConfig cfg;
  apply_config_text(cfg, is);
  return cfg;
}

std::string config_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "base_channels=" << c.model.base_channels << '\n'
     << "growth=" << num(c.model.growth) << '\n'
     << "stages=" << c.model.stages << '\n'
     << "input_size=" << c.model.input_size << '\n'
     << "input_channels=" << c.model.input_channels << '\n'
     << "lr=" << num(c.lr) << '\n'
     << "beta1=" << num(c.beta1) << '\n'
     << "beta2=" << num(c.beta2) << '\n'
     << "adam_epsilon=" << num(c.adam_epsilon) << '\n'
     << "plateau_factor=" << num(c.plateau_factor) << '\n'
     << "plateau_patience=" << c.plateau_patience << '\n'
     << "min_delta=" << num(c.min_delta) << '\n'
     << "early_stop_patience=" << c.early_stop_patience << '\n'
     << "batch_size=" << c.batch_size << '\n'
     << "max_epochs=" << c.max_epochs << '\n'
     << "seed=" << c.seed << '\n'
     << "test_fraction=" << num(c.test_fraction) << '\n'
     << "val_fraction=" << num(c.val_fraction) << '\n'
     << "val_on_train=" << (c.val_on_train ? "true" : "false") << '\n'
     << "stop_at_train_dice=" << num(c.stop_at_train_dice) << '\n'
     << "archive_dtype=" << c.archive_dtype << '\n';
  return os.str();
}

void validate(const TrainConfig& c) {
  c.model.validate();
  if (!(c.lr > 0)) throw BadConfig("lr must be positive");
  if (!(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1)) throw BadConfig("Adam betas must lie in [0, 1)");
  if (!(c.adam_epsilon > 0)) throw BadConfig("adam_epsilon must be positive");
  if (!(c.plateau_factor > 0 && c.plateau_factor < 1)) throw BadConfig("plateau_factor must lie in (0, 1)");
  if (c.plateau_patience == 0 || c.early_stop_patience == 0) throw BadConfig("patience values must be positive");
  if (!(c.min_delta >= 0)) throw BadConfig("min_delta must be non-negative");
  if (c.batch_size == 0) throw BadConfig("batch_size must be positive");
  if (c.archive_dtype != "f32" && c.archive_dtype != "f64") throw BadConfig("archive_dtype must be f32 or f64");
}

// ---- optimiser and schedules ------------------------------------------------

Adam::Adam(std::vector<ag::NamedVar> params, double lr, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros_like(p.var->value));
    v_.push_back(Tensor::zeros_like(p.var->value));
  }
}

void Adam::step(const ag::Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    if (!p.var->requires_grad) continue;
    const Tensor* g = grads.find(p.var.get());
    if (!g) continue;
    double* w = p.var->value.ptr();
    double* m = m_[i].ptr();
    double* v = v_[i].ptr();
    const double* gp = g->ptr();
    for (std::size_t k = 0; k < p.var->value.numel(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * gp[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * gp[k] * gp[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + epsilon_);
    }
  }
}

PlateauScheduler::PlateauScheduler(double lr, double factor, std::size_t patience, double min_delta)
    : lr_(lr), factor_(factor), patience_(patience), min_delta_(min_delta),
      best_(std::numeric_limits<double>::infinity()) {}

bool PlateauScheduler::update(double val_loss) {
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ < patience_) return false;
  lr_ *= factor_;
  ++cuts_;
  bad_epochs_ = 0;
  return true;
}

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta)
    : patience_(patience), min_delta_(min_delta), best_(std::numeric_limits<double>::infinity()) {}

bool EarlyStopping::update(double val_loss) {
  if (val_loss < best_ - min_delta_) {
    best_ = val_loss;
    since_best_ = 0;
    return false;
  }
  return ++since_best_ >= patience_;
}

// ---- training loop ------------------------------------------------------------

namespace {

struct Batch {
  Tensor x, y;
};

Batch make_batch(const std::vector<data::Sample>& samples, const std::vector<std::size_t>& order, std::size_t from,
                 std::size_t count) {
  const auto& first = samples[order[from]];
  const std::size_t h = first.image.height, w = first.image.width, plane = h * w;
  Batch b{Tensor({count, 1, h, w}), Tensor({count, 1, h, w})};
  for (std::size_t i = 0; i < count; ++i) {
    const auto& s = samples[order[from + i]];
    if (s.image.height != h || s.image.width != w || s.mask.height != h || s.mask.width != w)
      throw ShapeMismatch("sample " + s.id + " differs in size from the rest of its batch");
    std::copy(s.image.values.begin(), s.image.values.end(), b.x.ptr() + i * plane);
    for (std::size_t k = 0; k < plane; ++k) b.y[i * plane + k] = s.mask.bits[k];
  }
  return b;
}

std::vector<std::size_t> iota_order(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

struct Snapshot {
  std::vector<Tensor> params, buffers;
  static Snapshot take(const model::RcaIUnet& net) {
    Snapshot s;
    for (const auto& p : net.parameters()) s.params.push_back(p.var->value);
    for (const auto& b : net.buffers()) s.buffers.push_back(*b.tensor);
    return s;
  }
  void restore(model::RcaIUnet& net) const {
    for (std::size_t i = 0; i < params.size(); ++i) net.parameters()[i].var->value = params[i];
    for (std::size_t i = 0; i < buffers.size(); ++i) *net.buffers()[i].tensor = buffers[i];
  }
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

SplitScores score(model::RcaIUnet& net, const std::vector<data::Sample>& samples, std::size_t batch_size) {
  SplitScores s;
  if (samples.empty()) return s;
  const auto order = iota_order(samples.size());
  for (std::size_t from = 0; from < samples.size(); from += batch_size) {
    const std::size_t count = std::min(batch_size, samples.size() - from);
    const Batch b = make_batch(samples, order, from, count);
    const Tensor p = net.predict(b.x);
    const loss::LossReport r = loss::combined_loss(b.y, p);
    const double k = static_cast<double>(count);
    s.loss += r.total * k;
    s.bce += r.bce_mean * k;
    s.dice_loss += r.dice * k;
    const std::size_t plane = samples[0].image.height * samples[0].image.width;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& truth = samples[from + i].mask;
      Plane prob(truth.height, truth.width);
      std::copy(p.ptr() + i * plane, p.ptr() + (i + 1) * plane, prob.values.begin());
      s.dice += metrics::basic_metrics(metrics::confusion(metrics::binarize(prob, 0.5), truth)).dice;
    }
  }
  const double n = static_cast<double>(samples.size());
  s.loss /= n;
  s.bce /= n;
  s.dice_loss /= n;
  s.dice /= n;
  return s;
}

TrainResult fit(model::RcaIUnet& net, const TrainConfig& cfg, const std::vector<data::Sample>& train_set,
                const std::vector<data::Sample>& val_set, const EpochCallback& on_epoch) {
  validate(cfg);
  if (train_set.empty()) throw BadConfig("training set is empty");
  const auto& val = cfg.val_on_train ? train_set : val_set;
  if (val.empty()) throw BadConfig("validation set is empty");

  TrainResult result;
  Adam adam(net.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
  PlateauScheduler plateau(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.min_delta);
  EarlyStopping stopper(cfg.early_stop_patience, cfg.min_delta);
  Rng shuffle(cfg.seed, 0x7368756666ULL);
  Snapshot best = Snapshot::take(net);
  result.best_val_loss = std::numeric_limits<double>::infinity();
  auto order = iota_order(train_set.size());

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);
    const double lr = adam.lr();
    for (std::size_t from = 0; from < order.size(); from += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - from);
      const Batch b = make_batch(train_set, order, from, count);
      const ag::Var batch_loss = loss::combined(net.forward(ag::constant(b.x), nn::Mode::Train), b.y);
      if (!std::isfinite(batch_loss->value.item())) {
        result.diverged = true;
        result.message = "non-finite loss in epoch " + std::to_string(epoch);
        break;
      }
      adam.step(ag::backward(batch_loss));
    }
    if (result.diverged) break;

    EpochRecord tr{epoch, "train", score(net, train_set, cfg.batch_size), lr};
    EpochRecord va{epoch, "val", cfg.val_on_train ? tr.scores : score(net, val, cfg.batch_size), lr};
    if (!std::isfinite(va.scores.loss) || !std::isfinite(tr.scores.loss)) {
      result.diverged = true;
      result.message = "non-finite evaluation loss in epoch " + std::to_string(epoch);
      break;
    }
    result.log.push_back(tr);
    result.log.push_back(va);
    result.epochs_run = epoch;
    result.best_train_dice = std::max(result.best_train_dice, tr.scores.dice);
    if (on_epoch) on_epoch(tr, va);

    if (va.scores.loss < result.best_val_loss) {
      result.best_val_loss = va.scores.loss;
      result.best_epoch = epoch;
      best = Snapshot::take(net);
    }
    if (cfg.stop_at_train_dice > 0 && tr.scores.dice >= cfg.stop_at_train_dice) break;
    if (stopper.update(va.scores.loss)) {
      result.early_stopped = true;
      break;
    }
    plateau.update(va.scores.loss);
    adam.set_lr(plateau.lr());
  }
  best.restore(net);
  return result;
}

std::string log_csv(const std::vector<EpochRecord>& log) {
  std::ostringstream os;
  os << "epoch,split,L,L_BC,L_DC,DC,lr\n";
  for (const auto& r : log)
    os << r.epoch << ',' << r.split << ',' << fmt(r.scores.loss) << ',' << fmt(r.scores.bce) << ','
       << fmt(r.scores.dice_loss) << ',' << fmt(r.scores.dice) << ',' << fmt(r.lr) << '\n';
  return os.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

}  // namespace

TrainResult run_training(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                         const std::filesystem::path& out_dir, const EpochCallback& on_epoch) {
  validate(cfg);
  const data::LoadResult loaded = data::load_dataset(data_dir, cfg.model.input_size);
  if (loaded.samples.empty()) throw IoError("no usable samples in " + data_dir.string());
  const data::SplitSpec spec{cfg.test_fraction, cfg.val_fraction, cfg.seed};
  const data::Split parts = data::split(loaded.samples, spec);

  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "config.cfg", config_text(cfg));
  nlohmann::json man = data::manifest(parts, spec);
  man["load_issues"] = nlohmann::json::array();
  for (const auto& issue : loaded.issues)
    man["load_issues"].push_back({{"file", issue.file}, {"kind", issue.kind}, {"message", issue.message}});
  write_text(out_dir / "manifest.json", man.dump(2) + "\n");

  model::RcaIUnet net(cfg.model, cfg.seed);
  TrainResult result = fit(net, cfg, parts.train, parts.val, on_epoch);
  write_text(out_dir / "train_log.csv", log_csv(result.log));
  net.save(out_dir / "model.rcam", cfg.archive_dtype == "f32" ? DType::F32 : DType::F64);
  if (result.diverged) throw DivergenceDetected(result.message + "; best checkpoint kept");
  return result;
}

}  // namespace rca::train
