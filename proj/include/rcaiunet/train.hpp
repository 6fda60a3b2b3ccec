#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rcaiunet/data.hpp"
#include "rcaiunet/model.hpp"

namespace rca::train {

struct TrainConfig {
  model::ModelConfig model;

  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  double plateau_factor = 0.5;
  std::size_t plateau_patience = 5;
  double min_delta = 1e-4;  // smallest val-loss drop that counts as improvement
  std::size_t early_stop_patience = 10;

  std::size_t batch_size = 8;
  std::size_t max_epochs = 100;
  std::uint64_t seed = 0;

  double test_fraction = 0.30;
  double val_fraction = 0.30;
  bool val_on_train = false;      // validate on the training set (overfit runs)
  double stop_at_train_dice = 0;  // stop once train DC reaches this; 0 disables
  std::string archive_dtype = "f64";
};

/// Sets one field from its key=value spelling. Throws BadConfig for an
/// unknown key or an unparsable value.
void set_field(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Applies `key=value` lines; blank lines and '#' comments are ignored.
void apply_config_text(TrainConfig& cfg, std::istream& is);
TrainConfig load_config(const std::filesystem::path& path);
/// Every field as key=value lines, in a fixed order.
std::string config_text(const TrainConfig& cfg);
/// Throws BadConfig for out-of-range values.
void validate(const TrainConfig& cfg);

class Adam {
 public:
  Adam(std::vector<ag::NamedVar> params, double lr, double beta1, double beta2, double epsilon);

  void step(const ag::Gradients& grads);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t steps() const { return t_; }

 private:
  std::vector<ag::NamedVar> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, epsilon_;
  std::size_t t_ = 0;
};

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a val-loss drop larger than `min_delta`.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, std::size_t patience, double min_delta);
  /// Returns true when this epoch triggered a cut.
  bool update(double val_loss);
  double lr() const { return lr_; }
  std::size_t cuts() const { return cuts_; }

 private:
  double lr_, factor_;
  std::size_t patience_;
  double min_delta_;
  double best_;
  std::size_t bad_epochs_ = 0;
  std::size_t cuts_ = 0;
};

/// Signals a stop after `patience` consecutive epochs without improvement.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta);
  bool update(double val_loss);

 private:
  std::size_t patience_;
  double min_delta_;
  double best_;
  std::size_t since_best_ = 0;
};

struct SplitScores {
  double loss = 0, bce = 0, dice_loss = 0;
  double dice = 0;  // mean per-image hard DC at 0.5
};

/// Eval-mode losses and mean hard DC over `samples`, in batches.
SplitScores score(model::RcaIUnet& net, const std::vector<data::Sample>& samples, std::size_t batch_size);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;
  SplitScores scores;
  double lr = 0;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0;
  double best_train_dice = 0;
  bool early_stopped = false;
  bool diverged = false;
  std::string message;
};

using EpochCallback = std::function<void(const EpochRecord& train, const EpochRecord& val)>;

/// Adam on the combined loss with the plateau schedule and early stopping.
/// On return `net` holds the weights of the best val-loss epoch. A non-finite
/// batch loss ends training with `diverged` set.
TrainResult fit(model::RcaIUnet& net, const TrainConfig& cfg, const std::vector<data::Sample>& train_set,
                const std::vector<data::Sample>& val_set, const EpochCallback& on_epoch = {});

/// CSV: epoch,split,L,L_BC,L_DC,DC,lr.
std::string log_csv(const std::vector<EpochRecord>& log);

/// Loads `data_dir`, splits, trains and writes train_log.csv, model.rcam,
/// manifest.json and config.cfg into `out_dir`. Throws DivergenceDetected
/// after writing the last good checkpoint.
TrainResult run_training(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                         const std::filesystem::path& out_dir, const EpochCallback& on_epoch = {});

}  // namespace rca::train
