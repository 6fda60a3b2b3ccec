#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rcaiunet/data.hpp"
#include "rcaiunet/errors.hpp"
#include "rcaiunet/model.hpp"
#include "rcaiunet/pipeline.hpp"
#include "rcaiunet/suites.hpp"
#include "rcaiunet/train.hpp"

namespace fs = std::filesystem;
using namespace rca;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kIo = 2;

train::TrainConfig build_config(const std::string& path, const std::vector<std::string>& overrides) {
  train::TrainConfig cfg = path.empty() ? train::TrainConfig{} : train::load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw BadConfig("--set expects key=value, got '" + kv + "'");
    train::set_field(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

int cmd_train(const std::string& config, const std::vector<std::string>& sets, const fs::path& data_dir,
              const fs::path& out, bool quiet) {
  const train::TrainConfig cfg = build_config(config, sets);
  const auto result = train::run_training(cfg, data_dir, out, [&](const auto& tr, const auto& va) {
    if (quiet) return;
    std::printf("epoch %3zu  train L %.5f DC %.4f  val L %.5f DC %.4f  lr %.3g\n", tr.epoch, tr.scores.loss,
                tr.scores.dice, va.scores.loss, va.scores.dice, tr.lr);
    std::fflush(stdout);
  });
  std::printf("epochs %zu, best epoch %zu, best val loss %.6f%s\n", result.epochs_run, result.best_epoch,
              result.best_val_loss, result.early_stopped ? ", early stop" : "");
  return kOk;
}

int cmd_infer(const fs::path& model_path, const fs::path& images, const fs::path& out, bool pp) {
  auto net = model::RcaIUnet::load(model_path);
  const auto r = pipeline::infer(net, images, out, pp);
  for (const auto& e : r.errors) std::fprintf(stderr, "skipped: %s\n", e.c_str());
  std::printf("%zu masks written to %s, mean forward %.2f ms\n", r.ids.size(), out.c_str(), r.mean_ms);
  return r.errors.empty() ? kOk : kIo;
}

int cmd_evaluate(const fs::path& pred, const fs::path& gt, const fs::path& probs, const fs::path& out) {
  const auto r = pipeline::evaluate(pred, gt, probs, out);
  for (const std::string pp : {"N", "Y"}) {
    bool any = false;
    for (const auto& row : r.rows) any = any || row.pp == pp;
    if (!any) continue;
    const auto m = metrics::mean_row(r.rows, pp);
    std::printf("PP=%s  Acc %.4f  Pr %.4f  R %.4f  DC %.4f  mIoU %.4f  AHD %.3f  MAE %.4f\n", pp.c_str(), m.accuracy,
                m.precision, m.recall, m.dice, m.miou, m.ahd, m.mae);
  }
  return kOk;
}

void print_runs(const std::vector<suites::CheckRun>& runs, std::ostream& json) {
  for (const auto& run : runs) {
    std::printf("== %s (seed %llu): %s, max rel err %.3e, %.1f s\n", run.name.c_str(),
                static_cast<unsigned long long>(run.seed), run.report.pass() ? "pass" : "FAIL",
                run.report.max_rel_err(), run.seconds);
    if (!run.report.pass()) std::fputs(run.report.table().c_str(), stdout);
    json << run.report.json_lines();
  }
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seeds, const std::string& json_path) {
  std::ostringstream json;
  bool ok = true;
  if (scope == "layers") {
    for (std::uint64_t s = 0; s < seeds; ++s) {
      const auto runs = suites::layer_gradchecks(s);
      print_runs(runs, json);
      for (const auto& r : runs) ok = ok && r.report.pass();
    }
  } else if (scope == "model") {
    for (std::uint64_t s = 0; s < seeds; ++s) {
      const auto run = suites::model_gradcheck(s);
      print_runs({run}, json);
      ok = ok && run.report.pass();
    }
  } else if (scope == "loss") {
    for (std::uint64_t s = 0; s < seeds; ++s) {
      const auto c = suites::loss_checks(s);
      std::printf("== loss (seed %llu): %s\n", static_cast<unsigned long long>(s), c.pass() ? "pass" : "FAIL");
      std::printf("  |L - (BCE + Dice)/2|            %.3e\n", c.split_identity_err);
      std::printf("  BCE grad vs (p-y)/(p(1-p))      %.3e\n", c.bce_closed_form_err);
      std::printf("  grad L vs (grad BCE + grad Dice)/2  %.3e\n", c.combined_linearity_err);
      std::printf("  autograd vs finite differences  %.3e\n", c.autograd_vs_numeric);
      std::printf("  quoted dice gradient vs finite differences, max abs gap %.3e\n", c.reference_max_abs_gap);
      std::fputs(c.dice_table_text.c_str(), stdout);
      json << nlohmann::json{{"scope", "loss"},
                             {"seed", s},
                             {"split_identity_err", c.split_identity_err},
                             {"bce_closed_form_err", c.bce_closed_form_err},
                             {"combined_linearity_err", c.combined_linearity_err},
                             {"autograd_vs_numeric", c.autograd_vs_numeric},
                             {"reference_max_abs_gap", c.reference_max_abs_gap},
                             {"pass", c.pass()}}
                  .dump()
           << '\n';
      ok = ok && c.pass();
    }
  } else {
    throw BadConfig("unknown scope '" + scope + "' (layers, model, loss)");
  }
  if (!json_path.empty()) write_file(json_path, json.str());
  std::printf("gradcheck %s: %s\n", scope.c_str(), ok ? "pass" : "FAIL");
  return ok ? kOk : kValidation;
}

int cmd_bench(const std::string& model_path, std::optional<std::size_t> size, std::size_t count,
              const std::string& config, const std::vector<std::string>& sets, const std::string& out) {
  std::optional<model::RcaIUnet> net;
  if (!model_path.empty()) {
    net.emplace(model::RcaIUnet::load(model_path));
    if (size && *size != net->config().input_size)
      throw BadConfig("--size " + std::to_string(*size) + " differs from the model input size " +
                      std::to_string(net->config().input_size));
  } else {
    train::TrainConfig cfg = build_config(config, sets);
    if (size) cfg.model.input_size = *size;
    net.emplace(cfg.model, cfg.seed);
  }
  const auto report = pipeline::bench(*net, count);
  std::printf("%s\n", report.dump(2).c_str());
  if (!out.empty()) write_file(out, report.dump(2) + "\n");
  return kOk;
}

int cmd_params(const std::string& config, const std::vector<std::string>& sets) {
  const train::TrainConfig cfg = build_config(config, sets);
  cfg.model.validate();
  const model::RcaIUnet net(cfg.model, cfg.seed);
  std::size_t sum = 0;
  for (const auto& row : net.param_table()) {
    std::string shape;
    for (std::size_t d : row.shape) shape += (shape.empty() ? "" : "x") + std::to_string(d);
    std::printf("%-48s %-16s %10zu\n", row.name.c_str(), shape.c_str(), row.count);
    sum += row.count;
  }
  std::printf("%-48s %-16s %10zu\n", "total", "", net.param_count());
  return sum == net.param_count() ? kOk : kValidation;
}

int cmd_synth(std::size_t count, std::size_t size, std::uint64_t seed, const fs::path& out) {
  data::write_dataset(out, data::generate_synthetic(count, size, seed));
  std::printf("%zu samples written to %s\n", count, out.c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RCA-IUnet segmentation toolkit"};
  app.require_subcommand(1);

  std::string config, data_dir, out, model_path, images, pred, gt, probs, scope = "layers", json_path;
  std::vector<std::string> sets;
  bool quiet = false, pp = false;
  std::uint64_t seeds = 5, seed = 0;
  std::size_t count = 10, size = 0;

  auto* train = app.add_subcommand("train", "Train a model on <id>.png / <id>_mask.png pairs");
  train->add_option("--config", config, "key=value config file")->check(CLI::ExistingFile);
  train->add_option("--set", sets, "override a config key (key=value)");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out, "output directory")->required();
  train->add_flag("--quiet", quiet, "no per-epoch output");

  auto* infer = app.add_subcommand("infer", "Predict masks for a directory of images");
  infer->add_option("--model", model_path, "model archive")->required();
  infer->add_option("--images", images, "image directory")->required();
  infer->add_option("--out", out, "output directory")->required();
  infer->add_flag("--postprocess", pp, "threshold, fill holes and drop small regions");

  auto* evaluate = app.add_subcommand("evaluate", "Score predicted masks against ground truth");
  evaluate->add_option("--pred", pred, "predicted mask directory")->required();
  evaluate->add_option("--gt", gt, "ground-truth directory")->required();
  evaluate->add_option("--probs", probs, "probability maps (<id>_prob.rten); adds PP=Y rows");
  evaluate->add_option("--out", out, "report directory")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad->add_option("--scope", scope, "layers, model or loss")->check(CLI::IsMember({"layers", "model", "loss"}));
  grad->add_option("--seeds", seeds, "seeds 0 .. N-1");
  grad->add_option("--json", json_path, "write JSON lines here");

  auto* bench = app.add_subcommand("bench", "Forward-pass timing");
  bench->add_option("--model", model_path, "model archive (default: fresh model from the config)");
  auto* size_opt = bench->add_option("--size", size, "input size");
  bench->add_option("--count", count, "timed images");
  bench->add_option("--config", config, "config for a fresh model")->check(CLI::ExistingFile);
  bench->add_option("--set", sets, "override a config key (key=value)");
  bench->add_option("--out", out, "write the JSON report here");

  auto* params = app.add_subcommand("params", "Per-tensor trainable parameter table");
  params->add_option("--config", config, "key=value config file")->check(CLI::ExistingFile);
  params->add_option("--set", sets, "override a config key (key=value)");

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  synth->add_option("--count", count, "sample count")->required();
  synth->add_option("--size", size, "image side")->required();
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*train) return cmd_train(config, sets, data_dir, out, quiet);
    if (*infer) return cmd_infer(model_path, images, out, pp);
    if (*evaluate) return cmd_evaluate(pred, gt, probs, out);
    if (*grad) return cmd_gradcheck(scope, seeds, json_path);
    if (*bench)
      return cmd_bench(model_path, size_opt->count() ? std::optional<std::size_t>(size) : std::nullopt, count, config,
                       sets, out);
    if (*params) return cmd_params(config, sets);
    if (*synth) return cmd_synth(count, size, seed, out);
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kIo;
  } catch (const CorruptImage& e) {
    std::fprintf(stderr, "corrupt image: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kValidation;
  }
  return kValidation;
}
