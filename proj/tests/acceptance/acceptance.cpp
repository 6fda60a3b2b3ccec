// Acceptance run: one PASS/FAIL line per criterion, details in --report.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "rcaiunet/data.hpp"
#include "rcaiunet/layers.hpp"
#include "rcaiunet/metrics.hpp"
#include "rcaiunet/model.hpp"
#include "rcaiunet/postprocess.hpp"
#include "rcaiunet/spectral.hpp"
#include "rcaiunet/suites.hpp"
#include "rcaiunet/train.hpp"

using namespace rca;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
};

std::ostringstream report;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1: separable convolution cost ---------------------------------------------

Outcome cost_ratio() {
  const auto t0 = Clock::now();
  std::size_t mismatches = 0, cases = 0;
  for (std::uint64_t r = 1; r <= 128; ++r)
    for (std::uint64_t f : {1, 3, 5})
      for (std::uint64_t d = 1; d <= 64; ++d) {
        ++cases;
        nn::ConvSpec s;
        s.kernel = f;
        s.kernels = r;
        s.depth = d;
        s.input_size = 8;
        // P_DSC / P_SC = d (f^2 + r) / (r f^2 d), reduced by hand
        const std::uint64_t num = d * (f * f + r), den = r * f * f * d, g = std::gcd(num, den);
        const nn::Rational q = nn::separable_cost_ratio(s);
        const auto sc = nn::cost_model(s, nn::ConvKind::Standard);
        const auto dsc = nn::cost_model(s, nn::ConvKind::DepthwiseSeparable);
        // weight tensors [d,1,f,f] and [r,d,1,1]; standard [r,d,f,f]
        const std::uint64_t enum_dsc = d * 1 * f * f + r * d, enum_sc = r * d * f * f;
        const bool ok = q.num == num / g && q.den == den / g && dsc.parameters == enum_dsc &&
                        sc.parameters == enum_sc && dsc.multiplications * q.den == sc.multiplications * q.num;
        mismatches += !ok;
      }
  // the layer itself registers exactly the counted parameters
  Rng rng(0);
  for (std::size_t f : {1, 3, 5})
    for (std::size_t r : {1, 7, 128})
      for (std::size_t d : {1, 13, 64}) {
        nn::ConvSpec s;
        s.kernel = f;
        s.kernels = r;
        s.depth = d;
        nn::DscLayer layer(s, false, rng);
        nn::Registry reg;
        layer.collect(reg, "l");
        ++cases;
        mismatches += nn::trainable_count(reg) != nn::cost_model(s, nn::ConvKind::DepthwiseSeparable).parameters;
      }
  const double secs = since(t0);
  report << "[1] cases " << cases << ", mismatches " << mismatches << ", " << secs << " s\n";
  return {mismatches == 0 && secs < 1.0,
          std::to_string(cases) + " cases, " + std::to_string(mismatches) + " mismatches, " + fmt("%.3f s", secs)};
}

// ---- 2: gradcheck --------------------------------------------------------------

Outcome gradchecks() {
  const auto t0 = Clock::now();
  std::size_t layer_fail = 0, model_fail = 0;
  double layer_worst = 0, model_worst = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& run : suites::layer_gradchecks(seed)) {
      layer_worst = std::max(layer_worst, run.report.max_rel_err());
      if (!run.report.pass()) {
        ++layer_fail;
        report << "[2] layer " << run.name << " seed " << seed << " failed\n" << run.report.table();
      }
    }
  }
  const double layer_secs = since(t0);
  report << "[2] layers: " << layer_fail << " failures, worst rel err " << layer_worst << ", " << layer_secs << " s\n";
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto run = suites::model_gradcheck(seed);
    model_worst = std::max(model_worst, run.report.max_rel_err());
    model_fail += !run.report.pass();
    report << "[2] model seed " << seed << ": " << (run.report.pass() ? "pass" : "fail") << ", max rel err "
           << run.report.max_rel_err() << ", " << run.seconds << " s\n"
           << run.report.table();
  }
  const double secs = since(t0);
  return {layer_fail == 0 && model_fail == 0 && secs < 300.0,
          "layers " + std::to_string(layer_fail) + " failing (worst " + fmt("%.2e", layer_worst) + "), model " +
              std::to_string(model_fail) + "/5 seeds failing (worst " + fmt("%.2e", model_worst) + "), " +
              fmt("%.1f s", secs)};
}

// ---- 3: spectral pooling -------------------------------------------------------

Outcome spectral() {
  const auto t0 = Clock::now();
  Rng rng(3);
  double oracle_err = 0, const_err = 0, parseval_err = 0;
  for (std::size_t h = 8; h <= 32; h += 3)
    for (std::size_t w = 8; w <= 32; w += 4) {
      const Tensor x = rng.uniform_tensor({1, 1, h, w}, -1, 1);
      for (auto [oh, ow] : {std::pair{h / 2, w / 2}, std::pair{(h + 1) / 2, (w + 1) / 2}, std::pair{h - 1, w - 3}}) {
        const Tensor y = spectral_pool(x, oh, ow);
        const auto ref = oracle::band_limit(x.ptr(), h, w, oh, ow);
        for (std::size_t i = 0; i < ref.size(); ++i) oracle_err = std::max(oracle_err, std::abs(y[i] - ref[i]));
        const Tensor c = spectral_pool(Tensor({1, 1, h, w}, 0.37), oh, ow);
        for (double v : c.data()) const_err = std::max(const_err, std::abs(v - 0.37));
      }
      const auto spec = dft2d(x);
      double e_x = 0, e_f = 0;
      for (double v : x.data()) e_x += v * v;
      for (std::size_t i = 0; i < spec.numel(); ++i) e_f += spec.re[i] * spec.re[i] + spec.im[i] * spec.im[i];
      parseval_err = std::max(parseval_err, std::abs(e_f / double(h * w) - e_x) / e_x);
    }
  const double secs = since(t0);
  report << "[3] oracle err " << oracle_err << ", constant err " << const_err << ", parseval rel err " << parseval_err
         << ", " << secs << " s\n";
  return {oracle_err <= 1e-9 && const_err <= 1e-9 && parseval_err <= 1e-9 && secs < 30.0,
          "oracle " + fmt("%.2e", oracle_err) + ", constants " + fmt("%.2e", const_err) + ", Parseval " +
              fmt("%.2e", parseval_err) + ", " + fmt("%.2f s", secs)};
}

// ---- 4: loss ---------------------------------------------------------------------

Outcome losses() {
  bool ok = true;
  double split = 0, bce = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = suites::loss_checks(seed);
    ok &= c.pass();
    split = std::max(split, c.split_identity_err);
    bce = std::max(bce, c.bce_closed_form_err);
    if (seed == 0) {
      report << "[4] dice gradient table (quoted closed form vs autograd vs central differences)\n"
             << c.dice_table_text << "[4] max |quoted - numeric| = " << c.reference_max_abs_gap << "\n";
      ok &= !c.dice_table_text.empty();
    }
  }
  report << "[4] split identity err " << split << ", bce gradient err " << bce << "\n";
  return {ok, "split " + fmt("%.1e", split) + ", BCE grad " + fmt("%.1e", bce) + ", dice table written"};
}

// ---- 5: metrics ------------------------------------------------------------------

Outcome metric_oracles() {
  Rng rng(5);
  double err = 0;
  for (int k = 0; k < 1000; ++k) {
    const double fill = rng.uniform(0.05, 0.6);
    const Mask p = oracle::random_mask(rng, 16, 16, fill), g = oracle::random_mask(rng, 16, 16, fill);
    const auto o = oracle::counts(p, g);
    const auto c = metrics::confusion(p, g);
    const auto m = metrics::basic_metrics(c);
    auto ratio = [](double a, double b, double other) { return b == 0 ? (other == 0 ? 1.0 : 0.0) : a / b; };
    err = std::max(err, std::abs(m.accuracy - (o.tp + o.tn) / 256.0));
    err = std::max(err, std::abs(m.precision - ratio(o.tp, o.tp + o.fp, o.fn)));
    err = std::max(err, std::abs(m.recall - ratio(o.tp, o.tp + o.fn, o.fp)));
    err = std::max(err, std::abs(m.dice - ratio(2 * o.tp, 2 * o.tp + o.fp + o.fn, 0)));
    const double j = metrics::iou(c);
    err = std::max(err, std::abs(m.dice - 2 * j / (1 + j)));
    err = std::max(err, std::abs(metrics::mae(p, g) - (o.fp + o.fn) / 256.0));
    if (p.count() && g.count()) err = std::max(err, std::abs(metrics::ahd(p, g).value - oracle::exhaustive_ahd(p, g)));
    Plane prob(16, 16);
    for (double& v : prob.values) v = rng.uniform();
    err = std::max(err, std::abs(metrics::miou(prob, g) - oracle::loop_miou(prob, g)));
  }
  Mask a(8, 8), b(8, 8);
  a(0, 0) = 1;
  b(3, 4) = 1;
  const double example = metrics::ahd(a, b).value;
  report << "[5] max oracle err " << err << ", AHD example " << example << "\n";
  return {err <= 1e-9 && std::abs(example - 5.0) <= 1e-12,
          "max err " + fmt("%.1e", err) + " over 1000 pairs, AHD example " + fmt("%.6f", example)};
}

// ---- 6 and 8: overfit and post-processing ----------------------------------------

struct Overfit {
  std::optional<model::RcaIUnet> net;
  double train_dice = 0;
  std::size_t epochs = 0;
  double seconds = 0;
};

Overfit overfit() {
  const auto t0 = Clock::now();
  const auto samples = data::generate_synthetic(8, 64, 6);
  train::TrainConfig cfg;
  cfg.model.base_channels = 8;
  cfg.model.input_size = 64;
  cfg.max_epochs = 200;
  cfg.batch_size = 8;
  cfg.val_on_train = true;
  cfg.stop_at_train_dice = 0.95;
  cfg.early_stop_patience = 200;
  Overfit o;
  o.net.emplace(cfg.model, cfg.seed);
  const auto r = train::fit(*o.net, cfg, samples, samples, [&](const train::EpochRecord& tr, const train::EpochRecord&) {
    if (tr.epoch % 10 == 0) report << "[6] epoch " << tr.epoch << " L " << tr.scores.loss << " DC " << tr.scores.dice << "\n";
  });
  o.train_dice = train::score(*o.net, samples, 8).dice;
  o.epochs = r.epochs_run;
  o.seconds = since(t0);
  report << "[6] epochs " << o.epochs << ", train DC " << o.train_dice << ", " << o.seconds << " s\n";
  return o;
}

Outcome postprocessing(model::RcaIUnet* net) {
  bool ok = true;
  Mask ring(12, 12);
  for (std::size_t i = 2; i <= 9; ++i) ring(2, i) = ring(9, i) = ring(i, 2) = ring(i, 9) = 1;
  const bool ring_ok = postprocess::fill_holes(ring).count() == 64;
  Mask speck(100, 100);
  for (std::size_t r = 10; r < 40; ++r)
    for (std::size_t c = 10; c < 40; ++c) speck(r, c) = 1;
  speck(80, 80) = 1;
  const bool speck_ok = postprocess::remove_small_regions(speck)(80, 80) == 0 &&
                        postprocess::remove_small_regions(speck).count() == 900;
  Rng rng(8);
  bool idem = true;
  for (int k = 0; k < 50; ++k) {
    Plane p(32, 32);
    for (double& v : p.values) v = rng.uniform();
    const Mask once = postprocess::refine(p);
    idem &= postprocess::refine(as_plane(once)) == once;
  }
  ok = ring_ok && speck_ok && idem;
  std::string summary = std::string("ring ") + (ring_ok ? "ok" : "bad") + ", speck " + (speck_ok ? "ok" : "bad") +
                        ", idempotent " + (idem ? "yes" : "no");
  if (!net) return {false, summary + ", no trained model"};

  const auto test = data::generate_synthetic(50, 64, 88);
  double with = 0, without = 0;
  for (const auto& s : test) {
    const Plane prob = plane_from(net->predict(to_tensor(s.image)));
    without += metrics::basic_metrics(metrics::confusion(postprocess::threshold(prob, 0.5), s.mask)).dice;
    with += metrics::basic_metrics(metrics::confusion(postprocess::refine(prob), s.mask)).dice;
  }
  with /= 50;
  without /= 50;
  report << "[8] mean DC on 50 test images: with PP " << with << ", without " << without << "\n";
  ok &= with >= without - 0.01;
  return {ok, summary + ", DC with PP " + fmt("%.4f", with) + " vs without " + fmt("%.4f", without)};
}

// ---- 7: calibrated parameter count ---------------------------------------------

Outcome parameters() {
  model::RcaIUnet net(model::ModelConfig{}, 0);
  std::size_t sum = 0;
  for (const auto& row : net.param_table()) sum += row.count;
  const std::size_t n = net.param_count();
  report << "[7] C1 " << net.config().base_channels << ", params " << n << ", table sum " << sum << "\n";
  return {n >= 2'400'000 && n <= 3'400'000 && sum == n,
          "C1 " + std::to_string(net.config().base_channels) + ", " + std::to_string(n) + " params, table sum " +
              std::to_string(sum)};
}

// ---- 9: reproducible training --------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

Outcome reproducible(const fs::path& work) {
  const fs::path data_dir = work / "data";
  fs::remove_all(work);
  data::write_dataset(data_dir, data::generate_synthetic(8, 32, 9));
  train::TrainConfig cfg;
  cfg.model.base_channels = 4;
  cfg.model.input_size = 32;
  cfg.max_epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 42;
  train::run_training(cfg, data_dir, work / "a");
  train::run_training(cfg, data_dir, work / "b");
  std::size_t same = 0, total = 0;
  for (const char* name : {"train_log.csv", "model.rcam", "manifest.json", "config.cfg"}) {
    ++total;
    const std::string a = slurp(work / "a" / name), b = slurp(work / "b" / name);
    const bool eq = !a.empty() && a == b;
    same += eq;
    report << "[9] " << name << ": " << a.size() << " bytes, " << (eq ? "identical" : "DIFFERENT") << "\n";
  }
  fs::remove_all(work);
  return {same == total, std::to_string(same) + "/" + std::to_string(total) + " artefacts byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path report_path = "acceptance_report.txt";
  std::set<int> only;  // empty runs everything
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--report") report_path = argv[i + 1];
    if (std::string(argv[i]) == "--only") only.insert(std::stoi(argv[i + 1]));
  }

  std::vector<std::pair<int, Outcome>> results;
  auto run = [&](int id, const std::function<Outcome()>& f) {
    if (!only.empty() && !only.count(id)) return;
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.summary << std::endl;
    results.emplace_back(id, o);
  };

  run(1, cost_ratio);
  run(2, gradchecks);
  run(3, spectral);
  run(4, losses);
  run(5, metric_oracles);
  Overfit fitted;
  run(6, [&] {
    fitted = overfit();
    return Outcome{fitted.train_dice >= 0.95 && fitted.seconds < 600.0,
                   "train DC " + fmt("%.4f", fitted.train_dice) + " after " + std::to_string(fitted.epochs) +
                       " epochs, " + fmt("%.1f s", fitted.seconds)};
  });
  run(7, parameters);
  run(8, [&] { return postprocessing(fitted.net ? &*fitted.net : nullptr); });
  run(9, [&] { return reproducible(fs::temp_directory_path() / "rcaiunet_acceptance_repro"); });

  std::ofstream out(report_path);
  for (const auto& [id, o] : results) out << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.summary << "\n";
  out << "\n" << report.str();
  return 0;
}
