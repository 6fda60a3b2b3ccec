#include "rcaiunet/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

#include "rcaiunet/data.hpp"
#include "rcaiunet/errors.hpp"
#include "rcaiunet/postprocess.hpp"
#include "rcaiunet/random.hpp"
#include "rcaiunet/rten.hpp"

namespace rca::pipeline {

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Plane predict_probability(model::RcaIUnet& net, const Plane& raw) {
  const std::size_t size = net.config().input_size;
  const Plane x = data::preprocess_image(raw, size);
  const Plane prob = plane_from(net.predict(to_tensor(x)));
  return data::resize_bilinear(prob, raw.height, raw.width);
}

InferResult infer(model::RcaIUnet& net, const fs::path& images_dir, const fs::path& out_dir, bool postprocess) {
  InferResult r;
  fs::create_directories(out_dir);
  const std::size_t size = net.config().input_size;
  std::ostringstream timing;
  timing << "id,forward_ms\n";
  for (const auto& path : png_files(images_dir)) {
    if (data::is_mask_file(path)) continue;
    const std::string id = path.stem().string();
    Plane raw;
    try {
      raw = data::read_png(path);
    } catch (const CorruptImage& e) {
      r.errors.push_back(e.what());
      continue;
    }
    const Tensor x = to_tensor(data::preprocess_image(raw, size));
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor p = net.predict(x);
    const auto t1 = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    const Plane prob = data::resize_bilinear(plane_from(p), raw.height, raw.width);
    const Mask mask = postprocess ? postprocess::refine(prob) : postprocess::threshold(prob, 0.5);
    data::write_mask_png(out_dir / (id + ".png"), mask);
    save_rten(out_dir / (id + "_prob.rten"), Tensor({prob.height, prob.width}, prob.values));
    r.ids.push_back(id);
    r.forward_ms.push_back(ms);
    timing << id << ',' << ms << '\n';
  }
  double sum = 0.0;
  for (double v : r.forward_ms) sum += v;
  r.mean_ms = r.forward_ms.empty() ? 0.0 : sum / static_cast<double>(r.forward_ms.size());
  timing << "mean," << r.mean_ms << '\n';
  write_text(out_dir / "timing.csv", timing.str());
  return r;
}

EvaluateResult evaluate(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& probs_dir,
                        const fs::path& out_dir) {
  std::map<std::string, fs::path> truth;
  for (const auto& path : png_files(gt_dir)) {
    std::string id = path.stem().string();
    if (data::is_mask_file(path)) {
      if (id.size() < 5 || id.substr(id.size() - 5) != "_mask") continue;  // <id>_mask_<k> extras
      id.resize(id.size() - 5);
    } else if (fs::exists(gt_dir / (id + "_mask.png"))) {
      continue;  // an image with its own mask file
    }
    truth[id] = path;
  }

  const bool with_probs = !probs_dir.empty();
  auto source_of = [&](const std::string& id) {
    return with_probs ? probs_dir / (id + "_prob.rten") : pred_dir / (id + ".png");
  };
  std::vector<std::string> missing;
  for (const auto& [id, path] : truth)
    if (!fs::exists(source_of(id))) missing.push_back(id);
  if (!with_probs) {
    for (const auto& path : png_files(pred_dir)) {
      const std::string id = path.stem().string();
      if (!truth.count(id)) missing.push_back(id + " (no ground truth)");
    }
  }
  if (!missing.empty()) {
    std::string msg = "unmatched ids:";
    for (const auto& m : missing) msg += " " + m;
    throw IdMismatch(msg);
  }

  EvaluateResult r;
  for (const auto& [id, gt_path] : truth) {
    const Mask gt = data::read_mask_png(gt_path);
    if (with_probs) {
      const Plane prob = plane_from(load_rten(source_of(id)));
      r.rows.push_back(metrics::evaluate_pair(id, postprocess::threshold(prob, 0.5), gt, &prob));
      metrics::ImageMetrics refined = metrics::evaluate_pair(id, postprocess::refine(prob), gt);
      refined.pp = "Y";
      r.rows.push_back(refined);
    } else {
      r.rows.push_back(metrics::evaluate_pair(id, data::read_mask_png(source_of(id)), gt));
    }
  }
  fs::create_directories(out_dir);
  write_text(out_dir / "evaluation.csv", metrics::metrics_csv(r.rows));
  write_text(out_dir / "evaluation.json", metrics::metrics_json(r.rows).dump(2) + "\n");
  return r;
}

nlohmann::json bench(model::RcaIUnet& net, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw BadConfig("bench needs count >= 1");
  const std::size_t size = net.config().input_size;
  Rng rng(seed, 0x62656e6368ULL);
  std::vector<Plane> images;
  for (std::size_t i = 0; i < count; ++i) {
    Plane p(size, size);
    for (double& v : p.values) v = rng.uniform();
    images.push_back(std::move(p));
  }
  const metrics::InferenceTiming t = metrics::inference_time(net, images);
  return {{"param_count", net.param_count()},
          {"input_size", size},
          {"base_channels", net.config().base_channels},
          {"count", count},
          {"warmups", t.warmups},
          {"mean_ms", t.mean_ms},
          {"stddev_ms", t.stddev_ms},
          {"per_sample_ms", t.per_sample_ms},
          {"environment", t.environment}};
}

}  // namespace rca::pipeline
