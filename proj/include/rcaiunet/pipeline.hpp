#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcaiunet/metrics.hpp"
#include "rcaiunet/model.hpp"

namespace rca::pipeline {

namespace fs = std::filesystem;

struct InferResult {
  std::vector<std::string> ids;
  std::vector<double> forward_ms;  // per image, forward pass only
  double mean_ms = 0.0;
  std::vector<std::string> errors;  // per-file load failures
};

/// For every non-mask PNG in `images_dir`: preprocess to the model size,
/// predict, resize the probability map back to the source size, then write
/// <id>.png (binary mask, refined when `postprocess`) and <id>_prob.rten.
/// Per-image times go to timing.csv.
InferResult infer(model::RcaIUnet& net, const fs::path& images_dir, const fs::path& out_dir, bool postprocess);

/// Probability map of one raw image at its own resolution.
Plane predict_probability(model::RcaIUnet& net, const Plane& raw);

struct EvaluateResult {
  std::vector<metrics::ImageMetrics> rows;
};

/// Ground truth ids come from `gt_dir` (<id>_mask.png or <id>.png). With
/// `probs_dir`, masks are derived from <id>_prob.rten and both PP=N
/// (threshold 0.5) and PP=Y (refine) rows are reported; otherwise the masks in
/// `pred_dir` are scored as PP=N. Writes evaluation.csv and evaluation.json.
/// Throws IdMismatch naming every unmatched id.
EvaluateResult evaluate(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& probs_dir,
                        const fs::path& out_dir);

/// Parameter count, forward time statistics and the environment record.
nlohmann::json bench(model::RcaIUnet& net, std::size_t count, std::uint64_t seed = 0);

}  // namespace rca::pipeline
