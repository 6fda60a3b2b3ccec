#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcaiunet/image.hpp"

namespace rca::model {
class RcaIUnet;
}

namespace rca::metrics {

struct Confusion {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::uint64_t total() const { return tp + tn + fp + fn; }
};

/// Throws ShapeMismatch when the masks differ in size.
Confusion confusion(const Mask& pred, const Mask& truth);

/// Ratios with an empty denominator evaluate to 1 when the complementary
/// error count is 0, else 0; `dice_convention` marks the both-empty case.
struct BasicMetrics {
  double accuracy = 0, precision = 0, recall = 0, dice = 0;
  bool dice_convention = false;
};
BasicMetrics basic_metrics(const Confusion& c);

/// TP / (TP + FP + FN); 1 when both masks are empty.
double iou(const Confusion& c);

/// Binarization thresholds 0.50, 0.55, ..., 0.95.
std::vector<double> miou_thresholds();
/// Mask of pixels strictly above t.
Mask binarize(const Plane& prob, double t);
/// Mean IoU over miou_thresholds().
double miou(const Plane& prob, const Mask& truth);

struct Ahd {
  double value = 0.0;
  bool sentinel = false;  // a mask was empty; value is the image diagonal
};
/// Symmetric mean of directed nearest-foreground Euclidean distances.
Ahd ahd(const Mask& pred, const Mask& truth);

double mae(const Mask& pred, const Mask& truth);

struct ImageMetrics {
  std::string id;
  std::string pp = "N";  // post-processing applied: N or Y
  double accuracy = 0, precision = 0, recall = 0, dice = 0, miou = 0, ahd = 0, mae = 0;
  bool dice_convention = false;
  bool ahd_sentinel = false;
};

/// All per-image metrics; mIoU sweeps `prob` when given, else the mask itself.
ImageMetrics evaluate_pair(const std::string& id, const Mask& pred, const Mask& truth,
                           const Plane* prob = nullptr);

/// Field-wise mean of a group of rows (id "mean").
ImageMetrics mean_row(const std::vector<ImageMetrics>& rows, const std::string& pp);

/// CSV with header id,pp,Acc,Pr,R,DC,mIoU,AHD,MAE,flags followed by one mean
/// row per pp group.
std::string metrics_csv(const std::vector<ImageMetrics>& rows);
nlohmann::json metrics_json(const std::vector<ImageMetrics>& rows);

struct InferenceTiming {
  std::vector<double> per_sample_ms;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  std::size_t warmups = 3;
  nlohmann::json environment;
};

/// Forward-pass wall time per image after `warmups` passes over the first
/// image. Post-processing is not included.
InferenceTiming inference_time(model::RcaIUnet& net, const std::vector<Plane>& images, std::size_t warmups = 3);

/// Thread count, compute precision and compiler of this build.
nlohmann::json environment_record();

}  // namespace rca::metrics
