#include "rcaiunet/metrics.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "rcaiunet/errors.hpp"
#include "rcaiunet/model.hpp"

namespace rca::metrics {

namespace {

void require_same(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeMismatch("mask sizes differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                        std::to_string(b.height) + "x" + std::to_string(b.width));
}

// Ratio num / den; an empty denominator gives 1 when `other_errors` is 0.
double ratio(std::uint64_t num, std::uint64_t den, std::uint64_t other_errors) {
  if (den == 0) return other_errors == 0 ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

// 1-D squared distance transform (lower envelope of parabolas).
void dt1d(const double* f, std::size_t n, double* d, std::vector<std::size_t>& v, std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q)
    if (f[q] < inf) { first = q; break; }
  if (first == n) {
    for (std::size_t q = 0; q < n; ++q) d[q] = inf;
    return;
  }
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (!(f[q] < inf)) continue;
    const double qd = static_cast<double>(q);
    double s;
    while (true) {
      const double vk = static_cast<double>(v[k]);
      s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
      if (s > z[k]) break;
      --k;  // z[0] is -inf, so this stops at k = 0
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double qd = static_cast<double>(q);
    while (z[k + 1] < qd) ++k;
    const double dq = qd - static_cast<double>(v[k]);
    d[q] = dq * dq + f[v[k]];
  }
}

// Exact squared Euclidean distance from every pixel to the nearest set pixel.
std::vector<double> squared_distance_map(const Mask& m) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t h = m.height, w = m.width, n = std::max(h, w);
  std::vector<double> g(h * w);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = m.bits[i] ? 0.0 : inf;
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<std::size_t> v(n);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) f[r] = g[r * w + c];
    dt1d(f.data(), h, d.data(), v, z);
    for (std::size_t r = 0; r < h; ++r) g[r * w + c] = d[r];
  }
  for (std::size_t r = 0; r < h; ++r) {
    dt1d(&g[r * w], w, d.data(), v, z);
    std::copy(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(w), g.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  return g;
}

double directed_mean(const Mask& from, const std::vector<double>& to_sq) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < from.bits.size(); ++i) {
    if (!from.bits[i]) continue;
    sum += std::sqrt(to_sq[i]);
    ++n;
  }
  return sum / static_cast<double>(n);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

Confusion confusion(const Mask& pred, const Mask& truth) {
  require_same(pred, truth);
  Confusion c;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i], g = truth.bits[i];
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

BasicMetrics basic_metrics(const Confusion& c) {
  BasicMetrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total(), 0);
  m.precision = ratio(c.tp, c.tp + c.fp, c.fn);
  m.recall = ratio(c.tp, c.tp + c.fn, c.fp);
  m.dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, 0);
  m.dice_convention = (c.tp + c.fp + c.fn) == 0;
  return m;
}

double iou(const Confusion& c) { return ratio(c.tp, c.tp + c.fp + c.fn, 0); }

std::vector<double> miou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back(static_cast<double>(50 + 5 * k) / 100.0);
  return t;
}

Mask binarize(const Plane& prob, double t) {
  Mask m(prob.height, prob.width);
  for (std::size_t i = 0; i < prob.values.size(); ++i) m.bits[i] = prob.values[i] > t ? 1 : 0;
  return m;
}

double miou(const Plane& prob, const Mask& truth) {
  double sum = 0.0;
  const auto ts = miou_thresholds();
  for (double t : ts) sum += iou(confusion(binarize(prob, t), truth));
  return sum / static_cast<double>(ts.size());
}

Ahd ahd(const Mask& pred, const Mask& truth) {
  require_same(pred, truth);
  if (pred.count() == 0 || truth.count() == 0) {
    const double h = static_cast<double>(pred.height), w = static_cast<double>(pred.width);
    return {std::sqrt(h * h + w * w), true};
  }
  const double forward = directed_mean(pred, squared_distance_map(truth));
  const double backward = directed_mean(truth, squared_distance_map(pred));
  return {0.5 * (forward + backward), false};
}

double mae(const Mask& pred, const Mask& truth) {
  require_same(pred, truth);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) diff += pred.bits[i] != truth.bits[i];
  return static_cast<double>(diff) / static_cast<double>(pred.bits.size());
}

ImageMetrics evaluate_pair(const std::string& id, const Mask& pred, const Mask& truth, const Plane* prob) {
  const Confusion c = confusion(pred, truth);
  const BasicMetrics b = basic_metrics(c);
  const Ahd a = ahd(pred, truth);
  ImageMetrics r;
  r.id = id;
  r.accuracy = b.accuracy;
  r.precision = b.precision;
  r.recall = b.recall;
  r.dice = b.dice;
  r.dice_convention = b.dice_convention;
  r.miou = prob ? miou(*prob, truth) : miou(as_plane(pred), truth);
  r.ahd = a.value;
  r.ahd_sentinel = a.sentinel;
  r.mae = mae(pred, truth);
  return r;
}

ImageMetrics mean_row(const std::vector<ImageMetrics>& rows, const std::string& pp) {
  ImageMetrics m;
  m.id = "mean";
  m.pp = pp;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.pp != pp) continue;
    m.accuracy += r.accuracy;
    m.precision += r.precision;
    m.recall += r.recall;
    m.dice += r.dice;
    m.miou += r.miou;
    m.ahd += r.ahd;
    m.mae += r.mae;
    m.dice_convention = m.dice_convention || r.dice_convention;
    m.ahd_sentinel = m.ahd_sentinel || r.ahd_sentinel;
    ++n;
  }
  if (n == 0) return m;
  const double k = static_cast<double>(n);
  m.accuracy /= k;
  m.precision /= k;
  m.recall /= k;
  m.dice /= k;
  m.miou /= k;
  m.ahd /= k;
  m.mae /= k;
  return m;
}

namespace {

std::string flags(const ImageMetrics& r) {
  std::string f;
  if (r.dice_convention) f += "empty-dice";
  if (r.ahd_sentinel) f += std::string(f.empty() ? "" : ";") + "ahd-sentinel";
  return f;
}

std::vector<std::string> pp_groups(const std::vector<ImageMetrics>& rows) {
  std::vector<std::string> groups;
  for (const auto& r : rows)
    if (std::find(groups.begin(), groups.end(), r.pp) == groups.end()) groups.push_back(r.pp);
  return groups;
}

nlohmann::json row_json(const ImageMetrics& r) {
  return {{"id", r.id},         {"pp", r.pp},     {"Acc", r.accuracy}, {"Pr", r.precision},
          {"R", r.recall},      {"DC", r.dice},   {"mIoU", r.miou},    {"AHD", r.ahd},
          {"MAE", r.mae},       {"empty_dice", r.dice_convention},     {"ahd_sentinel", r.ahd_sentinel}};
}

}  // namespace

std::string metrics_csv(const std::vector<ImageMetrics>& rows) {
  std::ostringstream os;
  os << "id,pp,Acc,Pr,R,DC,mIoU,AHD,MAE,flags\n";
  auto line = [&](const ImageMetrics& r) {
    os << r.id << ',' << r.pp << ',' << fmt(r.accuracy) << ',' << fmt(r.precision) << ',' << fmt(r.recall) << ','
       << fmt(r.dice) << ',' << fmt(r.miou) << ',' << fmt(r.ahd) << ',' << fmt(r.mae) << ',' << flags(r) << '\n';
  };
  for (const auto& r : rows) line(r);
  for (const auto& g : pp_groups(rows)) line(mean_row(rows, g));
  return os.str();
}

nlohmann::json metrics_json(const std::vector<ImageMetrics>& rows) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const auto& r : rows) j["images"].push_back(row_json(r));
  j["summary"] = nlohmann::json::array();
  for (const auto& g : pp_groups(rows)) j["summary"].push_back(row_json(mean_row(rows, g)));
  return j;
}

nlohmann::json environment_record() {
  return {{"threads", 1},
          {"hardware_threads", std::thread::hardware_concurrency()},
          {"compute_dtype", "float64"},
          {"compiler", __VERSION__}};
}

InferenceTiming inference_time(model::RcaIUnet& net, const std::vector<Plane>& images, std::size_t warmups) {
  if (images.empty()) throw BadConfig("inference_time needs at least one image");
  InferenceTiming t;
  t.warmups = warmups;
  t.environment = environment_record();
  const Tensor first = to_tensor(images.front());
  for (std::size_t i = 0; i < warmups; ++i) net.predict(first);
  for (const auto& img : images) {
    const Tensor x = to_tensor(img);
    const auto t0 = std::chrono::steady_clock::now();
    net.predict(x);
    const auto t1 = std::chrono::steady_clock::now();
    t.per_sample_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  double sum = 0.0;
  for (double v : t.per_sample_ms) sum += v;
  t.mean_ms = sum / static_cast<double>(t.per_sample_ms.size());
  double var = 0.0;
  for (double v : t.per_sample_ms) var += (v - t.mean_ms) * (v - t.mean_ms);
  t.stddev_ms = std::sqrt(var / static_cast<double>(t.per_sample_ms.size()));
  return t;
}

}  // namespace rca::metrics
