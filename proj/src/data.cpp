#include "rcaiunet/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "rcaiunet/errors.hpp"
#include "rcaiunet/random.hpp"

namespace rca::data {

// ---- PNG ----------------------------------------------------------------------

Plane read_png(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw CorruptImage(path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw CorruptImage(path.string() + ": " + image.message);
  }
  Plane out(image.height, image.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const png_byte* px = &buffer[3 * i];
    out.values[i] = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0;
  }
  return out;
}

namespace {

void write_gray8(const fs::path& path, std::size_t h, std::size_t w, const std::vector<png_byte>& pixels) {
  if (h == 0 || w == 0) throw BadConfig("cannot write an empty image: " + path.string());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr))
    throw IoError(path.string() + ": " + image.message);
}

}  // namespace

void write_png(const fs::path& path, const Plane& image) {
  std::vector<png_byte> px(image.size());
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<png_byte>(std::lround(255.0 * std::clamp(image.values[i], 0.0, 1.0)));
  write_gray8(path, image.height, image.width, px);
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  std::vector<png_byte> px(mask.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.bits[i] ? 255 : 0;
  write_gray8(path, mask.height, mask.width, px);
}

Mask read_mask_png(const fs::path& path) {
  const Plane p = read_png(path);
  Mask m(p.height, p.width);
  for (std::size_t i = 0; i < p.values.size(); ++i) m.bits[i] = p.values[i] > 0.5 ? 1 : 0;
  return m;
}

// ---- preprocessing ----------------------------------------------------------

Plane normalize_minmax(const Plane& p) {
  Plane out(p.height, p.width, 0.0);
  if (p.values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(p.values.begin(), p.values.end());
  const double a = *lo, b = *hi;
  if (b <= a) return out;
  for (std::size_t i = 0; i < p.values.size(); ++i) out.values[i] = (p.values[i] - a) / (b - a);
  return out;
}

Plane resize_bilinear(const Plane& p, std::size_t height, std::size_t width) {
  if (p.height == height && p.width == width) return p;
  Plane out(height, width);
  const double sy = static_cast<double>(p.height) / static_cast<double>(height);
  const double sx = static_cast<double>(p.width) / static_cast<double>(width);
  for (std::size_t r = 0; r < height; ++r) {
    const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, static_cast<double>(p.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(y), y1 = std::min(y0 + 1, p.height - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < width; ++c) {
      const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, static_cast<double>(p.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(x), x1 = std::min(x0 + 1, p.width - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
      const double bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
      out(r, c) = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

Mask resize_nearest(const Mask& m, std::size_t height, std::size_t width) {
  if (m.height == height && m.width == width) return m;
  Mask out(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    const std::size_t sr = std::min(m.height - 1, (2 * r + 1) * m.height / (2 * height));
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t sc = std::min(m.width - 1, (2 * c + 1) * m.width / (2 * width));
      out(r, c) = m(sr, sc) ? 1 : 0;
    }
  }
  return out;
}

Plane preprocess_image(const Plane& raw, std::size_t size) {
  return resize_bilinear(normalize_minmax(raw), size, size);
}

// ---- datasets -----------------------------------------------------------------

bool is_mask_file(const fs::path& path) {
  const std::string stem = path.stem().string();
  const auto pos = stem.rfind("_mask");
  if (pos == std::string::npos) return false;
  const std::string tail = stem.substr(pos + 5);
  return tail.empty() || (tail[0] == '_' && tail.size() > 1 &&
                          std::all_of(tail.begin() + 1, tail.end(), [](char ch) { return ch >= '0' && ch <= '9'; }));
}

LoadResult load_dataset(const fs::path& dir, std::size_t size) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    if (is_mask_file(entry.path())) continue;
    images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());

  LoadResult result;
  for (const auto& path : images) {
    const std::string id = path.stem().string();
    const fs::path mask_path = dir / (id + "_mask.png");
    if (!fs::exists(mask_path)) {
      result.issues.push_back({path.filename().string(), "MissingMask", "no " + mask_path.filename().string()});
      continue;
    }
    try {
      Sample s;
      s.id = id;
      s.image = preprocess_image(read_png(path), size);
      s.mask = resize_nearest(read_mask_png(mask_path), size, size);
      result.samples.push_back(std::move(s));
    } catch (const CorruptImage& e) {
      result.issues.push_back({path.filename().string(), "CorruptImage", e.what()});
    }
  }
  return result;
}

Split split(std::vector<Sample> samples, const SplitSpec& spec) {
  const std::size_t n = samples.size();
  if (n < 3) throw TooFewSamples("split needs at least 3 samples, got " + std::to_string(n));
  if (!(spec.test_fraction >= 0 && spec.test_fraction < 1 && spec.val_fraction_of_train >= 0 &&
        spec.val_fraction_of_train < 1))
    throw BadConfig("split fractions must lie in [0, 1)");
  std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
  Rng rng(spec.seed, 0x73706c6974ULL);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(samples[i], samples[rng.below(i + 1)]);

  // The small epsilon keeps products such as 0.3 * 70 from flooring to 20.
  auto held_out = [](double f, std::size_t m) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(f * static_cast<double>(m) + 1e-9)));
  };
  const std::size_t n_test = std::min(held_out(spec.test_fraction, n), n - 2);
  const std::size_t rest = n - n_test;
  const std::size_t n_val = std::min(held_out(spec.val_fraction_of_train, rest), rest - 1);

  Split s;
  auto take = [&](std::vector<Sample>& dst, std::size_t from, std::size_t count) {
    for (std::size_t i = from; i < from + count; ++i) dst.push_back(std::move(samples[i]));
  };
  take(s.test, 0, n_test);
  take(s.val, n_test, n_val);
  take(s.train, n_test + n_val, n - n_test - n_val);
  return s;
}

nlohmann::json manifest(const Split& s, const SplitSpec& spec) {
  auto ids = [](const std::vector<Sample>& v) {
    std::vector<std::string> out;
    for (const auto& x : v) out.push_back(x.id);
    return out;
  };
  return {{"seed", spec.seed},
          {"test_fraction", spec.test_fraction},
          {"val_fraction_of_train", spec.val_fraction_of_train},
          {"train", ids(s.train)},
          {"val", ids(s.val)},
          {"test", ids(s.test)}};
}

// ---- synthetic ------------------------------------------------------------------

namespace {

struct Ellipse {
  double cx, cy, a, b, theta;
  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = dx * std::cos(theta) + dy * std::sin(theta);
    const double v = -dx * std::sin(theta) + dy * std::cos(theta);
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

Plane box_blur3(const Plane& p) {
  Plane out(p.height, p.width);
  const auto h = static_cast<std::ptrdiff_t>(p.height), w = static_cast<std::ptrdiff_t>(p.width);
  for (std::ptrdiff_t r = 0; r < h; ++r)
    for (std::ptrdiff_t c = 0; c < w; ++c) {
      double sum = 0.0;
      int n = 0;
      for (std::ptrdiff_t dr = -1; dr <= 1; ++dr)
        for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
          const std::ptrdiff_t rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          sum += p.values[static_cast<std::size_t>(rr * w + cc)];
          ++n;
        }
      out.values[static_cast<std::size_t>(r * w + c)] = sum / n;
    }
  return out;
}

}  // namespace

Sample synthetic_sample(std::size_t index, std::size_t size, std::uint64_t seed) {
  if (size < 32) throw BadConfig("synthetic size must be at least 32");
  Rng rng(seed, index);
  const double s = static_cast<double>(size);

  Mask mask;
  while (true) {
    std::vector<Ellipse> parts;
    const std::size_t k = 1 + rng.below(3);
    const Ellipse first{rng.uniform(0.25, 0.75) * s, rng.uniform(0.25, 0.75) * s, rng.uniform(0.06, 0.22) * s,
                        rng.uniform(0.06, 0.22) * s, rng.uniform(0.0, std::numbers::pi)};
    parts.push_back(first);
    for (std::size_t i = 1; i < k; ++i) {
      const double reach = 0.7 * std::max(first.a, first.b);
      parts.push_back({first.cx + rng.uniform(-reach, reach), first.cy + rng.uniform(-reach, reach),
                       first.a * rng.uniform(0.4, 0.9), first.b * rng.uniform(0.4, 0.9),
                       rng.uniform(0.0, std::numbers::pi)});
    }
    mask = Mask(size, size);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        const double x = static_cast<double>(c) + 0.5, y = static_cast<double>(r) + 0.5;
        mask(r, c) = std::any_of(parts.begin(), parts.end(), [&](const Ellipse& e) { return e.contains(x, y); });
      }
    const double frac = static_cast<double>(mask.count()) / static_cast<double>(mask.size());
    if (frac >= 0.005 && frac <= 0.4) break;
  }

  const double dip = rng.uniform(0.2, 0.5);
  Plane img(size, size);
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double base = 0.55 + 0.15 * static_cast<double>(r) / s;
      const double clean = mask(r, c) ? std::max(0.05, base - dip) : base;
      const double speckle = std::max(0.0, 1.0 + 0.4 * rng.normal());
      img(r, c) = clean * speckle;
    }

  Sample out;
  char id[32];
  std::snprintf(id, sizeof id, "synth_%05zu", index);
  out.id = id;
  out.image = normalize_minmax(box_blur3(img));
  out.mask = std::move(mask);
  out.source = Source::Synthetic;
  return out;
}

std::vector<Sample> generate_synthetic(std::size_t count, std::size_t size, std::uint64_t seed) {
  if (size < 32) throw BadConfig("synthetic size must be at least 32");
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synthetic_sample(i, size, seed));
  return out;
}

void write_dataset(const fs::path& dir, const std::vector<Sample>& samples) {
  fs::create_directories(dir);
  for (const auto& s : samples) {
    write_png(dir / (s.id + ".png"), s.image);
    write_mask_png(dir / (s.id + "_mask.png"), s.mask);
  }
}

}  // namespace rca::data
