#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rcaiunet/image.hpp"

namespace rca::data {

namespace fs = std::filesystem;

inline constexpr std::size_t kDefaultSize = 256;

// ---- PNG ----------------------------------------------------------------------

/// Reads any PNG as luminance in [0, 1] (0.299 R + 0.587 G + 0.114 B, alpha
/// ignored). Throws CorruptImage or IoError.
Plane read_png(const fs::path& path);
/// Writes an 8-bit grayscale PNG of round(255 * clamp(v, 0, 1)).
void write_png(const fs::path& path, const Plane& image);
/// Foreground 255, background 0.
void write_mask_png(const fs::path& path, const Mask& mask);
/// Pixels above one half of full scale are foreground.
Mask read_mask_png(const fs::path& path);

// ---- preprocessing ----------------------------------------------------------

/// Per-image min-max scaling to [0, 1]; a constant image maps to zeros.
Plane normalize_minmax(const Plane& p);
/// Bilinear resampling with half-pixel centres and edge clamping.
Plane resize_bilinear(const Plane& p, std::size_t height, std::size_t width);
/// Nearest-neighbour resampling (half-pixel centres).
Mask resize_nearest(const Mask& m, std::size_t height, std::size_t width);

// ---- datasets -----------------------------------------------------------------

enum class Source { Real, Synthetic };

struct Sample {
  std::string id;
  Plane image;  // size x size, values in [0, 1]
  Mask mask;
  Source source = Source::Real;
};

struct LoadIssue {
  std::string file;
  std::string kind;  // MissingMask or CorruptImage
  std::string message;
};

struct LoadResult {
  std::vector<Sample> samples;  // sorted by id
  std::vector<LoadIssue> issues;
};

/// True for names of the form <id>_mask.png or <id>_mask_<k>.png.
bool is_mask_file(const fs::path& path);

/// Loads every <id>.png with its <id>_mask.png. Files that fail are reported
/// in `issues` and skipped. Throws IoError when `dir` is not a directory.
LoadResult load_dataset(const fs::path& dir, std::size_t size = kDefaultSize);

/// One image as the model sees it: luminance, min-max, bilinear resize.
Plane preprocess_image(const Plane& raw, std::size_t size);

struct SplitSpec {
  double test_fraction = 0.30;
  double val_fraction_of_train = 0.30;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<Sample> train, val, test;
};

/// Sorted by id, shuffled with the seed, then test = floor(f_t n) and
/// val = floor(f_v (n - test)), each at least one. Throws TooFewSamples for
/// fewer than 3 samples.
Split split(std::vector<Sample> samples, const SplitSpec& spec);

/// Split ids, seed and fractions.
nlohmann::json manifest(const Split& s, const SplitSpec& spec);

/// Speckled background with a dark lesion made of 1-3 overlapping ellipses;
/// the mask is the exact ellipse union and covers 0.5%-40% of the frame.
/// Sample i depends only on (seed, i). Throws BadConfig for size < 32.
std::vector<Sample> generate_synthetic(std::size_t count, std::size_t size, std::uint64_t seed);
Sample synthetic_sample(std::size_t index, std::size_t size, std::uint64_t seed);

/// Writes <id>.png and <id>_mask.png for every sample.
void write_dataset(const fs::path& dir, const std::vector<Sample>& samples);

}  // namespace rca::data
