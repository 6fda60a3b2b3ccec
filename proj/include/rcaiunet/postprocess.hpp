#pragma once

#include "rcaiunet/image.hpp"

namespace rca::postprocess {

inline constexpr double kRefineThreshold = 0.5;
inline constexpr double kMinAreaFraction = 0.001;

/// prob > t. Throws BadConfig unless t is in (0, 1).
Mask threshold(const Plane& prob, double t);

/// Sets background components that do not touch the border (4-connected) to
/// foreground.
Mask fill_holes(const Mask& mask);

/// Erases 4-connected foreground components whose area is below
/// `min_area_fraction` of the pixel count.
Mask remove_small_regions(const Mask& mask, double min_area_fraction = kMinAreaFraction);

/// threshold(0.5), fill_holes, remove_small_regions(kMinAreaFraction).
Mask refine(const Plane& prob);

}  // namespace rca::postprocess
