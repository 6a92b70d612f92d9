#pragma once

// Evaluation metrics: mean angular error of normals (degrees) and mean
// squared error of depth, optionally after removing each field's mean (depth
// from integration is only defined up to a constant).

#include <cmath>

#include "pstereo/core.hpp"

namespace pstereo {

inline double maen(const ImageGrid& est, const ImageGrid& gt, const PixelMask& mask) {
  if (!est.same_shape(gt) || est.channels() != 3)
    throw DimensionError("maen: expected matching 3-channel normal maps");
  if (mask.width() != est.width() || mask.height() != est.height())
    throw DimensionError("maen: mask shape mismatch");

  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < est.height(); ++y)
    for (int x = 0; x < est.width(); ++x) {
      if (!mask.at(x, y)) continue;
      double dot = 0.0;
      for (int c = 0; c < 3; ++c) dot += est.at(x, y, c) * gt.at(x, y, c);
      dot = std::clamp(dot, -1.0, 1.0);
      sum += std::acos(dot);
      ++n;
    }
  if (n == 0) throw EmptyDomain("maen: empty mask");
  return sum / static_cast<double>(n) * (180.0 / kPi);
}

enum class DepthAlign { None, Mean };

inline double msed(const ImageGrid& est, const ImageGrid& gt, const PixelMask& mask,
                   DepthAlign align = DepthAlign::Mean) {
  if (!est.same_shape(gt) || est.channels() != 1)
    throw DimensionError("msed: expected matching single-channel depth maps");
  if (mask.width() != est.width() || mask.height() != est.height())
    throw DimensionError("msed: mask shape mismatch");

  double mean_est = 0.0, mean_gt = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < est.height(); ++y)
    for (int x = 0; x < est.width(); ++x) {
      if (!mask.at(x, y)) continue;
      mean_est += est.at(x, y);
      mean_gt += gt.at(x, y);
      ++n;
    }
  if (n == 0) throw EmptyDomain("msed: empty mask");
  if (align == DepthAlign::Mean) {
    mean_est /= static_cast<double>(n);
    mean_gt /= static_cast<double>(n);
  } else {
    mean_est = mean_gt = 0.0;
  }

  double sum = 0.0;
  for (int y = 0; y < est.height(); ++y)
    for (int x = 0; x < est.width(); ++x) {
      if (!mask.at(x, y)) continue;
      const double d = (est.at(x, y) - mean_est) - (gt.at(x, y) - mean_gt);
      sum += d * d;
    }
  return sum / static_cast<double>(n);
}

}  // namespace pstereo
