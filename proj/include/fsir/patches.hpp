#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "fsir/errors.hpp"
#include "fsir/image.hpp"
#include "fsir/rng.hpp"

namespace fsir {

// Causal analysis window: l_t image rows ending at the target row, each row
// spanning n_left pixels left to n_right pixels right of the target column.
struct PatchGeometry {
  int l_t = 9;
  int n_left = 4;
  int n_right = 4;

  int width() const { return n_left + 1 + n_right; }

  void validate() const {
    if (l_t < 1) throw ValidationError("patch geometry: l_t must be >= 1");
    if (n_left < 0 || n_right < 0)
      throw ValidationError("patch geometry: window extents must be >= 0");
  }
};

// One training sample. inputs(t, :) is the window at image row
// i - l_t + 1 + t; the last row is the one containing the target pixel.
struct AnalysisSample {
  Eigen::MatrixXd inputs;                 // l_t x width
  std::optional<Eigen::MatrixXd> rfn_inputs;  // same shape, energy-normalized
  double target = 0.0;
  int row = 0;
  int col = 0;
};

// Replicate-edge patch extraction at pixel (i, j).
inline Eigen::MatrixXd extract_patch(const Image& img, int i, int j,
                                     const PatchGeometry& geom) {
  geom.validate();
  if (i < 0 || i >= img.height || j < 0 || j >= img.width)
    throw ValidationError("extract_patch: pixel outside image");
  Eigen::MatrixXd patch(geom.l_t, geom.width());
  for (int t = 0; t < geom.l_t; ++t) {
    const int r = i - geom.l_t + 1 + t;
    for (int c = 0; c < geom.width(); ++c)
      patch(t, c) = img.at_clamped(r, j - geom.n_left + c);
  }
  return patch;
}

// One sample per pixel in row-major order. When a normalized companion image
// is supplied (the energy-normalized view of `degraded`), each sample also
// carries the matching normalized patch.
inline std::vector<AnalysisSample> build_dataset(const Image& degraded,
                                                 const Image& clean,
                                                 const PatchGeometry& geom,
                                                 const Image* normalized = nullptr) {
  geom.validate();
  if (degraded.height != clean.height || degraded.width != clean.width)
    throw ValidationError("build_dataset: degraded/clean shape mismatch");
  if (normalized &&
      (normalized->height != degraded.height || normalized->width != degraded.width))
    throw ValidationError("build_dataset: normalized image shape mismatch");
  std::vector<AnalysisSample> out;
  out.reserve(static_cast<std::size_t>(degraded.height) * degraded.width);
  for (int i = 0; i < degraded.height; ++i) {
    for (int j = 0; j < degraded.width; ++j) {
      AnalysisSample s;
      s.inputs = extract_patch(degraded, i, j, geom);
      if (normalized) s.rfn_inputs = extract_patch(*normalized, i, j, geom);
      s.target = clean.at(i, j);
      s.row = i;
      s.col = j;
      out.push_back(std::move(s));
    }
  }
  return out;
}

// First n entries of a seeded partial Fisher-Yates pass, kept in drawn order.
inline std::vector<AnalysisSample> subsample(std::vector<AnalysisSample> samples,
                                             std::size_t n, std::uint64_t seed) {
  if (n > samples.size())
    throw ValidationError("subsample: requested more samples than available");
  Rng rng(seed);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t idx = k + rng.below(samples.size() - k);
    std::swap(samples[k], samples[idx]);
  }
  samples.resize(n);
  return samples;
}

}  // namespace fsir
