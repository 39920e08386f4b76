#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "fsir/errors.hpp"
#include "fsir/image.hpp"

namespace fsir {

struct MetricReport {
  double psnr_db = 0.0;  // +inf sentinel when MSE is exactly zero
  double ssim = 0.0;
  std::size_t n_pixels = 0;
};

namespace detail {
inline void require_same_shape(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width)
    throw ValidationError("metric inputs must have equal dimensions");
  if (a.peak != b.peak) throw ValidationError("metric inputs must share the same peak");
}
}  // namespace detail

inline double psnr(const Image& reference, const Image& estimate) {
  detail::require_same_shape(reference, estimate);
  double sse = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference.data[i] - estimate.data[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(reference.peak * reference.peak / mse);
}

// Mean structural similarity over all fully-contained sliding windows,
// Gaussian-weighted (sigma 1.5), stabilizers C1=(k1*peak)^2, C2=(k2*peak)^2.
inline double ssim(const Image& reference, const Image& estimate, int window = 11,
                   double k1 = 0.01, double k2 = 0.03) {
  detail::require_same_shape(reference, estimate);
  if (window < 1 || window % 2 == 0) throw ValidationError("ssim window must be odd");
  if (window > std::min(reference.height, reference.width))
    throw ValidationError("ssim window larger than image");

  Kernel w(window, window);
  const double c = (window - 1) / 2.0;
  const double sigma = 1.5;
  double wsum = 0.0;
  for (int r = 0; r < window; ++r)
    for (int col = 0; col < window; ++col) {
      const double dr = r - c, dc = col - c;
      const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      w.at(r, col) = v;
      wsum += v;
    }
  for (double& t : w.taps) t /= wsum;

  const double c1 = (k1 * reference.peak) * (k1 * reference.peak);
  const double c2 = (k2 * reference.peak) * (k2 * reference.peak);

  double acc = 0.0;
  std::size_t n_windows = 0;
  for (int r = 0; r + window <= reference.height; ++r) {
    for (int col = 0; col + window <= reference.width; ++col) {
      double mu_x = 0.0, mu_y = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
      for (int u = 0; u < window; ++u) {
        for (int v = 0; v < window; ++v) {
          const double weight = w.at(u, v);
          const double x = reference.at(r + u, col + v);
          const double y = estimate.at(r + u, col + v);
          mu_x += weight * x;
          mu_y += weight * y;
          xx += weight * x * x;
          yy += weight * y * y;
          xy += weight * x * y;
        }
      }
      const double var_x = xx - mu_x * mu_x;
      const double var_y = yy - mu_y * mu_y;
      const double cov = xy - mu_x * mu_y;
      const double num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
      const double den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
      acc += num / den;
      ++n_windows;
    }
  }
  return acc / static_cast<double>(n_windows);
}

inline MetricReport evaluate(const Image& reference, const Image& estimate, int window = 11) {
  return MetricReport{psnr(reference, estimate), ssim(reference, estimate, window),
                      reference.size()};
}

// CSV row `image_id,psnr_db,ssim` with 4-decimal formatting; infinite PSNR
// is written as the string "inf".
inline std::string metric_csv_row(const std::string& image_id, const MetricReport& report) {
  char buf[128];
  if (std::isinf(report.psnr_db)) {
    std::snprintf(buf, sizeof(buf), "%s,inf,%.4f", image_id.c_str(), report.ssim);
  } else {
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f", image_id.c_str(), report.psnr_db,
                  report.ssim);
  }
  return std::string(buf);
}

}  // namespace fsir
