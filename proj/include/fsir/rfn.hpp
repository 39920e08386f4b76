#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "fsir/errors.hpp"
#include "fsir/image.hpp"
#include "fsir/sparse.hpp"

namespace fsir {

struct RfnConfig {
  double tau = 0.4;  // energy floor below which normalization is skipped
  double c1 = 1.0;    // gain on the linear branch of the gated cell
};

// Local-energy kernels must be nonnegative, symmetric under 180-degree
// rotation, peaked at the center tap, and have a finite positive sum.
// Odd side lengths are required so the center tap is well defined.
struct KernelReport {
  bool odd_sides = false;
  bool nonnegative = false;
  bool symmetric = false;
  bool center_max = false;
  bool finite_positive_sum = false;

  bool ok() const {
    return odd_sides && nonnegative && symmetric && center_max && finite_positive_sum;
  }
  std::string describe() const {
    if (ok()) return "ok";
    std::string s;
    auto add = [&s](bool bad, const char* what) {
      if (!bad) return;
      if (!s.empty()) s += "; ";
      s += what;
    };
    add(!odd_sides, "side lengths must be odd");
    add(!nonnegative, "negative tap");
    add(!symmetric, "not 180-degree symmetric");
    add(!center_max, "center tap is not the maximum");
    add(!finite_positive_sum, "tap sum is not finite and positive");
    return s;
  }
};

inline KernelReport validate_rfn_kernel(const Kernel& k) {
  KernelReport rep;
  rep.odd_sides = (k.height % 2 == 1) && (k.width % 2 == 1);
  rep.nonnegative = true;
  double sum = 0.0;
  for (double t : k.taps) {
    if (!(t >= 0.0)) rep.nonnegative = false;  // catches NaN too
    sum += t;
  }
  rep.finite_positive_sum = std::isfinite(sum) && sum > 0.0;
  rep.symmetric = true;
  for (int r = 0; r < k.height; ++r) {
    for (int c = 0; c < k.width; ++c) {
      const double a = k.at(r, c);
      const double b = k.at(k.height - 1 - r, k.width - 1 - c);
      if (std::abs(a - b) > 1e-12 * std::max({std::abs(a), std::abs(b), 1.0}))
        rep.symmetric = false;
    }
  }
  if (rep.odd_sides) {
    const double center = k.at(k.height / 2, k.width / 2);
    rep.center_max = true;
    for (double t : k.taps)
      if (t > center) rep.center_max = false;
  }
  return rep;
}

// Default local-energy window: 7x7 truncated Gaussian, sigma = side/4,
// normalized to unit sum.
inline Kernel rfn_default_kernel(int size = 7, double sigma = 0.0) {
  if (sigma <= 0.0) sigma = size / 4.0;
  return gaussian_psf(size, sigma).taps;
}

// Pointwise local energy sigma(i,j) = sqrt(sum_h h(u,v) S(i-u, j-v)^2),
// replicate-edge boundary. The kernel must fit inside the image.
inline Image local_energy(const Image& img, const Kernel& k) {
  KernelReport rep = validate_rfn_kernel(k);
  if (!rep.ok()) throw ValidationError("local_energy: invalid kernel: " + rep.describe());
  if (k.height > img.height || k.width > img.width)
    throw ValidationError("local_energy: kernel larger than image");
  Image squared(img.height, img.width, 0.0, img.peak);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    squared.data[i] = img.data[i] * img.data[i];
  Image energy = convolve2d(squared, k, Boundary::ReplicateEdge);
  for (double& v : energy.data) v = std::sqrt(std::max(v, 0.0));
  return energy;
}

// Low-energy regions are left untouched: sigma~ = sigma where |sigma| >= tau,
// else 1.
inline Image clip_energy(const Image& sigma, double tau) {
  if (!(tau > 0.0)) throw ValidationError("clip_energy: tau must be positive");
  Image out = sigma;
  for (double& v : out.data)
    if (std::abs(v) < tau) v = 1.0;
  return out;
}

struct RfnNormalized {
  Image normalized;      // S / sigma~, elementwise
  Image sigma_clipped;   // the divisor, kept so the transform can be undone
  Image residual;        // exact division remainders S - normalized * sigma~
};

inline RfnNormalized normalize_image(const Image& img, const Kernel& k,
                                     const RfnConfig& cfg = {}) {
  RfnNormalized out{img, clip_energy(local_energy(img, k), cfg.tau), img};
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double s = out.sigma_clipped.data[i];
    const double q = img.data[i] / s;
    out.normalized.data[i] = q;
    // The remainder of a rounded division is itself representable, and fma
    // evaluates it without rounding; carrying it lets restore_image invert
    // the divide bit for bit instead of to within half an ulp.
    out.residual.data[i] = std::fma(-q, s, img.data[i]);
  }
  return out;
}

inline Image restore_image(const RfnNormalized& n) {
  if (n.normalized.height != n.sigma_clipped.height ||
      n.normalized.width != n.sigma_clipped.width)
    throw ValidationError("restore_image: shape mismatch");
  const bool compensated = n.residual.height == n.normalized.height &&
                           n.residual.width == n.normalized.width;
  Image out = n.normalized;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = std::fma(out.data[i], n.sigma_clipped.data[i],
                           compensated ? n.residual.data[i] : 0.0);
  return out;
}

// Hard-threshold support indicator q = 1[|D^T y| >= beta1], one entry per atom.
inline Eigen::VectorXi detect_support(const Dictionary& d, const Eigen::VectorXd& y,
                                      double beta1) {
  if (beta1 < 0.0) throw ValidationError("detect_support: beta1 must be >= 0");
  if (y.size() != d.rows()) throw ValidationError("detect_support: dimension mismatch");
  const Eigen::VectorXd corr = d.atoms.transpose() * y;
  Eigen::VectorXi q(corr.size());
  for (Eigen::Index i = 0; i < corr.size(); ++i)
    q[i] = std::abs(corr[i]) >= beta1 ? 1 : 0;
  return q;
}

}  // namespace fsir
