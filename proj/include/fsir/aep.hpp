#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "fsir/errors.hpp"
#include "fsir/patches.hpp"
#include "fsir/rnn.hpp"

namespace fsir {

// Plug-in entropy of pooled coordinates: uniform bins over [min, max], the
// top edge inclusive, -sum p log2 p over occupied bins. A constant signal
// has zero entropy by convention.
inline double empirical_entropy(const std::vector<double>& values, int n_bins = 64) {
  if (values.empty()) throw ValidationError("empirical_entropy: empty input");
  if (n_bins < 2) throw ValidationError("empirical_entropy: n_bins must be >= 2");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!std::isfinite(lo) || !std::isfinite(hi))
    throw ValidationError("empirical_entropy: non-finite input");
  if (lo == hi) return 0.0;
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_bins), 0);
  const double scale = n_bins / (hi - lo);
  for (double v : values) {
    int bin = static_cast<int>((v - lo) * scale);
    if (bin >= n_bins) bin = n_bins - 1;  // v == hi lands in the last bin
    ++counts[static_cast<std::size_t>(bin)];
  }
  const double total = static_cast<double>(values.size());
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

// Coverage bound on recovery error: m samples cover an m * 2^-bits fraction
// of a typical set of 2^bits elements, so the error probability is at least
// 1 - m 2^-bits (1 - delta_m), clamped to [delta_m, 1]. Once m reaches the
// typical-set size the bound saturates at the training error delta_m.
// Computed through log2/exp2 so power-of-two inputs stay exact.
inline double aep_coverage_bound(double m, double bits, double delta_m) {
  if (!(m >= 1.0)) throw ValidationError("aep_coverage_bound: m must be >= 1");
  if (!(bits >= 0.0) || !std::isfinite(bits))
    throw ValidationError("aep_coverage_bound: bits must be finite and >= 0");
  if (!(delta_m >= 0.0 && delta_m <= 1.0))
    throw ValidationError("aep_coverage_bound: delta_m must lie in [0, 1]");
  const double excess = std::log2(m) - bits;
  if (excess >= 0.0) return delta_m;
  const double bound = 1.0 - std::exp2(excess) * (1.0 - delta_m);
  return std::clamp(bound, delta_m, 1.0);
}

// Noiseless case: the typical set of clean signals has about 2^(dim * rate)
// members, where rate is the per-coordinate entropy of the source.
inline double generalization_bound_noiseless(double m, int dim, double entropy_rate,
                                             double delta_m) {
  if (dim < 1) throw ValidationError("generalization_bound: dim must be >= 1");
  if (!(entropy_rate >= 0.0))
    throw ValidationError("generalization_bound: entropy rate must be >= 0");
  return aep_coverage_bound(m, dim * entropy_rate, delta_m);
}

// Noisy case: what matters is the mutual information rate between degraded
// and clean signals, not the source entropy.
inline double generalization_bound_noisy(double m, int dim, double mi_rate,
                                         double delta_m) {
  if (dim < 1) throw ValidationError("generalization_bound: dim must be >= 1");
  if (!(mi_rate >= 0.0))
    throw ValidationError("generalization_bound: mutual information must be >= 0");
  return aep_coverage_bound(m, dim * mi_rate, delta_m);
}

// Additive-Gaussian channel ceiling, (1/2) log2(1 + sigma_x^2 / sigma_n^2)
// bits per coordinate.
inline double gaussian_mi_cap(double sigma_x, double sigma_n) {
  if (!(sigma_n > 0.0)) throw ValidationError("gaussian_mi_cap: sigma_n must be positive");
  if (!(sigma_x >= 0.0)) throw ValidationError("gaussian_mi_cap: sigma_x must be >= 0");
  const double ratio = sigma_x / sigma_n;
  return 0.5 * std::log2(1.0 + ratio * ratio);
}

// --------------------------------------------------------------------------
// Empirical sample-complexity sweep
// --------------------------------------------------------------------------

struct SweepRecord {
  std::uint64_t m = 0;
  double train_error = 0.0;     // clamped loss on the m training samples
  double recovery_error = 0.0;  // clamped loss on held-out samples
  std::uint64_t seed = 0;
  bool converged = true;
};

// Bounded per-sample loss min(1, err^2); the bound arguments above assume a
// loss in [0, 1].
inline double clamped_loss(const RnnModel& model,
                           const std::vector<AnalysisSample>& samples) {
  if (samples.empty()) throw ValidationError("clamped_loss: empty sample set");
  double sum = 0.0;
  for (const auto& s : samples) {
    const double err = rnn_predict(model, s) - s.target;
    sum += std::min(1.0, err * err);
  }
  return sum / static_cast<double>(samples.size());
}

// Inverts the coverage bound at each measured point: if training on m
// samples reached train error delta_m but held-out error delta_hat, the
// channel must carry at least (1/dim) log2(m (1 - delta_m) / (1 - delta_hat))
// bits per coordinate. Returns the tightest (largest) such bound.
inline double infer_mi_lower_bound(const std::vector<SweepRecord>& records, int dim) {
  if (dim < 1) throw ValidationError("infer_mi_lower_bound: dim must be >= 1");
  double best = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& r : records) {
    if (!r.converged) continue;
    if (r.m < 1) throw ValidationError("infer_mi_lower_bound: record with m < 1");
    if (!(r.train_error >= 0.0 && r.train_error < 1.0) ||
        !(r.recovery_error >= 0.0 && r.recovery_error < 1.0))
      throw ValidationError("infer_mi_lower_bound: errors must lie in [0, 1)");
    const double val = std::log2(static_cast<double>(r.m) * (1.0 - r.train_error) /
                                 (1.0 - r.recovery_error)) /
                       static_cast<double>(dim);
    best = std::max(best, val);
    any = true;
  }
  if (!any) throw ValidationError("infer_mi_lower_bound: no converged records");
  return best;
}

// Geometric grid of sample counts from lo to hi inclusive, rounded and
// deduplicated.
inline std::vector<std::uint64_t> log_spaced_grid(std::uint64_t lo, std::uint64_t hi,
                                                  int points) {
  if (lo < 1 || hi < lo) throw ValidationError("log_spaced_grid: need 1 <= lo <= hi");
  if (points < 2) throw ValidationError("log_spaced_grid: need at least 2 points");
  std::vector<std::uint64_t> grid;
  const double llo = std::log(static_cast<double>(lo));
  const double lhi = std::log(static_cast<double>(hi));
  for (int i = 0; i < points; ++i) {
    const double f = static_cast<double>(i) / (points - 1);
    const auto v = static_cast<std::uint64_t>(
        std::llround(std::exp(llo + f * (lhi - llo))));
    const std::uint64_t clamped = std::clamp<std::uint64_t>(v, lo, hi);
    if (grid.empty() || grid.back() != clamped) grid.push_back(clamped);
  }
  return grid;
}

struct SweepConfig {
  std::vector<std::uint64_t> m_grid;
  TrainConfig train;
  std::uint64_t seed = 0;
};

// Trains one model per grid point on a seeded subsample of the pool and
// scores it on the held-out set. Each point derives its own seed from
// (seed, m), so records are reproducible individually. A diverged training
// run produces a converged = false record and the sweep continues.
inline std::vector<SweepRecord> run_sweep(const std::vector<AnalysisSample>& pool,
                                          const std::vector<AnalysisSample>& held_out,
                                          const PatchGeometry& geom,
                                          const SweepConfig& cfg) {
  if (cfg.m_grid.empty()) throw ValidationError("run_sweep: empty m grid");
  if (held_out.empty()) throw ValidationError("run_sweep: empty held-out set");
  std::vector<SweepRecord> records;
  records.reserve(cfg.m_grid.size());
  for (std::uint64_t m : cfg.m_grid) {
    if (m < 1 || m > pool.size())
      throw ValidationError("run_sweep: grid point outside [1, pool size]");
    SweepRecord rec;
    rec.m = m;
    rec.seed = derive_seed(cfg.seed, m);
    const std::vector<AnalysisSample> subset = subsample(pool, m, rec.seed);
    TrainConfig tc = cfg.train;
    tc.seed = rec.seed;
    const TrainResult tr = train(subset, geom, tc);
    if (tr.diverged) {
      rec.converged = false;
      rec.train_error = std::numeric_limits<double>::quiet_NaN();
      rec.recovery_error = std::numeric_limits<double>::quiet_NaN();
    } else {
      rec.train_error = clamped_loss(tr.model, subset);
      rec.recovery_error = clamped_loss(tr.model, held_out);
    }
    records.push_back(rec);
  }
  return records;
}

inline void write_sweep_csv(const std::vector<SweepRecord>& records,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "m,train_error,recovery_error,seed\n";
  char buf[40];
  for (const auto& r : records) {
    out << r.m << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", r.train_error);
    out << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", r.recovery_error);
    out << buf << "," << r.seed << "\n";
  }
}

inline std::vector<SweepRecord> load_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "m,train_error,recovery_error,seed")
    throw IoError(path + ": bad sweep header");
  std::vector<SweepRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    SweepRecord r;
    char* end = nullptr;
    const char* s = line.c_str();
    r.m = std::strtoull(s, &end, 10);
    if (*end != ',') throw IoError(path + ": malformed sweep row");
    r.train_error = std::strtod(end + 1, &end);
    if (*end != ',') throw IoError(path + ": malformed sweep row");
    r.recovery_error = std::strtod(end + 1, &end);
    if (*end != ',') throw IoError(path + ": malformed sweep row");
    r.seed = std::strtoull(end + 1, &end, 10);
    r.converged = std::isfinite(r.train_error) && std::isfinite(r.recovery_error);
    records.push_back(r);
  }
  return records;
}

}  // namespace fsir
