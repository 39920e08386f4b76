#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fsir/errors.hpp"
#include "fsir/rng.hpp"

namespace fsir {

// Dense dictionary, one atom per column. Atoms are unit-norm unless the
// caller opts out (coherence-based recovery guarantees assume unit norm).
struct Dictionary {
  Eigen::MatrixXd atoms;  // n_rows x n_atoms

  int rows() const { return static_cast<int>(atoms.rows()); }
  int n_atoms() const { return static_cast<int>(atoms.cols()); }

  static Dictionary from_atoms(Eigen::MatrixXd a, bool require_unit_norm = true) {
    if (a.rows() < 1 || a.cols() < 1) throw ValidationError("dictionary must be non-empty");
    if (require_unit_norm) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        if (std::abs(a.col(j).norm() - 1.0) > 1e-9)
          throw ValidationError("dictionary atom " + std::to_string(j) + " is not unit norm");
      }
    }
    return Dictionary{std::move(a)};
  }
};

struct SparseCode {
  Eigen::VectorXd weights;

  // Exact support: indices with a bit-level nonzero weight.
  std::vector<int> support() const {
    std::vector<int> s;
    for (Eigen::Index i = 0; i < weights.size(); ++i)
      if (weights[i] != 0.0) s.push_back(static_cast<int>(i));
    return s;
  }
};

struct IstaConfig {
  double lambda = 0.1;
  double c = 0.0;  // majorizer constant; <= 0 requests auto (1.01 x spectral norm)
  int max_iters = 1000;
  double tol = 1e-10;
};

inline Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double beta) {
  if (beta < 0.0) throw ValidationError("soft threshold requires beta >= 0");
  return (x.array().abs() - beta).max(0.0) * x.array().sign();
}

inline Eigen::VectorXd hard_threshold(const Eigen::VectorXd& x, double beta) {
  if (beta < 0.0) throw ValidationError("hard threshold requires beta >= 0");
  return (x.array().abs() > beta).select(x, 0.0);
}

// Verifies the two-ReLU form of the soft threshold,
// S_beta(x) = relu(x - beta) - relu(-x - beta), elementwise within 1e-12.
inline bool relu_soft_identity_check(const Eigen::VectorXd& x, double beta) {
  const Eigen::VectorXd lhs = soft_threshold(x, beta);
  const Eigen::ArrayXd rhs =
      (x.array() - beta).max(0.0) - (-x.array() - beta).max(0.0);
  return ((lhs.array() - rhs).abs() <= 1e-12).all();
}

// Power-iteration estimate of the largest eigenvalue of the Gram matrix
// D^T D. Deterministic under a fixed seed.
inline double spectral_norm(const Dictionary& d, int iters = 200, std::uint64_t seed = 0) {
  if (iters < 1) throw ValidationError("spectral_norm requires iters >= 1");
  const Eigen::MatrixXd gram = d.atoms.transpose() * d.atoms;
  Rng rng(seed);
  Eigen::VectorXd v(gram.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  v.normalize();
  for (int k = 0; k < iters; ++k) {
    Eigen::VectorXd w = gram * v;
    const double n = w.norm();
    if (n == 0.0) throw ValidationError("spectral_norm: zero dictionary");
    v = w / n;
  }
  return v.dot(gram * v);
}

inline double mutual_coherence(const Dictionary& d) {
  if (d.n_atoms() < 2) throw ValidationError("mutual coherence needs at least 2 atoms");
  double best = 0.0;
  for (int i = 0; i < d.n_atoms(); ++i) {
    for (int j = i + 1; j < d.n_atoms(); ++j) {
      const double denom = d.atoms.col(i).norm() * d.atoms.col(j).norm();
      best = std::max(best, std::abs(d.atoms.col(i).dot(d.atoms.col(j))) / denom);
    }
  }
  return best;
}

// l1-regularized least squares, f(z) = 1/2 ||y - Dz||^2 + lambda ||z||_1.
inline double lasso_objective(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
                              const Dictionary& d, double lambda) {
  return 0.5 * (y - d.atoms * z).squaredNorm() + lambda * z.lpNorm<1>();
}

// One learned-ISTA update, z+ = S_beta(W y + S z).
inline Eigen::VectorXd lista_step(const Eigen::VectorXd& z_prev, const Eigen::VectorXd& y,
                                  const Eigen::MatrixXd& w, const Eigen::MatrixXd& s,
                                  double beta) {
  if (w.cols() != y.size() || s.cols() != z_prev.size() || w.rows() != s.rows())
    throw ValidationError("lista_step: dimension mismatch");
  return soft_threshold(w * y + s * z_prev, beta);
}

// The ISTA parametrization of the learned step: W = (1/c) D^T and
// S = I - (1/c) D^T D. lista_step with these matrices reproduces ista_step
// bit for bit.
struct IstaMatrices {
  Eigen::MatrixXd w;
  Eigen::MatrixXd s;
  double beta = 0.0;
};

inline double resolve_majorizer(const Dictionary& d, const IstaConfig& cfg) {
  if (cfg.c > 0.0) return cfg.c;
  return 1.01 * spectral_norm(d);
}

inline IstaMatrices ista_matrices(const Dictionary& d, double lambda, double c) {
  IstaMatrices m;
  m.w = d.atoms.transpose() / c;
  m.s = Eigen::MatrixXd::Identity(d.n_atoms(), d.n_atoms()) -
        (d.atoms.transpose() * d.atoms) / c;
  m.beta = lambda / c;
  return m;
}

inline SparseCode ista_step(const SparseCode& z_prev, const Eigen::VectorXd& y,
                            const Dictionary& d, const IstaConfig& cfg) {
  if (y.size() != d.rows() || z_prev.weights.size() != d.n_atoms())
    throw ValidationError("ista_step: dimension mismatch");
  const double c = resolve_majorizer(d, cfg);
  const IstaMatrices m = ista_matrices(d, cfg.lambda, c);
  return SparseCode{lista_step(z_prev.weights, y, m.w, m.s, m.beta)};
}

// Majorization-minimization surrogate of Eq-style form
// Q(z, za) = f(z) + (c/2)||z - za||^2 - (1/2)||Dz - D za||^2.
inline double surrogate_value(const SparseCode& z, const SparseCode& z_anchor,
                              const Eigen::VectorXd& y, const Dictionary& d,
                              const IstaConfig& cfg) {
  if (z.weights.size() != d.n_atoms() || z_anchor.weights.size() != d.n_atoms() ||
      y.size() != d.rows())
    throw ValidationError("surrogate_value: dimension mismatch");
  const double c = resolve_majorizer(d, cfg);
  const Eigen::VectorXd dz = z.weights - z_anchor.weights;
  return lasso_objective(z.weights, y, d, cfg.lambda) + 0.5 * c * dz.squaredNorm() -
         0.5 * (d.atoms * dz).squaredNorm();
}

struct IstaResult {
  SparseCode code;
  int iterations = 0;
  std::vector<double> objective_trace;  // f(z_0), f(z_1), ...
};

// Full MM descent from z = 0; stops on relative-change tolerance or the
// iteration cap. The majorizer condition c > ||D^T D||_2 is verified up
// front and violations are reported before any iteration runs.
inline IstaResult ista_solve(const Eigen::VectorXd& y, const Dictionary& d,
                             const IstaConfig& cfg) {
  if (y.size() != d.rows()) throw ValidationError("ista_solve: dimension mismatch");
  if (cfg.max_iters < 1) throw ValidationError("ista_solve: max_iters must be >= 1");
  const double alpha_max = spectral_norm(d);
  const double c = cfg.c > 0.0 ? cfg.c : 1.01 * alpha_max;
  if (c <= alpha_max)
    throw MajorizerError("ista_solve: c = " + std::to_string(c) +
                         " does not exceed ||D^T D||_2 = " + std::to_string(alpha_max));
  const IstaMatrices m = ista_matrices(d, cfg.lambda, c);

  IstaResult result;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(d.n_atoms());
  result.objective_trace.push_back(lasso_objective(z, y, d, cfg.lambda));
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const Eigen::VectorXd z_next = lista_step(z, y, m.w, m.s, m.beta);
    result.objective_trace.push_back(lasso_objective(z_next, y, d, cfg.lambda));
    ++result.iterations;
    const double change = (z_next - z).norm() / std::max(z.norm(), 1e-12);
    z = z_next;
    if (change < cfg.tol) break;
  }
  result.code = SparseCode{std::move(z)};
  return result;
}

// ---------------------------------------------------------------------------
// Dictionary file format: text header "rows atoms", then row-major %.17g
// values, one matrix row per line.
// ---------------------------------------------------------------------------

inline void save_dictionary(const Dictionary& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << d.rows() << " " << d.n_atoms() << "\n";
  char buf[40];
  for (int r = 0; r < d.rows(); ++r) {
    for (int c = 0; c < d.n_atoms(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", d.atoms(r, c));
      out << buf << (c + 1 == d.n_atoms() ? "" : " ");
    }
    out << "\n";
  }
}

inline Dictionary load_dictionary(const std::string& path, bool require_unit_norm = true) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  int rows = 0, atoms = 0;
  in >> rows >> atoms;
  if (!in || rows < 1 || atoms < 1) throw IoError(path + ": malformed dictionary header");
  Eigen::MatrixXd m(rows, atoms);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < atoms; ++c)
      if (!(in >> m(r, c))) throw IoError(path + ": truncated dictionary data");
  return Dictionary::from_atoms(std::move(m), require_unit_norm);
}

inline void write_objective_trace_csv(const std::vector<double>& trace,
                                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "iter,objective\n";
  char buf[40];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", trace[i]);
    out << i << "," << buf << "\n";
  }
}

// Random unit-norm Gaussian dictionary, the standard test-bed construction.
inline Dictionary random_gaussian_dictionary(int rows, int atoms, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, atoms);
  for (int c = 0; c < atoms; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
  for (int c = 0; c < atoms; ++c) m.col(c).normalize();
  return Dictionary{std::move(m)};
}

}  // namespace fsir
