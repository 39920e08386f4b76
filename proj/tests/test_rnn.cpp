#include <catch2/catch_amalgamated.hpp>

#include <fsir/patches.hpp>
#include <fsir/rnn.hpp>
#include <fsir/rng.hpp>
#include <fsir/sparse.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

namespace {

fsir::RnnParams random_params(int input_width, int n_n, fsir::Rng& rng, double scale = 0.4) {
  fsir::RnnParams p;
  p.w_zy.resize(input_width, n_n);
  p.w_zz.resize(n_n, n_n);
  p.b.resize(n_n);
  p.w_fc.resize(n_n, 1);
  p.b_fc.resize(1);
  for (Eigen::Index i = 0; i < p.w_zy.size(); ++i) p.w_zy(i) = scale * rng.normal();
  for (Eigen::Index i = 0; i < p.w_zz.size(); ++i) p.w_zz(i) = scale * rng.normal();
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b(i) = scale * rng.normal();
  for (Eigen::Index i = 0; i < p.w_fc.size(); ++i) p.w_fc(i) = scale * rng.normal();
  p.b_fc[0] = scale * rng.normal();
  return p;
}

fsir::RnnModel make_model(fsir::RnnMode mode, const fsir::PatchGeometry& geom, int n_n,
                          fsir::Rng& rng, double c1 = 1.0) {
  fsir::RnnModel m;
  m.mode = mode;
  m.geom = geom;
  m.rfn.c1 = c1;
  m.params = random_params(geom.width(), n_n, rng);
  return m;
}

// Scalar-loop forward pass for one sample; completely independent of the
// batched implementation.
double naive_forward(const fsir::RnnModel& model, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXd* rfn_inputs) {
  const int n_n = model.n_n();
  const int width = model.input_width();
  std::vector<double> z(static_cast<std::size_t>(n_n), 0.0);
  for (int t = 0; t < model.geom.l_t; ++t) {
    std::vector<double> z_next(static_cast<std::size_t>(n_n), 0.0);
    for (int i = 0; i < n_n; ++i) {
      double pre = model.params.b[i];
      const Eigen::MatrixXd& gate_src = rfn_inputs ? *rfn_inputs : inputs;
      for (int c = 0; c < width; ++c) pre += model.params.w_zy(c, i) * gate_src(t, c);
      for (int j = 0; j < n_n; ++j) pre += model.params.w_zz(j, i) * z[static_cast<std::size_t>(j)];
      const double q = std::max(pre, 0.0);
      if (rfn_inputs) {
        double r = 0.0;
        for (int c = 0; c < width; ++c) r += model.params.w_zy(c, i) * inputs(t, c);
        z_next[static_cast<std::size_t>(i)] = q * model.rfn.c1 * r;
      } else {
        z_next[static_cast<std::size_t>(i)] = q;
      }
    }
    z = z_next;
  }
  double out = model.params.b_fc[0];
  for (int i = 0; i < n_n; ++i) out += model.params.w_fc(i, 0) * z[static_cast<std::size_t>(i)];
  return out;
}

fsir::AnalysisSample random_sample(const fsir::PatchGeometry& geom, fsir::Rng& rng,
                                  bool with_rfn) {
  fsir::AnalysisSample s;
  s.inputs.resize(geom.l_t, geom.width());
  for (Eigen::Index i = 0; i < s.inputs.size(); ++i) s.inputs(i) = rng.uniform(-1.0, 1.0);
  if (with_rfn) {
    Eigen::MatrixXd n(geom.l_t, geom.width());
    for (Eigen::Index i = 0; i < n.size(); ++i) n(i) = rng.uniform(-1.0, 1.0);
    s.rfn_inputs = n;
  }
  s.target = rng.uniform(-1.0, 1.0);
  return s;
}

double dataset_loss(const fsir::RnnModel& model, const std::vector<fsir::AnalysisSample>& samples) {
  double acc = 0.0;
  for (const auto& s : samples) {
    const double err = fsir::rnn_predict(model, s) - s.target;
    acc += err * err;
  }
  return acc / static_cast<double>(samples.size());
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "fsir_rnn_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("zero inputs with zero biases predict the head offset", "[rnn]") {
  fsir::Rng rng(800);
  const fsir::PatchGeometry geom{4, 1, 1};
  fsir::RnnModel model = make_model(fsir::RnnMode::PlainRnn, geom, 6, rng);
  model.params.b.setZero();
  model.params.b_fc[0] = 0.37;
  fsir::AnalysisSample s;
  s.inputs = Eigen::MatrixXd::Zero(geom.l_t, geom.width());
  REQUIRE(fsir::rnn_predict(model, s) == 0.37);
}

TEST_CASE("single-step model reduces to a one-layer network", "[rnn]") {
  fsir::Rng rng(801);
  const fsir::PatchGeometry geom{1, 2, 2};
  fsir::RnnModel model = make_model(fsir::RnnMode::PlainRnn, geom, 8, rng);
  fsir::AnalysisSample s = random_sample(geom, rng, false);
  const Eigen::VectorXd y = s.inputs.row(0).transpose();
  const Eigen::VectorXd hidden =
      (model.params.w_zy.transpose() * y + model.params.b).cwiseMax(0.0);
  const double want = model.params.w_fc.col(0).dot(hidden) + model.params.b_fc[0];
  REQUIRE(fsir::rnn_predict(model, s) == Catch::Approx(want).margin(1e-12));
}

TEST_CASE("batched forward agrees with a scalar-loop evaluation", "[rnn]") {
  fsir::Rng rng(802);
  const fsir::PatchGeometry geom{3, 1, 1};
  fsir::RnnModel model = make_model(fsir::RnnMode::PlainRnn, geom, 4, rng);
  for (int trial = 0; trial < 20; ++trial) {
    fsir::AnalysisSample s = random_sample(geom, rng, false);
    REQUIRE(fsir::rnn_predict(model, s) ==
            Catch::Approx(naive_forward(model, s.inputs, nullptr)).margin(1e-12));
  }
}

TEST_CASE("gated forward matches its scalar oracle and collapses correctly", "[rnn]") {
  fsir::Rng rng(803);
  const fsir::PatchGeometry geom{3, 1, 1};
  fsir::RnnModel model = make_model(fsir::RnnMode::RfnRnn, geom, 5, rng, 0.8);

  SECTION("scalar oracle, independent normalized windows") {
    for (int trial = 0; trial < 20; ++trial) {
      fsir::AnalysisSample s = random_sample(geom, rng, true);
      REQUIRE(fsir::rnn_predict(model, s) ==
              Catch::Approx(naive_forward(model, s.inputs, &*s.rfn_inputs)).margin(1e-12));
    }
  }
  SECTION("zero raw windows kill the linear branch") {
    fsir::AnalysisSample s = random_sample(geom, rng, true);
    s.inputs.setZero();  // gate input stays random, linear branch is zero
    model.params.b_fc[0] = -1.25;
    REQUIRE(fsir::rnn_predict(model, s) == -1.25);
  }
  SECTION("gated mode requires normalized windows") {
    fsir::AnalysisSample s = random_sample(geom, rng, false);
    REQUIRE_THROWS_AS(fsir::rnn_predict(model, s), fsir::ValidationError);
  }
}

TEST_CASE("with identical windows and unit gain, gating multiplies in the linear branch",
          "[rnn]") {
  fsir::Rng rng(804);
  const fsir::PatchGeometry geom{2, 1, 1};
  fsir::RnnModel gated = make_model(fsir::RnnMode::RfnRnn, geom, 4, rng, 1.0);
  fsir::RnnModel plain = gated;
  plain.mode = fsir::RnnMode::PlainRnn;

  fsir::AnalysisSample s = random_sample(geom, rng, false);
  s.rfn_inputs = s.inputs;  // normalized view equals the raw view

  // Step oracle: plain state q_t versus gated state q_t .* (w_zy^T y_t).
  const int n_n = 4;
  Eigen::VectorXd z_plain = Eigen::VectorXd::Zero(n_n);
  Eigen::VectorXd z_gated = Eigen::VectorXd::Zero(n_n);
  for (int t = 0; t < geom.l_t; ++t) {
    const Eigen::VectorXd y = s.inputs.row(t).transpose();
    const Eigen::VectorXd q_p = fsir::rnn_cell_step(gated.params, y, z_plain);
    const Eigen::VectorXd q_g = fsir::rnn_cell_step(gated.params, y, z_gated);
    const Eigen::VectorXd r = gated.params.w_zy.transpose() * y;
    z_plain = q_p;
    z_gated = q_g.cwiseProduct(r);
  }
  const double want_plain = gated.params.w_fc.col(0).dot(z_plain) + gated.params.b_fc[0];
  const double want_gated = gated.params.w_fc.col(0).dot(z_gated) + gated.params.b_fc[0];
  REQUIRE(fsir::rnn_predict(plain, s) == Catch::Approx(want_plain).margin(1e-12));
  REQUIRE(fsir::rnn_predict(gated, s) == Catch::Approx(want_gated).margin(1e-12));
}

TEST_CASE("cell step realizes the nonnegative thresholded update", "[rnn]") {
  // With w_zy = D/c, w_zz = I - D^T D / c and b = -(lambda/c) 1, one cell
  // update equals the positive part of the soft-thresholded descent step.
  fsir::Rng rng(805);
  const int rows = 4, atoms = 8;
  const fsir::Dictionary d = fsir::random_gaussian_dictionary(rows, atoms, 806);
  const double c = 1.01 * fsir::spectral_norm(d);
  const double lambda = 0.1;
  fsir::RnnParams p;
  p.w_zy = d.atoms / c;
  p.w_zz = Eigen::MatrixXd::Identity(atoms, atoms) - (d.atoms.transpose() * d.atoms) / c;
  p.b = Eigen::VectorXd::Constant(atoms, -lambda / c);
  p.w_fc = Eigen::MatrixXd::Zero(atoms, 1);
  p.b_fc = Eigen::VectorXd::Zero(1);

  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd y(rows), z(atoms);
    for (int i = 0; i < rows; ++i) y[i] = rng.normal();
    for (int i = 0; i < atoms; ++i) z[i] = std::max(0.0, rng.normal());
    const Eigen::VectorXd cell = fsir::rnn_cell_step(p, y, z);
    const Eigen::VectorXd u = p.w_zy.transpose() * y + p.w_zz.transpose() * z;
    const Eigen::VectorXd soft = fsir::soft_threshold(u, lambda / c);
    for (int i = 0; i < atoms; ++i) {
      REQUIRE(std::abs(cell[i] - std::max(u[i] - lambda / c, 0.0)) < 1e-12);
      REQUIRE(std::abs(cell[i] - std::max(soft[i], 0.0)) < 1e-12);
    }
  }
}

TEST_CASE("latent sparsity counts exact zeros in the final state", "[rnn]") {
  fsir::Rng rng(807);
  const fsir::PatchGeometry geom{2, 1, 1};
  std::vector<fsir::AnalysisSample> samples;
  for (int i = 0; i < 5; ++i) samples.push_back(random_sample(geom, rng, false));

  fsir::RnnModel dead = make_model(fsir::RnnMode::PlainRnn, geom, 6, rng);
  dead.params.w_zy.setZero();
  dead.params.w_zz.setZero();
  dead.params.b.setConstant(-1.0);
  REQUIRE(fsir::latent_sparsity(dead, samples) == 1.0);

  fsir::RnnModel alive = dead;
  alive.params.b.setConstant(1.0);
  REQUIRE(fsir::latent_sparsity(alive, samples) == 0.0);
  REQUIRE_THROWS_AS(fsir::latent_sparsity(dead, {}), fsir::ValidationError);
}

TEST_CASE("dead network gradients reduce to the head bias", "[rnn]") {
  fsir::Rng rng(808);
  const fsir::PatchGeometry geom{3, 1, 1};
  fsir::RnnModel model = make_model(fsir::RnnMode::PlainRnn, geom, 4, rng);
  model.params.w_zy.setZero();
  model.params.w_zz.setZero();
  model.params.b.setZero();
  model.params.b_fc[0] = 0.5;

  const int batch = 3;
  std::vector<Eigen::MatrixXd> ys(geom.l_t, Eigen::MatrixXd::Zero(geom.width(), batch));
  Eigen::RowVectorXd targets(batch);
  targets << 0.2, -0.1, 0.4;
  const fsir::ForwardTrace trace = fsir::rnn_forward_batch(model, ys, nullptr);
  double loss = 0.0;
  const fsir::GradientSet g = fsir::bptt_gradients(model, ys, nullptr, targets, trace, &loss);

  double want_bfc = 0.0;
  for (int i = 0; i < batch; ++i) want_bfc += 2.0 * (0.5 - targets[i]) / batch;
  REQUIRE(g.b_fc[0] == Catch::Approx(want_bfc).margin(1e-15));
  REQUIRE(g.w_zy.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(g.w_zz.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(g.b.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(g.w_fc.cwiseAbs().maxCoeff() == 0.0);
  double want_loss = 0.0;
  for (int i = 0; i < batch; ++i) want_loss += (0.5 - targets[i]) * (0.5 - targets[i]) / batch;
  REQUIRE(loss == Catch::Approx(want_loss).margin(1e-15));
}

namespace {

// Packs samples into per-step matrices and runs one loss+gradient evaluation.
struct GradProbe {
  std::vector<Eigen::MatrixXd> ys, ys_raw;
  Eigen::RowVectorXd targets;
  bool gated = false;

  GradProbe(const std::vector<fsir::AnalysisSample>& samples, const fsir::PatchGeometry& geom,
            bool gated_mode)
      : gated(gated_mode) {
    const int l_t = geom.l_t;
    const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
    ys.assign(l_t, Eigen::MatrixXd(geom.width(), n));
    if (gated) ys_raw.assign(l_t, Eigen::MatrixXd(geom.width(), n));
    targets.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      targets[i] = samples[static_cast<std::size_t>(i)].target;
      for (int t = 0; t < l_t; ++t) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        if (gated) {
          ys[t].col(i) = s.rfn_inputs->row(t).transpose();
          ys_raw[t].col(i) = s.inputs.row(t).transpose();
        } else {
          ys[t].col(i) = s.inputs.row(t).transpose();
        }
      }
    }
  }

  double loss(const fsir::RnnModel& model) const {
    const fsir::ForwardTrace tr = fsir::rnn_forward_batch(model, ys, gated ? &ys_raw : nullptr);
    return (tr.out - targets).squaredNorm() / static_cast<double>(targets.size());
  }

  fsir::GradientSet grad(const fsir::RnnModel& model) const {
    const fsir::ForwardTrace tr = fsir::rnn_forward_batch(model, ys, gated ? &ys_raw : nullptr);
    return fsir::bptt_gradients(model, ys, gated ? &ys_raw : nullptr, targets, tr, nullptr);
  }
};

void check_fd(fsir::RnnModel model, const GradProbe& probe, double h, double tol) {
  const fsir::GradientSet g = probe.grad(model);
  auto check_tensor = [&](Eigen::MatrixXd& param, const Eigen::MatrixXd& analytic) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double saved = param(i);
      param(i) = saved + h;
      const double lp = probe.loss(model);
      param(i) = saved - h;
      const double lm = probe.loss(model);
      param(i) = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(analytic(i)), 1e-6});
      REQUIRE(std::abs(fd - analytic(i)) / denom < tol);
    }
  };
  check_tensor(model.params.w_zy, g.w_zy);
  check_tensor(model.params.w_zz, g.w_zz);
  check_tensor(model.params.w_fc, g.w_fc);
  Eigen::MatrixXd b = model.params.b, gb = g.b;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const double saved = model.params.b[i];
    model.params.b[i] = saved + h;
    const double lp = probe.loss(model);
    model.params.b[i] = saved - h;
    const double lm = probe.loss(model);
    model.params.b[i] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(gb(i)), 1e-6});
    REQUIRE(std::abs(fd - gb(i)) / denom < tol);
  }
  {
    const double saved = model.params.b_fc[0];
    model.params.b_fc[0] = saved + h;
    const double lp = probe.loss(model);
    model.params.b_fc[0] = saved - h;
    const double lm = probe.loss(model);
    model.params.b_fc[0] = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(g.b_fc[0]), 1e-6});
    REQUIRE(std::abs(fd - g.b_fc[0]) / denom < tol);
  }
}

}  // namespace

TEST_CASE("backpropagation matches central finite differences", "[rnn]") {
  const fsir::PatchGeometry geom{4, 1, 1};
  SECTION("plain mode") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      fsir::Rng rng(8100 + seed);
      fsir::RnnModel model = make_model(fsir::RnnMode::PlainRnn, geom, 8, rng);
      std::vector<fsir::AnalysisSample> samples;
      for (int i = 0; i < 5; ++i) samples.push_back(random_sample(geom, rng, false));
      check_fd(model, GradProbe(samples, geom, false), 1e-5, 1e-4);
    }
  }
  SECTION("gated mode") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      fsir::Rng rng(8200 + seed);
      fsir::RnnModel model = make_model(fsir::RnnMode::RfnRnn, geom, 8, rng, 0.9);
      std::vector<fsir::AnalysisSample> samples;
      for (int i = 0; i < 5; ++i) samples.push_back(random_sample(geom, rng, true));
      check_fd(model, GradProbe(samples, geom, true), 1e-5, 1e-4);
    }
  }
}

TEST_CASE("duplicating a sample leaves the mean-loss gradient unchanged", "[rnn]") {
  fsir::Rng rng(812);
  const fsir::PatchGeometry geom{3, 1, 1};
  fsir::RnnModel model = make_model(fsir::RnnMode::PlainRnn, geom, 5, rng);
  fsir::AnalysisSample s = random_sample(geom, rng, false);
  const GradProbe single({s}, geom, false);
  const GradProbe doubled({s, s}, geom, false);
  const fsir::GradientSet g1 = single.grad(model);
  const fsir::GradientSet g2 = doubled.grad(model);
  REQUIRE((g1.w_zy - g2.w_zy).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE((g1.w_zz - g2.w_zz).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE((g1.b - g2.b).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE((g1.w_fc - g2.w_fc).cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE(std::abs(g1.b_fc[0] - g2.b_fc[0]) < 1e-14);
}

TEST_CASE("training fits a realizable linear task", "[rnn]") {
  fsir::Rng rng(813);
  const fsir::PatchGeometry geom{3, 1, 1};
  std::vector<fsir::AnalysisSample> samples;
  for (int i = 0; i < 200; ++i) {
    fsir::AnalysisSample s = random_sample(geom, rng, false);
    s.target = 0.6 * s.inputs(geom.l_t - 1, geom.n_left) + 0.1;
    samples.push_back(std::move(s));
  }
  fsir::TrainConfig cfg;
  cfg.n_n = 16;
  cfg.epochs = 200;
  cfg.batch_size = 32;
  cfg.learning_rate = 1e-2;
  cfg.seed = 814;
  cfg.target_train_loss = 5e-4;
  const fsir::TrainResult res = fsir::train(samples, geom, cfg);
  REQUIRE_FALSE(res.diverged);
  REQUIRE_FALSE(res.epoch_losses.empty());
  REQUIRE(res.epoch_losses.back() < 1e-3);
}

TEST_CASE("zero epochs returns the seeded initialization untouched", "[rnn]") {
  fsir::Rng rng(815);
  const fsir::PatchGeometry geom{2, 1, 1};
  std::vector<fsir::AnalysisSample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(random_sample(geom, rng, false));
  fsir::TrainConfig cfg;
  cfg.n_n = 5;
  cfg.epochs = 0;
  cfg.seed = 816;
  const fsir::TrainResult res = fsir::train(samples, geom, cfg);
  REQUIRE(res.epoch_losses.empty());
  const fsir::RnnParams init =
      fsir::init_params(geom.width(), cfg.n_n, 1, fsir::derive_seed(cfg.seed, 0));
  REQUIRE((res.model.params.w_zy - init.w_zy).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((res.model.params.w_zz - init.w_zz).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((res.model.params.w_fc - init.w_fc).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((res.model.params.b - init.b).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((res.model.params.b_fc - init.b_fc).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training is bit-deterministic in its seed", "[rnn]") {
  fsir::Rng rng(817);
  const fsir::PatchGeometry geom{2, 1, 1};
  std::vector<fsir::AnalysisSample> samples;
  for (int i = 0; i < 50; ++i) samples.push_back(random_sample(geom, rng, false));
  fsir::TrainConfig cfg;
  cfg.n_n = 6;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.seed = 818;
  const fsir::TrainResult a = fsir::train(samples, geom, cfg);
  const fsir::TrainResult b = fsir::train(samples, geom, cfg);
  REQUIRE(a.epoch_losses == b.epoch_losses);
  REQUIRE((a.model.params.w_zy - b.model.params.w_zy).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((a.model.params.w_zz - b.model.params.w_zz).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((a.model.params.b - b.model.params.b).cwiseAbs().maxCoeff() == 0.0);

  cfg.seed = 819;
  const fsir::TrainResult c = fsir::train(samples, geom, cfg);
  REQUIRE(a.epoch_losses != c.epoch_losses);
}

TEST_CASE("diverging runs roll back to the last finite epoch", "[rnn]") {
  fsir::Rng rng(820);
  const fsir::PatchGeometry geom{2, 1, 1};
  std::vector<fsir::AnalysisSample> samples;
  for (int i = 0; i < 32; ++i) {
    fsir::AnalysisSample s = random_sample(geom, rng, false);
    // Targets whose squared error overflows, so the epoch loss goes infinite
    // no matter how tame the optimizer steps are.
    s.target = 1e160 * (rng.uniform() - 0.5);
    samples.push_back(std::move(s));
  }
  fsir::TrainConfig cfg;
  cfg.n_n = 4;
  cfg.epochs = 60;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e5;
  cfg.grad_clip = 0.0;  // disabled
  cfg.seed = 821;
  const fsir::TrainResult res = fsir::train(samples, geom, cfg);
  REQUIRE(res.diverged);
  REQUIRE(res.model.params.w_zy.allFinite());
  REQUIRE(res.model.params.w_zz.allFinite());
  REQUIRE(res.model.params.b.allFinite());
  REQUIRE(res.model.params.w_fc.allFinite());
  REQUIRE(res.model.params.b_fc.allFinite());
  for (double l : res.epoch_losses) REQUIRE(std::isfinite(l));
}

TEST_CASE("median loss across seeds keeps descending after warmup", "[rnn]") {
  fsir::Rng rng(822);
  const fsir::PatchGeometry geom{3, 1, 1};
  std::vector<fsir::AnalysisSample> samples;
  for (int i = 0; i < 300; ++i) {
    fsir::AnalysisSample s = random_sample(geom, rng, false);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < s.inputs.size(); ++k) acc += s.inputs(k);
    s.target = 0.4 * acc / static_cast<double>(s.inputs.size());
    samples.push_back(std::move(s));
  }
  const int epochs = 20;
  std::vector<std::vector<double>> curves;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    fsir::TrainConfig cfg;
    cfg.n_n = 12;
    cfg.epochs = epochs;
    cfg.batch_size = 32;
    cfg.learning_rate = 3e-3;
    cfg.seed = 823 + seed;
    const fsir::TrainResult res = fsir::train(samples, geom, cfg);
    REQUIRE(static_cast<int>(res.epoch_losses.size()) == epochs);
    curves.push_back(res.epoch_losses);
  }
  std::vector<double> median(epochs);
  for (int e = 0; e < epochs; ++e) {
    std::vector<double> vals;
    for (const auto& c : curves) vals.push_back(c[static_cast<std::size_t>(e)]);
    std::sort(vals.begin(), vals.end());
    median[static_cast<std::size_t>(e)] = vals[2];
  }
  for (int e = 5; e + 1 < epochs; ++e)
    REQUIRE(median[static_cast<std::size_t>(e + 1)] <= median[static_cast<std::size_t>(e)] + 1e-9);
}

TEST_CASE("inference with a dead network paints the head offset", "[rnn]") {
  fsir::Rng rng(824);
  const fsir::PatchGeometry geom{3, 1, 1};
  fsir::RnnModel model = make_model(fsir::RnnMode::PlainRnn, geom, 4, rng);
  model.params.w_zy.setZero();
  model.params.w_zz.setZero();
  model.params.b.setConstant(-0.5);
  model.params.b_fc[0] = 0.7;
  fsir::Image img(6, 7);
  for (double& v : img.data) v = rng.uniform(0.0, 1.0);
  const fsir::Image out = fsir::infer_image(img, model);
  for (double v : out.data) REQUIRE(v == 0.7);
}

TEST_CASE("whole-image inference reproduces per-sample training error", "[rnn]") {
  fsir::Rng rng(825);
  fsir::Image img(16, 16, 0.0, 1.0);
  for (double& v : img.data) v = rng.uniform(0.0, 1.0);
  const fsir::PatchGeometry geom{3, 1, 1};
  const auto samples = fsir::build_dataset(img, img, geom);
  fsir::TrainConfig cfg;
  cfg.n_n = 12;
  cfg.epochs = 20;
  cfg.batch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.seed = 826;
  const fsir::TrainResult res = fsir::train(samples, geom, cfg);
  const double train_mse = dataset_loss(res.model, samples);
  const fsir::Image restored = fsir::infer_image(img, res.model);
  double mse = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double d = restored.data[i] - img.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(img.size());
  REQUIRE(mse <= train_mse + 1e-6);
  REQUIRE(mse >= train_mse - 1e-6);
}

TEST_CASE("inference is independent of the thread count", "[rnn]") {
  fsir::Rng rng(827);
  const fsir::PatchGeometry geom{4, 2, 2};
  for (auto mode : {fsir::RnnMode::PlainRnn, fsir::RnnMode::RfnRnn}) {
    fsir::RnnModel model = make_model(mode, geom, 6, rng);
    fsir::Image img(33, 17);  // deliberately not a multiple of the worker count
    for (double& v : img.data) v = rng.uniform(0.0, 1.0);
    const fsir::Image one = fsir::infer_image(img, model, 1);
    const fsir::Image eight = fsir::infer_image(img, model, 8);
    for (std::size_t i = 0; i < img.size(); ++i) REQUIRE(one.data[i] == eight.data[i]);
  }
}

TEST_CASE("weight files round-trip bit for bit", "[rnn]") {
  fsir::Rng rng(828);
  const fsir::PatchGeometry geom{4, 2, 2};
  fsir::RnnModel model = make_model(fsir::RnnMode::RfnRnn, geom, 7, rng, 1.3);
  model.rfn.tau = 0.31;
  auto p = temp_path("model.rnn");
  fsir::save_model(model, p.string());
  const fsir::RnnModel back = fsir::load_model(p.string());
  REQUIRE(back.mode == fsir::RnnMode::RfnRnn);
  REQUIRE(back.geom.l_t == 4);
  REQUIRE(back.geom.n_left == 2);
  REQUIRE(back.geom.n_right == 2);
  REQUIRE(back.rfn.tau == 0.31);
  REQUIRE(back.rfn.c1 == 1.3);
  REQUIRE((back.params.w_zy - model.params.w_zy).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.params.w_zz - model.params.w_zz).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.params.b - model.params.b).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.params.w_fc - model.params.w_fc).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((back.params.b_fc - model.params.b_fc).cwiseAbs().maxCoeff() == 0.0);

  SECTION("identical saves are byte-identical") {
    auto p2 = temp_path("model2.rnn");
    fsir::save_model(model, p2.string());
    REQUIRE(file_bytes(p) == file_bytes(p2));
  }
  SECTION("magic and headers are validated") {
    auto bad = temp_path("bad.rnn");
    std::ofstream out(bad, std::ios::binary);
    out << "NOPE";
    out.close();
    REQUIRE_THROWS_AS(fsir::load_model(bad.string()), fsir::IoError);
    auto trunc = temp_path("trunc.rnn");
    std::ofstream t(trunc, std::ios::binary);
    t << "RNN1";
    t.close();
    REQUIRE_THROWS_AS(fsir::load_model(trunc.string()), fsir::IoError);
  }
}

TEST_CASE("train rejects invalid configurations", "[rnn]") {
  fsir::Rng rng(829);
  const fsir::PatchGeometry geom{2, 1, 1};
  std::vector<fsir::AnalysisSample> samples{random_sample(geom, rng, false)};
  fsir::TrainConfig cfg;
  cfg.n_n = 0;
  REQUIRE_THROWS_AS(fsir::train(samples, geom, cfg), fsir::ValidationError);
  cfg.n_n = 4;
  cfg.epochs = -1;
  REQUIRE_THROWS_AS(fsir::train(samples, geom, cfg), fsir::ValidationError);
  cfg.epochs = 1;
  cfg.learning_rate = 0.0;
  REQUIRE_THROWS_AS(fsir::train(samples, geom, cfg), fsir::ValidationError);
  cfg.learning_rate = 1e-3;
  REQUIRE_THROWS_AS(fsir::train({}, geom, cfg), fsir::ValidationError);
}
