#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fsir/fsir.hpp"

namespace {

using namespace fsir;

std::string sniff_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char m[2] = {0, 0};
  in.read(m, 2);
  return std::string(m, 2);
}

Image load_gray(const std::string& path, bool allow_luma) {
  return load_image(path, allow_luma ? ChannelPolicy::LuminanceOfRgb
                                     : ChannelPolicy::Grayscale);
}

std::vector<std::uint64_t> parse_grid(const std::string& text) {
  std::vector<std::uint64_t> grid;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t next = text.find(',', pos);
    if (next == std::string::npos) next = text.size();
    const std::string tok = text.substr(pos, next - pos);
    if (tok.empty()) throw ValidationError("--m-grid: empty entry");
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(tok, &used);
    if (used != tok.size() || v < 1)
      throw ValidationError("--m-grid: bad entry '" + tok + "'");
    grid.push_back(v);
    pos = next + 1;
  }
  if (grid.empty()) throw ValidationError("--m-grid: empty grid");
  return grid;
}

double sample_stddev(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

void print_kv(const char* key, double value) {
  std::printf("%s = %.6f\n", key, value);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot single-image restoration toolkit"};
  app.require_subcommand(1);

  // Flags shared by the heavier subcommands; each keeps its own copy so the
  // parser stays simple.
  struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    int threads = 1;
    bool luma = false;
  };

  auto add_common = [](CLI::App* sub, CommonOpts& o) {
    sub->add_option("--config", o.config_path, "experiment config file (key = value)");
    sub->add_option("--seed", o.seed, "override the experiment seed");
    sub->add_option("--threads", o.threads, "worker threads for inference");
    sub->add_flag("--luminance", o.luma,
                  "accept RGB input and use its BT.601 luminance");
  };

  // Resolves config file + explicit flag overrides into one ExperimentConfig.
  auto resolve_cfg = [](CLI::App* sub, const CommonOpts& o) {
    ExperimentConfig cfg;
    if (!o.config_path.empty()) cfg = load_config(o.config_path);
    if (sub->count("--seed")) cfg.seed = o.seed;
    if (sub->count("--threads")) cfg.threads = o.threads;
    return cfg;
  };

  // --- degrade ------------------------------------------------------------
  auto* deg = app.add_subcommand("degrade", "blur an image and add white noise");
  CommonOpts deg_o;
  std::string deg_in, deg_out, deg_psf_out;
  int deg_psf_size = -1;
  double deg_psf_sigma = -1.0, deg_noise = -1.0;
  std::vector<double> deg_psf_pair;
  deg->add_option("--input,--in", deg_in, "clean image (PGM, or PPM with --luminance)")
      ->required();
  deg->add_option("--output,--out", deg_out, "degraded image (PGM)")->required();
  deg->add_option("--psf-size", deg_psf_size, "odd blur-kernel side length");
  deg->add_option("--psf-sigma", deg_psf_sigma, "blur-kernel sigma in pixels");
  deg->add_option("--psf", deg_psf_pair, "blur kernel as SIZE SIGMA")
      ->expected(2);
  deg->add_option("--noise-sigma,--noise", deg_noise,
                  "noise sigma on the 0..255 scale");
  deg->add_option("--save-psf", deg_psf_out, "also write the kernel as text");
  add_common(deg, deg_o);

  // --- train --------------------------------------------------------------
  auto* trn = app.add_subcommand("train", "fit a restoration network to one image pair");
  CommonOpts trn_o;
  std::string trn_degraded, trn_clean, trn_out, trn_loss_csv, trn_echo;
  std::string trn_mode;
  int trn_epochs = -1, trn_nn = -1, trn_batch = -1;
  std::uint64_t trn_nsamples = 0;
  double trn_lr = -1.0;
  trn->add_option("--degraded", trn_degraded, "degraded input image")->required();
  trn->add_option("--clean", trn_clean, "matching clean image")->required();
  trn->add_option("--output", trn_out, "weight file to write")->required();
  trn->add_option("--mode", trn_mode, "plain or rfn");
  trn->add_option("--epochs", trn_epochs, "training epochs");
  trn->add_option("--n-n", trn_nn, "hidden units");
  trn->add_option("--batch-size", trn_batch, "minibatch size");
  trn->add_option("--learning-rate", trn_lr, "Adam step size");
  trn->add_option("--n-samples", trn_nsamples, "train on this many pixels (0 = all)");
  trn->add_option("--loss-csv", trn_loss_csv, "write per-epoch loss CSV here");
  trn->add_option("--echo-config", trn_echo,
                  "write the materialized config here (default: <output>.config)");
  add_common(trn, trn_o);

  // --- infer --------------------------------------------------------------
  auto* inf = app.add_subcommand("infer", "restore an image with trained weights");
  CommonOpts inf_o;
  std::string inf_in, inf_model, inf_out;
  inf->add_option("--input", inf_in, "degraded image (PGM or PPM)")->required();
  inf->add_option("--model", inf_model, "weight file from train")->required();
  inf->add_option("--output", inf_out, "restored image")->required();
  add_common(inf, inf_o);

  // --- eval ---------------------------------------------------------------
  auto* evl = app.add_subcommand("eval", "fidelity metrics between two images");
  CommonOpts evl_o;
  std::string evl_ref, evl_test, evl_id = "image", evl_out;
  int evl_window = 11;
  evl->add_option("--ref", evl_ref, "reference image")->required();
  evl->add_option("--est,--test", evl_test, "image under test")->required();
  evl->add_option("--id", evl_id, "identifier for the CSV row");
  evl->add_option("--window", evl_window, "structural-similarity window (odd)");
  evl->add_option("--output", evl_out, "also write the CSV here");
  add_common(evl, evl_o);

  // --- sweep --------------------------------------------------------------
  auto* swp = app.add_subcommand(
      "sweep", "train at several sample counts and record recovery error");
  CommonOpts swp_o;
  std::string swp_degraded, swp_clean, swp_out, swp_grid_text;
  std::uint64_t swp_lo = 0, swp_hi = 0;
  int swp_points = 7;
  double swp_holdout = 0.2;
  swp->add_option("--degraded", swp_degraded, "degraded input image")->required();
  swp->add_option("--clean", swp_clean, "matching clean image")->required();
  swp->add_option("--output", swp_out, "sweep CSV to write")->required();
  swp->add_option("--m-grid", swp_grid_text, "explicit comma-separated sample counts");
  swp->add_option("--m-lo", swp_lo, "smallest sample count (default: pool/1000)");
  swp->add_option("--m-hi", swp_hi, "largest sample count (default: whole pool)");
  swp->add_option("--m-points", swp_points, "grid points when spacing automatically");
  swp->add_option("--holdout-frac", swp_holdout, "fraction of pixels held out");
  std::vector<std::string> swp_test_degraded, swp_test_clean;
  swp->add_option("--test-degraded", swp_test_degraded,
                  "held-out degraded image(s); pairs with --test-clean");
  swp->add_option("--test-clean", swp_test_clean,
                  "held-out clean image(s); pairs with --test-degraded");
  add_common(swp, swp_o);

  // --- bounds -------------------------------------------------------------
  auto* bnd = app.add_subcommand("bounds", "sample-complexity bound calculator");
  std::vector<double> bnd_m;
  double bnd_rate = -1.0, bnd_delta = 0.0;
  double bnd_sx = -1.0, bnd_sn = -1.0;
  int bnd_dim = 0;
  bool bnd_noisy = false;
  std::string bnd_sweep_csv;
  bnd->add_option("--m", bnd_m, "training sample count(s); one table row each");
  bnd->add_option("--dim", bnd_dim, "signal dimension");
  bnd->add_option("--rate", bnd_rate, "entropy or information rate, bits/coordinate");
  bnd->add_option("--delta-m", bnd_delta, "training error in [0, 1]");
  bnd->add_flag("--noisy", bnd_noisy, "rate is a mutual-information rate");
  bnd->add_option("--sigma-x", bnd_sx, "signal sigma for the Gaussian ceiling");
  bnd->add_option("--sigma-n", bnd_sn, "noise sigma for the Gaussian ceiling");
  bnd->add_option("--from-sweep", bnd_sweep_csv,
                  "infer an information lower bound from a sweep CSV");

  // --- rfn-preview --------------------------------------------------------
  auto* rfp = app.add_subcommand("rfn-preview",
                                 "energy-normalize an image and report entropy");
  CommonOpts rfp_o;
  std::string rfp_in, rfp_norm_out, rfp_energy_out;
  rfp->add_option("--input", rfp_in, "input image")->required();
  rfp->add_option("--output-normalized", rfp_norm_out, "normalized image (PGM)");
  rfp->add_option("--output-energy", rfp_energy_out, "clipped energy map (PGM)");
  add_common(rfp, rfp_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*deg) {
      ExperimentConfig cfg = resolve_cfg(deg, deg_o);
      if (deg->count("--psf")) {
        const double size = deg_psf_pair.at(0);
        if (size != std::floor(size))
          throw ValidationError("--psf: size must be an integer");
        cfg.psf_size = static_cast<int>(size);
        cfg.psf_sigma = deg_psf_pair.at(1);
      }
      if (deg->count("--psf-size")) cfg.psf_size = deg_psf_size;
      if (deg->count("--psf-sigma")) cfg.psf_sigma = deg_psf_sigma;
      if (deg->count("--noise-sigma")) cfg.noise_sigma = deg_noise;
      cfg.validate();
      const Image clean = load_gray(deg_in, deg_o.luma);
      const Psf psf = gaussian_psf(cfg.psf_size, cfg.psf_sigma);
      const Image blurred = convolve2d(clean, psf.taps, Boundary::ReplicateEdge);
      const Image noisy =
          add_gaussian_noise(blurred, cfg.noise_sigma, derive_seed(cfg.seed, 0));
      save_image(noisy, deg_out);
      save_config(cfg, deg_out + ".config");
      if (!deg_psf_out.empty()) write_kernel_text(psf.taps, deg_psf_out);
    } else if (*trn) {
      ExperimentConfig cfg = resolve_cfg(trn, trn_o);
      if (trn->count("--mode")) cfg.mode = trn_mode;
      if (trn->count("--epochs")) cfg.epochs = trn_epochs;
      if (trn->count("--n-n")) cfg.n_n = trn_nn;
      if (trn->count("--batch-size")) cfg.batch_size = trn_batch;
      if (trn->count("--learning-rate")) cfg.learning_rate = trn_lr;
      if (trn->count("--n-samples")) cfg.n_samples = trn_nsamples;
      cfg.validate();
      const Image degraded = load_gray(trn_degraded, trn_o.luma);
      const Image clean = load_gray(trn_clean, trn_o.luma);
      const Image du = to_unit_scale(degraded);
      const Image cu = to_unit_scale(clean);
      const PatchGeometry geom = cfg.geometry();
      std::optional<Image> norm;
      if (cfg.rnn_mode() == RnnMode::RfnRnn)
        norm = normalize_image(
                   du, rfn_default_kernel(cfg.rfn_kernel_size, cfg.rfn_kernel_sigma),
                   RfnConfig{cfg.rfn_tau, cfg.rfn_c1})
                   .normalized;
      std::vector<AnalysisSample> dataset =
          build_dataset(du, cu, geom, norm ? &*norm : nullptr);
      if (cfg.n_samples > 0 && cfg.n_samples < dataset.size())
        dataset = subsample(std::move(dataset), cfg.n_samples,
                            derive_seed(cfg.seed, 0xDA7A));
      const TrainResult tr = train(dataset, geom, cfg.train_config());
      save_model(tr.model, trn_out);
      save_config(cfg, trn_echo.empty() ? trn_out + ".config" : trn_echo);
      if (!trn_loss_csv.empty()) write_epoch_csv(tr.epoch_losses, trn_loss_csv);
      if (tr.diverged)
        std::cerr << "warning: training diverged; kept the last stable epoch\n";
      if (!tr.epoch_losses.empty())
        print_kv("final_train_loss", tr.epoch_losses.back());
    } else if (*inf) {
      ExperimentConfig cfg = resolve_cfg(inf, inf_o);
      const RnnModel model = load_model(inf_model);
      const Kernel kernel =
          rfn_default_kernel(cfg.rfn_kernel_size, cfg.rfn_kernel_sigma);
      if (sniff_magic(inf_in) == "P6") {
        const RgbImage rgb = load_ppm(inf_in);
        YCbCrImage ycc = rgb_to_ycbcr(rgb);
        const Image yu = to_unit_scale(ycc.y);
        const Image restored = infer_image(yu, model, cfg.threads, &kernel);
        ycc.y = to_peak_scale(restored, 255.0);
        save_ppm(ycbcr_to_rgb(ycc), inf_out);
      } else {
        const Image degraded = load_gray(inf_in, inf_o.luma);
        const Image du = to_unit_scale(degraded);
        const Image restored = infer_image(du, model, cfg.threads, &kernel);
        save_image(to_peak_scale(restored, 255.0), inf_out);
      }
      save_config(cfg, inf_out + ".config");
    } else if (*evl) {
      const Image ref = load_gray(evl_ref, evl_o.luma);
      const Image test = load_gray(evl_test, evl_o.luma);
      const MetricReport rep = evaluate(ref, test, evl_window);
      const std::string csv =
          "image_id,psnr_db,ssim\n" + metric_csv_row(evl_id, rep) + "\n";
      std::cout << csv;
      if (!evl_out.empty()) {
        std::ofstream out(evl_out);
        if (!out) throw IoError("cannot write " + evl_out);
        out << csv;
      }
    } else if (*swp) {
      ExperimentConfig cfg = resolve_cfg(swp, swp_o);
      cfg.validate();
      if (!(swp_holdout > 0.0 && swp_holdout < 1.0))
        throw ValidationError("--holdout-frac must lie in (0, 1)");
      const Image degraded = load_gray(swp_degraded, swp_o.luma);
      const Image clean = load_gray(swp_clean, swp_o.luma);
      const Image du = to_unit_scale(degraded);
      const Image cu = to_unit_scale(clean);
      const PatchGeometry geom = cfg.geometry();
      std::optional<Image> norm;
      if (cfg.rnn_mode() == RnnMode::RfnRnn)
        norm = normalize_image(
                   du, rfn_default_kernel(cfg.rfn_kernel_size, cfg.rfn_kernel_sigma),
                   RfnConfig{cfg.rfn_tau, cfg.rfn_c1})
                   .normalized;
      std::vector<AnalysisSample> dataset =
          build_dataset(du, cu, geom, norm ? &*norm : nullptr);
      std::vector<AnalysisSample> pool, held;
      if (!swp_test_degraded.empty() || !swp_test_clean.empty()) {
        // Explicit held-out image pairs: the whole training image is the pool.
        if (swp_test_degraded.size() != swp_test_clean.size())
          throw ValidationError("--test-degraded/--test-clean must come in pairs");
        pool = std::move(dataset);
        for (std::size_t i = 0; i < swp_test_degraded.size(); ++i) {
          const Image td = to_unit_scale(load_gray(swp_test_degraded[i], swp_o.luma));
          const Image tc = to_unit_scale(load_gray(swp_test_clean[i], swp_o.luma));
          std::optional<Image> tn;
          if (cfg.rnn_mode() == RnnMode::RfnRnn)
            tn = normalize_image(td,
                                 rfn_default_kernel(cfg.rfn_kernel_size,
                                                    cfg.rfn_kernel_sigma),
                                 RfnConfig{cfg.rfn_tau, cfg.rfn_c1})
                     .normalized;
          std::vector<AnalysisSample> extra =
              build_dataset(td, tc, geom, tn ? &*tn : nullptr);
          held.insert(held.end(), std::make_move_iterator(extra.begin()),
                      std::make_move_iterator(extra.end()));
        }
      } else {
        // Deterministic holdout split: shuffle once, carve off the front.
        Rng split_rng(derive_seed(cfg.seed, 0x5117));
        split_rng.shuffle(dataset);
        auto n_hold = static_cast<std::size_t>(
            std::llround(swp_holdout * static_cast<double>(dataset.size())));
        n_hold = std::min(std::max<std::size_t>(n_hold, 1), dataset.size() - 1);
        held.assign(dataset.begin(), dataset.begin() + n_hold);
        pool.assign(dataset.begin() + n_hold, dataset.end());
      }
      SweepConfig sc;
      if (!swp_grid_text.empty()) {
        sc.m_grid = parse_grid(swp_grid_text);
      } else {
        const std::uint64_t hi =
            swp_hi > 0 ? std::min<std::uint64_t>(swp_hi, pool.size()) : pool.size();
        const std::uint64_t lo =
            swp_lo > 0 ? swp_lo : std::max<std::uint64_t>(1, hi / 1000);
        sc.m_grid = log_spaced_grid(lo, hi, swp_points);
      }
      sc.train = cfg.train_config();
      sc.seed = cfg.seed;
      const std::vector<SweepRecord> records = run_sweep(pool, held, geom, sc);
      write_sweep_csv(records, swp_out);
      save_config(cfg, swp_out + ".config");
      const int dim = geom.l_t * geom.width();
      print_kv("mi_lower_bound", infer_mi_lower_bound(records, dim));
      if (cfg.noise_sigma > 0.0)
        print_kv("gaussian_cap",
                 gaussian_mi_cap(sample_stddev(cu.data), cfg.noise_sigma / 255.0));
    } else if (*bnd) {
      if (!bnd_sweep_csv.empty()) {
        if (bnd_dim < 1) throw ValidationError("--from-sweep needs --dim");
        const std::vector<SweepRecord> records = load_sweep_csv(bnd_sweep_csv);
        print_kv("mi_lower_bound", infer_mi_lower_bound(records, bnd_dim));
      } else if (bnd_sn > 0.0) {
        print_kv("gaussian_cap", gaussian_mi_cap(bnd_sx < 0.0 ? 0.0 : bnd_sx, bnd_sn));
      } else if (!bnd_m.empty()) {
        if (bnd_dim < 1 || bnd_rate < 0.0)
          throw ValidationError("bound evaluation needs --m, --dim and --rate");
        std::printf("m,delta_bound\n");
        for (double m : bnd_m) {
          const double b =
              bnd_noisy
                  ? generalization_bound_noisy(m, bnd_dim, bnd_rate, bnd_delta)
                  : generalization_bound_noiseless(m, bnd_dim, bnd_rate, bnd_delta);
          std::printf("%.12g,%.12g\n", m, b);
        }
      } else {
        throw ValidationError(
            "bounds: give --m/--dim/--rate, --sigma-x/--sigma-n, or --from-sweep");
      }
    } else if (*rfp) {
      ExperimentConfig cfg = resolve_cfg(rfp, rfp_o);
      cfg.validate();
      const Image img = load_gray(rfp_in, rfp_o.luma);
      const Image u = to_unit_scale(img);
      const RfnNormalized rn = normalize_image(
          u, rfn_default_kernel(cfg.rfn_kernel_size, cfg.rfn_kernel_sigma),
          RfnConfig{cfg.rfn_tau, cfg.rfn_c1});
      if (!rfp_norm_out.empty()) {
        save_image(to_peak_scale(rn.normalized, 255.0), rfp_norm_out);
        save_config(cfg, rfp_norm_out + ".config");
      }
      if (!rfp_energy_out.empty())
        save_image(to_peak_scale(rn.sigma_clipped, 255.0), rfp_energy_out);
      print_kv("entropy_in", empirical_entropy(u.data, 64));
      print_kv("entropy_out", empirical_entropy(rn.normalized.data, 64));
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
