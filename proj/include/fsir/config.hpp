#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "fsir/errors.hpp"
#include "fsir/rnn.hpp"

namespace fsir {

// Everything an end-to-end run needs, with the defaults used throughout.
// Serialized as key=value lines; parsing rejects unknown keys, and the echo
// writes every key so a materialized file is a complete record of the run.
struct ExperimentConfig {
  // degradation
  int psf_size = 25;
  double psf_sigma = 1.6;
  double noise_sigma = 1.4142135623730951;  // sqrt(2)

  // analysis window
  int l_t = 9;
  int n_left = 4;
  int n_right = 4;

  // network
  std::string mode = "plain-rnn";  // plain-rnn | rfn-rnn (short forms plain | rfn)
  int n_n = 1000;
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double grad_clip = 5.0;
  double target_train_loss = 0.0;
  std::uint64_t n_samples = 0;  // 0 = use every pixel

  // energy normalization
  double rfn_tau = 0.4;
  double rfn_c1 = 1.0;
  int rfn_kernel_size = 7;
  double rfn_kernel_sigma = 1.75;

  // misc
  std::uint64_t seed = 0;
  int threads = 1;
  int ssim_window = 11;

  RnnMode rnn_mode() const {
    if (mode == "plain-rnn" || mode == "plain") return RnnMode::PlainRnn;
    if (mode == "rfn-rnn" || mode == "rfn") return RnnMode::RfnRnn;
    throw ValidationError("config: mode must be plain-rnn or rfn-rnn, got '" + mode +
                          "'");
  }

  PatchGeometry geometry() const { return PatchGeometry{l_t, n_left, n_right}; }

  TrainConfig train_config() const {
    TrainConfig tc;
    tc.mode = rnn_mode();
    tc.n_n = n_n;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.learning_rate = learning_rate;
    tc.grad_clip = grad_clip;
    tc.target_train_loss = target_train_loss;
    tc.seed = seed;
    tc.rfn = RfnConfig{rfn_tau, rfn_c1};
    return tc;
  }

  void validate() const {
    rnn_mode();
    if (psf_size < 1 || psf_size % 2 == 0)
      throw ValidationError("config: psf_size must be odd and positive");
    if (!(psf_sigma > 0.0)) throw ValidationError("config: psf_sigma must be positive");
    if (noise_sigma < 0.0) throw ValidationError("config: noise_sigma must be >= 0");
    geometry().validate();
    train_config().validate();
    if (!(rfn_tau > 0.0)) throw ValidationError("config: rfn_tau must be positive");
    if (rfn_kernel_size < 1 || rfn_kernel_size % 2 == 0)
      throw ValidationError("config: rfn_kernel_size must be odd and positive");
    if (!(rfn_kernel_sigma > 0.0))
      throw ValidationError("config: rfn_kernel_sigma must be positive");
    if (threads < 1) throw ValidationError("config: threads must be >= 1");
    if (ssim_window < 3 || ssim_window % 2 == 0)
      throw ValidationError("config: ssim_window must be odd and >= 3");
  }
};

namespace detail {

// Single source of truth for the key list: both the parser and the echo
// visit fields through this.
template <class Visitor>
void visit_config(ExperimentConfig& cfg, Visitor&& v) {
  v("psf_size", cfg.psf_size);
  v("psf_sigma", cfg.psf_sigma);
  v("noise_sigma", cfg.noise_sigma);
  v("l_t", cfg.l_t);
  v("n_left", cfg.n_left);
  v("n_right", cfg.n_right);
  v("mode", cfg.mode);
  v("n_n", cfg.n_n);
  v("epochs", cfg.epochs);
  v("batch_size", cfg.batch_size);
  v("learning_rate", cfg.learning_rate);
  v("grad_clip", cfg.grad_clip);
  v("target_train_loss", cfg.target_train_loss);
  v("n_samples", cfg.n_samples);
  v("rfn_tau", cfg.rfn_tau);
  v("rfn_c1", cfg.rfn_c1);
  v("rfn_kernel_size", cfg.rfn_kernel_size);
  v("rfn_kernel_sigma", cfg.rfn_kernel_sigma);
  v("seed", cfg.seed);
  v("threads", cfg.threads);
  v("ssim_window", cfg.ssim_window);
}

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline void assign_field(int& field, const std::string& value, const std::string& key) {
  std::size_t pos = 0;
  field = std::stoi(value, &pos);
  if (pos != value.size()) throw ValidationError("config: bad integer for " + key);
}

inline void assign_field(std::uint64_t& field, const std::string& value,
                         const std::string& key) {
  std::size_t pos = 0;
  field = std::stoull(value, &pos);
  if (pos != value.size()) throw ValidationError("config: bad integer for " + key);
}

inline void assign_field(double& field, const std::string& value, const std::string& key) {
  std::size_t pos = 0;
  field = std::stod(value, &pos);
  if (pos != value.size()) throw ValidationError("config: bad number for " + key);
}

inline void assign_field(std::string& field, const std::string& value,
                         const std::string&) {
  field = value;
}

inline void format_field(std::ostream& out, int v) { out << v; }
inline void format_field(std::ostream& out, std::uint64_t v) { out << v; }
inline void format_field(std::ostream& out, const std::string& v) { out << v; }
inline void format_field(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << buf;
}

}  // namespace detail

// key = value per line; '#' starts a comment; blank lines ignored; unknown
// keys are errors. Later assignments override earlier ones.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": empty key or value");
    bool matched = false;
    try {
      detail::visit_config(cfg, [&](const char* name, auto& field) {
        if (key == name) {
          detail::assign_field(field, value, key);
          matched = true;
        }
      });
    } catch (const std::exception& e) {
      throw ValidationError("config line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!matched)
      throw ValidationError("config line " + std::to_string(line_no) +
                            ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

// Full materialization: every key, current values, re-parseable.
inline std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  detail::visit_config(const_cast<ExperimentConfig&>(cfg),
                       [&](const char* name, const auto& field) {
                         out << name << " = ";
                         detail::format_field(out, field);
                         out << "\n";
                       });
  return out.str();
}

inline void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << config_to_text(cfg);
}

}  // namespace fsir
