#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fsir/errors.hpp"
#include "fsir/rng.hpp"

namespace fsir {

// Row-major grid of real intensities. Values may leave [0, peak] while an
// image moves through the filtering pipeline; clamping happens at save time.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> data;
  double peak = 255.0;

  Image() = default;
  Image(int h, int w, double fill = 0.0, double pk = 255.0)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill), peak(pk) {
    if (h <= 0 || w <= 0) throw ValidationError("image dimensions must be positive");
    if (pk <= 0.0) throw ValidationError("image peak must be positive");
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }

  // Replicate-edge read: indices clamped into the valid range.
  double at_clamped(int r, int c) const {
    r = std::clamp(r, 0, height - 1);
    c = std::clamp(c, 0, width - 1);
    return at(r, c);
  }

  std::size_t size() const { return data.size(); }
};

// Generic odd-sized filter grid shared by the blur and RFN paths.
struct Kernel {
  int height = 0;
  int width = 0;
  std::vector<double> taps;

  Kernel() = default;
  Kernel(int h, int w) : height(h), width(w), taps(static_cast<std::size_t>(h) * w, 0.0) {}

  double& at(int r, int c) { return taps[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return taps[static_cast<std::size_t>(r) * width + c]; }
};

// Normalized isotropic Gaussian blur kernel.
struct Psf {
  int size = 0;
  double sigma = 0.0;
  Kernel taps;
};

inline Psf gaussian_psf(int size, double sigma) {
  if (size < 1 || size % 2 == 0) throw ValidationError("psf size must be odd and >= 1");
  if (sigma <= 0.0) throw ValidationError("psf sigma must be positive");
  Psf psf;
  psf.size = size;
  psf.sigma = sigma;
  psf.taps = Kernel(size, size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int r = 0; r < size; ++r) {
    for (int col = 0; col < size; ++col) {
      const double dr = r - c;
      const double dc = col - c;
      const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      psf.taps.at(r, col) = v;
      sum += v;
    }
  }
  for (double& t : psf.taps.taps) t /= sum;
  return psf;
}

enum class Boundary { ReplicateEdge, ZeroPad };

// True 2D convolution (correlation with the 180-degree flipped kernel),
// same-size output.
inline Image convolve2d(const Image& img, const Kernel& kernel, Boundary boundary) {
  if (kernel.height % 2 == 0 || kernel.width % 2 == 0)
    throw ValidationError("convolution kernel sides must be odd");
  const int cr = (kernel.height - 1) / 2;
  const int cc = (kernel.width - 1) / 2;
  Image out(img.height, img.width, 0.0, img.peak);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double acc = 0.0;
      for (int ku = 0; ku < kernel.height; ++ku) {
        const int sr = r - (ku - cr);
        for (int kv = 0; kv < kernel.width; ++kv) {
          const int sc = c - (kv - cc);
          double v;
          if (boundary == Boundary::ReplicateEdge) {
            v = img.at_clamped(sr, sc);
          } else {
            v = (sr < 0 || sr >= img.height || sc < 0 || sc >= img.width) ? 0.0 : img.at(sr, sc);
          }
          acc += kernel.at(ku, kv) * v;
        }
      }
      out.at(r, c) = acc;
    }
  }
  return out;
}

inline Image add_gaussian_noise(const Image& img, double sigma_n, std::uint64_t seed) {
  if (sigma_n < 0.0) throw ValidationError("noise sigma must be non-negative");
  Image out = img;
  if (sigma_n == 0.0) return out;
  Rng rng(seed);
  for (double& v : out.data) v += sigma_n * rng.normal();
  return out;
}

// ---------------------------------------------------------------------------
// Raster I/O. Binary PGM (P5, 8-bit) is the native format; binary PPM (P6)
// is accepted for color inputs and converted through BT.601 luminance.
// ---------------------------------------------------------------------------

enum class ChannelPolicy { Grayscale, LuminanceOfRgb };

struct RgbImage {
  Image r, g, b;
};

namespace detail {

inline int next_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns the next integer.
  while (true) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  if (!in) throw IoError("malformed PNM header");
  return value;
}

inline void read_pnm_header(std::istream& in, const std::string& magic, int& w, int& h) {
  w = next_pnm_token(in);
  h = next_pnm_token(in);
  const int maxval = next_pnm_token(in);
  if (w <= 0 || h <= 0) throw IoError(magic + ": zero-sized image");
  if (maxval != 255) throw IoError(magic + ": only 8-bit (maxval 255) supported");
  in.get();  // single whitespace before the raster
}

}  // namespace detail

inline RgbImage load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P6") throw IoError(path + ": not a P6 PPM file");
  int w = 0, h = 0;
  detail::read_pnm_header(in, magic, w, h);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw IoError(path + ": truncated pixel data");
  RgbImage rgb{Image(h, w), Image(h, w), Image(h, w)};
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
    rgb.r.data[i] = raw[3 * i + 0];
    rgb.g.data[i] = raw[3 * i + 1];
    rgb.b.data[i] = raw[3 * i + 2];
  }
  return rgb;
}

// BT.601 luminance, coefficients (0.299, 0.587, 0.114).
inline double bt601_luminance(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

inline Image load_image(const std::string& path, ChannelPolicy policy = ChannelPolicy::Grayscale) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (!in) throw IoError(path + ": unreadable file");
  if (magic == "P5") {
    int w = 0, h = 0;
    detail::read_pnm_header(in, magic, w, h);
    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError(path + ": truncated pixel data");
    Image img(h, w);
    for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i];
    return img;
  }
  if (magic == "P6") {
    if (policy != ChannelPolicy::LuminanceOfRgb)
      throw ValidationError(path + ": RGB input requires the luminance-of-rgb policy");
    in.seekg(0);
    const RgbImage rgb = load_ppm(path);
    Image img(rgb.r.height, rgb.r.width);
    for (std::size_t i = 0; i < img.size(); ++i)
      img.data[i] = bt601_luminance(rgb.r.data[i], rgb.g.data[i], rgb.b.data[i]);
    return img;
  }
  throw IoError(path + ": unsupported raster format (need P5 PGM or P6 PPM)");
}

// Round-half-up, then clamp into [0, peak].
inline unsigned char quantize_u8(double v, double peak) {
  const double rounded = std::floor(v + 0.5);
  return static_cast<unsigned char>(std::clamp(rounded, 0.0, peak));
}

inline void save_image(const Image& img, const std::string& path) {
  if (img.peak > 255.0) throw ValidationError("PGM output requires peak <= 255");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) raw[i] = quantize_u8(img.data[i], img.peak);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("I/O failure writing " + path);
}

inline void save_ppm(const RgbImage& rgb, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << rgb.r.width << " " << rgb.r.height << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(rgb.r.size()) * 3);
  for (std::size_t i = 0; i < rgb.r.size(); ++i) {
    raw[3 * i + 0] = quantize_u8(rgb.r.data[i], 255.0);
    raw[3 * i + 1] = quantize_u8(rgb.g.data[i], 255.0);
    raw[3 * i + 2] = quantize_u8(rgb.b.data[i], 255.0);
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("I/O failure writing " + path);
}

// Full-range BT.601 YCbCr. Chrominance is carried through untouched when a
// color image is round-tripped; only luminance enters the restoration path.
struct YCbCrImage {
  Image y, cb, cr;
};

inline YCbCrImage rgb_to_ycbcr(const RgbImage& rgb) {
  YCbCrImage out{Image(rgb.r.height, rgb.r.width), Image(rgb.r.height, rgb.r.width),
                 Image(rgb.r.height, rgb.r.width)};
  for (std::size_t i = 0; i < rgb.r.size(); ++i) {
    const double r = rgb.r.data[i], g = rgb.g.data[i], b = rgb.b.data[i];
    const double y = bt601_luminance(r, g, b);
    out.y.data[i] = y;
    out.cb.data[i] = 128.0 + (b - y) * (0.5 / 0.886);
    out.cr.data[i] = 128.0 + (r - y) * (0.5 / 0.701);
  }
  return out;
}

inline RgbImage ycbcr_to_rgb(const YCbCrImage& ycc) {
  RgbImage out{Image(ycc.y.height, ycc.y.width), Image(ycc.y.height, ycc.y.width),
               Image(ycc.y.height, ycc.y.width)};
  for (std::size_t i = 0; i < ycc.y.size(); ++i) {
    const double y = ycc.y.data[i];
    const double r = y + (ycc.cr.data[i] - 128.0) * (0.701 / 0.5);
    const double b = y + (ycc.cb.data[i] - 128.0) * (0.886 / 0.5);
    const double g = (y - 0.299 * r - 0.114 * b) / 0.587;
    out.r.data[i] = r;
    out.g.data[i] = g;
    out.b.data[i] = b;
  }
  return out;
}

// Plain-text kernel dump, one row per line, %.12e entries.
inline void write_kernel_text(const Kernel& k, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char buf[32];
  for (int r = 0; r < k.height; ++r) {
    for (int c = 0; c < k.width; ++c) {
      std::snprintf(buf, sizeof(buf), "%.12e", k.at(r, c));
      out << buf << (c + 1 == k.width ? "" : " ");
    }
    out << "\n";
  }
}

inline Image scaled(const Image& img, double factor, double new_peak) {
  Image out = img;
  for (double& v : out.data) v *= factor;
  out.peak = new_peak;
  return out;
}

// [0, peak] -> [0, 1] working scale used by training, RFN and the bounds.
inline Image to_unit_scale(const Image& img) { return scaled(img, 1.0 / img.peak, 1.0); }
inline Image to_peak_scale(const Image& img, double peak = 255.0) {
  return scaled(img, peak / img.peak, peak);
}

}  // namespace fsir
