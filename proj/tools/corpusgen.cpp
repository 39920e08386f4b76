// Deterministic synthetic-scene generator for the bundled test corpus.
// Scenes are piecewise smooth with hard edges and a little periodic
// texture, which is the structure the restoration pipeline targets.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "fsir/image.hpp"
#include "fsir/rng.hpp"

namespace {

using namespace fsir;

constexpr double kPi = 3.14159265358979323846;

Image make_scene(int index, int size, std::uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  Image img(size, size);

  // Smooth background: linear ramp plus one low-frequency wave.
  const double g0 = rng.uniform(70.0, 120.0);
  const double gx = rng.uniform(-50.0, 50.0);
  const double gy = rng.uniform(-50.0, 50.0);
  const double wave_amp = rng.uniform(6.0, 16.0);
  const double wave_fx = rng.uniform(0.5, 1.5);
  const double wave_fy = rng.uniform(0.5, 1.5);
  const double wave_ph = rng.uniform(0.0, 2.0 * kPi);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double x = static_cast<double>(c) / size;
      const double y = static_cast<double>(r) / size;
      img.at(r, c) = g0 + gx * x + gy * y +
                     wave_amp * std::sin(2.0 * kPi * (wave_fx * x + wave_fy * y) +
                                         wave_ph);
    }

  // Opaque ellipses: hard boundaries with a gentle internal shade.
  const int n_ellipses = 3 + static_cast<int>(rng.below(4));
  for (int e = 0; e < n_ellipses; ++e) {
    const double cx = rng.uniform(0.1, 0.9) * size;
    const double cy = rng.uniform(0.1, 0.9) * size;
    const double ax = rng.uniform(size / 16.0, size / 4.0);
    const double ay = rng.uniform(size / 16.0, size / 4.0);
    const double angle = rng.uniform(0.0, kPi);
    const double level = rng.uniform(30.0, 225.0);
    const double shade = rng.uniform(-20.0, 20.0);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        const double dx = c - cx, dy = r - cy;
        const double u = (ca * dx + sa * dy) / ax;
        const double v = (-sa * dx + ca * dy) / ay;
        if (u * u + v * v <= 1.0) img.at(r, c) = level + shade * u;
      }
  }

  // Axis-aligned rectangles.
  const int n_rects = 2 + static_cast<int>(rng.below(3));
  for (int q = 0; q < n_rects; ++q) {
    const int r0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size * 3 / 4)));
    const int c0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size * 3 / 4)));
    const int h = size / 10 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 5)));
    const int w = size / 10 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 5)));
    const double level = rng.uniform(30.0, 225.0);
    for (int r = r0; r < std::min(size, r0 + h); ++r)
      for (int c = c0; c < std::min(size, c0 + w); ++c) img.at(r, c) = level;
  }

  // Fine periodic texture inside a band: detail a blur destroys.
  const int n_tex = 1 + static_cast<int>(rng.below(2));
  for (int q = 0; q < n_tex; ++q) {
    const int r0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 2)));
    const int c0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 2)));
    const int h = size / 6 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 4)));
    const int w = size / 6 + static_cast<int>(rng.below(static_cast<std::uint64_t>(size / 4)));
    const double amp = rng.uniform(15.0, 35.0);
    const double period = rng.uniform(3.0, 8.0);
    const double dir = rng.uniform(0.0, kPi);
    const double kx = std::cos(dir) * 2.0 * kPi / period;
    const double ky = std::sin(dir) * 2.0 * kPi / period;
    const double ph = rng.uniform(0.0, 2.0 * kPi);
    for (int r = r0; r < std::min(size, r0 + h); ++r)
      for (int c = c0; c < std::min(size, c0 + w); ++c)
        img.at(r, c) += amp * std::sin(kx * c + ky * r + ph);
  }

  for (double& v : img.data) v = std::clamp(v, 0.0, 255.0);
  return img;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generate the synthetic grayscale corpus"};
  std::string out_dir = "data";
  int count = 6;
  int size = 128;
  std::uint64_t seed = 20260823;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--count", count, "number of scenes");
  app.add_option("--size", size, "image side length");
  app.add_option("--seed", seed, "corpus seed");
  CLI11_PARSE(app, argc, argv);

  std::filesystem::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "corpus_%02d.pgm", i);
    fsir::save_image(make_scene(i, size, seed),
                     (std::filesystem::path(out_dir) / name).string());
  }
  return 0;
}
