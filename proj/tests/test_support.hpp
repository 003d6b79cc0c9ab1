#pragma once

// Shared fixtures and independent oracles for the test suites. Nothing here
// calls into the salience/masking implementation it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cbm/image.hpp"
#include "cbm/rng.hpp"

namespace cbm::testing {

/// 8x8 grayscale: the top-left 4x4 quadrant is a 0/255 checkerboard of 2x2
/// cells, the other three quadrants are flat at 100. (A 1-pixel checkerboard
/// would vanish under central differences.)
inline Image quadrant_image() {
  Image img(8, 8, 1, 100.0f);
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) img.at(y, x) = ((x / 2 + y / 2) % 2 == 0) ? 255.0f : 0.0f;
  }
  return img;
}

/// Integer-valued random image in [0, 255].
inline Image random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  RngStream rng(seed, 77, 0);
  Image img(h, w, c);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.below(256));
  return img;
}

/// Brute-force salience: literal central differences with replicated edges,
/// per-patch means, normalization with uniform fallback. Grayscale input only.
struct OracleProfile {
  std::vector<double> m;
  std::vector<double> p;
};

inline double oracle_pixel(const Image& g, long y, long x) {
  const long h = static_cast<long>(g.height());
  const long w = static_cast<long>(g.width());
  y = y < 0 ? 0 : (y >= h ? h - 1 : y);
  x = x < 0 ? 0 : (x >= w ? w - 1 : x);
  return g.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
}

inline double oracle_magnitude(const Image& g, long y, long x) {
  const double ix = 0.5 * (oracle_pixel(g, y, x + 1) - oracle_pixel(g, y, x - 1));
  const double iy = 0.5 * (oracle_pixel(g, y + 1, x) - oracle_pixel(g, y - 1, x));
  return std::hypot(ix, iy);
}

inline OracleProfile oracle_salience(const Image& g, std::size_t rows, std::size_t cols) {
  const std::size_t ph = g.height() / rows;
  const std::size_t pw = g.width() / cols;
  OracleProfile out;
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const std::size_t r = i / cols;
    const std::size_t c = i % cols;
    double acc = 0.0;
    for (std::size_t dy = 0; dy < ph; ++dy) {
      for (std::size_t dx = 0; dx < pw; ++dx) {
        acc += oracle_magnitude(g, static_cast<long>(r * ph + dy), static_cast<long>(c * pw + dx));
      }
    }
    out.m.push_back(acc / static_cast<double>(ph * pw));
  }
  double total = 0.0;
  for (double v : out.m) total += v;
  for (double v : out.m) {
    out.p.push_back(total > 0 ? v / total : 1.0 / static_cast<double>(out.m.size()));
  }
  return out;
}

/// Probability that sampling two items without replacement from `p` yields
/// the unordered pair {i, j}: both orders of sequential renormalized draws.
inline double pair_probability(const std::vector<double>& p, std::size_t i, std::size_t j) {
  return p[i] * p[j] / (1.0 - p[i]) + p[j] * p[i] / (1.0 - p[j]);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cbm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace cbm::testing
