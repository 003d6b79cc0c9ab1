#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cbm/error.hpp"
#include "cbm/image.hpp"

namespace cbm {

// Rec. 601 luma weights.
inline constexpr double kLumaRed = 0.299;
inline constexpr double kLumaGreen = 0.587;
inline constexpr double kLumaBlue = 0.114;

enum class GradientOperator {
  Central,  // (I[x+1] - I[x-1]) / 2 with replicated borders
  Sobel,    // 3x3 Sobel scaled by 1/8, replicated borders
};

inline GradientOperator parse_gradient_operator(const std::string& name) {
  if (name == "central") return GradientOperator::Central;
  if (name == "sobel") return GradientOperator::Sobel;
  throw Error(ErrorKind::Config, "unknown gradient operator '" + name + "' (central|sobel)");
}

inline const char* to_string(GradientOperator op) {
  return op == GradientOperator::Sobel ? "sobel" : "central";
}

/// Per-pixel gradient magnitude, row-major h x w.
struct MagnitudeMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Per-patch mean gradient magnitude and the masking distribution derived from it.
struct SalienceProfile {
  std::vector<double> magnitudes;
  std::vector<double> probabilities;

  std::size_t size() const noexcept { return probabilities.size(); }

  friend bool operator==(const SalienceProfile&, const SalienceProfile&) = default;
};

inline Image to_grayscale(const Image& image) {
  if (image.channels() == 1) return image;
  if (image.channels() != 3) {
    throw Error(ErrorKind::InvalidInput,
                "to_grayscale expects 1 or 3 channels, got " + std::to_string(image.channels()));
  }
  Image gray(image.height(), image.width(), 1);
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      const double luma = kLumaRed * image.at(y, x, 0) + kLumaGreen * image.at(y, x, 1) +
                          kLumaBlue * image.at(y, x, 2);
      gray.at(y, x) = static_cast<float>(luma);
    }
  }
  return gray;
}

namespace detail {

inline std::vector<double> gray_plane(const Image& gray) {
  return std::vector<double>(gray.pixels().begin(), gray.pixels().end());
}

inline MagnitudeMap gradient_magnitude_plane(const std::vector<double>& plane, std::size_t height,
                                             std::size_t width, GradientOperator op) {
  MagnitudeMap out{height, width, std::vector<double>(height * width)};
  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  const auto px = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    y = std::clamp<std::ptrdiff_t>(y, 0, h - 1);
    x = std::clamp<std::ptrdiff_t>(x, 0, w - 1);
    return plane[static_cast<std::size_t>(y * w + x)];
  };

  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double dx = 0.0;
      double dy = 0.0;
      if (op == GradientOperator::Central) {
        dx = (px(y, x + 1) - px(y, x - 1)) / 2.0;
        dy = (px(y + 1, x) - px(y - 1, x)) / 2.0;
      } else {
        dx = ((px(y - 1, x + 1) - px(y - 1, x - 1)) + 2.0 * (px(y, x + 1) - px(y, x - 1)) +
              (px(y + 1, x + 1) - px(y + 1, x - 1))) /
             8.0;
        dy = ((px(y + 1, x - 1) - px(y - 1, x - 1)) + 2.0 * (px(y + 1, x) - px(y - 1, x)) +
              (px(y + 1, x + 1) - px(y - 1, x + 1))) /
             8.0;
      }
      out.values[static_cast<std::size_t>(y * w + x)] = std::sqrt(dx * dx + dy * dy);
    }
  }
  return out;
}

}  // namespace detail

/// Gradient magnitude of a single-channel image.
inline MagnitudeMap gradient_magnitude(const Image& gray,
                                       GradientOperator op = GradientOperator::Central) {
  if (gray.channels() != 1) {
    throw Error(ErrorKind::InvalidInput, "gradient_magnitude expects a single-channel image");
  }
  return detail::gradient_magnitude_plane(detail::gray_plane(gray), gray.height(), gray.width(),
                                          op);
}

/// Patch means of the magnitude map, normalized into masking probabilities.
/// A map with zero total salience yields the uniform distribution.
inline SalienceProfile patch_probabilities(const MagnitudeMap& magnitude, const PatchGrid& grid) {
  grid.check_divides(magnitude.height, magnitude.width);
  const std::size_t ph = grid.patch_height(magnitude.height);
  const std::size_t pw = grid.patch_width(magnitude.width);
  const std::size_t n = grid.count();

  SalienceProfile profile;
  profile.magnitudes.assign(n, 0.0);
  profile.probabilities.assign(n, 0.0);

  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      double sum = 0.0;
      for (std::size_t y = r * ph; y < (r + 1) * ph; ++y) {
        for (std::size_t x = c * pw; x < (c + 1) * pw; ++x) sum += magnitude.at(y, x);
      }
      profile.magnitudes[r * grid.cols + c] = sum / static_cast<double>(ph * pw);
    }
  }

  double total = 0.0;
  for (double m : profile.magnitudes) total += m;
  if (total > 0.0) {
    for (std::size_t i = 0; i < n; ++i) profile.probabilities[i] = profile.magnitudes[i] / total;
  } else {
    std::fill(profile.probabilities.begin(), profile.probabilities.end(),
              1.0 / static_cast<double>(n));
  }
  return profile;
}

/// Full salience pipeline: grayscale, gradient magnitude, patch distribution.
inline SalienceProfile salience_profile(const Image& image, const PatchGrid& grid,
                                        GradientOperator op = GradientOperator::Central) {
  grid.check_divides(image.height(), image.width());
  return patch_probabilities(gradient_magnitude(to_grayscale(image), op), grid);
}

}  // namespace cbm
