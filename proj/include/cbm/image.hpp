#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cbm/error.hpp"

namespace cbm {

/// Dense interleaved (row-major, HWC) raster. Ingested pixels live in [0, 255].
class Image {
public:
  Image() = default;

  Image(std::size_t height, std::size_t width, std::size_t channels, float fill = 0.0f)
      : height_(height), width_(width), channels_(channels) {
    check_shape();
    pixels_.assign(height * width * channels, fill);
  }

  Image(std::size_t height, std::size_t width, std::size_t channels, std::vector<float> pixels)
      : height_(height), width_(width), channels_(channels), pixels_(std::move(pixels)) {
    check_shape();
    if (pixels_.size() != height * width * channels) {
      throw Error(ErrorKind::InvalidInput,
                  "pixel count " + std::to_string(pixels_.size()) + " does not match " +
                      std::to_string(height) + "x" + std::to_string(width) + "x" +
                      std::to_string(channels));
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  float& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels_[(y * width_ + x) * channels_ + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels_[(y * width_ + x) * channels_ + c];
  }

  const std::vector<float>& pixels() const noexcept { return pixels_; }
  std::vector<float>& pixels() noexcept { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

private:
  void check_shape() const {
    if (height_ == 0 || width_ == 0) {
      throw Error(ErrorKind::InvalidInput, "image dimensions must be positive");
    }
    if (channels_ != 1 && channels_ != 3) {
      throw Error(ErrorKind::InvalidInput,
                  "unsupported channel count " + std::to_string(channels_));
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> pixels_;
};

/// Non-overlapping partition of an image into rows x cols patches.
/// Patch indices are 0-based and row-major: index = row * cols + col.
struct PatchGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t count() const noexcept { return rows * cols; }

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;

  /// Throws InvalidGrid unless height and width split exactly into this grid.
  void check_divides(std::size_t height, std::size_t width) const {
    if (rows == 0 || cols == 0) {
      throw Error(ErrorKind::InvalidGrid, "patch grid must have at least one row and column");
    }
    if (height % rows != 0 || width % cols != 0) {
      throw Error(ErrorKind::InvalidGrid,
                  std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by grid " + std::to_string(rows) + "x" +
                      std::to_string(cols));
    }
  }

  std::size_t patch_height(std::size_t height) const { return height / rows; }
  std::size_t patch_width(std::size_t width) const { return width / cols; }
};

/// Parses "RxC" (e.g. "4x4").
inline PatchGrid parse_grid(const std::string& text) {
  const auto pos = text.find('x');
  if (pos == std::string::npos || pos == 0 || pos + 1 == text.size()) {
    throw Error(ErrorKind::Config, "grid must look like 4x4, got '" + text + "'");
  }
  try {
    std::size_t used = 0;
    const auto rows = std::stoul(text.substr(0, pos), &used);
    if (used != pos) throw std::invalid_argument(text);
    const auto rest = text.substr(pos + 1);
    const auto cols = std::stoul(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(text);
    if (rows == 0 || cols == 0) throw std::invalid_argument(text);
    return PatchGrid{rows, cols};
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::Config, "grid must look like 4x4, got '" + text + "'");
  }
}

inline std::string to_string(const PatchGrid& grid) {
  return std::to_string(grid.rows) + "x" + std::to_string(grid.cols);
}

/// Target ingest geometry, written as "HxWxC" (e.g. "16x16x1").
struct Geometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t input_dim() const noexcept { return height * width * channels; }

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

inline Geometry parse_geometry(const std::string& text) {
  Geometry g;
  const auto fail = [&] {
    return Error(ErrorKind::Config, "geometry must look like 16x16x1, got '" + text + "'");
  };
  std::size_t values[3] = {0, 0, 0};
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const auto end = text.find('x', start);
    const auto piece = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (piece.empty() || piece.find_first_not_of("0123456789") != std::string::npos) throw fail();
    values[i] = std::stoul(piece);
    if (i < 2 && end == std::string::npos) throw fail();
    if (i == 2 && end != std::string::npos) throw fail();
    start = end + 1;
  }
  g.height = values[0];
  g.width = values[1];
  g.channels = values[2];
  if (g.height == 0 || g.width == 0 || (g.channels != 1 && g.channels != 3)) throw fail();
  return g;
}

inline std::string to_string(const Geometry& g) {
  return std::to_string(g.height) + "x" + std::to_string(g.width) + "x" +
         std::to_string(g.channels);
}

}  // namespace cbm
