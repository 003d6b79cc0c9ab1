#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cbm/error.hpp"
#include "cbm/image.hpp"
#include "cbm/rng.hpp"
#include "cbm/salience.hpp"

namespace cbm {

enum class MaskingMode { Gradient, Uniform, None };

inline const char* to_string(MaskingMode mode) {
  switch (mode) {
    case MaskingMode::Gradient: return "gradient";
    case MaskingMode::Uniform: return "uniform";
    case MaskingMode::None: return "none";
  }
  return "?";
}

inline MaskingMode parse_masking_mode(const std::string& name) {
  if (name == "gradient") return MaskingMode::Gradient;
  if (name == "uniform") return MaskingMode::Uniform;
  if (name == "none") return MaskingMode::None;
  throw Error(ErrorKind::Config, "unknown masking mode '" + name + "' (gradient|uniform|none)");
}

enum class Replacement {
  Without,  // exact count: renormalize over the remaining patches after every draw
  With,     // literal loop of independent draws; repeats mask fewer distinct patches
};

/// Patches chosen for one image at one epoch.
struct MaskPlan {
  std::vector<std::size_t> indices;  // sorted ascending, distinct, in 1..patch_count
  std::size_t patch_count = 0;
  StreamKey stream;

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }

  friend bool operator==(const MaskPlan&, const MaskPlan&) = default;
};

/// round-half-up(n * ratio), clamped to [0, n].
inline std::size_t mask_count(std::size_t n, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw Error(ErrorKind::InvalidInput, "masking ratio must lie in [0, 1], got " +
                                             std::to_string(ratio));
  }
  const double scaled = std::floor(static_cast<double>(n) * ratio + 0.5);
  return std::min(n, static_cast<std::size_t>(std::max(0.0, scaled)));
}

namespace detail {

// Categorical draw over `weights` restricted to entries where `taken` is false.
// Returns n when no available entry has positive weight.
inline std::size_t draw_available(const std::vector<double>& weights,
                                  const std::vector<char>& taken, RngStream& rng) {
  const std::size_t n = weights.size();
  double total = 0.0;
  std::size_t last_positive = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!taken[i] && weights[i] > 0.0) {
      total += weights[i];
      last_positive = i;
    }
  }
  if (last_positive == n) return n;

  const double target = rng.uniform() * total;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (taken[i] || !(weights[i] > 0.0)) continue;
    cumulative += weights[i];
    if (target < cumulative) return i;
  }
  return last_positive;
}

inline std::size_t draw_uniform_available(const std::vector<char>& taken, std::size_t free_count,
                                          RngStream& rng) {
  auto pick = rng.below(free_count);
  for (std::size_t i = 0; i < taken.size(); ++i) {
    if (taken[i]) continue;
    if (pick == 0) return i;
    --pick;
  }
  return taken.size();
}

}  // namespace detail

/// Salience-weighted patch selection. Draws round(n * ratio) distinct patches
/// from the profile's distribution; once the positive-probability support is
/// exhausted the remaining picks are uniform over unmasked patches.
inline MaskPlan plan_mask(const SalienceProfile& profile, double ratio, RngStream& rng,
                          Replacement replacement = Replacement::Without) {
  const std::size_t n = profile.size();
  const std::size_t count = mask_count(n, ratio);

  MaskPlan plan;
  plan.patch_count = n;
  plan.stream = rng.key();
  std::vector<char> taken(n, 0);

  if (replacement == Replacement::With) {
    const std::vector<char> none(n, 0);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = detail::draw_available(profile.probabilities, none, rng);
      if (j == n) j = static_cast<std::size_t>(rng.below(n));
      taken[j] = 1;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = detail::draw_available(profile.probabilities, taken, rng);
      if (j == n) j = detail::draw_uniform_available(taken, n - i, rng);
      taken[j] = 1;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (taken[i]) plan.indices.push_back(i + 1);
  }
  return plan;
}

/// Baseline: every patch equally likely.
inline MaskPlan plan_mask_uniform(std::size_t n, double ratio, RngStream& rng,
                                  Replacement replacement = Replacement::Without) {
  SalienceProfile flat;
  flat.magnitudes.assign(n, 1.0);
  flat.probabilities.assign(n, n == 0 ? 0.0 : 1.0 / static_cast<double>(n));
  return plan_mask(flat, ratio, rng, replacement);
}

/// In-place variant of apply_mask.
inline void apply_mask_inplace(Image& image, const PatchGrid& grid, const MaskPlan& plan) {
  grid.check_divides(image.height(), image.width());
  const std::size_t n = grid.count();
  for (auto index : plan.indices) {
    if (index == 0 || index > n) {
      throw Error(ErrorKind::InvalidPlan, "patch index " + std::to_string(index) +
                                              " outside grid of " + std::to_string(n));
    }
  }
  const std::size_t ph = grid.patch_height(image.height());
  const std::size_t pw = grid.patch_width(image.width());
  const std::size_t channels = image.channels();
  for (auto index : plan.indices) {
    const std::size_t row = (index - 1) / grid.cols;
    const std::size_t col = (index - 1) % grid.cols;
    for (std::size_t y = row * ph; y < (row + 1) * ph; ++y) {
      float* line = &image.at(y, col * pw);
      std::fill(line, line + pw * channels, 0.0f);
    }
  }
}

/// Copy of `image` with every pixel (all channels) of every planned patch set to 0.
inline Image apply_mask(const Image& image, const PatchGrid& grid, const MaskPlan& plan) {
  Image out = image;
  apply_mask_inplace(out, grid, plan);
  return out;
}

}  // namespace cbm
