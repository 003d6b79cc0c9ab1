#pragma once

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "cbm/error.hpp"
#include "cbm/image.hpp"
#include "cbm/image_io.hpp"
#include "cbm/io.hpp"
#include "cbm/masking.hpp"
#include "cbm/rng.hpp"
#include "cbm/salience.hpp"
#include "cbm/schedule.hpp"

namespace cbm {

namespace fs = std::filesystem;

enum class Split { Train, Val };

struct DatasetItem {
  std::uint64_t id = 0;
  std::string path;  // empty for generated items
  int label = 0;
  Split split = Split::Train;
  Image image;  // ingested geometry, [0, 255]
  SalienceProfile profile;
};

struct DatasetManifest {
  std::vector<DatasetItem> items;
  std::vector<std::string> classes;
  Geometry geometry;
  PatchGrid grid;
  GradientOperator gradient = GradientOperator::Central;
  std::size_t skipped = 0;  // unreadable files during ingest

  std::vector<std::size_t> indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].split == split) out.push_back(i);
    }
    return out;
  }

  std::size_t class_count() const noexcept { return classes.size(); }
};

// ---------------------------------------------------------------------------
// Salience cache
// ---------------------------------------------------------------------------

/// FNV-1a over pixel bytes, geometry, grid and gradient operator. Any change
/// in those yields a different key, which is how stale cache records are skipped.
inline std::uint64_t content_hash(const Image& image, const PatchGrid& grid, GradientOperator op) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto feed = [&h](const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t dims[6] = {image.height(), image.width(), image.channels(),
                                 grid.rows,      grid.cols,     static_cast<std::uint64_t>(op)};
  feed(dims, sizeof dims);
  for (float v : image.pixels()) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char le[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                           static_cast<unsigned char>(bits >> 16),
                           static_cast<unsigned char>(bits >> 24)};
    feed(le, 4);
  }
  return h;
}

inline constexpr char kCacheMagic[5] = {'C', 'B', 'M', 'S', '1'};
inline constexpr const char* kCacheFileName = ".cbm_salience.cbms";

using SalienceCache = std::map<std::uint64_t, SalienceProfile>;

namespace detail {

inline void put_le(std::string& out, std::uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

inline std::uint64_t get_le(const std::string& in, std::size_t& pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) {
    throw Error(ErrorKind::Io, "salience cache truncated");
  }
  std::uint64_t value = 0;
  for (int i = 0; i < bytes; ++i) {
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += static_cast<std::size_t>(bytes);
  return value;
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  put_le(out, bits, 8);
}

inline double get_f64(const std::string& in, std::size_t& pos) {
  const std::uint64_t bits = get_le(in, pos, 8);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

/// Binary layout: magic "CBMS1", then per record: id hash (u64 LE), n (u32 LE),
/// n f64 LE probabilities, n f64 LE magnitudes. Records are ordered by hash.
inline std::string encode_cache(const SalienceCache& cache) {
  std::string out(kCacheMagic, sizeof kCacheMagic);
  for (const auto& [hash, profile] : cache) {
    detail::put_le(out, hash, 8);
    detail::put_le(out, profile.size(), 4);
    for (double p : profile.probabilities) detail::put_f64(out, p);
    for (double m : profile.magnitudes) detail::put_f64(out, m);
  }
  return out;
}

inline SalienceCache decode_cache(const std::string& bytes) {
  if (bytes.size() < sizeof kCacheMagic ||
      std::memcmp(bytes.data(), kCacheMagic, sizeof kCacheMagic) != 0) {
    throw Error(ErrorKind::Io, "salience cache has wrong magic");
  }
  SalienceCache cache;
  std::size_t pos = sizeof kCacheMagic;
  while (pos < bytes.size()) {
    const auto hash = detail::get_le(bytes, pos, 8);
    const auto n = static_cast<std::size_t>(detail::get_le(bytes, pos, 4));
    SalienceProfile profile;
    profile.probabilities.resize(n);
    profile.magnitudes.resize(n);
    for (auto& p : profile.probabilities) p = detail::get_f64(bytes, pos);
    for (auto& m : profile.magnitudes) m = detail::get_f64(bytes, pos);
    cache[hash] = std::move(profile);
  }
  return cache;
}

inline SalienceCache load_cache(const fs::path& path) {
  if (!fs::exists(path)) return {};
  return decode_cache(read_file(path));
}

inline void save_cache(const fs::path& path, const SalienceCache& cache) {
  write_file_atomic(path, encode_cache(cache));
}

/// Recomputes salience for up to `sample` items and counts mismatches with the
/// stored profiles (bitwise comparison).
inline std::size_t verify_profiles(const DatasetManifest& manifest, std::size_t sample) {
  std::size_t mismatches = 0;
  const std::size_t count = std::min(sample, manifest.items.size());
  for (std::size_t i = 0; i < count; ++i) {
    const auto& item = manifest.items[i];
    if (!(salience_profile(item.image, manifest.grid, manifest.gradient) == item.profile)) {
      ++mismatches;
    }
  }
  return mismatches;
}

// ---------------------------------------------------------------------------
// Ingest
// ---------------------------------------------------------------------------

struct IngestOptions {
  double val_fraction = 0.2;
  std::uint64_t split_seed = 0;
  GradientOperator gradient = GradientOperator::Central;
  bool use_cache = true;
  bool rebuild_cache = false;
};

struct IngestStats {
  std::size_t cache_hits = 0;
  std::size_t computed = 0;
  bool cache_written = false;
};

/// Loads `root/<class>/*.{png,ppm,pgm}`. Classes are sorted directory names;
/// files within a class are sorted by name. Each class is split into train and
/// validation by a seeded shuffle; at least one item per class stays in train.
inline DatasetManifest ingest(const fs::path& root, const Geometry& geometry, const PatchGrid& grid,
                              const IngestOptions& options = {}, IngestStats* stats = nullptr) {
  grid.check_divides(geometry.height, geometry.width);
  if (!(options.val_fraction >= 0.0 && options.val_fraction < 1.0)) {
    throw Error(ErrorKind::Config, "validation fraction must lie in [0, 1)");
  }
  if (!fs::is_directory(root)) {
    throw Error(ErrorKind::Io, "dataset root '" + root.string() + "' is not a directory");
  }

  DatasetManifest manifest;
  manifest.geometry = geometry;
  manifest.grid = grid;
  manifest.gradient = options.gradient;

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  const fs::path cache_path = root / kCacheFileName;
  SalienceCache cache;
  if (options.use_cache && !options.rebuild_cache) {
    try {
      cache = load_cache(cache_path);
    } catch (const Error&) {
      cache.clear();  // unreadable cache is rebuilt
    }
  }
  IngestStats local;
  bool cache_dirty = options.rebuild_cache;

  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<DatasetItem> loaded;
    for (const auto& file : files) {
      Image image;
      try {
        image = read_image(file);
      } catch (const Error&) {
        ++manifest.skipped;
        continue;
      }
      image = convert_channels(resize_nearest(image, geometry.height, geometry.width),
                               geometry.channels);
      DatasetItem item;
      item.path = file.string();
      item.label = static_cast<int>(manifest.classes.size());
      item.image = std::move(image);
      loaded.push_back(std::move(item));
    }
    if (loaded.empty()) continue;

    // Seeded per-class shuffle decides the validation members.
    std::vector<std::size_t> order(loaded.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream rng(options.split_seed, manifest.classes.size(), kShuffleStream);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    auto val_count = static_cast<std::size_t>(
        std::floor(options.val_fraction * static_cast<double>(loaded.size())));
    val_count = std::min(val_count, loaded.size() - 1);
    for (std::size_t i = 0; i < val_count; ++i) loaded[order[i]].split = Split::Val;

    manifest.classes.push_back(dir.filename().string());
    for (auto& item : loaded) manifest.items.push_back(std::move(item));
  }

  if (manifest.items.empty()) {
    throw Error(ErrorKind::Config, "no readable images under '" + root.string() + "'");
  }

  for (std::size_t i = 0; i < manifest.items.size(); ++i) {
    auto& item = manifest.items[i];
    item.id = i;
    const auto hash = content_hash(item.image, grid, options.gradient);
    if (auto it = cache.find(hash); it != cache.end() && it->second.size() == grid.count()) {
      item.profile = it->second;
      ++local.cache_hits;
    } else {
      item.profile = salience_profile(item.image, grid, options.gradient);
      cache[hash] = item.profile;
      ++local.computed;
      cache_dirty = true;
    }
  }

  // Spot-check cached records against fresh computation.
  if (local.cache_hits > 0 && verify_profiles(manifest, 8) != 0) {
    cache.clear();
    for (auto& item : manifest.items) {
      item.profile = salience_profile(item.image, grid, options.gradient);
      cache[content_hash(item.image, grid, options.gradient)] = item.profile;
    }
    local.computed = manifest.items.size();
    local.cache_hits = 0;
    cache_dirty = true;
  }

  if (options.use_cache && cache_dirty) {
    save_cache(cache_path, cache);
    local.cache_written = true;
  }
  if (stats) *stats = local;
  return manifest;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  std::string generator = "two-shapes";
  std::size_t train = 400;
  std::size_t val = 200;
  std::uint64_t seed = 1;
};

namespace detail {

// Class 0: filled disk. Class 1: filled axis-aligned square. Random center,
// scale and intensity on a noisy textured background; integer pixel values.
inline Image two_shapes_sample(int label, RngStream& rng) {
  constexpr std::size_t kSize = 16;
  Image image(kSize, kSize, 1);
  const double base = 20.0 + 40.0 * rng.uniform();
  const double stripe = 10.0 * rng.uniform();
  const double freq = 0.6 + 0.8 * rng.uniform();
  for (std::size_t y = 0; y < kSize; ++y) {
    for (std::size_t x = 0; x < kSize; ++x) {
      const double texture = stripe * std::sin(freq * static_cast<double>(x + 2 * y));
      image.at(y, x) = static_cast<float>(base + texture + 12.0 * (rng.uniform() - 0.5));
    }
  }

  // Shapes of equal area so that total brightness carries no class signal.
  const double cx = 6.5 + 3.0 * rng.uniform();
  const double cy = 6.5 + 3.0 * rng.uniform();
  const double intensity = 150.0 + 80.0 * rng.uniform();
  const double radius = 3.0 + 2.5 * rng.uniform();
  const double half = radius * std::sqrt(std::acos(-1.0)) / 2.0;
  for (std::size_t y = 0; y < kSize; ++y) {
    for (std::size_t x = 0; x < kSize; ++x) {
      const double dx = std::abs(static_cast<double>(x) + 0.5 - cx);
      const double dy = std::abs(static_cast<double>(y) + 0.5 - cy);
      const bool inside = label == 0 ? dx * dx + dy * dy <= radius * radius : dx <= half && dy <= half;
      if (inside) image.at(y, x) = static_cast<float>(intensity);
    }
  }
  for (auto& v : image.pixels()) v = std::clamp(std::round(v), 0.0f, 255.0f);
  return image;
}

}  // namespace detail

/// Built-in generated datasets. "two-shapes" yields 16x16x1 images with
/// labels alternating 0/1, so each split is balanced (within one for odd sizes).
inline DatasetManifest make_synthetic(const SyntheticSpec& spec, const PatchGrid& grid,
                                      GradientOperator op = GradientOperator::Central) {
  if (spec.generator != "two-shapes") {
    throw Error(ErrorKind::Config, "unknown synthetic generator '" + spec.generator + "'");
  }
  if (spec.train < 2) throw Error(ErrorKind::Config, "synthetic train split needs >= 2 items");
  DatasetManifest manifest;
  manifest.geometry = Geometry{16, 16, 1};
  manifest.grid = grid;
  manifest.gradient = op;
  manifest.classes = {"disk", "square"};
  grid.check_divides(16, 16);

  const std::size_t total = spec.train + spec.val;
  manifest.items.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const bool train = i < spec.train;
    const std::size_t local = train ? i : i - spec.train;
    DatasetItem item;
    item.id = i;
    item.label = static_cast<int>(local % 2);
    item.split = train ? Split::Train : Split::Val;
    RngStream rng(spec.seed, kSyntheticStream, i);
    item.image = detail::two_shapes_sample(item.label, rng);
    item.profile = salience_profile(item.image, grid, op);
    manifest.items.push_back(std::move(item));
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Epoch streams and batches
// ---------------------------------------------------------------------------

enum class Granularity { PerEpoch, PerStep };

inline Granularity parse_granularity(const std::string& name) {
  if (name == "per-epoch") return Granularity::PerEpoch;
  if (name == "per-step") return Granularity::PerStep;
  throw Error(ErrorKind::Config, "granularity must be per-epoch or per-step, got '" + name + "'");
}

inline const char* to_string(Granularity g) {
  return g == Granularity::PerStep ? "per-step" : "per-epoch";
}

/// Masking options shared by every batch of a run.
struct MaskingOptions {
  MaskingMode mode = MaskingMode::Gradient;
  Replacement replacement = Replacement::Without;
};

/// One epoch's worth of work: shuffled train order and per-batch ratios.
struct EpochStream {
  std::size_t epoch = 1;
  std::uint64_t seed = 0;
  std::size_t batch_size = 1;
  std::vector<std::size_t> order;  // manifest item indices
  std::vector<double> ratios;      // one per batch

  std::size_t batch_count() const noexcept { return ratios.size(); }
};

struct Batch {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> inputs;  // rows x dim, scaled to [0, 1] after masking
  std::vector<int> labels;
  std::vector<std::uint64_t> ids;

  friend bool operator==(const Batch&, const Batch&) = default;
};

inline std::size_t batches_per_epoch(std::size_t items, std::size_t batch_size) {
  return (items + batch_size - 1) / batch_size;
}

/// Deterministic Fisher-Yates shuffle of the train split keyed by (seed, epoch).
inline std::vector<std::size_t> epoch_order(const DatasetManifest& manifest, std::uint64_t seed,
                                            std::size_t epoch) {
  auto order = manifest.indices(Split::Train);
  RngStream rng(seed, epoch, kShuffleStream);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

/// With per-epoch granularity `schedule` has one entry per epoch; with per-step
/// it has one entry per optimizer step across the whole run.
inline EpochStream make_epoch_stream(const DatasetManifest& manifest, const ScheduleVector& schedule,
                                     std::size_t epoch, std::size_t batch_size, std::uint64_t seed,
                                     Granularity granularity = Granularity::PerEpoch) {
  if (batch_size == 0) throw Error(ErrorKind::Config, "batch size must be >= 1");
  EpochStream stream;
  stream.epoch = epoch;
  stream.seed = seed;
  stream.batch_size = batch_size;
  stream.order = epoch_order(manifest, seed, epoch);
  if (stream.order.empty()) throw Error(ErrorKind::Config, "dataset has no training items");
  const std::size_t steps = batches_per_epoch(stream.order.size(), batch_size);
  stream.ratios.resize(steps);
  for (std::size_t b = 0; b < steps; ++b) {
    stream.ratios[b] = granularity == Granularity::PerEpoch
                           ? schedule.ratio_at(epoch)
                           : schedule.ratio_at((epoch - 1) * steps + b + 1);
  }
  return stream;
}

/// Masked image for one training item under a given ratio. The mask substream
/// is (seed, epoch, item id), independent of batch composition and call order.
inline Image masked_training_image(const DatasetManifest& manifest, const DatasetItem& item,
                                   double ratio, std::size_t epoch, std::uint64_t seed,
                                   const MaskingOptions& masking) {
  if (masking.mode == MaskingMode::None || ratio <= 0.0) return item.image;
  RngStream rng(seed, epoch, item.id);
  const MaskPlan plan =
      masking.mode == MaskingMode::Gradient
          ? plan_mask(item.profile, ratio, rng, masking.replacement)
          : plan_mask_uniform(manifest.grid.count(), ratio, rng, masking.replacement);
  return apply_mask(item.image, manifest.grid, plan);
}

inline void append_normalized(std::vector<float>& out, const Image& image) {
  for (float v : image.pixels()) out.push_back(v / 255.0f);
}

inline Batch assemble_batch(const DatasetManifest& manifest, const EpochStream& stream,
                            std::size_t batch_index, const MaskingOptions& masking) {
  const std::size_t begin = batch_index * stream.batch_size;
  const std::size_t end = std::min(begin + stream.batch_size, stream.order.size());
  Batch batch;
  batch.rows = end - begin;
  batch.dim = manifest.geometry.input_dim();
  batch.inputs.reserve(batch.rows * batch.dim);
  for (std::size_t i = begin; i < end; ++i) {
    const auto& item = manifest.items[stream.order[i]];
    append_normalized(batch.inputs, masked_training_image(manifest, item, stream.ratios[batch_index],
                                                          stream.epoch, stream.seed, masking));
    batch.labels.push_back(item.label);
    batch.ids.push_back(item.id);
  }
  return batch;
}

/// All training batches of epoch k; the last partial batch is kept.
inline std::vector<Batch> epoch_batches(const DatasetManifest& manifest,
                                        const ScheduleVector& schedule, std::size_t epoch,
                                        std::size_t batch_size, std::uint64_t seed,
                                        const MaskingOptions& masking = {},
                                        Granularity granularity = Granularity::PerEpoch) {
  const auto stream = make_epoch_stream(manifest, schedule, epoch, batch_size, seed, granularity);
  std::vector<Batch> batches;
  batches.reserve(stream.batch_count());
  for (std::size_t b = 0; b < stream.batch_count(); ++b) {
    batches.push_back(assemble_batch(manifest, stream, b, masking));
  }
  return batches;
}

/// Unmasked, normalized batch of every item in a split, in manifest order.
inline Batch split_batch(const DatasetManifest& manifest, Split split) {
  Batch batch;
  batch.dim = manifest.geometry.input_dim();
  for (const auto& item : manifest.items) {
    if (item.split != split) continue;
    append_normalized(batch.inputs, item.image);
    batch.labels.push_back(item.label);
    batch.ids.push_back(item.id);
    ++batch.rows;
  }
  return batch;
}

/// Assembles the batches of one epoch on worker threads, at most `capacity`
/// batches ahead of the consumer. next() returns batches in index order, so
/// content is identical to sequential assembly whatever the thread timing.
class BatchProducer {
public:
  BatchProducer(const DatasetManifest& manifest, EpochStream stream, MaskingOptions masking,
                std::size_t workers, std::size_t capacity)
      : manifest_(manifest),
        stream_(std::move(stream)),
        masking_(masking),
        capacity_(std::max<std::size_t>(capacity, 1)) {
    const std::size_t count = std::max<std::size_t>(workers, 1);
    threads_.reserve(count);
    for (std::size_t i = 0; i < count; ++i) threads_.emplace_back([this] { work(); });
  }

  BatchProducer(const BatchProducer&) = delete;
  BatchProducer& operator=(const BatchProducer&) = delete;

  ~BatchProducer() {
    {
      std::lock_guard lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  /// Next batch in order, or nullopt once the epoch is exhausted.
  std::optional<Batch> next() {
    std::unique_lock lock(mutex_);
    if (consumed_ == stream_.batch_count()) return std::nullopt;
    cv_.wait(lock, [&] { return ready_.count(consumed_) != 0 || error_; });
    if (error_) std::rethrow_exception(error_);
    auto node = ready_.extract(consumed_);
    ++consumed_;
    cv_.notify_all();
    return std::move(node.mapped());
  }

private:
  void work() {
    for (;;) {
      std::size_t index = 0;
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] {
          return stop_ || claimed_ >= stream_.batch_count() || claimed_ < consumed_ + capacity_;
        });
        if (stop_ || claimed_ >= stream_.batch_count()) return;
        index = claimed_++;
      }
      try {
        Batch batch = assemble_batch(manifest_, stream_, index, masking_);
        std::lock_guard lock(mutex_);
        ready_.emplace(index, std::move(batch));
      } catch (...) {
        std::lock_guard lock(mutex_);
        if (!error_) error_ = std::current_exception();
      }
      cv_.notify_all();
    }
  }

  const DatasetManifest& manifest_;
  const EpochStream stream_;
  const MaskingOptions masking_;
  const std::size_t capacity_;

  std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::size_t, Batch> ready_;
  std::size_t claimed_ = 0;
  std::size_t consumed_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
  std::vector<std::thread> threads_;
};

}  // namespace cbm
