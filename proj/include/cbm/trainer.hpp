#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "cbm/dataset.hpp"
#include "cbm/error.hpp"
#include "cbm/masking.hpp"
#include "cbm/rng.hpp"
#include "cbm/schedule.hpp"

namespace cbm {

enum class Architecture { Linear, Mlp };

inline Architecture parse_architecture(const std::string& name) {
  if (name == "linear") return Architecture::Linear;
  if (name == "mlp") return Architecture::Mlp;
  throw Error(ErrorKind::Config, "unknown architecture '" + name + "' (linear|mlp)");
}

inline const char* to_string(Architecture a) { return a == Architecture::Mlp ? "mlp" : "linear"; }

/// Flat parameter vector with a fixed layout.
///   linear: W (C x D), b (C)
///   mlp:    W1 (H x D), b1 (H), W2 (C x H), b2 (C), ReLU hidden layer
struct ModelParams {
  Architecture architecture = Architecture::Linear;
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  std::size_t hidden = 0;
  std::vector<double> values;

  static std::size_t parameter_count(Architecture a, std::size_t d, std::size_t c, std::size_t h) {
    return a == Architecture::Linear ? c * d + c : h * d + h + c * h + c;
  }

  static ModelParams zeros(Architecture a, std::size_t d, std::size_t c, std::size_t h = 0) {
    if (d == 0 || c < 2) throw Error(ErrorKind::Config, "model needs input_dim > 0 and >= 2 classes");
    if (a == Architecture::Mlp && h == 0) throw Error(ErrorKind::Config, "mlp hidden width must be >= 1");
    ModelParams p{a, d, c, a == Architecture::Mlp ? h : 0, {}};
    p.values.assign(parameter_count(a, d, c, p.hidden), 0.0);
    return p;
  }

  // Offsets into `values`.
  std::size_t w1() const { return 0; }
  std::size_t b1() const { return architecture == Architecture::Linear ? classes * input_dim : hidden * input_dim; }
  std::size_t w2() const { return b1() + hidden; }
  std::size_t b2() const { return w2() + classes * hidden; }

  /// True for entries that are weights (subject to weight decay), false for biases.
  bool is_weight(std::size_t i) const {
    if (architecture == Architecture::Linear) return i < b1();
    return i < b1() || (i >= w2() && i < b2());
  }

  bool finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Weights ~ N(0, std^2) from the seed's init substream, biases 0.
inline ModelParams init_params(Architecture a, std::size_t d, std::size_t c, std::size_t h,
                               std::uint64_t seed, double stddev = 0.01) {
  auto p = ModelParams::zeros(a, d, c, h);
  RngStream rng(seed, 0, kInitStream);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    if (p.is_weight(i)) p.values[i] = stddev * rng.normal();
  }
  return p;
}

namespace detail {

inline void check_geometry(const ModelParams& params, std::span<const float> inputs, std::size_t rows) {
  if (inputs.size() != rows * params.input_dim) {
    throw Error(ErrorKind::InvalidInput,
                "batch of " + std::to_string(inputs.size()) + " values does not match " +
                    std::to_string(rows) + " rows x input dim " + std::to_string(params.input_dim));
  }
}

// Row-wise affine map out[r, o] = bias[o] + sum_i weights[o, i] * in[r, i].
template <typename In>
void affine(const double* weights, const double* bias, const In* in, std::size_t rows,
            std::size_t in_dim, std::size_t out_dim, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const In* x = in + r * in_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* w = weights + o * in_dim;
      double acc = bias[o];
      for (std::size_t i = 0; i < in_dim; ++i) acc += w[i] * static_cast<double>(x[i]);
      out[r * out_dim + o] = acc;
    }
  }
}

inline void softmax_rows(std::vector<double>& logits, std::size_t rows, std::size_t classes) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* z = logits.data() + r * classes;
    const double top = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      z[c] = std::exp(z[c] - top);
      sum += z[c];
    }
    for (std::size_t c = 0; c < classes; ++c) z[c] /= sum;
  }
}

struct ForwardCache {
  std::vector<double> hidden;  // post-ReLU activations (mlp only)
  std::vector<double> probs;
};

inline ForwardCache forward_cached(const ModelParams& p, std::span<const float> inputs, std::size_t rows) {
  check_geometry(p, inputs, rows);
  ForwardCache cache;
  cache.probs.assign(rows * p.classes, 0.0);
  const double* v = p.values.data();
  if (p.architecture == Architecture::Linear) {
    affine(v + p.w1(), v + p.b1(), inputs.data(), rows, p.input_dim, p.classes, cache.probs.data());
  } else {
    cache.hidden.assign(rows * p.hidden, 0.0);
    affine(v + p.w1(), v + p.b1(), inputs.data(), rows, p.input_dim, p.hidden, cache.hidden.data());
    for (auto& a : cache.hidden) a = std::max(a, 0.0);
    affine(v + p.w2(), v + p.b2(), cache.hidden.data(), rows, p.hidden, p.classes, cache.probs.data());
  }
  softmax_rows(cache.probs, rows, p.classes);
  return cache;
}

}  // namespace detail

/// Softmax class probabilities, rows x C.
inline std::vector<double> forward(const ModelParams& params, std::span<const float> inputs,
                                   std::size_t rows) {
  return detail::forward_cached(params, inputs, rows).probs;
}

inline std::vector<double> forward(const ModelParams& params, const Batch& batch) {
  return forward(params, batch.inputs, batch.rows);
}

struct LossGrad {
  double loss = 0.0;            // mean cross-entropy
  std::vector<double> grad;     // same layout as ModelParams::values
  std::size_t correct = 0;      // argmax hits in the batch
};

/// Mean cross-entropy over the batch and its analytic gradient.
inline LossGrad loss_and_grad(const ModelParams& p, std::span<const float> inputs,
                              std::span<const int> labels) {
  const std::size_t rows = labels.size();
  if (rows == 0) throw Error(ErrorKind::InvalidInput, "empty batch");
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= p.classes) {
      throw Error(ErrorKind::InvalidInput, "label " + std::to_string(label) + " outside [0, " +
                                               std::to_string(p.classes) + ")");
    }
  }
  auto cache = detail::forward_cached(p, inputs, rows);

  LossGrad out;
  out.grad.assign(p.values.size(), 0.0);
  const double inv_rows = 1.0 / static_cast<double>(rows);
  const std::size_t c_count = p.classes;

  // dL/dlogits = (probs - onehot) / rows, computed in place.
  std::vector<double>& delta = cache.probs;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = delta.data() + r * c_count;
    const auto label = static_cast<std::size_t>(labels[r]);
    out.loss -= std::log(std::max(row[label], std::numeric_limits<double>::min()));
    if (static_cast<std::size_t>(std::max_element(row, row + c_count) - row) == label) ++out.correct;
    row[label] -= 1.0;
    for (std::size_t c = 0; c < c_count; ++c) row[c] *= inv_rows;
  }
  out.loss *= inv_rows;

  double* g = out.grad.data();
  const double* v = p.values.data();
  const std::size_t d = p.input_dim;

  if (p.architecture == Architecture::Linear) {
    for (std::size_t r = 0; r < rows; ++r) {
      const float* x = inputs.data() + r * d;
      for (std::size_t c = 0; c < c_count; ++c) {
        const double dz = delta[r * c_count + c];
        g[p.b1() + c] += dz;
        if (dz == 0.0) continue;
        double* gw = g + p.w1() + c * d;
        for (std::size_t i = 0; i < d; ++i) gw[i] += dz * static_cast<double>(x[i]);
      }
    }
    return out;
  }

  const std::size_t h = p.hidden;
  std::vector<double> dhidden(rows * h, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* a = cache.hidden.data() + r * h;
    for (std::size_t c = 0; c < c_count; ++c) {
      const double dz = delta[r * c_count + c];
      g[p.b2() + c] += dz;
      double* gw = g + p.w2() + c * h;
      const double* w = v + p.w2() + c * h;
      for (std::size_t j = 0; j < h; ++j) {
        gw[j] += dz * a[j];
        dhidden[r * h + j] += dz * w[j];
      }
    }
    for (std::size_t j = 0; j < h; ++j) {
      if (!(a[j] > 0.0)) dhidden[r * h + j] = 0.0;
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = inputs.data() + r * d;
    for (std::size_t j = 0; j < h; ++j) {
      const double dz = dhidden[r * h + j];
      if (dz == 0.0) continue;
      g[p.b1() + j] += dz;
      double* gw = g + p.w1() + j * d;
      for (std::size_t i = 0; i < d; ++i) gw[i] += dz * static_cast<double>(x[i]);
    }
  }
  return out;
}

inline LossGrad loss_and_grad(const ModelParams& params, const Batch& batch) {
  return loss_and_grad(params, batch.inputs, batch.labels);
}

/// Fraction of rows whose argmax matches the label.
inline double evaluate(const ModelParams& params, const Batch& split) {
  if (split.rows == 0) throw Error(ErrorKind::InvalidInput, "cannot evaluate an empty split");
  const auto probs = forward(params, split);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < split.rows; ++r) {
    const double* row = probs.data() + r * params.classes;
    const auto best = static_cast<std::size_t>(std::max_element(row, row + params.classes) - row);
    if (best == static_cast<std::size_t>(split.labels[r])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(split.rows);
}

inline double evaluate(const ModelParams& params, const DatasetManifest& manifest, Split split) {
  return evaluate(params, split_batch(manifest, split));
}

/// SGD with heavy-ball momentum: v = mu * v + (g + wd * w); w -= lr * v.
/// Weight decay applies to weights only.
class SgdMomentum {
public:
  SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(ModelParams& params, const std::vector<double>& grad, double lr) {
    if (velocity_.size() != params.values.size()) velocity_.assign(params.values.size(), 0.0);
    for (std::size_t i = 0; i < params.values.size(); ++i) {
      double g = grad[i];
      if (weight_decay_ != 0.0 && params.is_weight(i)) g += weight_decay_ * params.values[i];
      velocity_[i] = momentum_ * velocity_[i] + g;
      params.values[i] -= lr * velocity_[i];
    }
  }

private:
  double momentum_;
  double weight_decay_;
  std::vector<double> velocity_;
};

enum class Annealing { None, Cosine };

inline Annealing parse_annealing(const std::string& name) {
  if (name == "none") return Annealing::None;
  if (name == "cosine") return Annealing::Cosine;
  throw Error(ErrorKind::Config, "unknown annealing '" + name + "' (none|cosine)");
}

inline const char* to_string(Annealing a) { return a == Annealing::Cosine ? "cosine" : "none"; }

struct TrainConfig {
  Architecture architecture = Architecture::Mlp;
  std::size_t hidden = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  Annealing annealing = Annealing::None;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::vector<std::uint64_t> seeds = {1};
  double init_std = 0.01;
  Granularity granularity = Granularity::PerEpoch;
  MaskingOptions masking;
  std::size_t workers = 0;      // 0: assemble batches on the training thread
  std::size_t queue_capacity = 4;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw Error(ErrorKind::Config, "learning rate must be > 0");
    }
    if (epochs == 0) throw Error(ErrorKind::Config, "epochs must be >= 1");
    if (batch_size == 0) throw Error(ErrorKind::Config, "batch size must be >= 1");
    if (seeds.empty()) throw Error(ErrorKind::Config, "at least one seed is required");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::Config, "momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw Error(ErrorKind::Config, "weight decay must be >= 0");
    if (architecture == Architecture::Mlp && hidden == 0) {
      throw Error(ErrorKind::Config, "mlp hidden width must be >= 1");
    }
  }
};

struct EpochRecord {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct SeedResult {
  std::uint64_t seed = 0;
  double final_val_acc = 0.0;

  friend bool operator==(const SeedResult&, const SeedResult&) = default;
};

struct RunReport {
  std::vector<EpochRecord> epochs;  // ordered by (seed position, epoch)
  std::vector<SeedResult> seeds;
  double mean_val_acc = 0.0;
  double std_val_acc = 0.0;   // population standard deviation
  std::size_t best_epoch = 0; // epoch with the highest seed-mean validation accuracy

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

/// Population mean and standard deviation.
inline std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::InvalidInput, "mean of an empty set");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

/// Builds the masking-ratio vector the trainer indexes: per-epoch granularity
/// uses the schedule as given; per-step stretches epochs and period by steps per epoch.
inline ScheduleVector training_schedule(ScheduleSpec spec, const TrainConfig& config,
                                        std::size_t train_items) {
  spec.epochs = config.epochs;
  if (config.granularity == Granularity::PerStep) {
    const auto steps = batches_per_epoch(train_items, config.batch_size);
    spec.epochs *= steps;
    spec.period *= steps;
  }
  return build_schedule(spec);
}

inline double annealed_rate(const TrainConfig& config, std::size_t epoch) {
  if (config.annealing == Annealing::None) return config.learning_rate;
  const double progress = static_cast<double>(epoch - 1) / static_cast<double>(config.epochs);
  return config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Trains one model per seed. With masking mode None the schedule is ignored.
/// Throws Divergence (with epoch/batch context) on a non-finite loss or parameter.
inline RunReport train(const DatasetManifest& manifest, const ScheduleSpec& schedule_spec,
                       const TrainConfig& config) {
  config.validate();
  const auto train_idx = manifest.indices(Split::Train);
  if (train_idx.empty()) throw Error(ErrorKind::Config, "dataset has no training items");
  const Batch val = split_batch(manifest, Split::Val);
  const auto schedule = training_schedule(schedule_spec, config, train_idx.size());

  RunReport report;
  std::vector<double> finals;
  std::vector<double> epoch_val_sum(config.epochs, 0.0);

  for (const auto seed : config.seeds) {
    auto params = init_params(config.architecture, manifest.geometry.input_dim(),
                              manifest.class_count(), config.hidden, seed, config.init_std);
    SgdMomentum optimizer(config.momentum, config.weight_decay);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      auto stream = make_epoch_stream(manifest, schedule, epoch, config.batch_size, seed,
                                      config.granularity);
      const std::size_t batch_count = stream.batch_count();
      const double lr = annealed_rate(config, epoch);
      double loss_sum = 0.0;
      std::size_t correct = 0;
      std::size_t seen = 0;

      const auto consume = [&](const Batch& batch, std::size_t b) {
        auto lg = loss_and_grad(params, batch);
        if (!std::isfinite(lg.loss)) {
          throw Error(ErrorKind::Divergence, "non-finite loss at seed " + std::to_string(seed) +
                                                 ", epoch " + std::to_string(epoch) + ", batch " +
                                                 std::to_string(b + 1));
        }
        optimizer.step(params, lg.grad, lr);
        if (!params.finite()) {
          throw Error(ErrorKind::Divergence, "non-finite parameters at seed " +
                                                 std::to_string(seed) + ", epoch " +
                                                 std::to_string(epoch) + ", batch " +
                                                 std::to_string(b + 1));
        }
        loss_sum += lg.loss * static_cast<double>(batch.rows);
        correct += lg.correct;
        seen += batch.rows;
      };

      if (config.workers == 0) {
        for (std::size_t b = 0; b < batch_count; ++b) {
          consume(assemble_batch(manifest, stream, b, config.masking), b);
        }
      } else {
        BatchProducer producer(manifest, std::move(stream), config.masking, config.workers,
                               config.queue_capacity);
        std::size_t b = 0;
        while (auto batch = producer.next()) consume(*batch, b++);
      }

      EpochRecord record;
      record.seed = seed;
      record.epoch = epoch;
      record.train_loss = loss_sum / static_cast<double>(seen);
      record.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
      record.val_acc = val.rows > 0 ? evaluate(params, val) : 0.0;
      epoch_val_sum[epoch - 1] += record.val_acc;
      report.epochs.push_back(record);
    }
    const double final_acc = report.epochs.back().val_acc;
    report.seeds.push_back({seed, final_acc});
    finals.push_back(final_acc);
  }

  std::tie(report.mean_val_acc, report.std_val_acc) = mean_std(finals);
  report.best_epoch = static_cast<std::size_t>(
      std::max_element(epoch_val_sum.begin(), epoch_val_sum.end()) - epoch_val_sum.begin() + 1);
  return report;
}

}  // namespace cbm
