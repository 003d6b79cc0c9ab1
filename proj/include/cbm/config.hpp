#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cbm/dataset.hpp"
#include "cbm/error.hpp"
#include "cbm/image.hpp"
#include "cbm/io.hpp"
#include "cbm/masking.hpp"
#include "cbm/salience.hpp"
#include "cbm/schedule.hpp"
#include "cbm/trainer.hpp"

namespace cbm {

inline constexpr const char* kVersion = "0.1.0";

using json = nlohmann::json;

/// Every knob of a run. Built from a JSON document merged over defaults;
/// unknown keys and out-of-range values are rejected before any work starts.
struct ExperimentConfig {
  // data
  std::optional<std::string> data_root;
  Geometry geometry{16, 16, 1};
  PatchGrid grid{4, 4};
  std::size_t batch_size = 32;
  std::optional<SyntheticSpec> synthetic = SyntheticSpec{};
  double val_fraction = 0.2;
  GradientOperator gradient = GradientOperator::Central;
  bool use_cache = true;

  // schedule
  ScheduleSpec schedule{ScheduleKind::LinearRepeat, 0.4, 30, 5};
  Granularity granularity = Granularity::PerEpoch;

  // masking
  MaskingOptions masking;

  // trainer
  Architecture architecture = Architecture::Mlp;
  std::size_t hidden = 64;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t epochs = 30;
  Annealing annealing = Annealing::None;
  double init_std = 0.01;

  // producer
  std::size_t workers = 0;
  std::size_t queue_capacity = 4;

  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output_dir = "runs/default";

  TrainConfig train_config() const {
    TrainConfig t;
    t.architecture = architecture;
    t.hidden = hidden;
    t.learning_rate = learning_rate;
    t.momentum = momentum;
    t.weight_decay = weight_decay;
    t.annealing = annealing;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.seeds = seeds;
    t.init_std = init_std;
    t.granularity = granularity;
    t.masking = masking;
    t.workers = workers;
    t.queue_capacity = queue_capacity;
    return t;
  }

  ScheduleSpec schedule_spec() const {
    ScheduleSpec s = schedule;
    s.epochs = epochs;
    return s;
  }

  /// Cross-field checks. Throws Config naming the first violation.
  void validate() const {
    if (data_root.has_value() == synthetic.has_value()) {
      throw Error(ErrorKind::Config, "exactly one of data.root and data.synthetic must be set");
    }
    if (synthetic && !(geometry == Geometry{16, 16, 1})) {
      throw Error(ErrorKind::Config, "synthetic two-shapes data is 16x16x1; data.geometry is " +
                                         to_string(geometry));
    }
    try {
      grid.check_divides(geometry.height, geometry.width);
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, e.what());
    }
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
      throw Error(ErrorKind::Config, "data.val_fraction must lie in [0, 1)");
    }
    if (!(init_std > 0.0)) throw Error(ErrorKind::Config, "trainer.init_std must be > 0");
    if (queue_capacity == 0) throw Error(ErrorKind::Config, "producer.capacity must be >= 1");
    schedule_spec().validate();
    train_config().validate();
    if (synthetic) {
      if (synthetic->train < 2) throw Error(ErrorKind::Config, "data.synthetic.train must be >= 2");
      if (synthetic->generator != "two-shapes") {
        throw Error(ErrorKind::Config, "unknown synthetic generator '" + synthetic->generator + "'");
      }
    }
  }
};

inline json default_config_json() {
  return json{
      {"data",
       {{"root", nullptr},
        {"geometry", "16x16x1"},
        {"grid", "4x4"},
        {"batch_size", 32},
        {"synthetic", {{"generator", "two-shapes"}, {"train", 400}, {"val", 200}, {"seed", 1}}},
        {"val_fraction", 0.2},
        {"gradient", "central"},
        {"cache", true}}},
      {"schedule", {{"kind", "linear_repeat"}, {"rn", 0.4}, {"period", 5}, {"granularity", "per-epoch"}}},
      {"masking", {{"mode", "gradient"}, {"replacement", "without"}}},
      {"trainer",
       {{"architecture", "mlp"},
        {"hidden", 64},
        {"learning_rate", 0.05},
        {"momentum", 0.9},
        {"weight_decay", 0.0},
        {"epochs", 30},
        {"annealing", "none"},
        {"init_std", 0.01}}},
      {"producer", {{"workers", 0}, {"capacity", 4}}},
      {"seeds", {1, 2, 3, 4, 5}},
      {"output_dir", "runs/default"},
  };
}

namespace detail {

// Keys whose default is null but accept an object or string.
inline bool open_key(const std::string& path) { return path == "data.root"; }

inline void merge_checked(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw Error(ErrorKind::Config, "'" + prefix + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw Error(ErrorKind::Config, "unknown config key '" + path + "'");
    json& slot = base[it.key()];
    if (path == "data.synthetic") {
      if (it->is_null()) {
        slot = nullptr;
      } else {
        if (slot.is_null()) slot = default_config_json()["data"]["synthetic"];
        merge_checked(slot, *it, path);
      }
    } else if (slot.is_object() && !open_key(path)) {
      merge_checked(slot, *it, path);
    } else {
      slot = *it;
    }
  }
}

template <typename T>
T field(const json& doc, const char* section, const char* key) {
  const std::string path = std::string(section) + "." + key;
  try {
    return doc.at(section).at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Config, "config key '" + path + "' has the wrong type");
  }
}

inline std::size_t count_field(const json& doc, const char* section, const char* key) {
  const auto& v = doc.at(section).at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw Error(ErrorKind::Config,
                "config key '" + std::string(section) + "." + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline double number_field(const json& doc, const char* section, const char* key) {
  const auto& v = doc.at(section).at(key);
  if (!v.is_number()) {
    throw Error(ErrorKind::Config,
                "config key '" + std::string(section) + "." + key + "' must be a number");
  }
  return v.get<double>();
}

}  // namespace detail

/// Applies "a.b.c=value" to a config document; value is parsed as JSON when
/// possible, otherwise taken as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::Config, "override must look like key.path=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json patch = value;
  std::size_t end = path.size();
  for (;;) {
    const auto dot = path.rfind('.', end - 1);
    const std::string key = path.substr(dot == std::string::npos ? 0 : dot + 1,
                                        end - (dot == std::string::npos ? 0 : dot + 1));
    patch = json{{key, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  detail::merge_checked(doc, patch, "");
}

/// Merges `user` over the defaults, rejecting unknown keys. A run-metadata
/// document ({"version", "config", ...}) is unwrapped to its config.
inline json resolve_config_json(const json& user, const std::vector<std::string>& overrides = {}) {
  json doc = default_config_json();
  const json* source = &user;
  if (user.is_object() && user.contains("version") && user.contains("config")) {
    source = &user.at("config");
  }
  bool seeds_given = source->is_object() && source->contains("seeds");
  if (!seeds_given) {
    if (const char* env = std::getenv("CBM_SEED"); env && *env) {
      try {
        doc["seeds"] = json::array({std::stoull(env)});
      } catch (const std::exception&) {
        throw Error(ErrorKind::Config, std::string("CBM_SEED is not an unsigned integer: ") + env);
      }
    }
  }
  if (!source->is_null()) detail::merge_checked(doc, *source, "");
  for (const auto& o : overrides) apply_override(doc, o);
  // Choosing a directory dataset drops the default generator unless one is given explicitly.
  bool synthetic_explicit = source->is_object() && source->contains("data") &&
                            source->at("data").is_object() &&
                            source->at("data").contains("synthetic");
  for (const auto& o : overrides) synthetic_explicit |= o.rfind("data.synthetic", 0) == 0;
  if (!doc["data"]["root"].is_null() && !synthetic_explicit) doc["data"]["synthetic"] = nullptr;
  return doc;
}

inline ExperimentConfig config_from_json(const json& doc) {
  using detail::count_field;
  using detail::field;
  using detail::number_field;
  ExperimentConfig c;
  try {
    const auto& data = doc.at("data");
    if (!data.at("root").is_null()) c.data_root = field<std::string>(doc, "data", "root");
    c.geometry = parse_geometry(field<std::string>(doc, "data", "geometry"));
    c.grid = parse_grid(field<std::string>(doc, "data", "grid"));
    c.batch_size = count_field(doc, "data", "batch_size");
    if (data.at("synthetic").is_null()) {
      c.synthetic.reset();
    } else {
      SyntheticSpec spec;
      spec.generator = field<std::string>(doc.at("data"), "synthetic", "generator");
      spec.train = count_field(doc.at("data"), "synthetic", "train");
      spec.val = count_field(doc.at("data"), "synthetic", "val");
      spec.seed = count_field(doc.at("data"), "synthetic", "seed");
      c.synthetic = spec;
    }
    c.val_fraction = number_field(doc, "data", "val_fraction");
    c.gradient = parse_gradient_operator(field<std::string>(doc, "data", "gradient"));
    c.use_cache = field<bool>(doc, "data", "cache");

    c.schedule.kind = parse_schedule_kind(field<std::string>(doc, "schedule", "kind"));
    c.schedule.max_ratio = number_field(doc, "schedule", "rn");
    c.schedule.period = count_field(doc, "schedule", "period");
    c.granularity = parse_granularity(field<std::string>(doc, "schedule", "granularity"));

    c.masking.mode = parse_masking_mode(field<std::string>(doc, "masking", "mode"));
    const auto replacement = field<std::string>(doc, "masking", "replacement");
    if (replacement == "without") c.masking.replacement = Replacement::Without;
    else if (replacement == "with") c.masking.replacement = Replacement::With;
    else throw Error(ErrorKind::Config, "masking.replacement must be 'with' or 'without'");

    c.architecture = parse_architecture(field<std::string>(doc, "trainer", "architecture"));
    c.hidden = count_field(doc, "trainer", "hidden");
    c.learning_rate = number_field(doc, "trainer", "learning_rate");
    c.momentum = number_field(doc, "trainer", "momentum");
    c.weight_decay = number_field(doc, "trainer", "weight_decay");
    c.epochs = count_field(doc, "trainer", "epochs");
    c.annealing = parse_annealing(field<std::string>(doc, "trainer", "annealing"));
    c.init_std = number_field(doc, "trainer", "init_std");

    c.workers = count_field(doc, "producer", "workers");
    c.queue_capacity = count_field(doc, "producer", "capacity");

    c.seeds.clear();
    const auto& seeds = doc.at("seeds");
    if (!seeds.is_array()) throw Error(ErrorKind::Config, "seeds must be an array of integers");
    for (const auto& s : seeds) {
      if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
        throw Error(ErrorKind::Config, "seeds must be non-negative integers");
      }
      c.seeds.push_back(s.get<std::uint64_t>());
    }
    c.output_dir = doc.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  c.validate();
  return c;
}

inline json config_to_json(const ExperimentConfig& c) {
  json doc = default_config_json();
  auto& data = doc["data"];
  data["root"] = c.data_root ? json(*c.data_root) : json(nullptr);
  data["geometry"] = to_string(c.geometry);
  data["grid"] = to_string(c.grid);
  data["batch_size"] = c.batch_size;
  if (c.synthetic) {
    data["synthetic"] = {{"generator", c.synthetic->generator},
                         {"train", c.synthetic->train},
                         {"val", c.synthetic->val},
                         {"seed", c.synthetic->seed}};
  } else {
    data["synthetic"] = nullptr;
  }
  data["val_fraction"] = c.val_fraction;
  data["gradient"] = to_string(c.gradient);
  data["cache"] = c.use_cache;
  doc["schedule"] = {{"kind", to_string(c.schedule.kind)},
                     {"rn", c.schedule.max_ratio},
                     {"period", c.schedule.period},
                     {"granularity", to_string(c.granularity)}};
  doc["masking"] = {{"mode", to_string(c.masking.mode)},
                    {"replacement", c.masking.replacement == Replacement::With ? "with" : "without"}};
  doc["trainer"] = {{"architecture", to_string(c.architecture)},
                    {"hidden", c.hidden},
                    {"learning_rate", c.learning_rate},
                    {"momentum", c.momentum},
                    {"weight_decay", c.weight_decay},
                    {"epochs", c.epochs},
                    {"annealing", to_string(c.annealing)},
                    {"init_std", c.init_std}};
  doc["producer"] = {{"workers", c.workers}, {"capacity", c.queue_capacity}};
  doc["seeds"] = c.seeds;
  doc["output_dir"] = c.output_dir;
  return doc;
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, "cannot parse '" + origin + "': " + e.what());
  }
}

inline ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                                    const std::vector<std::string>& overrides = {}) {
  json user = json::object();
  if (path) user = parse_json_text(read_file(*path), path->string());
  return config_from_json(resolve_config_json(user, overrides));
}

/// Loads the dataset a config describes.
inline DatasetManifest load_dataset(const ExperimentConfig& c, IngestStats* stats = nullptr) {
  if (c.synthetic) return make_synthetic(*c.synthetic, c.grid, c.gradient);
  IngestOptions options;
  options.val_fraction = c.val_fraction;
  options.gradient = c.gradient;
  options.use_cache = c.use_cache;
  return ingest(*c.data_root, c.geometry, c.grid, options, stats);
}

}  // namespace cbm
