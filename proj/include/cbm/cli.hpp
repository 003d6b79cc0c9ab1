#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "cbm/config.hpp"
#include "cbm/dataset.hpp"
#include "cbm/error.hpp"
#include "cbm/image_io.hpp"
#include "cbm/io.hpp"
#include "cbm/masking.hpp"
#include "cbm/report.hpp"
#include "cbm/salience.hpp"
#include "cbm/schedule.hpp"
#include "cbm/sweep.hpp"
#include "cbm/trainer.hpp"

namespace cbm::cli {

namespace fs = std::filesystem;

inline std::uint64_t default_seed() {
  if (const char* env = std::getenv("CBM_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Config, std::string("CBM_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

inline fs::path sibling(const fs::path& path, const std::string& suffix, const std::string& ext) {
  fs::path out = path;
  out.replace_filename(path.stem().string() + suffix + ext);
  return out;
}

// ---------------------------------------------------------------------------

struct ScheduleArgs {
  std::string kind;
  double rn = 0.0;
  std::size_t epochs = 0;
  std::size_t period = 5;
  std::string out;
};

inline int cmd_schedule(const ScheduleArgs& args, std::ostream& out) {
  ScheduleSpec spec{parse_schedule_kind(args.kind), args.rn, args.epochs, args.period};
  const auto r = build_schedule(spec);
  const auto csv = export_schedule(r);
  if (args.out.empty() || args.out == "-") {
    out << csv;
  } else {
    write_file_atomic(args.out, csv);
    out << "wrote " << r.size() << " epochs to " << args.out << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct PreviewArgs {
  std::string image;
  std::string grid = "4x4";
  double ratio = 0.0;
  std::optional<std::uint64_t> seed;
  std::string out = "masked.png";
  bool uniform = false;
  std::size_t trials = 1;
  std::string replacement = "without";
  std::string gradient = "central";
  std::string dump_salience;
};

/// Masks one image. Writes the masked image, `<stem>.csv` with the masked
/// indices, and with --trials > 1 a `<stem>_tally.csv` of how often each patch
/// was masked over seeds seed .. seed + trials - 1.
inline int cmd_preview(const PreviewArgs& args, std::ostream& out) {
  const auto grid = parse_grid(args.grid);
  if (!(args.ratio >= 0.0 && args.ratio <= 1.0)) {
    throw Error(ErrorKind::Config, "--ratio must lie in [0, 1]");
  }
  if (args.trials == 0) throw Error(ErrorKind::Config, "--trials must be >= 1");
  Replacement replacement = Replacement::Without;
  if (args.replacement == "with") replacement = Replacement::With;
  else if (args.replacement != "without") throw Error(ErrorKind::Config, "--replacement must be with|without");
  const auto op = parse_gradient_operator(args.gradient);

  const Image image = read_image(args.image);
  try {
    grid.check_divides(image.height(), image.width());
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  const auto profile = salience_profile(image, grid, op);
  const std::uint64_t seed = args.seed.value_or(default_seed());

  const auto plan_for = [&](std::uint64_t s) {
    RngStream rng(s, 0, 0);
    return args.uniform ? plan_mask_uniform(grid.count(), args.ratio, rng, replacement)
                        : plan_mask(profile, args.ratio, rng, replacement);
  };

  const auto plan = plan_for(seed);
  const fs::path out_path = args.out;
  write_image_atomic(out_path, apply_mask(image, grid, plan));

  std::string indices = "index\n";
  for (auto i : plan.indices) indices += std::to_string(i) + '\n';
  write_file_atomic(sibling(out_path, "", ".csv"), indices);

  if (args.trials > 1) {
    std::vector<std::size_t> counts(grid.count(), 0);
    for (std::size_t t = 0; t < args.trials; ++t) {
      for (auto i : plan_for(seed + t).indices) ++counts[i - 1];
    }
    std::string tally = "index,p,count\n";
    for (std::size_t i = 0; i < counts.size(); ++i) {
      tally += std::to_string(i + 1) + ',' + format_double(profile.probabilities[i]) + ',' +
               std::to_string(counts[i]) + '\n';
    }
    write_file_atomic(sibling(out_path, "_tally", ".csv"), tally);
  }
  if (!args.dump_salience.empty()) {
    dump_salience(args.dump_salience, fs::path(args.image).stem().string(), image, grid, op);
  }
  out << "masked " << plan.size() << " of " << grid.count() << " patches -> " << args.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::string seeds;
  std::string dump_salience;
};

inline std::vector<std::string> with_flag_overrides(const TrainArgs& args) {
  auto overrides = args.overrides;
  if (!args.out.empty()) overrides.push_back("output_dir=" + json(args.out).dump());
  if (!args.seeds.empty()) overrides.push_back("seeds=[" + args.seeds + "]");
  return overrides;
}

inline void dump_dataset_salience(const DatasetManifest& manifest, const fs::path& dir) {
  for (const auto& item : manifest.items) {
    dump_salience(dir, "item_" + std::to_string(item.id), item.image, manifest.grid,
                  manifest.gradient);
  }
}

inline json run_metadata(const ExperimentConfig& config) {
  return json{{"version", kVersion}, {"config", config_to_json(config)}, {"seeds", config.seeds}};
}

/// Trains per the config and writes report.csv, summary.csv and run.json into
/// the output directory. Nothing is written unless every seed finishes.
inline int cmd_train(const TrainArgs& args, std::ostream& out) {
  const auto config = load_config(args.config.empty() ? std::nullopt
                                                      : std::optional<fs::path>(args.config),
                                  with_flag_overrides(args));
  const auto manifest = load_dataset(config);
  if (!args.dump_salience.empty()) dump_dataset_salience(manifest, args.dump_salience);
  if (verify_profiles(manifest, 4) != 0) {
    throw Error(ErrorKind::Io, "salience profiles disagree with recomputation");
  }

  const auto report = train(manifest, config.schedule_spec(), config.train_config());

  const fs::path dir = config.output_dir;
  write_file_atomic(dir / "report.csv", report_csv(report));
  write_file_atomic(dir / "summary.csv", summary_csv(report));
  write_file_atomic(dir / "run.json", run_metadata(config).dump(2) + '\n');
  out << "final val acc " << format_double(report.mean_val_acc) << " +- "
      << format_double(report.std_val_acc) << " over " << report.seeds.size() << " seeds -> "
      << dir.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string sweep;
  std::string config;
  std::vector<std::string> overrides;
  std::string axis;
  std::vector<std::string> values;
  std::vector<std::string> modes;
  std::string out;
  std::size_t jobs = 1;
};

inline std::vector<std::string> json_strings(const json& array, const char* what) {
  if (!array.is_array()) throw Error(ErrorKind::Config, std::string(what) + " must be an array");
  std::vector<std::string> out;
  for (const auto& v : array) out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
  return out;
}

/// Sweep file: {"axis": ..., "values": [...], "modes": [...], "base": {config}}.
/// Command-line flags override the file.
inline int cmd_ablate(const AblateArgs& args, std::ostream& out) {
  json base_doc = json::object();
  SweepSpec spec;
  std::string axis = args.axis;
  std::vector<std::string> values = args.values;
  std::vector<std::string> modes = args.modes;

  if (!args.sweep.empty()) {
    const json sweep = parse_json_text(read_file(args.sweep), args.sweep);
    for (auto it = sweep.begin(); it != sweep.end(); ++it) {
      if (it.key() != "axis" && it.key() != "values" && it.key() != "modes" && it.key() != "base") {
        throw Error(ErrorKind::Config, "unknown sweep key '" + it.key() + "'");
      }
    }
    if (axis.empty() && sweep.contains("axis")) axis = sweep["axis"].get<std::string>();
    if (values.empty() && sweep.contains("values")) values = json_strings(sweep["values"], "values");
    if (modes.empty() && sweep.contains("modes")) modes = json_strings(sweep["modes"], "modes");
    if (sweep.contains("base")) base_doc = sweep["base"];
  }
  if (!args.config.empty()) base_doc = parse_json_text(read_file(args.config), args.config);

  auto overrides = args.overrides;
  if (!args.out.empty()) overrides.push_back("output_dir=" + json(args.out).dump());
  const auto base = config_from_json(resolve_config_json(base_doc, overrides));

  if (axis.empty()) throw Error(ErrorKind::Config, "sweep axis is required (--axis)");
  spec.axis = parse_sweep_axis(axis);
  spec.values = values;
  for (const auto& m : modes) spec.modes.push_back(parse_masking_mode(m));

  const auto cells = expand_sweep(base, spec);
  const auto reports = run_sweep(cells, args.jobs);

  const fs::path dir = base.output_dir;
  const auto table = ablation_table_csv(spec.axis, cells, reports);
  write_file_atomic(dir / "ablation.csv", table);
  write_file_atomic(dir / "ablation_long.csv", ablation_long_csv(spec.axis, cells, reports));
  json meta = run_metadata(base);
  meta["sweep"] = {{"axis", to_string(spec.axis)}, {"values", spec.values}, {"modes", modes}};
  write_file_atomic(dir / "ablation.json", meta.dump(2) + '\n');

  out << table;
  const auto best = best_cell(reports);
  out << "best: " << cells[best].value << " / " << to_string(cells[best].mode) << " (mean "
      << format_double(reports[best].mean_val_acc) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct CacheArgs {
  std::string root;
  std::string geometry = "16x16x1";
  std::string grid = "4x4";
  std::string gradient = "central";
  double val_fraction = 0.2;
  bool rebuild = false;
  std::string dump_salience;
};

inline int cmd_cache(const CacheArgs& args, std::ostream& out) {
  const auto geometry = parse_geometry(args.geometry);
  const auto grid = parse_grid(args.grid);
  try {
    grid.check_divides(geometry.height, geometry.width);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  IngestOptions options;
  options.gradient = parse_gradient_operator(args.gradient);
  options.val_fraction = args.val_fraction;
  options.rebuild_cache = args.rebuild;
  IngestStats stats;
  const auto manifest = ingest(args.root, geometry, grid, options, &stats);
  if (!args.dump_salience.empty()) dump_dataset_salience(manifest, args.dump_salience);

  const auto cache_path = fs::path(args.root) / kCacheFileName;
  const auto records = load_cache(cache_path).size();
  out << "items " << manifest.items.size() << ", classes " << manifest.class_count()
      << ", skipped " << manifest.skipped << '\n'
      << "cache " << cache_path.string() << ": " << records << " records, " << stats.cache_hits
      << " hits, " << stats.computed << " computed" << (stats.cache_written ? ", rewritten" : "")
      << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

/// Entry point shared by the `cbm` binary and in-process tests. Returns the
/// process exit code: 0 success, 2 config error, 3 divergence, 4 I/O.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Curriculum-by-masking toolkit: salience masking, schedules and desk-scale training"};
  app.require_subcommand(1);

  ScheduleArgs schedule;
  auto* sc = app.add_subcommand("schedule", "Export a masking-ratio schedule as CSV");
  sc->add_option("--kind", schedule.kind, "constant|linear|log|exp|linear_repeat")->required();
  sc->add_option("--rn", schedule.rn, "Maximum masking ratio, 0 < rn < 1")->required();
  sc->add_option("--epochs", schedule.epochs, "Number of epochs N")->required();
  sc->add_option("--period", schedule.period, "Ramp length T for linear_repeat");
  sc->add_option("--out", schedule.out, "Output CSV (default: stdout)");

  PreviewArgs preview;
  auto* pv = app.add_subcommand("preview", "Mask one image and write the result");
  pv->add_option("--image", preview.image, "Input PNG/PPM/PGM")->required();
  pv->add_option("--grid", preview.grid, "Patch grid RxC");
  pv->add_option("--ratio", preview.ratio, "Masking ratio in [0, 1]")->required();
  pv->add_option("--seed", preview.seed, "RNG seed (default: CBM_SEED or 0)");
  pv->add_option("--out", preview.out, "Masked image path");
  pv->add_flag("--uniform", preview.uniform, "Uniform instead of salience-weighted sampling");
  pv->add_option("--trials", preview.trials, "Seeds to tally into <stem>_tally.csv");
  pv->add_option("--replacement", preview.replacement, "without|with");
  pv->add_option("--gradient", preview.gradient, "central|sobel");
  pv->add_option("--dump-salience", preview.dump_salience, "Directory for salience CSV/PNG");

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train over seeds and write report CSVs");
  tr->add_option("--config", train_args.config, "JSON config");
  tr->add_option("--set", train_args.overrides, "Override key.path=value (repeatable)");
  tr->add_option("--out", train_args.out, "Output directory (overrides output_dir)");
  tr->add_option("--seeds", train_args.seeds, "Comma-separated seeds (overrides seeds)");
  tr->add_option("--dump-salience", train_args.dump_salience, "Directory for salience CSV/PNG");

  AblateArgs ablate;
  auto* ab = app.add_subcommand("ablate", "Sweep one axis and write a comparison table");
  ab->add_option("--sweep", ablate.sweep, "Sweep JSON {axis, values, modes, base}");
  ab->add_option("--config", ablate.config, "Base JSON config");
  ab->add_option("--set", ablate.overrides, "Override key.path=value (repeatable)");
  ab->add_option("--axis", ablate.axis, "schedule|rn|grid|period");
  ab->add_option("--values", ablate.values, "Axis values")->delimiter(',');
  ab->add_option("--modes", ablate.modes, "Masking modes gradient|uniform|none")->delimiter(',');
  ab->add_option("--out", ablate.out, "Output directory");
  ab->add_option("--jobs", ablate.jobs, "Parallel cells")->check(CLI::PositiveNumber);

  CacheArgs cache;
  auto* ca = app.add_subcommand("cache", "Inspect or rebuild the salience cache of a dataset");
  ca->add_option("--root", cache.root, "Dataset root with one directory per class")->required();
  ca->add_option("--geometry", cache.geometry, "HxWxC after resize");
  ca->add_option("--grid", cache.grid, "Patch grid RxC");
  ca->add_option("--gradient", cache.gradient, "central|sobel");
  ca->add_option("--val-fraction", cache.val_fraction, "Validation share per class");
  ca->add_flag("--rebuild", cache.rebuild, "Recompute every record");
  ca->add_option("--dump-salience", cache.dump_salience, "Directory for salience CSV/PNG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "cbm: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*sc) return cmd_schedule(schedule, out);
    if (*pv) return cmd_preview(preview, out);
    if (*tr) return cmd_train(train_args, out);
    if (*ab) return cmd_ablate(ablate, out);
    if (*ca) return cmd_cache(cache, out);
  } catch (const Error& e) {
    err << "cbm: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    err << "cbm: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "cbm: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace cbm::cli
