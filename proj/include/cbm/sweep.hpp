#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "cbm/config.hpp"
#include "cbm/dataset.hpp"
#include "cbm/error.hpp"
#include "cbm/io.hpp"
#include "cbm/trainer.hpp"

namespace cbm {

enum class SweepAxis { Schedule, MaxRatio, Grid, Period };

inline SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "schedule") return SweepAxis::Schedule;
  if (name == "rn") return SweepAxis::MaxRatio;
  if (name == "grid") return SweepAxis::Grid;
  if (name == "period") return SweepAxis::Period;
  throw Error(ErrorKind::Config, "unknown sweep axis '" + name + "' (schedule|rn|grid|period)");
}

inline const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Schedule: return "schedule";
    case SweepAxis::MaxRatio: return "rn";
    case SweepAxis::Grid: return "grid";
    case SweepAxis::Period: return "period";
  }
  return "?";
}

struct SweepSpec {
  SweepAxis axis = SweepAxis::Schedule;
  std::vector<std::string> values;
  std::vector<MaskingMode> modes;  // empty: the base config's mode
};

/// One (axis value, masking mode) point of a sweep.
struct SweepCell {
  std::string value;
  MaskingMode mode = MaskingMode::Gradient;
  ExperimentConfig config;
};

/// Expands and validates every cell up front. The schedule value "none"
/// disables masking and yields a single cell regardless of `modes`.
inline std::vector<SweepCell> expand_sweep(const ExperimentConfig& base, const SweepSpec& spec) {
  if (spec.values.empty()) throw Error(ErrorKind::Config, "sweep needs at least one value");
  std::vector<MaskingMode> modes = spec.modes;
  if (modes.empty()) modes.push_back(base.masking.mode);

  std::vector<SweepCell> cells;
  for (const auto& value : spec.values) {
    ExperimentConfig config = base;
    bool no_masking = false;
    try {
      switch (spec.axis) {
        case SweepAxis::Schedule:
          if (value == "none") no_masking = true;
          else config.schedule.kind = parse_schedule_kind(value);
          break;
        case SweepAxis::MaxRatio: {
          std::size_t used = 0;
          config.schedule.max_ratio = std::stod(value, &used);
          if (used != value.size()) throw std::invalid_argument(value);
          break;
        }
        case SweepAxis::Grid: config.grid = parse_grid(value); break;
        case SweepAxis::Period: {
          std::size_t used = 0;
          config.schedule.period = std::stoul(value, &used);
          if (used != value.size()) throw std::invalid_argument(value);
          break;
        }
      }
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::Config, std::string("bad value '") + value + "' for sweep axis " +
                                         to_string(spec.axis));
    }

    if (no_masking) {
      config.masking.mode = MaskingMode::None;
      config.validate();
      cells.push_back({value, MaskingMode::None, config});
      continue;
    }
    for (const auto mode : modes) {
      ExperimentConfig cell = config;
      cell.masking.mode = mode;
      try {
        cell.validate();
      } catch (const Error& e) {
        throw Error(ErrorKind::Config, std::string("sweep value '") + value + "': " + e.what());
      }
      cells.push_back({value, mode, cell});
    }
  }
  return cells;
}

/// Runs every cell (all seeds each) on up to `jobs` threads. Datasets are
/// loaded once per distinct grid before any training starts. Results come back
/// in cell order, independent of scheduling.
inline std::vector<RunReport> run_sweep(const std::vector<SweepCell>& cells, std::size_t jobs) {
  std::map<std::string, DatasetManifest> datasets;
  for (const auto& cell : cells) {
    const auto key = to_string(cell.config.grid);
    if (!datasets.count(key)) datasets.emplace(key, load_dataset(cell.config));
  }

  std::vector<RunReport> reports(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        const auto& cell = cells[i];
        reports[i] = train(datasets.at(to_string(cell.config.grid)), cell.config.schedule_spec(),
                           cell.config.train_config());
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(cells.size(), 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return reports;
}

/// Index of the cell with the highest mean final validation accuracy (first on ties).
inline std::size_t best_cell(const std::vector<RunReport>& reports) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].mean_val_acc > reports[best].mean_val_acc) best = i;
  }
  return best;
}

/// `axis,value,mode,mean_val_acc,std_val_acc,best_epoch,is_best`
inline std::string ablation_table_csv(SweepAxis axis, const std::vector<SweepCell>& cells,
                                      const std::vector<RunReport>& reports) {
  std::string out = "axis,value,mode,mean_val_acc,std_val_acc,best_epoch,is_best\n";
  const auto best = best_cell(reports);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out += std::string(to_string(axis)) + ',' + cells[i].value + ',' + to_string(cells[i].mode) +
           ',' + format_double(reports[i].mean_val_acc) + ',' +
           format_double(reports[i].std_val_acc) + ',' + std::to_string(reports[i].best_epoch) +
           ',' + (i == best ? "1" : "0") + '\n';
  }
  return out;
}

/// Plot-ready long format, one row per (cell, seed, epoch).
inline std::string ablation_long_csv(SweepAxis axis, const std::vector<SweepCell>& cells,
                                     const std::vector<RunReport>& reports) {
  std::string out = "axis,value,mode,seed,epoch,train_loss,train_acc,val_acc\n";
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (const auto& r : reports[i].epochs) {
      out += std::string(to_string(axis)) + ',' + cells[i].value + ',' +
             to_string(cells[i].mode) + ',' + std::to_string(r.seed) + ',' +
             std::to_string(r.epoch) + ',' + format_double(r.train_loss) + ',' +
             format_double(r.train_acc) + ',' + format_double(r.val_acc) + '\n';
    }
  }
  return out;
}

}  // namespace cbm
