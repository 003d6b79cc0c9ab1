#pragma once

#include <string>

#include "cbm/io.hpp"
#include "cbm/trainer.hpp"

namespace cbm {

/// `epoch,seed,train_loss,train_acc,val_acc`, one row per (seed, epoch).
inline std::string report_csv(const RunReport& report) {
  std::string out = "epoch,seed,train_loss,train_acc,val_acc\n";
  for (const auto& r : report.epochs) {
    out += std::to_string(r.epoch) + ',' + std::to_string(r.seed) + ',' +
           format_double(r.train_loss) + ',' + format_double(r.train_acc) + ',' +
           format_double(r.val_acc) + '\n';
  }
  return out;
}

/// `seed,final_val_acc` rows followed by `mean,<v>` and `std,<v>` (population).
inline std::string summary_csv(const RunReport& report) {
  std::string out = "seed,final_val_acc\n";
  for (const auto& s : report.seeds) {
    out += std::to_string(s.seed) + ',' + format_double(s.final_val_acc) + '\n';
  }
  out += "mean," + format_double(report.mean_val_acc) + '\n';
  out += "std," + format_double(report.std_val_acc) + '\n';
  return out;
}

}  // namespace cbm
