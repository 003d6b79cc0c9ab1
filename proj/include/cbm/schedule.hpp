#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cbm/error.hpp"

namespace cbm {

enum class ScheduleKind { Constant, Linear, Log, Exp, LinearRepeat };

inline const char* to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::Linear: return "linear";
    case ScheduleKind::Log: return "log";
    case ScheduleKind::Exp: return "exp";
    case ScheduleKind::LinearRepeat: return "linear_repeat";
  }
  return "?";
}

inline ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "constant") return ScheduleKind::Constant;
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "log") return ScheduleKind::Log;
  if (name == "exp") return ScheduleKind::Exp;
  if (name == "linear_repeat") return ScheduleKind::LinearRepeat;
  throw Error(ErrorKind::Config, "unknown schedule kind '" + name +
                                     "' (constant|linear|log|exp|linear_repeat)");
}

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::LinearRepeat;
  double max_ratio = 0.4;   // r_N, strictly inside (0, 1)
  std::size_t epochs = 1;   // N
  std::size_t period = 5;   // T, used by linear_repeat only

  /// Throws Config naming the violated bound.
  void validate() const {
    if (!(max_ratio > 0.0 && max_ratio < 1.0)) {
      throw Error(ErrorKind::Config,
                  "maximum masking ratio must satisfy 0 < rn < 1, got " + std::to_string(max_ratio));
    }
    if (epochs == 0) throw Error(ErrorKind::Config, "epochs must be >= 1");
    if (kind == ScheduleKind::LinearRepeat && (period == 0 || period > epochs)) {
      throw Error(ErrorKind::Config, "linear_repeat period must satisfy 1 <= period <= epochs (" +
                                         std::to_string(epochs) + "), got " +
                                         std::to_string(period));
    }
  }
};

/// Masking ratio per epoch; entry k (1-based) is r_k.
class ScheduleVector {
public:
  ScheduleVector() = default;
  explicit ScheduleVector(std::vector<double> ratios) : ratios_(std::move(ratios)) {}

  std::size_t size() const noexcept { return ratios_.size(); }
  const std::vector<double>& values() const noexcept { return ratios_; }

  /// r_k for 1 <= k <= N.
  double ratio_at(std::size_t k) const {
    if (k < 1 || k > ratios_.size()) {
      throw Error(ErrorKind::Index, "epoch " + std::to_string(k) + " outside [1, " +
                                        std::to_string(ratios_.size()) + "]");
    }
    return ratios_[k - 1];
  }

  friend bool operator==(const ScheduleVector&, const ScheduleVector&) = default;

private:
  std::vector<double> ratios_;
};

/// Closed-form value of r_k for one epoch.
inline double schedule_value(const ScheduleSpec& spec, std::size_t k) {
  const double rn = spec.max_ratio;
  const double n = static_cast<double>(spec.epochs);
  const double kd = static_cast<double>(k);
  switch (spec.kind) {
    case ScheduleKind::Constant: return rn;
    case ScheduleKind::Linear: return rn * (kd / n);
    case ScheduleKind::Log: return rn * std::log2(1.0 + kd / n);
    case ScheduleKind::Exp: return rn * std::exp(kd - n);
    case ScheduleKind::LinearRepeat: {
      // Sawtooth: each period ramps rn/T, 2rn/T, ..., rn; a trailing partial period truncates.
      const auto phase = static_cast<double>((k - 1) % spec.period + 1);
      return rn * (phase / static_cast<double>(spec.period));
    }
  }
  return 0.0;
}

inline ScheduleVector build_schedule(const ScheduleSpec& spec) {
  spec.validate();
  std::vector<double> ratios(spec.epochs);
  for (std::size_t k = 1; k <= spec.epochs; ++k) ratios[k - 1] = schedule_value(spec, k);
  return ScheduleVector(std::move(ratios));
}

inline double ratio_at(const ScheduleVector& r, std::size_t k) { return r.ratio_at(k); }

inline std::string format_ratio(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

/// CSV with header `epoch,ratio`, one row per epoch, 12 significant digits.
inline void export_schedule(const ScheduleVector& r, std::ostream& out) {
  out << "epoch,ratio\n";
  for (std::size_t k = 1; k <= r.size(); ++k) out << k << ',' << format_ratio(r.ratio_at(k)) << '\n';
}

inline std::string export_schedule(const ScheduleVector& r) {
  std::ostringstream out;
  export_schedule(r, out);
  return out.str();
}

inline ScheduleVector parse_schedule_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "epoch,ratio") {
    throw Error(ErrorKind::InvalidInput, "schedule CSV must start with 'epoch,ratio'");
  }
  std::vector<double> ratios;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(ErrorKind::InvalidInput, "bad row '" + line + "'");
    const auto epoch = std::stoul(line.substr(0, comma));
    if (epoch != ratios.size() + 1) {
      throw Error(ErrorKind::InvalidInput, "epochs must be consecutive from 1");
    }
    ratios.push_back(std::stod(line.substr(comma + 1)));
  }
  return ScheduleVector(std::move(ratios));
}

}  // namespace cbm
