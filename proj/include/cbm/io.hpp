#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>

#include "cbm/error.hpp"
#include "cbm/image_io.hpp"
#include "cbm/salience.hpp"

namespace cbm {

namespace fs = std::filesystem;

/// Writes `content` to `path.tmp` and renames it over `path`, so readers never
/// observe a truncated file.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create '" + path.parent_path().string() + "'");
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ignored;
      fs::remove(tmp, ignored);
      throw Error(ErrorKind::Io, "write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw Error(ErrorKind::Io, "cannot rename '" + tmp.string() + "' to '" + path.string() + "'");
  }
}

/// Same as write_image but through a temporary file.
inline void write_image_atomic(const fs::path& path, const Image& image) {
  fs::path tmp = path;
  tmp += ".tmp";
  tmp += path.extension();
  try {
    write_image(tmp, image);
  } catch (...) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw;
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename '" + tmp.string() + "'");
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Shortest round-trippable decimal for a double.
inline std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

/// Debug dump for one image: `<stem>.csv` (index,m,p) and `<stem>_magnitude.png`.
inline void dump_salience(const fs::path& dir, const std::string& stem, const Image& image,
                          const PatchGrid& grid, GradientOperator op) {
  const auto magnitude = gradient_magnitude(to_grayscale(image), op);
  const auto profile = patch_probabilities(magnitude, grid);
  std::string csv = "index,m,p\n";
  for (std::size_t i = 0; i < profile.size(); ++i) {
    csv += std::to_string(i + 1) + ',' + format_double(profile.magnitudes[i]) + ',' +
           format_double(profile.probabilities[i]) + '\n';
  }
  write_file_atomic(dir / (stem + ".csv"), csv);
  write_image_atomic(dir / (stem + "_magnitude.png"), magnitude_to_image(magnitude));
}

}  // namespace cbm
