#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <tuple>
#include <vector>

#include "cbm/error.hpp"
#include "cbm/image.hpp"
#include "cbm/salience.hpp"

namespace cbm {

namespace fs = std::filesystem;

namespace detail {

inline std::string lower_extension(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext;
}

inline Image read_png(const fs::path& path) {
  png_image info;
  std::memset(&info, 0, sizeof info);
  info.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&info, path.c_str())) {
    throw Error(ErrorKind::Io, "cannot read PNG '" + path.string() + "': " + info.message);
  }
  const bool color = (info.format & PNG_FORMAT_FLAG_COLOR) != 0;
  info.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(info));
  if (!png_image_finish_read(&info, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = info.message;
    png_image_free(&info);
    throw Error(ErrorKind::Io, "cannot decode PNG '" + path.string() + "': " + message);
  }
  const std::size_t channels = color ? 3 : 1;
  return Image(info.height, info.width, channels,
               std::vector<float>(buffer.begin(), buffer.end()));
}

inline void skip_pnm_space(std::istream& in) {
  for (;;) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      return;
    }
  }
}

/// Binary PGM (P5) / PPM (P6), 8-bit.
inline Image read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  std::size_t channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw Error(ErrorKind::Io, "'" + path.string() + "' is not a binary PGM/PPM");

  std::size_t header[3] = {0, 0, 0};
  for (auto& value : header) {
    skip_pnm_space(in);
    in >> value;
  }
  in.get();
  const auto [width, height, maxval] = std::tuple{header[0], header[1], header[2]};
  if (!in || width == 0 || height == 0 || maxval == 0 || maxval > 255) {
    throw Error(ErrorKind::Io, "bad PNM header in '" + path.string() + "'");
  }
  std::vector<unsigned char> raw(width * height * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw Error(ErrorKind::Io, "truncated pixel data in '" + path.string() + "'");
  }
  std::vector<float> pixels(raw.size());
  const float scale = 255.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < raw.size(); ++i) pixels[i] = static_cast<float>(raw[i]) * scale;
  return Image(height, width, channels, std::move(pixels));
}

inline std::vector<png_byte> to_bytes(const Image& image) {
  std::vector<png_byte> bytes(image.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::clamp(std::round(image.pixels()[i]), 0.0f, 255.0f);
    bytes[i] = static_cast<png_byte>(v);
  }
  return bytes;
}

}  // namespace detail

inline bool is_image_file(const fs::path& path) {
  const auto ext = detail::lower_extension(path);
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

/// Reads PNG, PPM or PGM into [0, 255] pixels with 1 or 3 channels.
inline Image read_image(const fs::path& path) {
  const auto ext = detail::lower_extension(path);
  if (ext == ".png") return detail::read_png(path);
  if (ext == ".ppm" || ext == ".pgm") return detail::read_pnm(path);
  throw Error(ErrorKind::Io, "unsupported image format '" + path.string() + "'");
}

/// Writes an 8-bit PNG; pixel values are rounded and clamped to [0, 255].
inline void write_png(const fs::path& path, const Image& image) {
  png_image info;
  std::memset(&info, 0, sizeof info);
  info.version = PNG_IMAGE_VERSION;
  info.width = static_cast<png_uint_32>(image.width());
  info.height = static_cast<png_uint_32>(image.height());
  info.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto bytes = detail::to_bytes(image);
  if (!png_image_write_to_file(&info, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw Error(ErrorKind::Io, "cannot write PNG '" + path.string() + "': " + info.message);
  }
}

/// Writes binary PGM/PPM depending on channel count.
inline void write_pnm(const fs::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out << (image.channels() == 3 ? "P6" : "P5") << '\n'
      << image.width() << ' ' << image.height() << "\n255\n";
  const auto bytes = detail::to_bytes(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

inline void write_image(const fs::path& path, const Image& image) {
  const auto ext = detail::lower_extension(path);
  if (ext == ".ppm" || ext == ".pgm") write_pnm(path, image);
  else write_png(path, image);
}

/// Nearest-neighbor resize: source index = floor(dst * src / dst_size).
inline Image resize_nearest(const Image& image, std::size_t height, std::size_t width) {
  if (image.height() == height && image.width() == width) return image;
  Image out(height, width, image.channels());
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = y * image.height() / height;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = x * image.width() / width;
      for (std::size_t c = 0; c < image.channels(); ++c) out.at(y, x, c) = image.at(sy, sx, c);
    }
  }
  return out;
}

/// 3 -> 1 via luma, 1 -> 3 by replication.
inline Image convert_channels(const Image& image, std::size_t channels) {
  if (image.channels() == channels) return image;
  if (channels == 1) return to_grayscale(image);
  if (channels != 3) throw Error(ErrorKind::InvalidInput, "channels must be 1 or 3");
  Image out(image.height(), image.width(), 3);
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = image.at(y, x);
    }
  }
  return out;
}

/// Min-max normalized 8-bit view of a magnitude map (visualization only).
inline Image magnitude_to_image(const MagnitudeMap& magnitude) {
  Image out(magnitude.height, magnitude.width, 1);
  const auto [lo, hi] = std::minmax_element(magnitude.values.begin(), magnitude.values.end());
  const double span = *hi - *lo;
  for (std::size_t i = 0; i < magnitude.values.size(); ++i) {
    out.pixels()[i] =
        span > 0.0 ? static_cast<float>(255.0 * (magnitude.values[i] - *lo) / span) : 0.0f;
  }
  return out;
}

}  // namespace cbm
