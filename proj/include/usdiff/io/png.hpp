#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace usdiff::io {

/// 8-bit grayscale raster, row-major.
struct Gray8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

/// Decodes any PNG color type/bit depth to 8-bit gray (color via the
/// ITU-R 601 luma weights). Throws std::runtime_error with a
/// reason on unreadable data.
Gray8 read_png(const std::string& path);
Gray8 decode_png(const std::string& bytes);

void write_png(const std::string& path, const Gray8& image);
std::string encode_png(const Gray8& image);

}  // namespace usdiff::io
