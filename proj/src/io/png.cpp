#include "usdiff/io/png.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace usdiff::io {

namespace {

Gray8 decode_with(png_image& img, const void* data, std::size_t size, const std::string& what) {
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, data, size)) {
    throw std::runtime_error("png " + what + ": " + img.message);
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, raw.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("png " + what + ": " + msg);
  }
  Gray8 out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  if (!color) {
    out.pixels = std::move(raw);
    return out;
  }
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const unsigned r = raw[3 * i], g = raw[3 * i + 1], b = raw[3 * i + 2];
    out.pixels[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
  }
  return out;
}

}  // namespace

Gray8 decode_png(const std::string& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  return decode_with(img, bytes.data(), bytes.size(), "data");
}

Gray8 read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto bytes = ss.str();
  png_image img;
  std::memset(&img, 0, sizeof img);
  return decode_with(img, bytes.data(), bytes.size(), path);
}

std::string encode_png(const Gray8& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw std::invalid_argument("encode_png: pixel buffer does not match dimensions");
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("encode_png: ") + img.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("encode_png: ") + img.message);
  }
  out.resize(size);
  return out;
}

void write_png(const std::string& path, const Gray8& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace usdiff::io
