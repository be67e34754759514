#include <gtest/gtest.h>
#include <png.h>

#include <cstdio>
#include <filesystem>

#include "usdiff/io/hash.hpp"
#include "usdiff/io/png.hpp"

using namespace usdiff::io;

namespace {

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256 h;
  h.update("a");
  h.update("bc");
  EXPECT_EQ(h.hex(), sha256_hex("abc"));
}

TEST(Base64, Rfc4648Vectors) {
  const std::pair<const char*, const char*> cases[] = {
      {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foobar", "Zm9vYmFy"}};
  for (auto [plain, enc] : cases) {
    const std::string p = plain;
    EXPECT_EQ(base64_encode({reinterpret_cast<const std::uint8_t*>(p.data()), p.size()}), enc);
    EXPECT_EQ(base64_decode(enc), p);
  }
}

TEST(Base64, RejectsMalformed) {
  for (const char* bad : {"Zg=", "Z===", "Zg=a", "Zm9v!", "=Zm9"}) {
    EXPECT_THROW(base64_decode(bad), std::invalid_argument) << bad;
  }
}

TEST(Png, RoundTrip) {
  Gray8 g{5, 3, {}};
  for (int i = 0; i < 15; ++i) g.pixels.push_back(static_cast<std::uint8_t>(i * 17));
  const auto bytes = encode_png(g);
  EXPECT_EQ(bytes.substr(1, 3), "PNG");
  const auto back = decode_png(bytes);
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.pixels, g.pixels);
  EXPECT_EQ(encode_png(g), bytes);
}

TEST(Png, ColorIsConvertedToLuma) {
  const auto path = std::filesystem::temp_directory_path() / "usdiff_io_rgb.png";
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = 2;
  img.height = 1;
  img.format = PNG_FORMAT_RGB;
  const std::uint8_t px[] = {255, 0, 0, 10, 20, 30};
  ASSERT_TRUE(png_image_write_to_file(&img, path.c_str(), 0, px, 0, nullptr));
  const auto g = read_png(path.string());
  ASSERT_EQ(g.pixels.size(), 2u);
  EXPECT_EQ(g.pixels[0], (299 * 255 + 500) / 1000);
  EXPECT_EQ(g.pixels[1], (299 * 10 + 587 * 20 + 114 * 30 + 500) / 1000);
}

TEST(Png, GarbageThrows) {
  EXPECT_THROW(decode_png("definitely not a png"), std::runtime_error);
  EXPECT_THROW(read_png("/nonexistent/file.png"), std::runtime_error);
}

}  // namespace
