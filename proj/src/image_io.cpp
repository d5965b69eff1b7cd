// SPDX-License-Identifier: Apache-2.0
#include "scenediff/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "scenediff/errors.hpp"

namespace scenediff {

std::uint8_t to_byte(double x) {
  return static_cast<std::uint8_t>(std::clamp(std::round(127.5 * (x + 1.0)), 0.0, 255.0));
}

std::string encode_png(const Tensor& image) {
  if (image.ndim() != 3 || image.shape()[2] != 3) throw ShapeError("png: expects [H, W, 3], got " + shape_str(image.shape()));
  const auto h = image.shape()[0], w = image.shape()[1];
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h * w * 3));
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(image.data()[i]);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  std::string out;
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), len);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::int64_t r = 0; r < h; ++r) png_write_row(png, bytes.data() + r * w * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const std::string& path, const Tensor& image) {
  const std::string data = encode_png(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("write failed: " + path);
}

Tensor read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw IoError("png: cannot create reader");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: cannot decode " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const auto w = static_cast<std::int64_t>(png_get_image_width(png, info));
  const auto h = static_cast<std::int64_t>(png_get_image_height(png, info));
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h * w * 3));
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (std::int64_t r = 0; r < h; ++r) rows[static_cast<std::size_t>(r)] = bytes.data() + r * w * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  std::vector<double> v(bytes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(bytes[i]) / 127.5 - 1.0;
  return Tensor({h, w, 3}, std::move(v));
}

}  // namespace scenediff
