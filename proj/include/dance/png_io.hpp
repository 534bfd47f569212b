#pragma once

#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "dance/error.hpp"
#include "dance/image.hpp"

// Thin libpng wrappers. Images load as 1 or 3 channels in [0,1] (8-bit values
// divided by 255, 16-bit by 65535); alpha is discarded and palettes expanded.
namespace dance::png {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct Decoded {
  int width = 0, height = 0, channels = 0, bit_depth = 8;
  std::vector<unsigned char> bytes;  // big-endian samples for 16-bit
};

inline Decoded decode(const std::filesystem::path& file) {
  FilePtr fp(std::fopen(file.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open PNG: " + file.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("not a PNG file: " + file.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  Decoded d;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: " + file.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
  png_read_update_info(png, info);
  d.width = static_cast<int>(png_get_image_width(png, info));
  d.height = static_cast<int>(png_get_image_height(png, info));
  d.channels = png_get_channels(png, info);
  d.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  d.bytes.resize(rowbytes * d.height);
  std::vector<png_bytep> rows(d.height);
  for (int y = 0; y < d.height; ++y) rows[y] = d.bytes.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (d.channels != 1 && d.channels != 3) throw IoError("unsupported PNG channel layout: " + file.string());
  return d;
}

inline void encode(const std::filesystem::path& file, int width, int height, int channels,
                   const std::vector<unsigned char>& bytes) {
  FilePtr fp(std::fopen(file.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write PNG: " + file.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG: " + file.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) png_write_row(png, const_cast<png_bytep>(bytes.data() + rowbytes * y));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(fp.get()) != 0) throw IoError("failed flushing PNG: " + file.string());
}

}  // namespace detail

inline RasterImage read_image(const std::filesystem::path& file) {
  const auto d = detail::decode(file);
  RasterImage img(d.width, d.height, d.channels);
  const std::size_t n = img.data.size();
  if (d.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i)
      img.data[i] = static_cast<double>((d.bytes[2 * i] << 8) | d.bytes[2 * i + 1]) / 65535.0;
  } else {
    for (std::size_t i = 0; i < n; ++i) img.data[i] = static_cast<double>(d.bytes[i]) / 255.0;
  }
  return img;
}

// Single-channel 8-bit PNG of class ids.
inline LabelMap read_labels(const std::filesystem::path& file, std::uint8_t ignore_id = kDefaultIgnoreId) {
  const auto d = detail::decode(file);
  if (d.channels != 1 || d.bit_depth != 8) throw IoError("label PNG must be 8-bit single channel: " + file.string());
  LabelMap lm(d.width, d.height, 0, ignore_id);
  lm.labels.assign(d.bytes.begin(), d.bytes.end());
  return lm;
}

inline std::uint8_t quantize8(double v) {
  const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<std::uint8_t>(c * 255.0 + 0.5);
}

inline void write_image(const std::filesystem::path& file, const RasterImage& img) {
  validate(img);
  std::vector<unsigned char> bytes(img.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize8(img.data[i]);
  detail::encode(file, img.width, img.height, img.channels, bytes);
}

inline void write_labels(const std::filesystem::path& file, const LabelMap& lm) {
  detail::encode(file, lm.width, lm.height, 1, std::vector<unsigned char>(lm.labels.begin(), lm.labels.end()));
}

}  // namespace dance::png
