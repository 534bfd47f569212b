#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dance/error.hpp"

namespace dance {

// Row-major, channel-interleaved image with intensities in [0, 1].
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  RasterImage() = default;
  RasterImage(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  double& at(int x, int y, int ch = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }
  double at(int x, int y, int ch = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + ch];
  }

  bool operator==(const RasterImage&) const = default;
};

inline void validate(const RasterImage& img) {
  if (img.width <= 0 || img.height <= 0) throw InvalidInputError("image has non-positive dims");
  if (img.channels != 1 && img.channels != 3)
    throw InvalidInputError("image must have 1 or 3 channels, got " + std::to_string(img.channels));
  if (img.data.size() != img.pixel_count() * img.channels)
    throw InvalidInputError("image data length does not match width*height*channels");
  for (double v : img.data)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInputError("image intensity outside [0,1]");
}

inline constexpr std::uint8_t kDefaultIgnoreId = 255;

// Per-pixel class ids; pixels equal to ignore_id are excluded from loss and metrics.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::uint8_t ignore_id = kDefaultIgnoreId;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int w, int h, std::uint8_t fill = 0, std::uint8_t ignore = kDefaultIgnoreId)
      : width(w), height(h), ignore_id(ignore), labels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const LabelMap&) const = default;
};

inline void validate(const LabelMap& lm, int num_classes) {
  if (lm.labels.size() != static_cast<std::size_t>(lm.width) * lm.height)
    throw InvalidInputError("label data length does not match width*height");
  for (auto v : lm.labels)
    if (v >= num_classes && v != lm.ignore_id)
      throw InvalidInputError("label id " + std::to_string(v) + " out of range");
}

}  // namespace dance
