#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dance/image.hpp"

namespace dance {

struct GradientField {
  int width = 0;
  int height = 0;
  std::vector<double> s_h;  // horizontal Sobel response
  std::vector<double> s_v;  // vertical Sobel response
};

struct SpatialComplexity {
  double sc_mean = 0.0;
  std::size_t pixel_count = 0;
};

// BT.601 luma. Single-channel input is returned unchanged.
inline RasterImage to_grayscale(const RasterImage& img) {
  if (img.channels != 1 && img.channels != 3)
    throw InvalidInputError("to_grayscale: channel count must be 1 or 3");
  if (img.channels == 1) return img;
  RasterImage out(img.width, img.height, 1);
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double* px = &img.data[i * 3];
    out.data[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
  }
  return out;
}

// 3x3 Sobel pair with replicate border padding; output dims equal input dims.
inline GradientField sobel(const RasterImage& gray) {
  if (gray.channels != 1) throw InvalidInputError("sobel: expects a 1-channel image");
  if (gray.width < 3 || gray.height < 3) throw InvalidInputError("sobel: image smaller than 3x3");
  const int w = gray.width, h = gray.height;
  GradientField g{w, h, std::vector<double>(gray.pixel_count()), std::vector<double>(gray.pixel_count())};
  auto px = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return gray.data[static_cast<std::size_t>(y) * w + x];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double tl = px(x - 1, y - 1), tc = px(x, y - 1), tr = px(x + 1, y - 1);
      const double ml = px(x - 1, y), mr = px(x + 1, y);
      const double bl = px(x - 1, y + 1), bc = px(x, y + 1), br = px(x + 1, y + 1);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      g.s_h[i] = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
      g.s_v[i] = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
    }
  }
  return g;
}

// Mean Sobel gradient magnitude over all M = width*height pixels.
inline SpatialComplexity spatial_complexity(const RasterImage& gray) {
  const GradientField g = sobel(gray);
  double sum = 0.0;
  for (std::size_t i = 0; i < g.s_h.size(); ++i) sum += std::sqrt(g.s_h[i] * g.s_h[i] + g.s_v[i] * g.s_v[i]);
  const std::size_t m = g.s_h.size();
  return {sum / static_cast<double>(m), m};
}

// Convenience for RGB or gray input.
inline SpatialComplexity image_complexity(const RasterImage& img) {
  return spatial_complexity(to_grayscale(img));
}

}  // namespace dance
