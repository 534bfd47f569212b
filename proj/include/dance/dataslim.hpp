#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include "dance/error.hpp"
#include "dance/image.hpp"
#include "dance/rng.hpp"

namespace dance {

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

// Maps a complexity score p to per-image downsample scale, drop probability and
// loss weight. Higher p is always favoured: larger scale, lower drop
// probability, larger weight.
struct SlimPolicy {
  Range scale_range{0.5, 1.0};
  Range drop_range{0.0, 1.0};
  Range weight_range{0.0, 1.0};
  bool cad = true;   // complexity-adaptive downsampling
  bool casd = true;  // complexity-adaptive stochastic dropping
  bool cal = true;   // complexity-adaptive loss
  bool rd = false;   // complexity-blind random drop; exclusive with casd
  double rd_probability = 0.5;
  int min_dim = 8;
  // Per-image drop draws follow a golden-ratio sequence across epochs instead
  // of independent uniforms, so each image's long-run keep rate tracks its
  // keep probability closely.
  bool stratified_drop = true;

  static SlimPolicy disabled() {
    SlimPolicy p;
    p.cad = p.casd = p.cal = false;
    return p;
  }

  void validate() const {
    if (!(scale_range.lo > 0.0 && scale_range.lo <= scale_range.hi && scale_range.hi <= 1.0))
      throw ConfigError("scale range must satisfy 0 < lo <= hi <= 1");
    if (!(drop_range.lo >= 0.0 && drop_range.lo <= drop_range.hi && drop_range.hi <= 1.0))
      throw ConfigError("drop range must satisfy 0 <= lo <= hi <= 1");
    if (!(weight_range.lo >= 0.0 && weight_range.lo <= weight_range.hi))
      throw ConfigError("weight range must satisfy 0 <= lo <= hi");
    if (rd && casd) throw ConfigError("random drop and complexity-adaptive dropping are exclusive");
    if (!(rd_probability >= 0.0 && rd_probability <= 1.0)) throw ConfigError("rd probability outside [0,1]");
    if (min_dim < 1) throw ConfigError("min_dim must be positive");
  }
};

namespace detail {
inline void check_p(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("complexity score p outside [0,1]");
}
}  // namespace detail

inline double downsample_scale(double p, const SlimPolicy& policy) {
  detail::check_p(p);
  const auto [lo, hi] = policy.scale_range;
  return lo + (hi - lo) * p;
}

inline double drop_probability(double p, const SlimPolicy& policy) {
  detail::check_p(p);
  const auto [lo, hi] = policy.drop_range;
  return hi - (hi - lo) * p;
}

inline double loss_weight(double p, const SlimPolicy& policy) {
  detail::check_p(p);
  const auto [lo, hi] = policy.weight_range;
  return lo + (hi - lo) * p;
}

struct SlimDecision {
  std::string image_id;
  double p = 0.0;
  double scale = 1.0;
  bool keep = true;
  double weight = 1.0;
  int target_w = 0;
  int target_h = 0;
};

inline std::pair<int, int> scaled_dims(int w, int h, double scale, int min_dim) {
  const int tw = std::max(min_dim, static_cast<int>(std::lround(scale * w)));
  const int th = std::max(min_dim, static_cast<int>(std::lround(scale * h)));
  return {tw, th};
}

inline constexpr double kGoldenFraction = 0.6180339887498949;

// Epoch-th point of the additive recurrence frac(offset + epoch * phi^-1).
inline double stratified_uniform(double offset, std::uint64_t epoch) {
  const double v = offset + static_cast<double>(epoch) * kGoldenFraction;
  return v - std::floor(v);
}

// `u` in [0,1) drives the keep draw.
inline SlimDecision decide(const std::string& image_id, double p, int width, int height,
                           const SlimPolicy& policy, double u) {
  detail::check_p(p);
  SlimDecision d;
  d.image_id = image_id;
  d.p = p;
  d.scale = policy.cad ? downsample_scale(p, policy) : 1.0;
  if (policy.casd) {
    d.keep = u < 1.0 - drop_probability(p, policy);
  } else if (policy.rd) {
    d.keep = u < 1.0 - policy.rd_probability;
  }
  d.weight = policy.cal ? loss_weight(p, policy) : 1.0;
  if (policy.cad) {
    std::tie(d.target_w, d.target_h) = scaled_dims(width, height, d.scale, policy.min_dim);
  } else {
    d.target_w = width;
    d.target_h = height;
  }
  return d;
}

// Exactly one uniform is consumed from `rng` per call, whatever the toggles,
// so that decision streams stay aligned across configurations.
inline SlimDecision decide(const std::string& image_id, double p, int width, int height,
                           const SlimPolicy& policy, SplitMix64& rng) {
  return decide(image_id, p, width, height, policy, rng.uniform());
}

// Source coordinate of destination pixel i under the half-pixel-center convention.
inline double source_coord(int i, int src, int dst) {
  return (static_cast<double>(i) + 0.5) * static_cast<double>(src) / static_cast<double>(dst) - 0.5;
}

// Bilinear resampling with pixel centers at (i + 0.5) / N and edge clamping.
inline RasterImage resize_image(const RasterImage& img, int target_w, int target_h) {
  if (target_w < 1 || target_h < 1) throw DomainError("resize_image: target dims must be >= 1");
  if (target_w == img.width && target_h == img.height) return img;
  RasterImage out(target_w, target_h, img.channels);
  for (int y = 0; y < target_h; ++y) {
    const double sy = std::clamp(source_coord(y, img.height, target_h), 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = sy - y0;
    for (int x = 0; x < target_w; ++x) {
      const double sx = std::clamp(source_coord(x, img.width, target_w), 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(x0, y0, c) * (1.0 - fx) + img.at(x1, y0, c) * fx;
        const double bot = img.at(x0, y1, c) * (1.0 - fx) + img.at(x1, y1, c) * fx;
        out.at(x, y, c) = std::clamp(top * (1.0 - fy) + bot * fy, 0.0, 1.0);
      }
    }
  }
  return out;
}

inline int nearest_source(int i, int src, int dst) {
  const int s = static_cast<int>(std::floor((static_cast<double>(i) + 0.5) * src / dst));
  return std::clamp(s, 0, src - 1);
}

// Nearest-neighbour resampling; labels are categorical.
inline LabelMap resize_labels(const LabelMap& labels, int target_w, int target_h) {
  if (target_w < 1 || target_h < 1) throw DomainError("resize_labels: target dims must be >= 1");
  if (target_w == labels.width && target_h == labels.height) return labels;
  LabelMap out(target_w, target_h, 0, labels.ignore_id);
  for (int y = 0; y < target_h; ++y) {
    const int sy = nearest_source(y, labels.height, target_h);
    for (int x = 0; x < target_w; ++x) out.at(x, y) = labels.at(nearest_source(x, labels.width, target_w), sy);
  }
  return out;
}

// sum(w_i * l_i) / sum(w_i).
inline double weighted_loss(std::span<const double> weights, std::span<const double> losses) {
  if (weights.size() != losses.size() || weights.empty())
    throw InvalidInputError("weighted_loss: weights and losses must have equal non-zero length");
  double sw = 0.0, swl = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw InvalidInputError("weighted_loss: negative weight");
    sw += weights[i];
    swl += weights[i] * losses[i];
  }
  if (!(sw > 0.0)) throw DegenerateBatchError("weighted_loss: weights sum to zero");
  return swl / sw;
}

}  // namespace dance
