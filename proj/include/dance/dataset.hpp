#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "dance/complexity.hpp"
#include "dance/distribution.hpp"
#include "dance/error.hpp"
#include "dance/image.hpp"
#include "dance/manifest.hpp"
#include "dance/png_io.hpp"
#include "dance/rng.hpp"

namespace dance {

struct SynthConfig {
  int num_images = 200;
  int width = 48;
  int height = 48;
  int num_classes = 4;
  int min_shapes = 0;
  int max_shapes = 12;
  double min_noise = 0.0;
  double max_noise = 0.03;
  double color_jitter = 0.05;
  int test_every = 4;  // every n-th image (index % n == n-1) goes to the test split; 0 disables
  std::uint64_t seed = 0;

  void validate() const {
    if (num_images < 1) throw ConfigError("num_images must be >= 1");
    if (width < 8 || height < 8 || width % 8 || height % 8)
      throw ConfigError("image dims must be positive multiples of 8");
    if (num_classes < 2 || num_classes > 255) throw ConfigError("num_classes must be in [2, 255]");
    if (min_shapes < 0 || max_shapes < min_shapes) throw ConfigError("invalid shapes-per-image range");
    if (min_noise < 0.0 || max_noise < min_noise || max_noise > 1.0) throw ConfigError("invalid noise range");
    if (color_jitter < 0.0) throw ConfigError("color_jitter must be >= 0");
    if (test_every < 0) throw ConfigError("test_every must be >= 0");
  }
};

enum class ShapeKind { Rectangle, Circle, Triangle };

struct Shape {
  ShapeKind kind = ShapeKind::Rectangle;
  int label = 1;
  std::array<double, 3> color{};
  // Rectangle: [x0,x1) x [y0,y1) in pixel-center coordinates.
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  // Circle: center and radius.
  double cx = 0, cy = 0, r = 0;
  // Triangle vertices.
  std::array<double, 6> v{};

  // Membership of the pixel whose center is (px + 0.5, py + 0.5).
  bool covers(int px, int py) const {
    const double x = px + 0.5, y = py + 0.5;
    switch (kind) {
      case ShapeKind::Rectangle:
        return x >= x0 && x < x1 && y >= y0 && y < y1;
      case ShapeKind::Circle:
        return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
      case ShapeKind::Triangle: {
        auto edge = [&](int a, int b) {
          return (v[2 * b] - v[2 * a]) * (y - v[2 * a + 1]) - (v[2 * b + 1] - v[2 * a + 1]) * (x - v[2 * a]);
        };
        const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      }
    }
    return false;
  }
};

struct SynthImage {
  std::string id;
  std::string split;
  RasterImage image;
  LabelMap labels;
  std::array<double, 3> background{};
  std::vector<Shape> shapes;  // painter's order, last on top
  double noise = 0.0;
};

inline std::string synth_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%05d", index);
  return buf;
}

// Base color of a class: dark background, saturated hues for shape classes.
inline std::array<double, 3> class_color(int cls, int num_classes) {
  if (cls == 0) return {0.12, 0.12, 0.16};
  const double hue = 300.0 * (cls - 1) / std::max(1, num_classes - 2);
  const double s = 0.7, v = 0.92;
  const double c = v * s, hp = hue / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  return {r + m, g + m, b + m};
}

// Label of the topmost shape covering the pixel, or background.
inline int oracle_label(const SynthImage& s, int x, int y) {
  for (auto it = s.shapes.rbegin(); it != s.shapes.rend(); ++it)
    if (it->covers(x, y)) return it->label;
  return 0;
}

inline double quantize_unit(double v) {
  return static_cast<double>(png::quantize8(v)) / 255.0;
}

inline SynthImage generate_image(const SynthConfig& cfg, int index) {
  SplitMix64 rng(derive_seed(cfg.seed, 0x5917, static_cast<std::uint64_t>(index)));
  SynthImage s;
  s.id = synth_id(index);
  s.split = (cfg.test_every > 0 && index % cfg.test_every == cfg.test_every - 1) ? "test" : "train";
  const int W = cfg.width, H = cfg.height;
  auto jitter = [&](std::array<double, 3> c) {
    for (double& v : c) v = std::clamp(v + rng.uniform(-cfg.color_jitter, cfg.color_jitter), 0.0, 1.0);
    return c;
  };
  const int k = cfg.min_shapes + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_shapes - cfg.min_shapes + 1)));
  s.noise = rng.uniform(cfg.min_noise, cfg.max_noise);
  s.background = jitter(class_color(0, cfg.num_classes));
  const double dim = std::min(W, H);
  const double rmax = std::max(4.0, 0.35 * dim / std::sqrt(1.0 + 0.5 * k));
  for (int i = 0; i < k; ++i) {
    Shape sh;
    sh.kind = static_cast<ShapeKind>(rng.below(3));
    sh.label = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.num_classes - 1)));
    sh.color = jitter(class_color(sh.label, cfg.num_classes));
    const double r = rng.uniform(3.0, rmax);
    const double cx = rng.uniform(0.0, W), cy = rng.uniform(0.0, H);
    switch (sh.kind) {
      case ShapeKind::Rectangle: {
        const double hw = rng.uniform(0.5 * r, r), hh = rng.uniform(0.5 * r, r);
        sh.x0 = cx - hw, sh.x1 = cx + hw, sh.y0 = cy - hh, sh.y1 = cy + hh;
        break;
      }
      case ShapeKind::Circle:
        sh.cx = cx, sh.cy = cy, sh.r = r;
        break;
      case ShapeKind::Triangle: {
        const double base = rng.uniform(0.0, 2.0 * M_PI);
        for (int t = 0; t < 3; ++t) {
          const double a = base + t * 2.0 * M_PI / 3.0 + rng.uniform(-0.4, 0.4);
          const double rr = r * rng.uniform(0.8, 1.3);
          sh.v[2 * t] = cx + rr * std::cos(a);
          sh.v[2 * t + 1] = cy + rr * std::sin(a);
        }
        break;
      }
    }
    s.shapes.push_back(sh);
  }
  s.image = RasterImage(W, H, 3);
  s.labels = LabelMap(W, H, 0);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int lbl = oracle_label(s, x, y);
      std::array<double, 3> c = s.background;
      if (lbl != 0) {
        for (auto it = s.shapes.rbegin(); it != s.shapes.rend(); ++it)
          if (it->covers(x, y)) {
            c = it->color;
            break;
          }
      }
      s.labels.at(x, y) = static_cast<std::uint8_t>(lbl);
      for (int ch = 0; ch < 3; ++ch) {
        const double n = s.noise > 0.0 ? rng.uniform(-s.noise, s.noise) : 0.0;
        s.image.at(x, y, ch) = quantize_unit(c[ch] + n);
      }
    }
  return s;
}

inline std::vector<SynthImage> generate_images(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<SynthImage> out;
  out.reserve(cfg.num_images);
  for (int i = 0; i < cfg.num_images; ++i) out.push_back(generate_image(cfg, i));
  return out;
}

// Writes images/, labels/ and manifest.jsonl under dir.
inline Manifest generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (!ec) fs::create_directories(dir / "labels", ec);
  if (ec) throw IoError("cannot create corpus directory " + dir.string() + ": " + ec.message());
  Manifest m;
  m.base_dir = dir;
  for (int i = 0; i < cfg.num_images; ++i) {
    const SynthImage s = generate_image(cfg, i);
    ManifestRecord r;
    r.id = s.id;
    r.path = "images/" + s.id + ".png";
    r.label_path = "labels/" + s.id + ".png";
    r.split = s.split;
    png::write_image(dir / r.path, s.image);
    png::write_labels(dir / r.label_path, s.labels);
    m.records.push_back(std::move(r));
  }
  write_manifest(dir / "manifest.jsonl", m);
  return m;
}

struct Sample {
  std::string id;
  std::string split;
  RasterImage image;
  LabelMap labels;
};

// In-memory corpus without a round trip through PNG files.
inline std::vector<Sample> to_samples(const std::vector<SynthImage>& images) {
  std::vector<Sample> out;
  out.reserve(images.size());
  for (const auto& s : images) out.push_back({s.id, s.split, s.image, s.labels});
  return out;
}

inline std::vector<Sample> load_corpus(const Manifest& m, std::uint8_t ignore_id = kDefaultIgnoreId) {
  check_unique_ids(m);
  std::vector<const ManifestRecord*> order;
  for (const auto& r : m.records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<Sample> out;
  out.reserve(order.size());
  for (const ManifestRecord* r : order) {
    Sample s;
    s.id = r->id;
    s.split = r->split;
    try {
      s.image = png::read_image(m.resolve(r->path));
      if (!r->label_path.empty()) {
        s.labels = png::read_labels(m.resolve(r->label_path), ignore_id);
        if (s.labels.width != s.image.width || s.labels.height != s.image.height)
          throw IoError("label dims differ from image dims");
      }
    } catch (const Error& e) {
      throw IoError("record " + r->id + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<Sample> select_split(const std::vector<Sample>& all, const std::string& split) {
  std::vector<Sample> out;
  for (const auto& s : all)
    if (s.split == split) out.push_back(s);
  return out;
}

// Seeded Fisher-Yates permutation of [0, n) for one epoch.
inline std::vector<std::size_t> shuffle(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SplitMix64 rng(derive_seed(seed, 0x5e7f, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

inline std::vector<ScoredImage> score_samples(const std::vector<Sample>& samples) {
  std::vector<ScoredImage> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.id, s.split, image_complexity(s.image).sc_mean});
  return out;
}

// Scores every record, fits on the training split and stores sc_mean/p.
inline ComplexityIndex index_corpus(Manifest& m) {
  const auto samples = load_corpus(m);
  const auto scored = score_samples(samples);
  ComplexityIndex idx = build_index(scored);
  attach_index(m, idx);
  return idx;
}

}  // namespace dance
