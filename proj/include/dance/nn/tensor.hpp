#pragma once

#include <cstddef>
#include <vector>

#include "dance/error.hpp"

namespace dance::nn {

// Dense NCHW tensor of doubles.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t size() const { return v.size(); }

  double* ptr(int ni, int ci) { return v.data() + (static_cast<std::size_t>(ni) * c + ci) * plane(); }
  const double* ptr(int ni, int ci) const {
    return v.data() + (static_cast<std::size_t>(ni) * c + ci) * plane();
  }
  double& at(int ni, int ci, int y, int x) { return ptr(ni, ci)[static_cast<std::size_t>(y) * w + x]; }
  double at(int ni, int ci, int y, int x) const {
    return ptr(ni, ci)[static_cast<std::size_t>(y) * w + x];
  }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

}  // namespace dance::nn
