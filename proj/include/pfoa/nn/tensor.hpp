#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace pfoa::nn {

// Dense NCHW tensor of doubles. Fully-connected activations use h = w = 1.
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_size() const { return static_cast<std::size_t>(c) * h * w; }

  std::size_t index(int in, int ic, int iy, int ix) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix;
  }
  double& operator()(int in, int ic, int iy, int ix) { return data[index(in, ic, iy, ix)]; }
  double operator()(int in, int ic, int iy, int ix) const { return data[index(in, ic, iy, ix)]; }

  double* plane_ptr(int in, int ic) { return data.data() + index(in, ic, 0, 0); }
  const double* plane_ptr(int in, int ic) const { return data.data() + index(in, ic, 0, 0); }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace pfoa::nn
