#include "pfoa/nn/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pfoa/error.hpp"
#include "pfoa/rng.hpp"

namespace pfoa::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

int conv_out_dim(int in, int k, int stride, int padding) { return (in + 2 * padding - k) / stride + 1; }

// Output positions o with 0 <= o * stride + offset < in.
std::pair<int, int> valid_range(int out, int in, int stride, int offset) {
  int lo = 0;
  while (lo < out && lo * stride + offset < 0) ++lo;
  int hi = out;
  while (hi > lo && (hi - 1) * stride + offset >= in) --hi;
  return {lo, hi};
}

void check_conv_shapes(const Tensor& input, const Tensor& weights, int stride, int padding) {
  if (weights.c != input.c) {
    throw ShapeError("conv2d: weight in-channels " + std::to_string(weights.c) + " != input channels " +
                     std::to_string(input.c));
  }
  if (weights.h != weights.w) throw ShapeError("conv2d: kernel must be square");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: invalid stride or padding");
  if (conv_out_dim(input.h, weights.h, stride, padding) < 1 ||
      conv_out_dim(input.w, weights.w, stride, padding) < 1) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
}

// Unfolds one sample into a (in_c * k * k) x (oh * ow) matrix, zero where the
// receptive field leaves the input.
void im2col(const Tensor& input, int n, int k, int stride, int padding, int oh, int ow, std::vector<double>& col) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  col.resize(static_cast<std::size_t>(input.c) * k * k * cols);
  std::size_t row = 0;
  for (int ic = 0; ic < input.c; ++ic) {
    const double* src = input.plane_ptr(n, ic);
    for (int ky = 0; ky < k; ++ky) {
      const auto [y0, y1] = valid_range(oh, input.h, stride, ky - padding);
      for (int kx = 0; kx < k; ++kx, ++row) {
        const auto [x0, x1] = valid_range(ow, input.w, stride, kx - padding);
        double* dst = col.data() + row * cols;
        std::fill(dst, dst + static_cast<std::size_t>(y0) * ow, 0.0);
        std::fill(dst + static_cast<std::size_t>(y1) * ow, dst + cols, 0.0);
        for (int oy = y0; oy < y1; ++oy) {
          const double* srow = src + static_cast<std::size_t>(oy * stride + ky - padding) * input.w;
          double* drow = dst + static_cast<std::size_t>(oy) * ow;
          std::fill(drow, drow + x0, 0.0);
          std::fill(drow + x1, drow + ow, 0.0);
          if (stride == 1) {
            std::copy(srow + x0 + kx - padding, srow + x1 + kx - padding, drow + x0);
          } else {
            for (int ox = x0; ox < x1; ++ox) drow[ox] = srow[ox * stride + kx - padding];
          }
        }
      }
    }
  }
}

// Adds a column matrix back onto the input-gradient planes of one sample.
void col2im(const std::vector<double>& col, int k, int stride, int padding, int oh, int ow, Tensor& grad, int n) {
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  std::size_t row = 0;
  for (int ic = 0; ic < grad.c; ++ic) {
    double* dst = grad.plane_ptr(n, ic);
    for (int ky = 0; ky < k; ++ky) {
      const auto [y0, y1] = valid_range(oh, grad.h, stride, ky - padding);
      for (int kx = 0; kx < k; ++kx, ++row) {
        const auto [x0, x1] = valid_range(ow, grad.w, stride, kx - padding);
        const double* src = col.data() + row * cols;
        for (int oy = y0; oy < y1; ++oy) {
          double* drow = dst + static_cast<std::size_t>(oy * stride + ky - padding) * grad.w;
          const double* srow = src + static_cast<std::size_t>(oy) * ow;
          for (int ox = x0; ox < x1; ++ox) drow[ox * stride + kx - padding] += srow[ox];
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, std::span<const double> bias, int stride,
                      int padding) {
  check_conv_shapes(input, weights, stride, padding);
  if (bias.size() != static_cast<std::size_t>(weights.n)) throw ShapeError("conv2d: bias size mismatch");
  const int k = weights.h;
  const int oh = conv_out_dim(input.h, k, stride, padding);
  const int ow = conv_out_dim(input.w, k, stride, padding);
  Tensor out(input.n, weights.n, oh, ow);
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  const std::size_t rows = static_cast<std::size_t>(input.c) * k * k;
  const ConstMatMap wmat(weights.data.data(), weights.n, static_cast<Eigen::Index>(rows));
  std::vector<double> col;
  for (int n = 0; n < input.n; ++n) {
    im2col(input, n, k, stride, padding, oh, ow, col);
    const ConstMatMap cmat(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    MatMap omat(out.plane_ptr(n, 0), weights.n, static_cast<Eigen::Index>(cols));
    omat.noalias() = wmat * cmat;
    for (int oc = 0; oc < weights.n; ++oc) omat.row(oc).array() += bias[oc];
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out, int stride,
                            int padding, bool need_input_grad) {
  check_conv_shapes(input, weights, stride, padding);
  const int k = weights.h;
  const int oh = conv_out_dim(input.h, k, stride, padding);
  const int ow = conv_out_dim(input.w, k, stride, padding);
  if (grad_out.n != input.n || grad_out.c != weights.n || grad_out.h != oh || grad_out.w != ow) {
    throw ShapeError("conv2d_backward: gradient shape mismatch");
  }
  Conv2dGrads g{need_input_grad ? Tensor(input.n, input.c, input.h, input.w) : Tensor{},
                Tensor(weights.n, weights.c, k, k), std::vector<double>(static_cast<std::size_t>(weights.n), 0.0)};
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  const std::size_t rows = static_cast<std::size_t>(input.c) * k * k;
  const ConstMatMap wmat(weights.data.data(), weights.n, static_cast<Eigen::Index>(rows));
  MatMap gwmat(g.weights.data.data(), weights.n, static_cast<Eigen::Index>(rows));
  std::vector<double> col;
  std::vector<double> dcol(need_input_grad ? rows * cols : 0);
  for (int n = 0; n < input.n; ++n) {
    im2col(input, n, k, stride, padding, oh, ow, col);
    const ConstMatMap cmat(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const ConstMatMap gomat(grad_out.plane_ptr(n, 0), weights.n, static_cast<Eigen::Index>(cols));
    // Plain loops: Eigen's vectorised sum starts at the first aligned element,
    // so its rounding would depend on where the buffer happens to sit.
    for (int oc = 0; oc < weights.n; ++oc) {
      const double* row = grad_out.plane_ptr(n, oc);
      for (std::size_t i = 0; i < cols; ++i) g.bias[oc] += row[i];
    }
    gwmat.noalias() += gomat * cmat.transpose();
    if (need_input_grad) {
      MatMap dmat(dcol.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      dmat.noalias() = wmat.transpose() * gomat;
      col2im(dcol, k, stride, padding, oh, ow, g.input, n);
    }
  }
  return g;
}

Tensor batchnorm_forward(const Tensor& input, BatchNormState& state, Mode mode, BatchNormCache& cache,
                         double eps, double momentum) {
  const auto channels = static_cast<std::size_t>(input.c);
  if (state.gamma.size() != channels || state.beta.size() != channels || state.running_mean.size() != channels ||
      state.running_var.size() != channels) {
    throw ShapeError("batchnorm: parameter size does not match channel count");
  }
  const std::size_t per_channel = static_cast<std::size_t>(input.n) * input.plane();
  if (mode == Mode::Train && per_channel < 2) {
    throw ValidationError("batchnorm: train mode needs at least 2 values per channel");
  }
  Tensor out(input.n, input.c, input.h, input.w);
  cache.normalized = Tensor(input.n, input.c, input.h, input.w);
  cache.inv_std.assign(channels, 0.0);
  cache.mode = mode;
  const double count = static_cast<double>(per_channel);
  for (int c = 0; c < input.c; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == Mode::Train) {
      for (int n = 0; n < input.n; ++n) {
        const double* p = input.plane_ptr(n, c);
        for (std::size_t i = 0; i < input.plane(); ++i) mean += p[i];
      }
      mean /= count;
      for (int n = 0; n < input.n; ++n) {
        const double* p = input.plane_ptr(n, c);
        for (std::size_t i = 0; i < input.plane(); ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      const double unbiased = var / (count - 1.0);
      var /= count;
      state.running_mean[c] = (1.0 - momentum) * state.running_mean[c] + momentum * mean;
      state.running_var[c] = (1.0 - momentum) * state.running_var[c] + momentum * unbiased;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + eps);
    cache.inv_std[c] = inv_std;
    for (int n = 0; n < input.n; ++n) {
      const double* p = input.plane_ptr(n, c);
      double* xh = cache.normalized.plane_ptr(n, c);
      double* o = out.plane_ptr(n, c);
      for (std::size_t i = 0; i < input.plane(); ++i) {
        xh[i] = (p[i] - mean) * inv_std;
        o[i] = state.gamma[c] * xh[i] + state.beta[c];
      }
    }
  }
  return out;
}

BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormState& state,
                                  const BatchNormCache& cache) {
  const Tensor& xh = cache.normalized;
  if (!grad_out.same_shape(xh)) throw ShapeError("batchnorm_backward: gradient shape mismatch");
  BatchNormGrads g{Tensor(xh.n, xh.c, xh.h, xh.w), std::vector<double>(static_cast<std::size_t>(xh.c), 0.0),
                   std::vector<double>(static_cast<std::size_t>(xh.c), 0.0)};
  const double count = static_cast<double>(xh.n) * static_cast<double>(xh.plane());
  for (int c = 0; c < xh.c; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    for (int n = 0; n < xh.n; ++n) {
      const double* dy = grad_out.plane_ptr(n, c);
      const double* x = xh.plane_ptr(n, c);
      for (std::size_t i = 0; i < xh.plane(); ++i) {
        sum_dy += dy[i];
        sum_dy_xh += dy[i] * x[i];
      }
    }
    g.beta[c] = sum_dy;
    g.gamma[c] = sum_dy_xh;
    const double scale = state.gamma[c] * cache.inv_std[c];
    for (int n = 0; n < xh.n; ++n) {
      const double* dy = grad_out.plane_ptr(n, c);
      const double* x = xh.plane_ptr(n, c);
      double* dx = g.input.plane_ptr(n, c);
      if (cache.mode == Mode::Train) {
        for (std::size_t i = 0; i < xh.plane(); ++i) {
          dx[i] = scale * (dy[i] - sum_dy / count - x[i] * sum_dy_xh / count);
        }
      } else {
        for (std::size_t i = 0; i < xh.plane(); ++i) dx[i] = scale * dy[i];
      }
    }
  }
  return g;
}

Tensor maxpool2x2_forward(const Tensor& input, MaxPoolCache& cache) {
  const int oh = (input.h + 1) / 2;
  const int ow = (input.w + 1) / 2;
  Tensor out(input.n, input.c, oh, ow);
  cache.argmax.assign(out.size(), 0);
  cache.in_h = input.h;
  cache.in_w = input.w;
  std::size_t o = 0;
  for (int n = 0; n < input.n; ++n) {
    for (int c = 0; c < input.c; ++c) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = input.index(n, c, 2 * oy, 2 * ox);
          for (int dy = 0; dy < 2; ++dy) {
            const int y = 2 * oy + dy;
            if (y >= input.h) continue;
            for (int dx = 0; dx < 2; ++dx) {
              const int x = 2 * ox + dx;
              if (x >= input.w) continue;
              const std::size_t idx = input.index(n, c, y, x);
              if (input.data[idx] > best) {
                best = input.data[idx];
                best_idx = idx;
              }
            }
          }
          out.data[o] = best;
          cache.argmax[o] = static_cast<std::uint32_t>(best_idx);
        }
      }
    }
  }
  return out;
}

Tensor maxpool2x2_backward(const Tensor& grad_out, const MaxPoolCache& cache) {
  if (cache.argmax.size() != grad_out.size()) throw ShapeError("maxpool_backward: cache mismatch");
  Tensor g(grad_out.n, grad_out.c, cache.in_h, cache.in_w);
  for (std::size_t o = 0; o < grad_out.size(); ++o) g.data[cache.argmax[o]] += grad_out.data[o];
  return g;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out = input;
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& output) {
  if (!grad_out.same_shape(output)) throw ShapeError("relu_backward: shape mismatch");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(output.data[i] > 0.0)) g.data[i] = 0.0;
  }
  return g;
}

Tensor dropout_forward(const Tensor& input, double p, Mode mode, std::mt19937_64& rng, std::vector<double>& mask) {
  if (!(p >= 0.0 && p < 1.0)) throw ValidationError("dropout probability must be in [0, 1)");
  mask.assign(input.size(), 1.0);
  if (mode == Mode::Eval || p == 0.0) return input;
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor out = input;
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = uniform01(rng) < p ? 0.0 : keep_scale;
    out.data[i] *= mask[i];
  }
  return out;
}

Tensor dropout_backward(const Tensor& grad_out, const std::vector<double>& mask) {
  if (mask.size() != grad_out.size()) throw ShapeError("dropout_backward: mask mismatch");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= mask[i];
  return g;
}

Tensor linear_forward(const Tensor& input, std::span<const double> weights, std::span<const double> bias,
                      int out_features) {
  const std::size_t in_features = input.sample_size();
  if (weights.size() != in_features * static_cast<std::size_t>(out_features) ||
      bias.size() != static_cast<std::size_t>(out_features)) {
    throw ShapeError("linear: weight shape does not match input features " + std::to_string(in_features));
  }
  Tensor out(input.n, out_features, 1, 1);
  const ConstMatMap x(input.data.data(), input.n, static_cast<Eigen::Index>(in_features));
  const ConstMatMap w(weights.data(), out_features, static_cast<Eigen::Index>(in_features));
  MatMap y(out.data.data(), input.n, out_features);
  y.noalias() = x * w.transpose();
  for (int n = 0; n < input.n; ++n) {
    for (int o = 0; o < out_features; ++o) y(n, o) += bias[o];
  }
  return out;
}

LinearGrads linear_backward(const Tensor& input, std::span<const double> weights, const Tensor& grad_out) {
  const std::size_t in_features = input.sample_size();
  const auto out_features = static_cast<std::size_t>(grad_out.c);
  if (weights.size() != in_features * out_features || grad_out.n != input.n) {
    throw ShapeError("linear_backward: shape mismatch");
  }
  LinearGrads g{Tensor(input.n, input.c, input.h, input.w), std::vector<double>(weights.size(), 0.0),
                std::vector<double>(out_features, 0.0)};
  const auto in_dim = static_cast<Eigen::Index>(in_features);
  const auto out_dim = static_cast<Eigen::Index>(out_features);
  const ConstMatMap x(input.data.data(), input.n, in_dim);
  const ConstMatMap w(weights.data(), out_dim, in_dim);
  const ConstMatMap gy(grad_out.data.data(), grad_out.n, out_dim);
  MatMap(g.weights.data(), out_dim, in_dim).noalias() = gy.transpose() * x;
  MatMap(g.input.data.data(), input.n, in_dim).noalias() = gy * w;
  for (int n = 0; n < grad_out.n; ++n) {
    for (std::size_t o = 0; o < out_features; ++o) g.bias[o] += gy(n, static_cast<Eigen::Index>(o));
  }
  return g;
}

Tensor softmax(const Tensor& logits) {
  Tensor out(logits.n, logits.c, 1, 1);
  const auto k = static_cast<std::size_t>(logits.c);
  for (int n = 0; n < logits.n; ++n) {
    const double* z = logits.data.data() + n * k;
    double* p = out.data.data() + n * k;
    const double zmax = *std::max_element(z, z + k);
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      p[i] = std::exp(z[i] - zmax);
      sum += p[i];
    }
    for (std::size_t i = 0; i < k; ++i) p[i] /= sum;
  }
  return out;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& grad_probs) {
  Tensor g(probs.n, probs.c, 1, 1);
  const auto k = static_cast<std::size_t>(probs.c);
  for (int n = 0; n < probs.n; ++n) {
    const double* p = probs.data.data() + n * k;
    const double* gp = grad_probs.data.data() + n * k;
    double dot = 0.0;
    for (std::size_t i = 0; i < k; ++i) dot += p[i] * gp[i];
    for (std::size_t i = 0; i < k; ++i) g.data[n * k + i] = p[i] * (gp[i] - dot);
  }
  return g;
}

double cross_entropy(const Tensor& probs, std::span<const int> labels) {
  if (labels.size() != static_cast<std::size_t>(probs.n)) throw ShapeError("cross_entropy: label count mismatch");
  double loss = 0.0;
  for (int n = 0; n < probs.n; ++n) {
    const int y = labels[n];
    if (y < 0 || y >= probs.c) throw ValidationError("cross_entropy: label out of range");
    loss -= std::log(std::max(probs.data[static_cast<std::size_t>(n) * probs.c + y], kLogClamp));
  }
  return loss / probs.n;
}

Tensor cross_entropy_backward(const Tensor& probs, std::span<const int> labels) {
  Tensor g(probs.n, probs.c, 1, 1);
  for (int n = 0; n < probs.n; ++n) {
    const std::size_t idx = static_cast<std::size_t>(n) * probs.c + labels[n];
    const double p = probs.data[idx];
    if (p > kLogClamp) g.data[idx] = -1.0 / (p * probs.n);
  }
  return g;
}

}  // namespace pfoa::nn
