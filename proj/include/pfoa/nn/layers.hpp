#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pfoa/nn/tensor.hpp"

namespace pfoa::nn {

enum class Mode { Train, Eval };

// ---- convolution ----------------------------------------------------------
// Cross-correlation with zero padding. weights: (out_c, in_c, k, k).

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, std::span<const double> bias,
                      int stride = 1, int padding = 1);

struct Conv2dGrads {
  Tensor input;
  Tensor weights;
  std::vector<double> bias;
};

// With need_input_grad = false the input gradient is left empty (first layer).
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& grad_out,
                            int stride = 1, int padding = 1, bool need_input_grad = true);

// ---- batch normalization --------------------------------------------------

struct BatchNormState {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

struct BatchNormCache {
  Tensor normalized;  // x-hat
  std::vector<double> inv_std;
  Mode mode = Mode::Eval;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Train mode normalizes with batch statistics (biased variance) and folds the
// unbiased batch variance into the running estimate with momentum 0.1. Eval
// mode uses the running statistics. A train-mode batch must hold >= 2 values
// per channel.
Tensor batchnorm_forward(const Tensor& input, BatchNormState& state, Mode mode, BatchNormCache& cache,
                         double eps = kBatchNormEps, double momentum = kBatchNormMomentum);

struct BatchNormGrads {
  Tensor input;
  std::vector<double> gamma;
  std::vector<double> beta;
};

BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormState& state,
                                  const BatchNormCache& cache);

// ---- pooling, activations -------------------------------------------------

struct MaxPoolCache {
  std::vector<std::uint32_t> argmax;  // flat input index per output element
  int in_h = 0;
  int in_w = 0;
};

// Non-overlapping 2x2 max. Odd sizes behave as if padded right/bottom with
// -inf. Ties go to the first element in row-major window order.
Tensor maxpool2x2_forward(const Tensor& input, MaxPoolCache& cache);
Tensor maxpool2x2_backward(const Tensor& grad_out, const MaxPoolCache& cache);

Tensor relu_forward(const Tensor& input);
// Passes gradient where the forward output was positive.
Tensor relu_backward(const Tensor& grad_out, const Tensor& output);

// Inverted dropout: kept units are scaled by 1 / (1 - p). Identity in eval
// mode. mask receives the per-element multiplier.
Tensor dropout_forward(const Tensor& input, double p, Mode mode, std::mt19937_64& rng,
                       std::vector<double>& mask);
Tensor dropout_backward(const Tensor& grad_out, const std::vector<double>& mask);

// ---- dense ----------------------------------------------------------------
// weights: (out, in) row-major. Input is flattened per sample.

Tensor linear_forward(const Tensor& input, std::span<const double> weights, std::span<const double> bias,
                      int out_features);

struct LinearGrads {
  Tensor input;
  std::vector<double> weights;
  std::vector<double> bias;
};

LinearGrads linear_backward(const Tensor& input, std::span<const double> weights, const Tensor& grad_out);

// ---- output ---------------------------------------------------------------

// Row-wise softmax over the c dimension of an (n, c, 1, 1) tensor.
Tensor softmax(const Tensor& logits);
// Vector-Jacobian product of softmax.
Tensor softmax_backward(const Tensor& probs, const Tensor& grad_probs);

inline constexpr double kLogClamp = 1e-12;

// Mean negative log-likelihood with log(max(p, 1e-12)).
double cross_entropy(const Tensor& probs, std::span<const int> labels);
Tensor cross_entropy_backward(const Tensor& probs, std::span<const int> labels);

}  // namespace pfoa::nn
