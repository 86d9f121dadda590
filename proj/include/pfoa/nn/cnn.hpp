#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pfoa/nn/layers.hpp"
#include "pfoa/nn/tensor.hpp"

namespace pfoa::nn {

// Shape of the classifier. Each block is conv(k x k, stride 1, pad 1) ->
// batch norm -> 2x2 max pool -> ReLU; then FC -> ReLU -> dropout -> FC ->
// softmax. Widths and the hidden size are not fixed by the method and are
// kept configurable.
struct Architecture {
  int input_h = 128;
  int input_w = 64;
  int input_c = 1;
  std::vector<int> widths{32, 64, 128};
  int kernel = 3;
  int fc_hidden = 256;
  int classes = 2;
  double dropout = 0.5;

  // Spatial size after all pooling stages.
  int feature_h() const;
  int feature_w() const;
  int flat_features() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

void validate(const Architecture& arch);

struct ConvBlock {
  Tensor weights;  // (out, in, k, k)
  std::vector<double> bias;
  BatchNormState bn;
};

struct Dense {
  int in = 0;
  int out = 0;
  std::vector<double> weights;  // (out, in) row-major
  std::vector<double> bias;
};

struct CnnModel {
  Architecture arch;
  std::vector<ConvBlock> blocks;
  Dense fc1;
  Dense fc2;
  bool trained = false;

  // Trainable tensors in a fixed order: per block {weights, bias, gamma,
  // beta}, then fc1 {weights, bias}, fc2 {weights, bias}.
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::size_t parameter_count() const;
};

// He-uniform weights (bound sqrt(6 / fan_in)), zero biases, gamma 1, beta 0,
// running mean 0, running variance 1.
CnnModel init_model(const Architecture& arch, std::uint64_t seed);

// Throws ValidationError when shapes disagree with the descriptor or a
// running variance is negative.
void validate(const CnnModel& model);

// Gradients laid out like CnnModel::parameters().
using ParamGrads = std::vector<std::vector<double>>;

ParamGrads zero_grads(const CnnModel& model);

// Everything backward() needs from one forward pass.
struct ForwardTape {
  Mode mode = Mode::Eval;
  std::vector<Tensor> block_inputs;
  std::vector<BatchNormCache> bn;
  std::vector<Tensor> bn_outputs;
  std::vector<MaxPoolCache> pool;
  std::vector<Tensor> block_outputs;  // after ReLU
  Tensor fc1_out;                     // after ReLU
  std::vector<double> dropout_mask;
  Tensor dropped;
  Tensor logits;
  Tensor probs;
};

// Batch of single-channel images, pixel values already scaled to [0, 1].
// Train mode updates batch-norm running statistics and draws dropout masks
// from rng; eval mode touches neither.
Tensor forward(CnnModel& model, const Tensor& batch, Mode mode, std::mt19937_64& rng, ForwardTape* tape = nullptr);

// Eval-mode class probabilities. Pure.
Tensor forward_eval(const CnnModel& model, const Tensor& batch);

// Back-propagates dL/dlogits through the tape.
ParamGrads backward(const CnnModel& model, const ForwardTape& tape, const Tensor& grad_logits);

// dL/dlogits of mean softmax cross-entropy, (p - onehot) / n.
Tensor softmax_cross_entropy_grad(const Tensor& probs, std::span<const int> labels);

// Class-1 probability of one image in eval mode. Throws ValidationError for
// an untrained or inconsistent model.
double predict_proba(const CnnModel& model, std::span<const double> image);
std::vector<double> predict_proba(const CnnModel& model, const Tensor& batch);

// JSON container: {"format": "pfoa-cnn", "version": 1, "architecture",
// "blocks", "fc1", "fc2"}. load_model refuses any other format or version.
inline constexpr int kModelFormatVersion = 1;
std::string serialize_model(const CnnModel& model);
CnnModel deserialize_model(const std::string& text);
void save_model(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_model(const std::filesystem::path& path);

}  // namespace pfoa::nn
