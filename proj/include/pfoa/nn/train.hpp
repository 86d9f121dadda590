#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pfoa/nn/cnn.hpp"

namespace pfoa::nn {

struct TrainConfig {
  int batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double lr0 = 0.001;
  int lr_step = 8;
  double lr_factor = 0.1;
  int epochs = 20;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

// lr0 * lr_factor^floor(epoch / lr_step).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

// v <- momentum * v + g;  w <- w - lr * v.  No weight decay.
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity, double lr,
              double momentum = 0.9);

// One labelled example: h * w pixels in [0, 1], row-major.
struct Sample {
  std::vector<double> pixels;
  int label = 0;
};

struct TrainResult {
  CnnModel model;
  std::vector<double> epoch_loss;  // mean mini-batch loss per epoch
  std::vector<double> epoch_lr;
};

// Mini-batch SGD from a He-uniform initialization. Each epoch reshuffles the
// data; a trailing batch of one sample is skipped since batch norm needs two.
// Bit-deterministic given cfg.seed.
TrainResult train(std::span<const Sample> dataset, const Architecture& arch, const TrainConfig& cfg);

// Packs dataset[order[i]] into row i of a batch tensor.
Tensor make_batch(std::span<const Sample> dataset, std::span<const std::size_t> order, const Architecture& arch);

}  // namespace pfoa::nn
