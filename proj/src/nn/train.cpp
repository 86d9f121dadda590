#include "pfoa/nn/train.hpp"

#include <cmath>
#include <numeric>

#include "pfoa/error.hpp"
#include "pfoa/rng.hpp"

namespace pfoa::nn {

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
  if (cfg.epochs < 0) throw ValidationError("train config: epochs must be >= 0");
  if (cfg.lr_step < 1) throw ValidationError("train config: lr_step must be >= 1");
  if (!(cfg.lr0 > 0.0)) throw ValidationError("train config: lr0 must be > 0");
  if (cfg.weight_decay != 0.0) throw ValidationError("train config: weight decay is not supported");
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw ValidationError("lr_at_epoch: epoch must be >= 0");
  // Divide by the reciprocal power so 0.1 steps land exactly on 1e-4, 1e-5.
  return cfg.lr0 / std::pow(1.0 / cfg.lr_factor, epoch / cfg.lr_step);
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity, double lr,
              double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

Tensor make_batch(std::span<const Sample> dataset, std::span<const std::size_t> order, const Architecture& arch) {
  Tensor batch(static_cast<int>(order.size()), arch.input_c, arch.input_h, arch.input_w);
  const std::size_t per = batch.sample_size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& px = dataset[order[i]].pixels;
    if (px.size() != per) throw ShapeError("train: sample does not match the architecture input size");
    std::copy(px.begin(), px.end(), batch.data.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return batch;
}

TrainResult train(std::span<const Sample> dataset, const Architecture& arch, const TrainConfig& cfg) {
  validate(cfg);
  if (dataset.empty()) throw ValidationError("train: empty dataset");
  for (const auto& s : dataset) {
    if (s.label < 0 || s.label >= arch.classes) throw ValidationError("train: label out of range");
  }
  TrainResult res{init_model(arch, cfg.seed), {}, {}};
  auto shuffle_rng = make_stream(cfg.seed, 0x21);
  auto dropout_rng = make_stream(cfg.seed, 0x22);
  auto params = res.model.parameters();
  std::vector<std::vector<double>> velocity;
  for (auto p : params) velocity.emplace_back(p.size(), 0.0);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  ForwardTape tape;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    shuffle_portable(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      if (count < 2) continue;
      const std::span<const std::size_t> idx(order.data() + start, count);
      const Tensor batch = make_batch(dataset, idx, arch);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) labels[i] = dataset[idx[i]].label;

      const Tensor probs = forward(res.model, batch, Mode::Train, dropout_rng, &tape);
      loss_sum += cross_entropy(probs, labels);
      ++batches;
      const auto grads = backward(res.model, tape, softmax_cross_entropy_grad(probs, labels));
      for (std::size_t p = 0; p < params.size(); ++p) {
        sgd_step(params[p], grads[p], velocity[p], lr, cfg.momentum);
      }
    }
    res.epoch_loss.push_back(batches > 0 ? loss_sum / batches : 0.0);
    res.epoch_lr.push_back(lr);
  }
  res.model.trained = true;
  return res;
}

}  // namespace pfoa::nn
