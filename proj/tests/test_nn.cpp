#include <gtest/gtest.h>

#include <filesystem>
#include <regex>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "pfoa/error.hpp"
#include "pfoa/eval/metrics.hpp"
#include "pfoa/nn/train.hpp"

using namespace pfoa::nn;

TEST(Gradients, EveryLayerMatchesCentralDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& c : gradcheck::layer_checks(seed)) {
      EXPECT_LT(c.rel_error, 1e-4) << c.name << " seed " << seed;
    }
  }
}

TEST(Gradients, FullNetworkMatchesCentralDifferences) {
  for (const auto& c : gradcheck::network_checks(5)) EXPECT_LT(c.rel_error, 1e-3) << c.name;
}

TEST(Layers, ConvMatchesDirectLoop) {
  auto rng = pfoa::make_stream(3, 0);
  Tensor x(1, 2, 4, 5);
  x.data = oracle::random_vector(x.size(), rng);
  Tensor w(2, 2, 3, 3);
  w.data = oracle::random_vector(w.size(), rng);
  const std::vector<double> b{0.5, -1.0};
  const auto y = conv2d_forward(x, w, b, 1, 1);
  ASSERT_EQ(y.h, 4);
  ASSERT_EQ(y.w, 5);
  for (int o = 0; o < 2; ++o) {
    for (int oy = 0; oy < 4; ++oy) {
      for (int ox = 0; ox < 5; ++ox) {
        double s = b[o];
        for (int c = 0; c < 2; ++c) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy + ky - 1;
              const int ix = ox + kx - 1;
              if (iy >= 0 && iy < 4 && ix >= 0 && ix < 5) s += w(o, c, ky, kx) * x(0, c, iy, ix);
            }
          }
        }
        EXPECT_NEAR(y(0, o, oy, ox), s, 1e-12);
      }
    }
  }
}

TEST(Layers, MaxPoolOddSizeAndTies) {
  Tensor x(1, 1, 3, 3);
  x.data = {1, 1, 5, 1, 1, 2, 7, 3, 4};
  MaxPoolCache cache;
  const auto y = maxpool2x2_forward(x, cache);
  ASSERT_EQ(y.h, 2);
  ASSERT_EQ(y.w, 2);
  EXPECT_EQ(y.data, (std::vector<double>{1, 5, 7, 4}));
  EXPECT_EQ(cache.argmax[0], 0u);  // four-way tie goes to the first element
}

TEST(Layers, PoolingCommutesWithRelu) {
  auto rng = pfoa::make_stream(8, 0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x(2, 3, 5 + trial % 2, 4 + trial % 3);
    x.data = oracle::random_vector(x.size(), rng);
    MaxPoolCache a;
    MaxPoolCache b;
    EXPECT_EQ(relu_forward(maxpool2x2_forward(x, a)), maxpool2x2_forward(relu_forward(x), b));
  }
}

TEST(Layers, DropoutKeepsExpectationAndIsIdentityInEval) {
  Tensor x(1, 1, 1, 20000, 1.0);
  std::vector<double> mask;
  auto rng = pfoa::make_stream(9, 0);
  const auto y = dropout_forward(x, 0.5, Mode::Train, rng, mask);
  double mean = 0.0;
  for (double v : y.data) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    mean += v;
  }
  mean /= static_cast<double>(y.size());
  EXPECT_NEAR(mean, 1.0, 4.0 * std::sqrt(1.0 / 20000.0));
  EXPECT_EQ(dropout_forward(x, 0.5, Mode::Eval, rng, mask), x);
}

TEST(Layers, BatchNormRunningVarianceUsesUnbiasedEstimate) {
  Tensor x(4, 1, 1, 1);
  x.data = {1, 2, 3, 6};
  BatchNormState st{{1.0}, {0.0}, {0.0}, {1.0}};
  BatchNormCache cache;
  batchnorm_forward(x, st, Mode::Train, cache);
  // mean 3, unbiased variance 14/3.
  EXPECT_NEAR(st.running_mean[0], 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(st.running_var[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
  Tensor one(1, 1, 1, 1);
  EXPECT_THROW(batchnorm_forward(one, st, Mode::Train, cache), pfoa::Error);
}

TEST(Schedule, StepDecay) {
  TrainConfig cfg;
  EXPECT_EQ(lr_at_epoch(cfg, 0), 1e-3);
  EXPECT_EQ(lr_at_epoch(cfg, 7), 1e-3);
  EXPECT_EQ(lr_at_epoch(cfg, 8), 1e-4);
  EXPECT_EQ(lr_at_epoch(cfg, 16), 1e-5);
  EXPECT_EQ(lr_at_epoch(cfg, 19), 1e-5);
}

TEST(Sgd, MomentumScript) {
  std::vector<double> w{1.0};
  std::vector<double> v{0.0};
  const double g[] = {0.5, 0.5, -1.0};
  // v1 = .5, w = .95; v2 = .95, w = .855; v3 = -.145, w = .8695.
  const double expect[] = {0.95, 0.855, 0.8695};
  for (int i = 0; i < 3; ++i) {
    sgd_step(w, std::span(&g[i], 1), v, 0.1, 0.9);
    EXPECT_NEAR(w[0], expect[i], 1e-15);
  }
}

namespace {

Architecture tiny_arch() {
  Architecture a;
  a.input_h = 8;
  a.input_w = 8;
  a.widths = {4};
  a.fc_hidden = 8;
  return a;
}

// Bright square in the top-left corner for class 1, bottom-right for class 0.
std::vector<Sample> corner_dataset(int n, std::uint64_t seed) {
  auto rng = pfoa::make_stream(seed, 0);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.label = i % 2;
    s.pixels.assign(64, 0.0);
    for (auto& p : s.pixels) p = 0.2 * pfoa::uniform01(rng);
    const int off = s.label ? 0 : 4;
    for (int y = off; y < off + 4; ++y) {
      for (int x = off; x < off + 4; ++x) s.pixels[static_cast<std::size_t>(y * 8 + x)] += 0.8;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST(Training, LearnsSeparableImagesDeterministically) {
  const auto data = corner_dataset(64, 1);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.lr0 = 0.05;
  cfg.epochs = 10;
  cfg.lr_step = 10;
  cfg.seed = 4;
  const auto a = train(data, tiny_arch(), cfg);
  // Odd-sized live allocations shift where the second run's buffers land.
  std::vector<std::vector<double>> shift;
  for (std::size_t n : {1, 3, 5, 7}) {
    shift.emplace_back(n, 0.0);
    const auto b = train(data, tiny_arch(), cfg);
    EXPECT_EQ(serialize_model(a.model), serialize_model(b.model)) << "after shifting by " << n;
  }
  EXPECT_LT(a.epoch_loss.back(), a.epoch_loss.front());

  const auto test = corner_dataset(40, 2);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : test) {
    scores.push_back(predict_proba(a.model, s.pixels));
    labels.push_back(s.label);
  }
  EXPECT_GT(pfoa::eval::roc_auc(scores, labels), 0.95);
}

TEST(Training, EvalPredictionIsBatchIndependent) {
  const auto data = corner_dataset(6, 3);
  auto model = init_model(tiny_arch(), 2);
  model.trained = true;
  std::vector<std::size_t> order{0, 1, 2, 3, 4, 5};
  const auto probs = predict_proba(model, make_batch(data, order, model.arch));
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_DOUBLE_EQ(probs[i], predict_proba(model, data[i].pixels));
  }
}

TEST(Model, JsonRoundTripAndVersionCheck) {
  auto model = init_model(tiny_arch(), 7);
  model.trained = true;
  const auto text = serialize_model(model);
  const auto back = deserialize_model(text);
  EXPECT_EQ(serialize_model(back), text);
  const auto x = corner_dataset(1, 0)[0].pixels;
  EXPECT_EQ(predict_proba(model, x), predict_proba(back, x));

  const auto bad = std::regex_replace(text, std::regex(R"("version":\s*1)"), R"("version": 2)");
  ASSERT_NE(bad, text);
  EXPECT_THROW(deserialize_model(bad), pfoa::Error);
  EXPECT_THROW(deserialize_model("{\"format\":\"other\"}"), pfoa::Error);
}

TEST(Model, UntrainedModelIsRejected) {
  const auto model = init_model(tiny_arch(), 1);
  EXPECT_THROW(predict_proba(model, std::vector<double>(64, 0.0)), pfoa::ValidationError);
}

TEST(Model, InitializationBounds) {
  const auto model = init_model(tiny_arch(), 3);
  const double bound = std::sqrt(6.0 / 9.0);
  for (double w : model.blocks[0].weights.data) EXPECT_LE(std::abs(w), bound);
  for (double b : model.blocks[0].bias) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(model.blocks[0].bn.running_var, std::vector<double>(4, 1.0));
}
