#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace pfoa::gbm {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

// Dense row-major feature table; missing cells hold NaN.
struct FeatureMatrix {
  std::vector<std::string> names;
  std::size_t rows = 0;
  std::vector<double> values;

  std::size_t cols() const { return names.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols(), cols()}; }
  void push_row(std::span<const double> row);
};

// Leaves have feature == -1. Rows with x <= threshold go left; missing
// values take the default direction. cover is the number of training rows
// reaching the node.
struct Node {
  int feature = -1;
  double threshold = 0.0;
  bool default_left = true;
  int left = -1;
  int right = -1;
  double value = 0.0;
  double cover = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<Node> nodes;  // nodes[0] is the root

  // Index of the leaf reached by row.
  int leaf_index(std::span<const double> row) const;
};

enum class Growth { LeafWise, DepthWise };

struct GbmParams {
  int num_rounds = 100;
  double learning_rate = 0.05;
  int max_leaves = 8;
  int min_samples_leaf = 20;
  double feature_fraction = 1.0;
  double bagging_fraction = 1.0;
  double l2_leaf_regularization = 1.0;
  Growth growth = Growth::LeafWise;
  int max_depth = 0;  // 0 = unlimited
  std::uint64_t seed = 0;

  friend bool operator==(const GbmParams&, const GbmParams&) = default;
};

void validate(const GbmParams& p);

struct GbmModel {
  std::vector<std::string> features;
  double base_score = 0.0;  // log-odds
  double learning_rate = 0.1;
  std::vector<Tree> trees;
};

// Throws ValidationError on malformed trees (dangling children, missing
// children of internal nodes, non-finite leaf values, unknown features).
void validate(const GbmModel& model);

// Logistic-loss boosting. base_score = logit(prevalence); each round grows
// one tree on the gradients and hessians of the bagged rows with leaf values
// -G / (H + l2). A split is taken only with positive gain and at least
// min_samples_leaf rows on each side. Throws ValidationError when the
// labels hold a single class.
GbmModel fit_gbm(const FeatureMatrix& x, std::span<const int> labels, const GbmParams& params);

// base_score + learning_rate * sum of leaf values.
double raw_score(const GbmModel& model, std::span<const double> row);
double predict_proba_gbm(const GbmModel& model, std::span<const double> row);
std::vector<double> predict_proba_gbm(const GbmModel& model, const FeatureMatrix& x);

// Re-counts node covers by routing every row of x through each tree.
void recount_covers(GbmModel& model, const FeatureMatrix& x);

// JSON dump {"format": "pfoa-gbm", "version": 1, ...}.
inline constexpr int kGbmFormatVersion = 1;
std::string serialize_gbm(const GbmModel& model);
GbmModel deserialize_gbm(const std::string& text);
void save_gbm(const GbmModel& model, const std::filesystem::path& path);
GbmModel load_gbm(const std::filesystem::path& path);

}  // namespace pfoa::gbm
