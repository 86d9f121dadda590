#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace pfoa::eval {

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  double threshold = 0.0;
};

struct RocResult {
  double auc = 0.0;
  std::vector<CurvePoint> points;  // (FPR, TPR), starting at (0, 0)
};

// Mann-Whitney AUC with half credit for ties, computed from midranks.
// Throws ValidationError unless both classes are present.
RocResult roc_curve(std::span<const double> scores, std::span<const int> labels);
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct PrResult {
  double ap = 0.0;
  std::vector<CurvePoint> points;  // (recall, precision), one per threshold block
};

// Non-interpolated AP: sum over descending thresholds of
// (R_n - R_{n-1}) * P_n, tied scores forming one threshold. Throws
// ValidationError when there are no positives.
PrResult pr_curve(std::span<const double> scores, std::span<const int> labels);
double average_precision(std::span<const double> scores, std::span<const int> labels);

// Inclusive linear-interpolation percentile of an unsorted sample.
double percentile(std::vector<double> values, double p);

// Indices of a stratified resample: positives and negatives are each drawn
// with replacement, preserving both class counts.
std::vector<std::size_t> stratified_resample(std::span<const int> labels, std::mt19937_64& rng);

using Metric = std::function<double(std::span<const double>, std::span<const int>)>;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Metric values over n stratified resamples; replicate i draws from its own
// stream of (seed, i).
std::vector<double> bootstrap_replicates(std::span<const double> scores, std::span<const int> labels,
                                         const Metric& metric, int n, std::uint64_t seed);

// Percentile interval at the given coverage from bootstrap_replicates.
Interval bootstrap_ci(std::span<const double> scores, std::span<const int> labels, const Metric& metric,
                      int n = 2000, std::uint64_t seed = 0, double coverage = 0.95);
Interval percentile_interval(std::span<const double> replicates, double coverage);

struct DelongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double variance = 0.0;  // of auc_a - auc_b
  double z = 0.0;
  double p = 1.0;
  bool degenerate = false;  // zero variance but nonzero difference; z and p are not meaningful
};

// Paired DeLong test on the structural components of both AUCs.
DelongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels);

}  // namespace pfoa::eval
