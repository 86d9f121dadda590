#include "pfoa/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pfoa/error.hpp"
#include "pfoa/rng.hpp"

namespace pfoa::eval {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("labels must be 0 or 1");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw ValidationError("score is NaN");
  }
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const int> labels) {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  return {pos, labels.size() - pos};
}

// Indices sorted by descending score; ties keep input order.
std::vector<std::size_t> order_descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

// 1-based midranks in ascending order.
std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = mid;
    i = j + 1;
  }
  return r;
}

// Per-positive and per-negative placement values of one score vector.
struct Placements {
  std::vector<double> v10;
  std::vector<double> v01;
  double auc = 0.0;
};

Placements placements(std::span<const double> scores, std::span<const int> labels) {
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? x : y).push_back(scores[i]);
  const double m = static_cast<double>(x.size());
  const double n = static_cast<double>(y.size());
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  std::vector<double> all(x);
  all.insert(all.end(), y.begin(), y.end());
  const auto rall = midranks(all);
  Placements p;
  p.v10.resize(x.size());
  p.v01.resize(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) p.v10[i] = (rall[i] - rx[i]) / n;
  for (std::size_t j = 0; j < y.size(); ++j) p.v01[j] = 1.0 - (rall[x.size() + j] - ry[j]) / m;
  p.auc = std::accumulate(p.v10.begin(), p.v10.end(), 0.0) / m;
  return p;
}

// Sample covariance (denominator count - 1); zero for fewer than 2 values.
double covariance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2) return 0.0;
  const double na = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / na;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / na;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / (na - 1.0);
}

}  // namespace

RocResult roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto [npos, nneg] = class_counts(labels);
  if (npos == 0 || nneg == 0) throw ValidationError("ROC AUC needs both classes");

  const auto ranks = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i]) rank_sum += ranks[i];
  }
  const double p = static_cast<double>(npos);
  const double n = static_cast<double>(nneg);
  RocResult r;
  r.auc = (rank_sum - p * (p + 1.0) / 2.0) / (p * n);

  const auto idx = order_descending(scores);
  r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == s) (labels[idx[i++]] ? tp : fp) += 1;
    r.points.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p, s});
  }
  return r;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  return roc_curve(scores, labels).auc;
}

PrResult pr_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto [npos, nneg] = class_counts(labels);
  if (npos == 0) throw ValidationError("average precision needs at least one positive");
  const double p = static_cast<double>(npos);

  const auto idx = order_descending(scores);
  PrResult r;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    const std::size_t tp_before = tp;
    while (i < idx.size() && scores[idx[i]] == s) (labels[idx[i++]] ? tp : fp) += 1;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.ap += static_cast<double>(tp - tp_before) / p * precision;
    r.points.push_back({static_cast<double>(tp) / p, precision, s});
  }
  return r;
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  return pr_curve(scores, labels).ap;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("percentile of an empty sample");
  if (!(p >= 0.0 && p <= 100.0)) throw ValidationError("percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<std::size_t> stratified_resample(std::span<const int> labels, std::mt19937_64& rng) {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < pos.size(); ++i) out.push_back(pos[uniform_index(rng, pos.size())]);
  for (std::size_t i = 0; i < neg.size(); ++i) out.push_back(neg[uniform_index(rng, neg.size())]);
  return out;
}

std::vector<double> bootstrap_replicates(std::span<const double> scores, std::span<const int> labels,
                                         const Metric& metric, int n, std::uint64_t seed) {
  check_inputs(scores, labels);
  if (n < 1) throw ValidationError("bootstrap needs at least one iteration");
  std::vector<double> out(static_cast<std::size_t>(n));
  std::vector<double> s(scores.size());
  std::vector<int> l(labels.size());
  for (int i = 0; i < n; ++i) {
    auto rng = make_stream(seed, 0xb007, static_cast<std::uint64_t>(i));
    const auto idx = stratified_resample(labels, rng);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      s[j] = scores[idx[j]];
      l[j] = labels[idx[j]];
    }
    out[static_cast<std::size_t>(i)] = metric(s, l);
  }
  return out;
}

Interval percentile_interval(std::span<const double> replicates, double coverage) {
  if (!(coverage > 0.0 && coverage < 1.0)) throw ValidationError("coverage must lie in (0, 1)");
  std::vector<double> v(replicates.begin(), replicates.end());
  return {percentile(v, 50.0 * (1.0 - coverage)), percentile(v, 50.0 * (1.0 + coverage))};
}

Interval bootstrap_ci(std::span<const double> scores, std::span<const int> labels, const Metric& metric, int n,
                      std::uint64_t seed, double coverage) {
  return percentile_interval(bootstrap_replicates(scores, labels, metric, n, seed), coverage);
}

DelongResult delong_test(std::span<const double> scores_a, std::span<const double> scores_b,
                         std::span<const int> labels) {
  check_inputs(scores_a, labels);
  check_inputs(scores_b, labels);
  const auto [npos, nneg] = class_counts(labels);
  if (npos == 0 || nneg == 0) throw ValidationError("DeLong test needs both classes");

  const auto a = placements(scores_a, labels);
  const auto b = placements(scores_b, labels);
  const double m = static_cast<double>(npos);
  const double n = static_cast<double>(nneg);
  const double s10 = covariance(a.v10, a.v10) + covariance(b.v10, b.v10) - 2.0 * covariance(a.v10, b.v10);
  const double s01 = covariance(a.v01, a.v01) + covariance(b.v01, b.v01) - 2.0 * covariance(a.v01, b.v01);

  DelongResult r;
  r.auc_a = a.auc;
  r.auc_b = b.auc;
  r.variance = s10 / m + s01 / n;
  const double diff = a.auc - b.auc;
  if (!(r.variance > 0.0)) {
    r.variance = 0.0;
    if (diff == 0.0) {
      r.z = 0.0;
      r.p = 1.0;
    } else {
      r.degenerate = true;
      r.z = std::copysign(std::numeric_limits<double>::infinity(), diff);
      r.p = 0.0;
    }
    return r;
  }
  r.z = diff / std::sqrt(r.variance);
  r.p = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  return r;
}

}  // namespace pfoa::eval
