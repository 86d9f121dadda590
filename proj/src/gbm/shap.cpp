#include "pfoa/gbm/shap.hpp"

#include <algorithm>
#include <cmath>

#include "pfoa/error.hpp"

namespace pfoa::gbm {

namespace {

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double weight = 0.0;
};

void extend_path(std::vector<PathElement>& path, int depth, double zero_fraction, double one_fraction,
                 int feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight += one_fraction * path[i].weight * (i + 1) / static_cast<double>(depth + 1);
    path[i].weight = zero_fraction * path[i].weight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(std::vector<PathElement>& path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].weight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next * (depth + 1) / ((i + 1) * one);
      next = tmp - path[i].weight * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].weight = path[i].weight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_sum(const std::vector<PathElement>& path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next = path[depth].weight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next * (depth + 1) / ((i + 1) * one);
      total += tmp;
      next = path[i].weight - tmp * zero * (depth - i) / static_cast<double>(depth + 1);
    } else if (zero != 0.0) {
      total += path[i].weight / zero / ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

void recurse(const Tree& tree, std::span<const double> row, std::vector<double>& phi, int node,
             std::vector<PathElement> path, int depth, double zero_fraction, double one_fraction, int feature,
             double scale) {
  extend_path(path, depth, zero_fraction, one_fraction, feature);
  const auto& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) {
    for (int i = 1; i <= depth; ++i) {
      const double w = unwound_sum(path, depth, i);
      const auto& e = path[i];
      phi[static_cast<std::size_t>(e.feature)] += w * (e.one_fraction - e.zero_fraction) * n.value * scale;
    }
    return;
  }
  const double v = row[static_cast<std::size_t>(n.feature)];
  const bool left = is_missing(v) ? n.default_left : v <= n.threshold;
  const int hot = left ? n.left : n.right;
  const int cold = left ? n.right : n.left;
  const double cover = n.cover;
  const double hot_zero = cover > 0.0 ? tree.nodes[static_cast<std::size_t>(hot)].cover / cover : 0.0;
  const double cold_zero = cover > 0.0 ? tree.nodes[static_cast<std::size_t>(cold)].cover / cover : 0.0;

  double incoming_zero = 1.0;
  double incoming_one = 1.0;
  int k = 0;
  for (; k <= depth; ++k) {
    if (path[k].feature == n.feature) break;
  }
  if (k <= depth) {
    incoming_zero = path[k].zero_fraction;
    incoming_one = path[k].one_fraction;
    unwind_path(path, depth, k);
    --depth;
  }
  recurse(tree, row, phi, hot, path, depth + 1, hot_zero * incoming_zero, incoming_one, n.feature, scale);
  recurse(tree, row, phi, cold, path, depth + 1, cold_zero * incoming_zero, 0.0, n.feature, scale);
}

double tree_expectation(const Tree& tree, int node) {
  const auto& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return n.value;
  if (!(n.cover > 0.0)) return 0.0;
  const auto& l = tree.nodes[static_cast<std::size_t>(n.left)];
  const auto& r = tree.nodes[static_cast<std::size_t>(n.right)];
  return (l.cover * tree_expectation(tree, n.left) + r.cover * tree_expectation(tree, n.right)) / n.cover;
}

int tree_depth(const Tree& tree, int node) {
  const auto& n = tree.nodes[static_cast<std::size_t>(node)];
  if (n.is_leaf()) return 0;
  return 1 + std::max(tree_depth(tree, n.left), tree_depth(tree, n.right));
}

}  // namespace

double expected_value(const GbmModel& model) {
  double sum = 0.0;
  for (const auto& t : model.trees) sum += tree_expectation(t, 0);
  return model.base_score + model.learning_rate * sum;
}

ShapValues treeshap(const GbmModel& model, std::span<const double> row) {
  if (row.size() != model.features.size()) throw ShapeError("row does not match the model schema");
  ShapValues out;
  out.phi.assign(model.features.size(), 0.0);
  out.base = expected_value(model);
  for (const auto& t : model.trees) {
    const int depth = tree_depth(t, 0);
    std::vector<PathElement> path(static_cast<std::size_t>(depth + 2));
    recurse(t, row, out.phi, 0, std::move(path), 0, 1.0, 1.0, -1, model.learning_rate);
  }
  return out;
}

std::vector<FeatureImportance> shap_importance(const GbmModel& model, const FeatureMatrix& x) {
  if (x.names != model.features) throw ShapeError("feature matrix schema does not match the model");
  std::vector<FeatureImportance> out;
  for (const auto& f : model.features) out.push_back({f, 0.0});
  if (x.rows == 0) return out;
  for (std::size_t r = 0; r < x.rows; ++r) {
    const auto s = treeshap(model, x.row(r));
    for (std::size_t j = 0; j < s.phi.size(); ++j) out[j].mean_abs_shap += std::abs(s.phi[j]);
  }
  for (auto& f : out) f.mean_abs_shap /= static_cast<double>(x.rows);
  std::stable_sort(out.begin(), out.end(),
                   [](const FeatureImportance& a, const FeatureImportance& b) { return a.mean_abs_shap > b.mean_abs_shap; });
  return out;
}

}  // namespace pfoa::gbm
