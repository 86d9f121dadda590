#pragma once

#include <span>
#include <string>
#include <vector>

#include "pfoa/gbm/gbm.hpp"

namespace pfoa::gbm {

struct ShapValues {
  std::vector<double> phi;  // one per feature, on the log-odds scale
  double base = 0.0;        // base_score + expected tree output under the node covers
};

// Exact path-dependent TreeSHAP. Unvisited branches are weighted by node
// cover, so the background is whatever data the covers were counted on
// (the training rows after fit_gbm). Missing values follow the default
// direction. sum(phi) + base equals raw_score(model, row).
ShapValues treeshap(const GbmModel& model, std::span<const double> row);

// Expected raw score when no feature is known.
double expected_value(const GbmModel& model);

struct FeatureImportance {
  std::string feature;
  double mean_abs_shap = 0.0;
};

// Mean |phi| per feature over the rows of x, descending; equal values keep
// schema order.
std::vector<FeatureImportance> shap_importance(const GbmModel& model, const FeatureMatrix& x);

}  // namespace pfoa::gbm
