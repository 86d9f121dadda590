#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pfoa/gbm/gbm.hpp"

namespace pfoa::gbm {

// Every combination of
//   num_rounds {50, 100, 200}, learning_rate {0.03, 0.05, 0.1},
//   max_leaves {4, 8, 16, 31}, min_samples_leaf {10, 20, 40},
//   feature_fraction {0.8, 1}, bagging_fraction {0.8, 1}, l2 {0.1, 1, 10}.
std::vector<GbmParams> search_grid();

// The first `budget` grid points of a seeded permutation, so a larger budget
// extends a smaller one. Capped at the grid size.
std::vector<GbmParams> sample_grid(int budget, std::uint64_t seed);

// Pooled out-of-fold AUC of params under stratified group k-fold on the
// given rows. A training split with one class predicts its prevalence.
double inner_cv_auc(const FeatureMatrix& x, std::span<const int> labels, std::span<const std::string> subject_ids,
                    const GbmParams& params, int inner_folds, std::uint64_t seed);

struct Trial {
  GbmParams params;
  double auc = 0.0;
};

struct TuneResult {
  GbmParams best;
  double best_auc = 0.0;
  std::vector<Trial> trials;
};

// Random search: evaluates sample_grid(budget, seed) and keeps the first
// point with the highest inner AUC.
TuneResult tune(const FeatureMatrix& x, std::span<const int> labels, std::span<const std::string> subject_ids,
                int budget, int inner_folds, std::uint64_t seed);

}  // namespace pfoa::gbm
