#include "pfoa/gbm/tune.hpp"

#include "pfoa/error.hpp"
#include "pfoa/eval/folds.hpp"
#include "pfoa/eval/metrics.hpp"
#include "pfoa/rng.hpp"

namespace pfoa::gbm {

std::vector<GbmParams> search_grid() {
  std::vector<GbmParams> grid;
  for (int rounds : {50, 100, 200}) {
    for (double lr : {0.03, 0.05, 0.1}) {
      for (int leaves : {4, 8, 16, 31}) {
        for (int min_leaf : {10, 20, 40}) {
          for (double ff : {0.8, 1.0}) {
            for (double bf : {0.8, 1.0}) {
              for (double l2 : {0.1, 1.0, 10.0}) {
                GbmParams p;
                p.num_rounds = rounds;
                p.learning_rate = lr;
                p.max_leaves = leaves;
                p.min_samples_leaf = min_leaf;
                p.feature_fraction = ff;
                p.bagging_fraction = bf;
                p.l2_leaf_regularization = l2;
                grid.push_back(p);
              }
            }
          }
        }
      }
    }
  }
  return grid;
}

std::vector<GbmParams> sample_grid(int budget, std::uint64_t seed) {
  if (budget < 1) throw ValidationError("search budget must be >= 1");
  auto grid = search_grid();
  auto rng = make_stream(seed, 0x7e57);
  shuffle_portable(grid.begin(), grid.end(), rng);
  if (static_cast<std::size_t>(budget) < grid.size()) grid.resize(static_cast<std::size_t>(budget));
  for (auto& p : grid) p.seed = seed;
  return grid;
}

namespace {

FeatureMatrix take_rows(const FeatureMatrix& x, const std::vector<std::size_t>& rows) {
  FeatureMatrix out;
  out.names = x.names;
  for (std::size_t r : rows) out.push_row(x.row(r));
  return out;
}

}  // namespace

double inner_cv_auc(const FeatureMatrix& x, std::span<const int> labels, std::span<const std::string> subject_ids,
                    const GbmParams& params, int inner_folds, std::uint64_t seed) {
  if (labels.size() != x.rows || subject_ids.size() != x.rows) throw ShapeError("rows, labels and ids differ");
  const auto folds = eval::stratified_group_kfold(subject_ids, labels, inner_folds, seed);
  const auto members = eval::fold_members(folds, subject_ids);
  std::vector<double> oof(x.rows, 0.0);
  for (int f = 0; f < inner_folds; ++f) {
    std::vector<std::size_t> train;
    std::vector<char> held(x.rows, 0);
    for (std::size_t r : members[static_cast<std::size_t>(f)]) held[r] = 1;
    for (std::size_t r = 0; r < x.rows; ++r) {
      if (!held[r]) train.push_back(r);
    }
    std::vector<int> train_labels;
    int pos = 0;
    for (std::size_t r : train) {
      train_labels.push_back(labels[r]);
      pos += labels[r];
    }
    if (pos == 0 || pos == static_cast<int>(train.size())) {
      const double prevalence = train.empty() ? 0.5 : static_cast<double>(pos) / static_cast<double>(train.size());
      for (std::size_t r : members[static_cast<std::size_t>(f)]) oof[r] = prevalence;
      continue;
    }
    const auto model = fit_gbm(take_rows(x, train), train_labels, params);
    for (std::size_t r : members[static_cast<std::size_t>(f)]) oof[r] = predict_proba_gbm(model, x.row(r));
  }
  return eval::roc_auc(oof, labels);
}

TuneResult tune(const FeatureMatrix& x, std::span<const int> labels, std::span<const std::string> subject_ids,
                int budget, int inner_folds, std::uint64_t seed) {
  TuneResult out;
  bool first = true;
  for (const auto& p : sample_grid(budget, seed)) {
    const double auc = inner_cv_auc(x, labels, subject_ids, p, inner_folds, seed);
    out.trials.push_back({p, auc});
    if (first || auc > out.best_auc) {
      out.best = p;
      out.best_auc = auc;
      first = false;
    }
  }
  return out;
}

}  // namespace pfoa::gbm
