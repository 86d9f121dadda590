#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pfoa/datamodel.hpp"
#include "pfoa/eval/folds.hpp"
#include "pfoa/eval/metrics.hpp"

namespace pfoa::eval {

// Out-of-fold scores with the subgroup keys needed for stratified reports.
struct ScoredSet {
  std::vector<data::RecordKey> keys;
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<int> folds;
  std::vector<std::optional<int>> kl;
  std::vector<std::optional<double>> womac_pain;

  std::size_t size() const { return keys.size(); }
  std::vector<std::string> subject_ids() const;
  ScoredSet subset(std::span<const std::size_t> idx) const;
};

// Throws ShapeError when the parallel arrays differ in length.
void validate(const ScoredSet& s);

// A model trained on every fold except `fold`.
struct FoldModel {
  int fold = 0;
  std::set<std::string> training_subjects;
  std::function<double(const data::KneeRecord&)> score;
};

// Scores each record once with the model that held out its subject's fold.
// Throws ValidationError when a fold has no model, a record has no label,
// or the scoring model was trained on the record's subject.
ScoredSet assemble_oof(const FoldAssignment& folds, std::span<const FoldModel> models,
                       const data::DatasetManifest& manifest);

struct MetricsRow {
  std::string model;
  std::string group;
  std::size_t n = 0;
  std::size_t n_pos = 0;
  bool computable = false;
  double auc = 0.0;
  Interval auc_ci;
  double ap = 0.0;
  Interval ap_ci;
};

// AUC and AP with stratified bootstrap CIs. Sets with one class are
// returned with computable = false.
MetricsRow evaluate_scores(const std::string& model, const std::string& group, const ScoredSet& set,
                           int n_boot, std::uint64_t seed);

// KL groups {0,1}, {2}, {3,4} and pain groups <= P25, (P25, P75], > P75,
// with P25/P75 taken over every non-missing pain score in the set. Records
// missing the key land in a "missing" row so each dimension covers the set.
std::vector<std::string> kl_groups(const ScoredSet& set);
std::vector<std::string> pain_groups(const ScoredSet& set);

std::vector<MetricsRow> subgroup_report(const std::string& model, const ScoredSet& set, int n_boot,
                                        std::uint64_t seed);

}  // namespace pfoa::eval
