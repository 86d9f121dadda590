#include "pfoa/gbm/reference.hpp"

#include "pfoa/error.hpp"

namespace pfoa::gbm {

std::vector<std::string> reference_feature_names(int variant) {
  switch (variant) {
    case 1: return {"age", "sex", "bmi"};
    case 2: return {"age", "sex", "bmi", "womac_total"};
    case 3: return {"age", "sex", "bmi", "womac_total", "kl"};
    default: throw ValidationError("reference model variant must be 1, 2 or 3, got " + std::to_string(variant));
  }
}

namespace {

double opt(const std::optional<double>& v) { return v ? *v : kMissing; }

std::vector<double> clinical_row(const data::KneeRecord& r, int variant) {
  std::vector<double> row{r.age, r.sex == data::Sex::Male ? 1.0 : 0.0, opt(r.bmi)};
  if (variant >= 2) row.push_back(opt(r.womac_total));
  if (variant >= 3) row.push_back(r.has_standard_kl() ? static_cast<double>(*r.kl_grade) : kMissing);
  return row;
}

std::vector<std::string> subject_ids(std::span<const data::KneeRecord> records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.subject_id);
  return out;
}

}  // namespace

FeatureMatrix reference_features(std::span<const data::KneeRecord> records, int variant) {
  FeatureMatrix x;
  x.names = reference_feature_names(variant);
  for (const auto& r : records) x.push_row(clinical_row(r, variant));
  return x;
}

std::vector<int> labels_of(std::span<const data::KneeRecord> records) {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.pfoa) throw ValidationError(r.key().str() + " has no PFOA label");
    out.push_back(*r.pfoa ? 1 : 0);
  }
  return out;
}

FittedModel fit_reference_model(const data::DatasetManifest& manifest, int variant, const TuningOptions& options) {
  const auto x = reference_features(manifest.records, variant);
  const auto y = labels_of(manifest.records);
  const auto ids = subject_ids(manifest.records);
  FittedModel out;
  out.tuning = tune(x, y, ids, options.budget, options.inner_folds, options.seed);
  out.model = fit_gbm(x, y, out.tuning.best);
  return out;
}

void check_out_of_fold(const data::DatasetManifest& manifest, const CnnScores& scores,
                       const eval::FoldAssignment& folds) {
  for (const auto& r : manifest.records) {
    const auto it = scores.find(r.key());
    if (it == scores.end()) throw ValidationError("no CNN score for " + r.key().str());
    const int f = folds.fold(r.subject_id);
    if (it->second.fold != f) {
      throw ValidationError("leakage: CNN score for " + r.key().str() + " comes from the model of fold " +
                            std::to_string(it->second.fold) + ", which was trained on this subject");
    }
  }
}

FeatureMatrix fusion_features(std::span<const data::KneeRecord> records, const CnnScores& scores) {
  FeatureMatrix x;
  x.names = reference_feature_names(3);
  x.names.emplace_back("cnn_prob");
  for (const auto& r : records) {
    auto row = clinical_row(r, 3);
    const auto it = scores.find(r.key());
    if (it == scores.end()) throw ValidationError("no CNN score for " + r.key().str());
    row.push_back(it->second.prob);
    x.push_row(row);
  }
  return x;
}

FittedModel fit_fusion_model(const data::DatasetManifest& manifest, const CnnScores& scores,
                             const eval::FoldAssignment& folds, const TuningOptions& options) {
  check_out_of_fold(manifest, scores, folds);
  const auto x = fusion_features(manifest.records, scores);
  const auto y = labels_of(manifest.records);
  const auto ids = subject_ids(manifest.records);
  FittedModel out;
  out.tuning = tune(x, y, ids, options.budget, options.inner_folds, options.seed);
  out.model = fit_gbm(x, y, out.tuning.best);
  return out;
}

}  // namespace pfoa::gbm
