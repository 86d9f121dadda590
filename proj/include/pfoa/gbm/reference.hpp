#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pfoa/datamodel.hpp"
#include "pfoa/eval/folds.hpp"
#include "pfoa/gbm/gbm.hpp"
#include "pfoa/gbm/tune.hpp"

namespace pfoa::gbm {

// Model 1: age, sex, bmi. Model 2 adds womac_total; model 3 adds kl.
// Throws ValidationError for a variant outside 1..3.
std::vector<std::string> reference_feature_names(int variant);

// Sex is 0 (female) / 1 (male). Missing values, and KL codes outside 0..4,
// become NaN.
FeatureMatrix reference_features(std::span<const data::KneeRecord> records, int variant);

// Labels of records that all carry a PFOA status.
std::vector<int> labels_of(std::span<const data::KneeRecord> records);

struct TuningOptions {
  int budget = 20;
  int inner_folds = 3;
  std::uint64_t seed = 0;
};

struct FittedModel {
  GbmModel model;
  TuneResult tuning;
};

// tune() on the records, then fit_gbm with the winning parameters.
FittedModel fit_reference_model(const data::DatasetManifest& manifest, int variant, const TuningOptions& options);

// An out-of-fold CNN probability and the fold whose held-out model made it.
struct CnnScore {
  double prob = 0.0;
  int fold = -1;
};
using CnnScores = std::map<data::RecordKey, CnnScore>;

// Throws ValidationError when a record has no CNN score or its score came
// from a model other than the one that held out the record's subject.
void check_out_of_fold(const data::DatasetManifest& manifest, const CnnScores& scores,
                       const eval::FoldAssignment& folds);

// Model 3 features plus cnn_prob.
FeatureMatrix fusion_features(std::span<const data::KneeRecord> records, const CnnScores& scores);

FittedModel fit_fusion_model(const data::DatasetManifest& manifest, const CnnScores& scores,
                             const eval::FoldAssignment& folds, const TuningOptions& options);

}  // namespace pfoa::gbm
