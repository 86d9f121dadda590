#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pfoa/error.hpp"

namespace pfoa::pipeline {

// An upstream artifact is missing; the message names the command to run.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  std::filesystem::path out = "run";
  std::filesystem::path manifest;  // default: <out>/manifest.csv
  std::filesystem::path images;    // default: directory of the manifest
  int k = 5;
  std::uint64_t seed = 0;
  double roi_threshold = 0.90;
  int variant = 3;
  int budget = 20;
  int inner_folds = 3;
  int epochs = 20;
  int n_boot = 2000;

  // synth
  int n_subjects = 300;
  int knees_per_subject = 1;
  double prevalence = 0.19;
  double image_effect = 1.0;
  double clinical_effect = 1.0;

  // roi: "detector" trains the stand-in on annotated images, "annotations"
  // uses the annotation boxes directly.
  std::string roi_mode = "detector";
  std::filesystem::path annotations;  // default: <out>/annotations.csv
  int detector_train = 200;
  int detector_epochs = 12;

  // CNN
  std::vector<int> widths{32, 64, 128};
  int fc_hidden = 256;
  int batch_size = 64;
  double lr0 = 0.001;

  std::ostream* log = nullptr;
};

void validate(const RunConfig& cfg);

// Writes manifest.csv, images/<key>.png (+ spacing sidecars) and
// annotations.csv (patellar boxes on the preprocessed grid).
void cmd_synth(const RunConfig& cfg);

// Normalizes, resamples and orients every radiograph in the manifest into
// preprocessed/<key>.png; writes preprocess.csv.
void cmd_preprocess(const RunConfig& cfg);

// Detects and gates the patellar ROI; writes detections.csv,
// exclusions.csv, included.csv (the kept manifest) and folds.csv.
void cmd_roi(const RunConfig& cfg);

// k-fold CNN training on the ROI crops; models/cnn_fold<f>.json and the
// "cnn" rows of oof_scores.csv.
void cmd_train(const RunConfig& cfg);

// Reference GBM (cfg.variant): out-of-fold scores as "model<v>" plus a
// full-data model models/model<v>.json.
void cmd_reference(const RunConfig& cfg);

// Clinical features plus the CNN's out-of-fold probability; "fusion" rows
// and fusion_comparison.csv.
void cmd_fuse(const RunConfig& cfg);

// metrics.csv, subgroups.csv, roc_/pr_<model>.svg and .csv, comparisons.csv
// and shap.csv from every model in oof_scores.csv.
void cmd_evaluate(const RunConfig& cfg);

}  // namespace pfoa::pipeline
