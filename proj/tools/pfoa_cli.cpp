// Command-line driver: synth, preprocess, roi, train, reference, fuse,
// evaluate and run (all of them in order).
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pfoa/pipeline.hpp"

namespace {

std::string error_kind(const pfoa::Error& e) {
  if (dynamic_cast<const pfoa::pipeline::MissingArtifact*>(&e)) return "missing_artifact";
  if (dynamic_cast<const pfoa::ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const pfoa::ParseError*>(&e)) return "parse";
  if (dynamic_cast<const pfoa::ShapeError*>(&e)) return "shape";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  namespace pl = pfoa::pipeline;
  pl::RunConfig cfg;
  cfg.log = &std::cerr;
  bool quiet = false;

  CLI::App app{"Patellofemoral OA pipeline on knee radiographs"};
  app.set_config("--config", "", "key=value file with any of the long options below");
  app.require_subcommand(1);
  app.fallthrough();

  std::string out = cfg.out.string();
  std::string manifest;
  std::string images;
  std::string annotations;
  app.add_option("--out", out, "Run directory")->capture_default_str();
  app.add_option("--manifest", manifest, "Manifest CSV (default <out>/manifest.csv)");
  app.add_option("--images", images, "Image root (default: manifest directory)");
  app.add_option("--k", cfg.k, "Outer folds")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
  app.add_option("--roi-threshold", cfg.roi_threshold, "ROI confidence gate")->capture_default_str();
  app.add_option("--roi-mode", cfg.roi_mode, "detector or annotations")->capture_default_str();
  app.add_option("--annotations", annotations, "Annotation CSV (default <out>/annotations.csv)");
  app.add_option("--detector-train", cfg.detector_train, "Annotated images used to train the detector")
      ->capture_default_str();
  app.add_option("--detector-epochs", cfg.detector_epochs, "Detector training epochs")->capture_default_str();
  app.add_option("--variant", cfg.variant, "Reference model variant (1, 2 or 3)")->capture_default_str();
  app.add_option("--budget", cfg.budget, "Hyperparameter search budget")->capture_default_str();
  app.add_option("--inner-folds", cfg.inner_folds, "Inner CV folds for tuning")->capture_default_str();
  app.add_option("--epochs", cfg.epochs, "CNN epochs")->capture_default_str();
  app.add_option("--batch-size", cfg.batch_size, "CNN minibatch size")->capture_default_str();
  app.add_option("--lr", cfg.lr0, "CNN initial learning rate")->capture_default_str();
  app.add_option("--widths", cfg.widths, "CNN conv block widths")->delimiter(',')->capture_default_str();
  app.add_option("--fc-hidden", cfg.fc_hidden, "CNN hidden units")->capture_default_str();
  app.add_option("--n-boot", cfg.n_boot, "Bootstrap replicates")->capture_default_str();
  app.add_option("--subjects", cfg.n_subjects, "synth: subjects")->capture_default_str();
  app.add_option("--knees-per-subject", cfg.knees_per_subject, "synth: 1 or 2")->capture_default_str();
  app.add_option("--prevalence", cfg.prevalence, "synth: subject-level PFOA prevalence")->capture_default_str();
  app.add_option("--image-effect", cfg.image_effect, "synth: strength of imaging signs")->capture_default_str();
  app.add_option("--clinical-effect", cfg.clinical_effect, "synth: strength of clinical differences")
      ->capture_default_str();
  app.add_flag("--quiet", quiet, "No progress output");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort with phantom radiographs");
  auto* preprocess = app.add_subcommand("preprocess", "Normalize, resample and orient radiographs");
  auto* roi = app.add_subcommand("roi", "Detect and gate the patellar ROI; assign folds");
  auto* train = app.add_subcommand("train", "Cross-validated CNN training");
  auto* reference = app.add_subcommand("reference", "Cross-validated clinical reference model");
  auto* fuse = app.add_subcommand("fuse", "Clinical plus CNN fusion model");
  auto* evaluate = app.add_subcommand("evaluate", "Metrics, curves, comparisons and SHAP");
  auto* run = app.add_subcommand("run", "preprocess through evaluate, all three reference variants");

  CLI11_PARSE(app, argc, argv);

  cfg.out = out;
  cfg.manifest = manifest;
  cfg.images = images;
  cfg.annotations = annotations;
  if (quiet) cfg.log = nullptr;

  try {
    if (synth->parsed()) pl::cmd_synth(cfg);
    if (preprocess->parsed()) pl::cmd_preprocess(cfg);
    if (roi->parsed()) pl::cmd_roi(cfg);
    if (train->parsed()) pl::cmd_train(cfg);
    if (reference->parsed()) pl::cmd_reference(cfg);
    if (fuse->parsed()) pl::cmd_fuse(cfg);
    if (evaluate->parsed()) pl::cmd_evaluate(cfg);
    if (run->parsed()) {
      pl::cmd_preprocess(cfg);
      pl::cmd_roi(cfg);
      pl::cmd_train(cfg);
      for (int v = 1; v <= 3; ++v) {
        auto c = cfg;
        c.variant = v;
        pl::cmd_reference(c);
      }
      pl::cmd_fuse(cfg);
      pl::cmd_evaluate(cfg);
    }
  } catch (const pfoa::Error& e) {
    std::cerr << "error: " << error_kind(e) << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
