#include "pfoa/pipeline.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "pfoa/csv.hpp"
#include "pfoa/datamodel.hpp"
#include "pfoa/eval/folds.hpp"
#include "pfoa/eval/metrics.hpp"
#include "pfoa/eval/oof.hpp"
#include "pfoa/eval/report.hpp"
#include "pfoa/gbm/reference.hpp"
#include "pfoa/gbm/shap.hpp"
#include "pfoa/imaging.hpp"
#include "pfoa/nn/train.hpp"
#include "pfoa/rng.hpp"
#include "pfoa/roi.hpp"
#include "pfoa/synth.hpp"

namespace pfoa::pipeline {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kVersion = "0.1.0";
constexpr std::string_view kOofHeader = "model,subject_id,side,visit,fold,label,score";

// ---------------------------------------------------------------------------
// Paths and bookkeeping

fs::path manifest_path(const RunConfig& cfg) {
  return cfg.manifest.empty() ? cfg.out / "manifest.csv" : cfg.manifest;
}

fs::path images_dir(const RunConfig& cfg) {
  if (!cfg.images.empty()) return cfg.images;
  const auto parent = manifest_path(cfg).parent_path();
  return parent.empty() ? fs::path(".") : parent;
}

fs::path annotations_path(const RunConfig& cfg) {
  return cfg.annotations.empty() ? cfg.out / "annotations.csv" : cfg.annotations;
}

fs::path preprocessed_path(const RunConfig& cfg, const data::RecordKey& key) {
  return cfg.out / "preprocessed" / (key.str() + ".png");
}

void require(const fs::path& path, std::string_view command) {
  if (!fs::exists(path)) {
    throw MissingArtifact(path.string() + " not found; run `" + std::string(command) + "` first");
  }
}

void say(const RunConfig& cfg, const std::string& line) {
  if (cfg.log) *cfg.log << line << '\n' << std::flush;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// run_meta.txt holds one "[command]" block per command; rerunning a command
// replaces its block.
void write_meta(const RunConfig& cfg, const std::string& command, const std::vector<std::string>& extra) {
  const auto path = cfg.out / "run_meta.txt";
  std::map<std::string, std::string> blocks;
  if (fs::exists(path)) {
    std::string current;
    std::istringstream in(csv::read_file(path));
    for (std::string line; std::getline(in, line);) {
      if (line.size() > 2 && line.front() == '[' && line.back() == ']') {
        current = line.substr(1, line.size() - 2);
        blocks[current];
      } else if (!current.empty() && !line.empty()) {
        blocks[current] += line + '\n';
      }
    }
  }
  std::ostringstream b;
  b << "version=" << kVersion << '\n'
    << "seed=" << cfg.seed << '\n'
    << "manifest=" << manifest_path(cfg).string() << '\n'
    << "k=" << cfg.k << '\n'
    << "roi_threshold=" << data::format_double(cfg.roi_threshold) << '\n'
    << "roi_mode=" << cfg.roi_mode << '\n'
    << "variant=" << cfg.variant << '\n'
    << "budget=" << cfg.budget << '\n'
    << "inner_folds=" << cfg.inner_folds << '\n'
    << "epochs=" << cfg.epochs << '\n'
    << "n_boot=" << cfg.n_boot << '\n'
    << "widths=" << join_ints(cfg.widths) << '\n'
    << "fc_hidden=" << cfg.fc_hidden << '\n'
    << "batch_size=" << cfg.batch_size << '\n'
    << "lr0=" << data::format_double(cfg.lr0) << '\n';
  if (command == "synth") {
    b << "n_subjects=" << cfg.n_subjects << '\n'
      << "knees_per_subject=" << cfg.knees_per_subject << '\n'
      << "prevalence=" << data::format_double(cfg.prevalence) << '\n'
      << "image_effect=" << data::format_double(cfg.image_effect) << '\n'
      << "clinical_effect=" << data::format_double(cfg.clinical_effect) << '\n';
  }
  for (const auto& e : extra) b << e << '\n';
  blocks[command] = b.str();

  static const std::vector<std::string> kOrder = {"synth", "preprocess", "roi", "train", "reference", "fuse",
                                                  "evaluate"};
  std::ostringstream os;
  for (const auto& name : kOrder) {
    const auto it = blocks.find(name);
    if (it != blocks.end()) os << '[' << name << "]\n" << it->second << '\n';
  }
  for (const auto& [name, body] : blocks) {
    if (std::find(kOrder.begin(), kOrder.end(), name) == kOrder.end()) os << '[' << name << "]\n" << body << '\n';
  }
  csv::write_file(path, os.str());
}

// ---------------------------------------------------------------------------
// Folds and out-of-fold score files

void save_folds(const eval::FoldAssignment& folds, const fs::path& path) {
  std::ostringstream os;
  os << "subject_id,fold\n";
  for (const auto& [id, f] : folds.fold_of) os << id << ',' << f << '\n';
  csv::write_file(path, os.str());
}

eval::FoldAssignment load_folds(const fs::path& path) {
  const auto text = csv::read_file(path);
  const auto rows = csv::lines(text);
  if (rows.empty() || rows.front().second != "subject_id,fold") throw ParseError(path.string() + ": bad header");
  eval::FoldAssignment folds;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = csv::split(rows[i].second);
    if (cells.size() != 2) throw ParseError(path.string() + ": row " + std::to_string(rows[i].first));
    const int f = static_cast<int>(data::parse_double(cells[1]));
    folds.fold_of.emplace(std::string(cells[0]), f);
    folds.k = std::max(folds.k, f + 1);
  }
  return folds;
}

struct OofRow {
  std::string model;
  data::RecordKey key;
  int fold = 0;
  int label = 0;
  double score = 0.0;
};

std::vector<OofRow> read_oof(const fs::path& path) {
  std::vector<OofRow> out;
  if (!fs::exists(path)) return out;
  const auto text = csv::read_file(path);
  const auto rows = csv::lines(text);
  if (rows.empty() || rows.front().second != kOofHeader) throw ParseError(path.string() + ": bad header");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = csv::split(rows[i].second);
    if (c.size() != 7) throw ParseError(path.string() + ": row " + std::to_string(rows[i].first));
    OofRow r;
    r.model = std::string(c[0]);
    r.key = {std::string(c[1]), data::parse_side(c[2]), data::parse_visit(c[3])};
    r.fold = static_cast<int>(data::parse_double(c[4]));
    r.label = static_cast<int>(data::parse_double(c[5]));
    r.score = data::parse_double(c[6]);
    out.push_back(std::move(r));
  }
  return out;
}

void replace_oof(const fs::path& path, const std::string& model, const eval::ScoredSet& set) {
  auto rows = read_oof(path);
  std::erase_if(rows, [&](const OofRow& r) { return r.model == model; });
  for (std::size_t i = 0; i < set.size(); ++i) {
    rows.push_back({model, set.keys[i], set.folds[i], set.labels[i], set.scores[i]});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const OofRow& a, const OofRow& b) { return a.model < b.model; });
  std::ostringstream os;
  os << kOofHeader << '\n';
  for (const auto& r : rows) {
    os << r.model << ',' << r.key.subject_id << ',' << data::to_string(r.key.side) << ','
       << data::to_string(r.key.visit) << ',' << r.fold << ',' << r.label << ',' << data::format_double(r.score)
       << '\n';
  }
  csv::write_file(path, os.str());
}

data::DatasetManifest records_in_folds(const data::DatasetManifest& m, const eval::FoldAssignment& folds,
                                       int excluded_fold) {
  data::DatasetManifest out;
  out.provenance = m.provenance;
  out.spacing_mm = m.spacing_mm;
  for (const auto& r : m.records) {
    if (folds.fold(r.subject_id) != excluded_fold) out.records.push_back(r);
  }
  return out;
}

std::set<std::string> subjects_of(const data::DatasetManifest& m) {
  std::set<std::string> out;
  for (const auto& r : m.records) out.insert(r.subject_id);
  return out;
}

gbm::TuningOptions tuning_options(const RunConfig& cfg) { return {cfg.budget, cfg.inner_folds, cfg.seed}; }

gbm::CnnScores load_cnn_scores(const RunConfig& cfg) {
  gbm::CnnScores scores;
  for (const auto& r : read_oof(cfg.out / "oof_scores.csv")) {
    if (r.model == "cnn") scores[r.key] = {r.score, r.fold};
  }
  if (scores.empty()) throw MissingArtifact("no CNN out-of-fold scores; run `train` first");
  return scores;
}

}  // namespace

void validate(const RunConfig& cfg) {
  if (cfg.k < 2) throw ValidationError("k must be >= 2");
  if (!(cfg.roi_threshold > 0.0 && cfg.roi_threshold <= 1.0)) {
    throw ValidationError("roi threshold must lie in (0, 1]");
  }
  if (cfg.variant < 1 || cfg.variant > 3) throw ValidationError("variant must be 1, 2 or 3");
  if (cfg.budget < 1) throw ValidationError("budget must be >= 1");
  if (cfg.inner_folds < 2) throw ValidationError("inner_folds must be >= 2");
  if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (cfg.n_boot < 1) throw ValidationError("n_boot must be >= 1");
  if (cfg.roi_mode != "detector" && cfg.roi_mode != "annotations") {
    throw ValidationError("roi mode must be detector or annotations");
  }
  if (cfg.detector_train < 1) throw ValidationError("detector_train must be >= 1");
  if (cfg.widths.empty()) throw ValidationError("widths must not be empty");
}

// ---------------------------------------------------------------------------

void cmd_synth(const RunConfig& cfg) {
  validate(cfg);
  synth::SynthConfig sc;
  sc.n_subjects = cfg.n_subjects;
  sc.knees_per_subject = cfg.knees_per_subject;
  sc.prevalence = cfg.prevalence;
  sc.image_effect = cfg.image_effect;
  sc.clinical_effect = cfg.clinical_effect;
  sc.seed = cfg.seed;
  const auto m = synth::generate_cohort(sc);
  const auto dir = manifest_path(cfg).parent_path();
  roi::AnnotationMap annotations;
  for (const auto& r : m.records) {
    const auto ph = synth::generate_phantom(r, sc);
    imaging::save_png(ph.image, dir / *r.image_path);
    annotations.emplace(r.key(), RoiDetection{ph.box, 1.0});
  }
  data::save_manifest(m, manifest_path(cfg));
  roi::save_annotations(annotations, annotations_path(cfg));
  std::size_t pos = 0;
  for (const auto& r : m.records) pos += *r.pfoa ? 1 : 0;
  say(cfg, "synth: " + std::to_string(m.records.size()) + " knees, " + std::to_string(pos) + " with PFOA");
  write_meta(cfg, "synth", {"knees=" + std::to_string(m.records.size()), "pfoa_knees=" + std::to_string(pos)});
}

void cmd_preprocess(const RunConfig& cfg) {
  validate(cfg);
  require(manifest_path(cfg), "synth");
  const auto m = data::load_manifest(manifest_path(cfg));
  std::ostringstream report;
  report << "subject_id,side,visit,width,height,degenerate\n";
  std::size_t done = 0;
  std::size_t degenerate = 0;
  for (const auto& r : m.records) {
    if (!r.image_path) continue;
    const auto raw = imaging::load_image(images_dir(cfg) / *r.image_path, m.spacing_mm);
    const auto pre = imaging::preprocess(raw, r.side);
    imaging::save_png(pre.image, preprocessed_path(cfg, r.key()));
    report << r.subject_id << ',' << data::to_string(r.side) << ',' << data::to_string(r.visit) << ','
           << pre.image.width << ',' << pre.image.height << ',' << (pre.degenerate ? 1 : 0) << '\n';
    ++done;
    degenerate += pre.degenerate ? 1 : 0;
  }
  csv::write_file(cfg.out / "preprocess.csv", report.str());
  say(cfg, "preprocess: " + std::to_string(done) + " images, " + std::to_string(degenerate) + " degenerate");
  write_meta(cfg, "preprocess", {"images=" + std::to_string(done), "degenerate=" + std::to_string(degenerate)});
}

void cmd_roi(const RunConfig& cfg) {
  validate(cfg);
  require(manifest_path(cfg), "synth");
  require(cfg.out / "preprocess.csv", "preprocess");
  const auto m = data::load_manifest(manifest_path(cfg));
  const auto annotations_file = annotations_path(cfg);
  roi::AnnotationMap annotations;
  if (fs::exists(annotations_file)) annotations = roi::load_annotations(annotations_file);
  else if (cfg.roi_mode == "annotations") require(annotations_file, "synth");

  std::map<data::RecordKey, imaging::Image> images;
  for (const auto& r : m.records) {
    if (r.image_path) images.emplace(r.key(), imaging::load_png(preprocessed_path(cfg, r.key())));
  }

  std::vector<roi::DetectionRow> rows;
  if (cfg.roi_mode == "annotations") {
    for (const auto& r : m.records) {
      if (!r.image_path) continue;
      roi::DetectionRow row{r.key(), std::nullopt, 0.0};
      const auto it = annotations.find(r.key());
      if (it != annotations.end()) {
        const std::vector<RoiDetection> dets{it->second};
        row.selected = roi::select_roi(dets, cfg.roi_threshold);
        row.best_confidence = it->second.confidence;
      }
      rows.push_back(std::move(row));
    }
  } else {
    std::vector<imaging::Image> train_images;
    std::vector<RoiBox> train_boxes;
    for (const auto& r : m.records) {
      if (static_cast<int>(train_images.size()) >= cfg.detector_train) break;
      const auto a = annotations.find(r.key());
      const auto img = images.find(r.key());
      if (a == annotations.end() || img == images.end()) continue;
      train_images.push_back(img->second);
      train_boxes.push_back(a->second.box);
    }
    if (train_images.empty()) {
      throw MissingArtifact("no annotated images to train the detector; provide --annotations or run `synth`");
    }
    roi::ScorerTrainingOptions opts;
    opts.epochs = cfg.detector_epochs;
    opts.seed = cfg.seed;
    const auto scorer = roi::train_scorer(train_images, train_boxes, roi::DetectorConfig{}, opts);
    nn::save_model(scorer.model, cfg.out / "models" / "roi_scorer.json");
    say(cfg, "roi: detector trained on " + std::to_string(train_images.size()) + " annotated images");
    for (const auto& r : m.records) {
      const auto img = images.find(r.key());
      if (img == images.end()) continue;
      const auto dets = roi::detect_standin(img->second, scorer);
      roi::DetectionRow row{r.key(), roi::select_roi(dets, cfg.roi_threshold), 0.0};
      for (const auto& d : dets) row.best_confidence = std::max(row.best_confidence, d.confidence);
      rows.push_back(std::move(row));
    }
  }
  roi::save_detections(rows, cfg.out / "detections.csv");

  const auto result = data::exclusion_filter(m, roi::to_roi_results(rows));
  std::size_t misses = 0;
  for (const auto& r : rows) misses += r.selected ? 0 : 1;
  const double miss_rate = rows.empty() ? 0.0 : static_cast<double>(misses) / static_cast<double>(rows.size());
  std::ostringstream ex;
  ex << "reason,count\n"
     << "missing_radiograph," << result.counts.missing_radiograph << '\n'
     << "missing_pfoa," << result.counts.missing_pfoa << '\n'
     << "nonstandard_kl," << result.counts.nonstandard_kl << '\n'
     << "roi_gate," << result.counts.roi_gate << '\n'
     << "excluded_total," << result.counts.total() << '\n'
     << "included," << result.kept.records.size() << '\n'
     << "gate_misses_all_images," << misses << '\n'
     << "images_scored," << rows.size() << '\n';
  csv::write_file(cfg.out / "exclusions.csv", ex.str());
  data::save_manifest(result.kept, cfg.out / "included.csv");

  const auto folds = eval::stratified_group_kfold(result.kept, cfg.k, cfg.seed);
  save_folds(folds, cfg.out / "folds.csv");
  say(cfg, "roi: gate misses " + std::to_string(misses) + "/" + std::to_string(rows.size()) + ", included " +
               std::to_string(result.kept.records.size()) + " of " + std::to_string(m.records.size()));
  write_meta(cfg, "roi", {"gate_misses=" + std::to_string(misses), "images_scored=" + std::to_string(rows.size()),
                          "gate_miss_rate=" + data::format_double(miss_rate),
                          "included=" + std::to_string(result.kept.records.size())});
}

void cmd_train(const RunConfig& cfg) {
  validate(cfg);
  require(cfg.out / "included.csv", "roi");
  require(cfg.out / "detections.csv", "roi");
  require(cfg.out / "folds.csv", "roi");
  const auto m = data::load_manifest(cfg.out / "included.csv");
  const auto folds = load_folds(cfg.out / "folds.csv");
  std::map<data::RecordKey, RoiBox> boxes;
  for (const auto& d : roi::load_detections(cfg.out / "detections.csv")) {
    if (d.selected) boxes.emplace(d.key, d.selected->box);
  }

  nn::Architecture arch;
  arch.widths = cfg.widths;
  arch.fc_hidden = cfg.fc_hidden;
  std::map<data::RecordKey, nn::Sample> samples;
  for (const auto& r : m.records) {
    const auto box = boxes.find(r.key());
    if (box == boxes.end()) throw ValidationError(r.key().str() + " has no gated ROI; rerun `roi`");
    const auto img = imaging::load_png(preprocessed_path(cfg, r.key()));
    const auto crop = imaging::crop_resize(img, box->second, arch.input_h, arch.input_w);
    nn::Sample s;
    s.label = r.pfoa.value_or(false) ? 1 : 0;
    s.pixels.reserve(crop.pixels.size());
    for (auto v : crop.pixels) s.pixels.push_back(v / 255.0);
    samples.emplace(r.key(), std::move(s));
  }

  std::vector<eval::FoldModel> fold_models;
  std::vector<nn::CnnModel> models(static_cast<std::size_t>(folds.k));
  for (int f = 0; f < folds.k; ++f) {
    const auto train_set = records_in_folds(m, folds, f);
    std::vector<nn::Sample> data;
    for (const auto& r : train_set.records) data.push_back(samples.at(r.key()));
    nn::TrainConfig tc;
    tc.batch_size = cfg.batch_size;
    tc.lr0 = cfg.lr0;
    tc.epochs = cfg.epochs;
    tc.seed = mix64(cfg.seed ^ (0xc0ffeeULL + static_cast<std::uint64_t>(f)));
    auto result = nn::train(data, arch, tc);
    nn::save_model(result.model, cfg.out / "models" / ("cnn_fold" + std::to_string(f) + ".json"));
    say(cfg, "train: fold " + std::to_string(f) + " on " + std::to_string(data.size()) + " knees, final loss " +
                 data::format_double(result.epoch_loss.back()));
    models[static_cast<std::size_t>(f)] = std::move(result.model);
    const auto* model = &models[static_cast<std::size_t>(f)];
    fold_models.push_back({f, subjects_of(train_set), [model, &samples](const data::KneeRecord& r) {
                             return nn::predict_proba(*model, samples.at(r.key()).pixels);
                           }});
  }
  const auto oof = eval::assemble_oof(folds, fold_models, m);
  replace_oof(cfg.out / "oof_scores.csv", "cnn", oof);
  write_meta(cfg, "train", {"knees=" + std::to_string(oof.size())});
}

void cmd_reference(const RunConfig& cfg) {
  validate(cfg);
  require(cfg.out / "included.csv", "roi");
  require(cfg.out / "folds.csv", "roi");
  const auto m = data::load_manifest(cfg.out / "included.csv");
  const auto folds = load_folds(cfg.out / "folds.csv");
  const std::string name = "model" + std::to_string(cfg.variant);

  std::vector<gbm::GbmModel> models(static_cast<std::size_t>(folds.k));
  std::vector<eval::FoldModel> fold_models;
  for (int f = 0; f < folds.k; ++f) {
    const auto train_set = records_in_folds(m, folds, f);
    auto fitted = gbm::fit_reference_model(train_set, cfg.variant, tuning_options(cfg));
    say(cfg, "reference " + name + ": fold " + std::to_string(f) + " inner AUC " +
                 data::format_double(fitted.tuning.best_auc));
    models[static_cast<std::size_t>(f)] = std::move(fitted.model);
    const auto* model = &models[static_cast<std::size_t>(f)];
    const int variant = cfg.variant;
    fold_models.push_back({f, subjects_of(train_set), [model, variant](const data::KneeRecord& r) {
                             const auto x = gbm::reference_features(std::span(&r, 1), variant);
                             return gbm::predict_proba_gbm(*model, x.row(0));
                           }});
  }
  const auto oof = eval::assemble_oof(folds, fold_models, m);
  replace_oof(cfg.out / "oof_scores.csv", name, oof);
  const auto full = gbm::fit_reference_model(m, cfg.variant, tuning_options(cfg));
  gbm::save_gbm(full.model, cfg.out / "models" / (name + ".json"));
  write_meta(cfg, "reference", {"model=" + name, "full_inner_auc=" + data::format_double(full.tuning.best_auc)});
}

void cmd_fuse(const RunConfig& cfg) {
  validate(cfg);
  require(cfg.out / "included.csv", "roi");
  require(cfg.out / "folds.csv", "roi");
  require(cfg.out / "oof_scores.csv", "train");
  const auto m = data::load_manifest(cfg.out / "included.csv");
  const auto folds = load_folds(cfg.out / "folds.csv");
  const auto scores = load_cnn_scores(cfg);
  gbm::check_out_of_fold(m, scores, folds);

  std::vector<gbm::GbmModel> models(static_cast<std::size_t>(folds.k));
  std::vector<eval::FoldModel> fold_models;
  for (int f = 0; f < folds.k; ++f) {
    const auto train_set = records_in_folds(m, folds, f);
    auto fitted = gbm::fit_fusion_model(train_set, scores, folds, tuning_options(cfg));
    say(cfg, "fuse: fold " + std::to_string(f) + " inner AUC " + data::format_double(fitted.tuning.best_auc));
    models[static_cast<std::size_t>(f)] = std::move(fitted.model);
    const auto* model = &models[static_cast<std::size_t>(f)];
    fold_models.push_back({f, subjects_of(train_set), [model, &scores](const data::KneeRecord& r) {
                             const auto x = gbm::fusion_features(std::span(&r, 1), scores);
                             return gbm::predict_proba_gbm(*model, x.row(0));
                           }});
  }
  const auto oof = eval::assemble_oof(folds, fold_models, m);
  replace_oof(cfg.out / "oof_scores.csv", "fusion", oof);
  const auto full = gbm::fit_fusion_model(m, scores, folds, tuning_options(cfg));
  gbm::save_gbm(full.model, cfg.out / "models" / "fusion.json");

  std::vector<double> cnn;
  for (const auto& key : oof.keys) cnn.push_back(scores.at(key).prob);
  const auto d = eval::delong_test(oof.scores, cnn, oof.labels);
  const auto ci = eval::bootstrap_ci(cnn, oof.labels, eval::roc_auc, cfg.n_boot, cfg.seed);
  const bool within = d.auc_a >= ci.lo && d.auc_a <= ci.hi;
  std::ostringstream os;
  os << "model_a,model_b,auc_a,auc_b,z,p,cnn_auc_lo,cnn_auc_hi,fusion_within_cnn_ci\n"
     << "fusion,cnn," << data::format_double(d.auc_a) << ',' << data::format_double(d.auc_b) << ','
     << data::format_double(d.z) << ',' << data::format_double(d.p) << ',' << data::format_double(ci.lo) << ','
     << data::format_double(ci.hi) << ',' << (within ? 1 : 0) << '\n';
  csv::write_file(cfg.out / "fusion_comparison.csv", os.str());
  say(cfg, "fuse: fusion AUC " + data::format_double(d.auc_a) + ", CNN AUC " + data::format_double(d.auc_b) +
               " [" + data::format_double(ci.lo) + ", " + data::format_double(ci.hi) + "]");
  write_meta(cfg, "fuse", {"fusion_within_cnn_ci=" + std::to_string(within ? 1 : 0)});
}

void cmd_evaluate(const RunConfig& cfg) {
  validate(cfg);
  require(cfg.out / "included.csv", "roi");
  require(cfg.out / "oof_scores.csv", "train");
  const auto m = data::load_manifest(cfg.out / "included.csv");
  const auto index = data::index_by_key(m);
  const auto rows = read_oof(cfg.out / "oof_scores.csv");

  std::vector<std::string> names;
  std::map<std::string, eval::ScoredSet> sets;
  for (const auto& r : rows) {
    const auto it = index.find(r.key);
    if (it == index.end()) throw ValidationError(r.key.str() + " is scored but not in included.csv; rerun the models");
    const auto& rec = m.records[it->second];
    auto [pos, fresh] = sets.try_emplace(r.model);
    if (fresh) names.push_back(r.model);
    auto& s = pos->second;
    s.keys.push_back(r.key);
    s.scores.push_back(r.score);
    s.labels.push_back(r.label);
    s.folds.push_back(r.fold);
    s.kl.push_back(rec.has_standard_kl() ? rec.kl_grade : std::nullopt);
    s.womac_pain.push_back(rec.womac_pain);
  }
  // The CNN leads every comparison when present.
  std::stable_sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
    return (a == "cnn") > (b == "cnn");
  });

  std::vector<eval::MetricsRow> metrics;
  std::vector<eval::MetricsRow> subgroups;
  std::vector<eval::SvgCurve> roc_all;
  std::vector<eval::SvgCurve> pr_all;
  double prevalence = 0.0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& name = names[i];
    const auto& s = sets.at(name);
    const auto model_seed = mix64(cfg.seed + i);
    metrics.push_back(eval::evaluate_scores(name, "All", s, cfg.n_boot, model_seed));
    for (auto& row : eval::subgroup_report(name, s, cfg.n_boot, model_seed)) {
      subgroups.push_back(std::move(row));
    }
    if (!metrics.back().computable) continue;
    const auto roc = eval::roc_curve(s.scores, s.labels);
    const auto pr = eval::pr_curve(s.scores, s.labels);
    prevalence = static_cast<double>(metrics.back().n_pos) / static_cast<double>(metrics.back().n);
    csv::write_file(cfg.out / ("roc_" + name + ".csv"), eval::format_curve(roc.points));
    csv::write_file(cfg.out / ("pr_" + name + ".csv"), eval::format_curve(pr.points));
    const std::vector<eval::SvgCurve> one_roc{{name, roc.points}};
    const std::vector<eval::SvgCurve> one_pr{{name, pr.points}};
    csv::write_file(cfg.out / ("roc_" + name + ".svg"),
                    eval::render_curve_svg("ROC " + name, "False positive rate", "True positive rate", one_roc, true));
    csv::write_file(cfg.out / ("pr_" + name + ".svg"),
                    eval::render_curve_svg("PR " + name, "Recall", "Precision", one_pr, false, prevalence));
    roc_all.push_back({name + " (AUC " + data::format_double(std::round(roc.auc * 1000) / 1000) + ")", roc.points});
    pr_all.push_back({name + " (AP " + data::format_double(std::round(pr.ap * 1000) / 1000) + ")", pr.points});
  }
  csv::write_file(cfg.out / "metrics.csv", eval::format_metrics(metrics));
  csv::write_file(cfg.out / "subgroups.csv", eval::format_metrics(subgroups));
  if (!roc_all.empty()) {
    csv::write_file(cfg.out / "roc_all.svg",
                    eval::render_curve_svg("ROC", "False positive rate", "True positive rate", roc_all, true));
    csv::write_file(cfg.out / "pr_all.svg",
                    eval::render_curve_svg("Precision-recall", "Recall", "Precision", pr_all, false, prevalence));
  }

  // Paired DeLong tests on the knees every pair of models scored.
  std::ostringstream cmp;
  cmp << "model_a,model_b,n,auc_a,auc_b,z,p,note\n";
  for (std::size_t a = 0; a < names.size(); ++a) {
    for (std::size_t b = a + 1; b < names.size(); ++b) {
      const auto& sa = sets.at(names[a]);
      const auto& sb = sets.at(names[b]);
      std::map<data::RecordKey, std::size_t> in_b;
      for (std::size_t i = 0; i < sb.size(); ++i) in_b.emplace(sb.keys[i], i);
      std::vector<double> xa;
      std::vector<double> xb;
      std::vector<int> labels;
      for (std::size_t i = 0; i < sa.size(); ++i) {
        const auto it = in_b.find(sa.keys[i]);
        if (it == in_b.end()) continue;
        xa.push_back(sa.scores[i]);
        xb.push_back(sb.scores[it->second]);
        labels.push_back(sa.labels[i]);
      }
      const auto npos = std::count(labels.begin(), labels.end(), 1);
      cmp << names[a] << ',' << names[b] << ',' << labels.size() << ',';
      if (npos == 0 || npos == static_cast<long>(labels.size())) {
        cmp << ",,,,not computable\n";
        continue;
      }
      const auto d = eval::delong_test(xa, xb, labels);
      cmp << data::format_double(d.auc_a) << ',' << data::format_double(d.auc_b) << ',' << data::format_double(d.z)
          << ',' << data::format_double(d.p) << ',' << (d.degenerate ? "zero variance" : "") << '\n';
    }
  }
  csv::write_file(cfg.out / "comparisons.csv", cmp.str());

  std::ostringstream shap;
  shap << "model,rank,feature,mean_abs_shap\n";
  for (const auto& name : {"model1", "model2", "model3", "fusion"}) {
    const auto path = cfg.out / "models" / (std::string(name) + ".json");
    if (!fs::exists(path)) continue;
    const auto model = gbm::load_gbm(path);
    gbm::FeatureMatrix x;
    if (std::string(name) == "fusion") {
      x = gbm::fusion_features(m.records, load_cnn_scores(cfg));
    } else {
      x = gbm::reference_features(m.records, std::string(name).back() - '0');
    }
    const auto ranking = gbm::shap_importance(model, x);
    for (std::size_t i = 0; i < ranking.size(); ++i) {
      shap << name << ',' << i + 1 << ',' << ranking[i].feature << ','
           << data::format_double(ranking[i].mean_abs_shap) << '\n';
    }
  }
  csv::write_file(cfg.out / "shap.csv", shap.str());

  for (const auto& row : metrics) {
    if (row.computable) {
      say(cfg, "evaluate: " + row.model + " AUC " + data::format_double(row.auc) + " AP " + data::format_double(row.ap));
    }
  }
  write_meta(cfg, "evaluate", {"models=" + std::to_string(names.size())});
}

}  // namespace pfoa::pipeline
