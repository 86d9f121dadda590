// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: pfoa_acceptance [scratch-dir [criteria, e.g. 8,9]]
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "pfoa/csv.hpp"
#include "pfoa/eval/folds.hpp"
#include "pfoa/eval/metrics.hpp"
#include "pfoa/gbm/shap.hpp"
#include "pfoa/nn/train.hpp"
#include "pfoa/pipeline.hpp"
#include "pfoa/roi.hpp"

namespace fs = std::filesystem;
namespace pl = pfoa::pipeline;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// Rows of a CSV file keyed by the joined leading columns.
std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  const auto text = pfoa::csv::read_file(path);
  for (const auto& [n, line] : pfoa::csv::lines(text)) {
    std::vector<std::string> cells;
    for (auto c : pfoa::csv::split(line)) cells.emplace_back(c);
    rows.push_back(std::move(cells));
  }
  return rows;
}

fs::path g_root;
double g_gate_miss_rate = -1.0;
double g_gate_miss_rate_held_out = -1.0;

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  double worst_layer = 0.0;
  double worst_net = 0.0;
  std::string worst_name;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const auto& c : gradcheck::layer_checks(seed)) {
      if (c.rel_error > worst_layer) worst_name = c.name;
      worst_layer = std::max(worst_layer, c.rel_error);
    }
  }
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (const auto& c : gradcheck::network_checks(seed)) worst_net = std::max(worst_net, c.rel_error);
  }
  const double t = seconds_since(t0);
  return {worst_layer < 1e-4 && worst_net < 1e-3 && t < 60.0,
          "max layer rel err " + num(worst_layer) + " (" + worst_name + "), max network rel err " + num(worst_net) +
              ", " + num(t, 3) + " s"};
}

Outcome metric_oracles() {
  auto rng = pfoa::make_stream(2, 0xacc);
  int auc_mismatch = 0;
  int ap_mismatch = 0;
  int with_ties = 0;
  double worst_ap = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + pfoa::uniform_index(rng, 29);
    const auto levels = 1 + pfoa::uniform_index(rng, 12);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = pfoa::uniform01(rng) < 0.4;
      s[i] = static_cast<double>(pfoa::uniform_index(rng, levels)) / static_cast<double>(levels);
    }
    // Force both classes.
    const auto pos = pfoa::uniform_index(rng, n);
    y[pos] = 1;
    y[(pos + 1 + pfoa::uniform_index(rng, n - 1)) % n] = 0;
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    with_ties += std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
    auc_mismatch += pfoa::eval::roc_auc(s, y) != oracle::pair_count_auc(s, y);
    const double d = std::abs(pfoa::eval::average_precision(s, y) - oracle::threshold_enumeration_ap(s, y));
    worst_ap = std::max(worst_ap, d);
    ap_mismatch += d != 0.0;
  }
  return {auc_mismatch == 0 && ap_mismatch == 0,
          std::to_string(auc_mismatch) + " AUC and " + std::to_string(ap_mismatch) +
              " AP mismatches in 1000 sets (" + std::to_string(with_ties) + " with ties), max AP diff " +
              num(worst_ap)};
}

Outcome delong() {
  auto rng = pfoa::make_stream(3, 0xacc);
  std::vector<double> s(120);
  std::vector<int> y(120);
  for (std::size_t i = 0; i < s.size(); ++i) {
    y[i] = i % 3 == 0;
    s[i] = pfoa::standard_normal(rng) + y[i];
  }
  const auto same = pfoa::eval::delong_test(s, s, y);
  int outside = 0;
  double worst = 0.0;
  for (std::uint64_t set = 0; set < 50; ++set) {
    auto g = pfoa::make_stream(set, 0xde1);
    std::vector<double> a(200);
    std::vector<double> b(200);
    std::vector<int> labels(200);
    const double effect_a = 0.5 + pfoa::uniform01(g);
    const double effect_b = 0.5 + pfoa::uniform01(g);
    for (std::size_t i = 0; i < 200; ++i) {
      labels[i] = pfoa::uniform01(g) < 0.3;
      const double shared = pfoa::standard_normal(g);
      a[i] = shared + effect_a * labels[i] + 0.8 * pfoa::standard_normal(g);
      b[i] = shared + effect_b * labels[i] + 0.8 * pfoa::standard_normal(g);
    }
    const auto r = pfoa::eval::delong_test(a, b, labels);
    std::vector<double> diffs;
    for (int i = 0; i < 2000; ++i) {
      auto brng = pfoa::make_stream(set, 0xb007, static_cast<std::uint64_t>(i));
      const auto idx = pfoa::eval::stratified_resample(labels, brng);
      std::vector<double> ra, rb;
      std::vector<int> ry;
      for (auto j : idx) {
        ra.push_back(a[j]);
        rb.push_back(b[j]);
        ry.push_back(labels[j]);
      }
      diffs.push_back(pfoa::eval::roc_auc(ra, ry) - pfoa::eval::roc_auc(rb, ry));
    }
    double mean = 0.0;
    for (double v : diffs) mean += v;
    mean /= static_cast<double>(diffs.size());
    double var = 0.0;
    for (double v : diffs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(diffs.size() - 1);
    const double rel = std::abs(r.variance / var - 1.0);
    worst = std::max(worst, rel);
    outside += rel > 0.25;
  }
  return {same.p == 1.0 && outside == 0,
          "identical scores p = " + num(same.p) + "; " + std::to_string(outside) +
              "/50 sets outside 25%, worst |var_DeLong / var_boot - 1| = " + num(worst, 3)};
}

Outcome cv_integrity() {
  int leaks = 0;
  int not_partition = 0;
  int feasible = 0;
  int unbalanced = 0;
  double worst_gap = 0.0;
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    auto rng = pfoa::make_stream(trial, 0xcf);
    const int subjects = 10 + static_cast<int>(pfoa::uniform_index(rng, 1500));
    const int k = 2 + static_cast<int>(pfoa::uniform_index(rng, 9));
    const bool bilateral = pfoa::uniform01(rng) < 0.5;
    const double prevalence = 0.05 + 0.45 * pfoa::uniform01(rng);
    std::vector<std::string> ids;
    std::vector<int> labels;
    int max_knees = 1;
    for (int s = 0; s < subjects; ++s) {
      const int knees = bilateral ? 1 + static_cast<int>(pfoa::uniform_index(rng, 2)) : 1;
      max_knees = std::max(max_knees, knees);
      const int label = pfoa::uniform01(rng) < prevalence;
      for (int i = 0; i < knees; ++i) {
        ids.push_back("S" + std::to_string(s));
        labels.push_back(pfoa::uniform01(rng) < 0.85 ? label : 1 - label);
      }
    }
    if (subjects < k) continue;
    const auto folds = pfoa::eval::stratified_group_kfold(ids, labels, k, trial);
    const auto a = oracle::audit_folds(folds, ids, labels);
    leaks += !a.no_leakage;
    not_partition += !a.partition;
    if (static_cast<double>(ids.size()) / k >= 50.0 * max_knees) {
      ++feasible;
      worst_gap = std::max(worst_gap, a.max_rate_gap);
      unbalanced += a.max_rate_gap > 0.02;
    }
  }
  return {leaks == 0 && not_partition == 0 && unbalanced == 0,
          std::to_string(leaks) + " leaking and " + std::to_string(not_partition) +
              " non-partitioning assignments in 1000; " + std::to_string(unbalanced) + "/" + std::to_string(feasible) +
              " feasible manifests off balance, worst gap " + num(100.0 * worst_gap, 3) + " points"};
}

Outcome treeshap() {
  double worst_local = 0.0;
  double worst_exact = 0.0;
  std::size_t rows_checked = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto rng = pfoa::make_stream(seed, 0x5a);
    const std::size_t features = 1 + pfoa::uniform_index(rng, seed < 30 ? 5 : 10);
    pfoa::gbm::FeatureMatrix x;
    for (std::size_t f = 0; f < features; ++f) x.names.push_back("f" + std::to_string(f));
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
      std::vector<double> row(features);
      for (auto& v : row) v = pfoa::uniform01(rng) < 0.1 ? pfoa::gbm::kMissing : pfoa::standard_normal(rng);
      const double signal = std::isnan(row[0]) ? 0.0 : row[0];
      y.push_back(pfoa::uniform01(rng) < 1.0 / (1.0 + std::exp(-2.0 * signal)));
      x.push_row(row);
    }
    pfoa::gbm::GbmParams p;
    p.num_rounds = seed < 30 ? 1 + static_cast<int>(seed % 3) : 50;
    p.max_leaves = 8;
    p.min_samples_leaf = 5;
    p.learning_rate = 0.2;
    p.bagging_fraction = seed % 2 ? 0.8 : 1.0;
    p.seed = seed;
    const auto m = pfoa::gbm::fit_gbm(x, y, p);
    for (std::size_t r = 0; r < x.rows; ++r) {
      const auto s = pfoa::gbm::treeshap(m, x.row(r));
      double sum = s.base;
      for (double v : s.phi) sum += v;
      worst_local = std::max(worst_local, std::abs(sum - pfoa::gbm::raw_score(m, x.row(r))));
      ++rows_checked;
      if (seed < 30) {
        const auto phi = oracle::coalition_shapley(m, x.row(r));
        for (std::size_t f = 0; f < features; ++f) worst_exact = std::max(worst_exact, std::abs(phi[f] - s.phi[f]));
      }
    }
  }
  return {worst_local < 1e-9 && worst_exact < 1e-12,
          "max local-accuracy error " + num(worst_local) + " over " + std::to_string(rows_checked) +
              " rows; max |phi - coalition Shapley| " + num(worst_exact) + " on 30 models (<= 5 features, <= 3 trees)"};
}

Outcome pfoa_rule() {
  int mismatches = 0;
  for (int code = 0; code < 256; ++code) {
    const int o = code & 3, j = (code >> 2) & 3, s = (code >> 4) & 3, c = (code >> 6) & 3;
    mismatches += pfoa::data::pfoa_label({o, j, s, c}) != oracle::pfoa_rule(o, j, s, c);
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over 256 grade combinations"};
}

Outcome lr_schedule() {
  const pfoa::nn::TrainConfig cfg;
  const double a = pfoa::nn::lr_at_epoch(cfg, 0);
  const double b = pfoa::nn::lr_at_epoch(cfg, 8);
  const double c = pfoa::nn::lr_at_epoch(cfg, 16);
  return {a == 1e-3 && b == 1e-4 && c == 1e-5, "epochs 0/8/16 -> " + pfoa::data::format_double(a) + " / " + pfoa::data::format_double(b) + " / " +
                                                   pfoa::data::format_double(c)};
}

pl::RunConfig small_cnn(pl::RunConfig c) {
  c.widths = {4, 8, 16};
  c.fc_hidden = 32;
  return c;
}

Outcome image_beats_clinical() {
  pl::RunConfig c = small_cnn({});
  c.out = g_root / "crit8";
  fs::remove_all(c.out);
  c.n_subjects = 1000;
  c.seed = 8;
  c.variant = 3;
  c.log = &std::cerr;
  const auto t0 = Clock::now();
  pl::cmd_synth(c);
  pl::cmd_preprocess(c);
  pl::cmd_roi(c);
  pl::cmd_train(c);
  pl::cmd_reference(c);
  pl::cmd_evaluate(c);
  const double t = seconds_since(t0);

  // Gate-miss rates for criterion 11.
  const auto det = read_csv(c.out / "detections.csv");
  std::size_t misses = 0;
  std::size_t held_out = 0;
  std::size_t held_out_misses = 0;
  for (std::size_t i = 1; i < det.size(); ++i) {
    const bool miss = det[i][3].empty();
    misses += miss;
    if (i > static_cast<std::size_t>(c.detector_train)) {
      ++held_out;
      held_out_misses += miss;
    }
  }
  g_gate_miss_rate = static_cast<double>(misses) / static_cast<double>(det.size() - 1);
  g_gate_miss_rate_held_out = static_cast<double>(held_out_misses) / static_cast<double>(held_out);

  std::map<std::string, double> auc;
  for (const auto& row : read_csv(c.out / "metrics.csv")) {
    if (row[1] == "All" && row[2] != "AUC") auc[row[0]] = pfoa::data::parse_double(row[2]);
  }
  double p = 1.0;
  for (const auto& row : read_csv(c.out / "comparisons.csv")) {
    if (row[0] == "cnn" && row[1] == "model3") p = pfoa::data::parse_double(row[6]);
  }
  const double gap = auc["cnn"] - auc["model3"];
  return {gap >= 0.05 && p < 0.05 && t < 900.0,
          "CNN AUC " + num(auc["cnn"]) + ", model 3 AUC " + num(auc["model3"]) + ", gap " + num(gap, 3) +
              ", DeLong p " + num(p, 3) + ", end-to-end " + num(t, 4) + " s"};
}

Outcome fusion_null() {
  pl::RunConfig c = small_cnn({});
  c.out = g_root / "crit9";
  fs::remove_all(c.out);
  c.n_subjects = 1000;
  c.seed = 9;
  c.clinical_effect = 0.0;
  c.roi_mode = "annotations";
  c.log = &std::cerr;
  pl::cmd_synth(c);
  pl::cmd_preprocess(c);
  pl::cmd_roi(c);
  pl::cmd_train(c);
  pl::cmd_fuse(c);
  const auto rows = read_csv(c.out / "fusion_comparison.csv");
  const auto& r = rows.at(1);
  const double fused = pfoa::data::parse_double(r[2]);
  const double cnn = pfoa::data::parse_double(r[3]);
  const double lo = pfoa::data::parse_double(r[6]);
  const double hi = pfoa::data::parse_double(r[7]);
  return {fused >= lo && fused <= hi,
          "fused AUC " + num(fused) + ", CNN AUC " + num(cnn) + " [" + num(lo) + ", " + num(hi) + "]"};
}

void small_chain(const fs::path& out) {
  pl::RunConfig c;
  c.out = out;
  fs::remove_all(out);
  c.n_subjects = 60;
  c.seed = 10;
  c.widths = {4, 8};
  c.fc_hidden = 8;
  c.epochs = 2;
  c.budget = 2;
  c.n_boot = 200;
  c.detector_train = 30;
  c.detector_epochs = 3;
  c.roi_threshold = 0.5;
  pl::cmd_synth(c);
  pl::cmd_preprocess(c);
  pl::cmd_roi(c);
  pl::cmd_train(c);
  for (int v = 1; v <= 3; ++v) {
    auto r = c;
    r.variant = v;
    pl::cmd_reference(r);
  }
  pl::cmd_fuse(c);
  pl::cmd_evaluate(c);
}

Outcome determinism() {
  const auto a = g_root / "crit10a";
  const auto b = g_root / "crit10b";
  small_chain(a);
  small_chain(b);
  int compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    const auto rel = fs::relative(e.path(), a);
    ++compared;
    if (!fs::exists(b / rel) || pfoa::csv::read_file(e.path()) != pfoa::csv::read_file(b / rel)) {
      differing.push_back(rel.string());
    }
  }
  std::string detail = std::to_string(compared) + " CSV files compared across two full runs, " +
                       std::to_string(differing.size()) + " differ";
  for (const auto& d : differing) detail += " " + d;
  return {compared >= 10 && differing.empty(), detail};
}

Outcome roi_gate() {
  auto rng = pfoa::make_stream(11, 0xacc);
  int wrong = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<pfoa::RoiDetection> d(pfoa::uniform_index(rng, 6));
    for (auto& x : d) x.confidence = static_cast<double>(pfoa::uniform_index(rng, 101)) / 100.0;
    const bool reaches = std::any_of(d.begin(), d.end(), [](const auto& x) { return x.confidence >= 0.90; });
    wrong += pfoa::roi::select_roi(d, 0.90).has_value() != reaches;
  }
  if (g_gate_miss_rate < 0.0) return {false, "gate-miss rate unavailable (criterion 8 run did not finish)"};
  return {wrong == 0 && g_gate_miss_rate < 0.05 && g_gate_miss_rate_held_out < 0.05,
          std::to_string(wrong) + " select_roi disagreements in 10000 sets; gate-miss rate " +
              num(100.0 * g_gate_miss_rate, 3) + "% of 1000 phantoms (" + num(100.0 * g_gate_miss_rate_held_out, 3) +
              "% on those not used to train the detector)"};
}

}  // namespace

int main(int argc, char** argv) {
  g_root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "pfoa_acceptance";
  fs::create_directories(g_root);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradients},
      {"metric oracles", metric_oracles},
      {"DeLong test", delong},
      {"CV integrity", cv_integrity},
      {"TreeSHAP", treeshap},
      {"PFOA rule", pfoa_rule},
      {"LR schedule", lr_schedule},
      {"image model beats clinical model", image_beats_clinical},
      {"fusion adds nothing without clinical signal", fusion_null},
      {"determinism", determinism},
      {"ROI gate", roi_gate},
  };
  std::set<std::size_t> only;
  if (argc > 2) {
    std::stringstream list(argv[2]);
    for (std::string item; std::getline(list, item, ',');) only.insert(std::stoul(item));
  }
  int failed = 0;
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::string line = "criterion " + std::to_string(i + 1) + " [" + criteria[i].first + "]: " +
                       (o.pass ? "PASS" : "FAIL") + " (" + o.detail + ")";
    std::cout << line << std::endl;
    lines.push_back(std::move(line));
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
