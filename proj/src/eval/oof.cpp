#include "pfoa/eval/oof.hpp"

#include <map>

#include "pfoa/error.hpp"
#include "pfoa/rng.hpp"

namespace pfoa::eval {

std::vector<std::string> ScoredSet::subject_ids() const {
  std::vector<std::string> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(k.subject_id);
  return out;
}

ScoredSet ScoredSet::subset(std::span<const std::size_t> idx) const {
  ScoredSet s;
  for (std::size_t i : idx) {
    s.keys.push_back(keys[i]);
    s.scores.push_back(scores[i]);
    s.labels.push_back(labels[i]);
    s.folds.push_back(folds[i]);
    s.kl.push_back(kl[i]);
    s.womac_pain.push_back(womac_pain[i]);
  }
  return s;
}

void validate(const ScoredSet& s) {
  const auto n = s.keys.size();
  if (s.scores.size() != n || s.labels.size() != n || s.folds.size() != n || s.kl.size() != n ||
      s.womac_pain.size() != n) {
    throw ShapeError("scored set columns differ in length");
  }
}

ScoredSet assemble_oof(const FoldAssignment& folds, std::span<const FoldModel> models,
                       const data::DatasetManifest& manifest) {
  std::map<int, const FoldModel*> by_fold;
  for (const auto& m : models) {
    if (!by_fold.emplace(m.fold, &m).second) throw ValidationError("two models for fold " + std::to_string(m.fold));
  }
  for (int f = 0; f < folds.k; ++f) {
    if (!by_fold.count(f)) throw ValidationError("no model for fold " + std::to_string(f));
  }

  ScoredSet out;
  for (const auto& r : manifest.records) {
    if (!r.pfoa) throw ValidationError(r.key().str() + " has no PFOA label");
    const int f = folds.fold(r.subject_id);
    const auto& model = *by_fold.at(f);
    if (model.training_subjects.count(r.subject_id)) {
      throw ValidationError("leakage: model for fold " + std::to_string(f) + " was trained on " + r.subject_id);
    }
    out.keys.push_back(r.key());
    out.scores.push_back(model.score(r));
    out.labels.push_back(*r.pfoa ? 1 : 0);
    out.folds.push_back(f);
    out.kl.push_back(r.has_standard_kl() ? r.kl_grade : std::nullopt);
    out.womac_pain.push_back(r.womac_pain);
  }
  return out;
}

MetricsRow evaluate_scores(const std::string& model, const std::string& group, const ScoredSet& set, int n_boot,
                           std::uint64_t seed) {
  validate(set);
  MetricsRow row;
  row.model = model;
  row.group = group;
  row.n = set.size();
  for (int l : set.labels) row.n_pos += static_cast<std::size_t>(l);
  row.computable = row.n_pos > 0 && row.n_pos < row.n;
  if (!row.computable) return row;

  row.auc = roc_auc(set.scores, set.labels);
  row.ap = average_precision(set.scores, set.labels);
  const auto auc_reps = bootstrap_replicates(set.scores, set.labels, roc_auc, n_boot, seed);
  const auto ap_reps = bootstrap_replicates(set.scores, set.labels, average_precision, n_boot, seed);
  row.auc_ci = percentile_interval(auc_reps, 0.95);
  row.ap_ci = percentile_interval(ap_reps, 0.95);
  return row;
}

std::vector<std::string> kl_groups(const ScoredSet& set) {
  std::vector<std::string> out;
  for (const auto& k : set.kl) {
    if (!k) out.emplace_back("KL missing");
    else if (*k <= 1) out.emplace_back("No TF OA (KL0-1)");
    else if (*k == 2) out.emplace_back("Early TF OA (KL2)");
    else out.emplace_back("Severe TF OA (KL3-4)");
  }
  return out;
}

std::vector<std::string> pain_groups(const ScoredSet& set) {
  std::vector<double> present;
  for (const auto& p : set.womac_pain) {
    if (p) present.push_back(*p);
  }
  std::vector<std::string> out;
  if (present.empty()) return std::vector<std::string>(set.size(), "Pain missing");
  const double p25 = percentile(present, 25.0);
  const double p75 = percentile(present, 75.0);
  for (const auto& p : set.womac_pain) {
    if (!p) out.emplace_back("Pain missing");
    else if (*p <= p25) out.emplace_back("Low pain (<=P25)");
    else if (*p <= p75) out.emplace_back("Moderate pain (P25-P75]");
    else out.emplace_back("High pain (>P75)");
  }
  return out;
}

std::vector<MetricsRow> subgroup_report(const std::string& model, const ScoredSet& set, int n_boot,
                                        std::uint64_t seed) {
  validate(set);
  static const std::vector<std::string> kOrder = {
      "No TF OA (KL0-1)", "Early TF OA (KL2)", "Severe TF OA (KL3-4)", "KL missing",
      "Low pain (<=P25)", "Moderate pain (P25-P75]", "High pain (>P75)", "Pain missing"};
  const auto kl = kl_groups(set);
  const auto pain = pain_groups(set);

  std::vector<MetricsRow> rows;
  rows.push_back(evaluate_scores(model, "All", set, n_boot, seed));
  for (std::size_t g = 0; g < kOrder.size(); ++g) {
    const auto& labels = g < 4 ? kl : pain;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == kOrder[g]) idx.push_back(i);
    }
    if (idx.empty() && kOrder[g].ends_with("missing")) continue;
    rows.push_back(evaluate_scores(model, kOrder[g], set.subset(idx), n_boot, mix64(seed + g + 1)));
  }
  return rows;
}

}  // namespace pfoa::eval
