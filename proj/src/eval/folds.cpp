#include "pfoa/eval/folds.hpp"

#include <algorithm>
#include <limits>

#include "pfoa/error.hpp"
#include "pfoa/rng.hpp"

namespace pfoa::eval {

int FoldAssignment::fold(const std::string& subject_id) const {
  const auto it = fold_of.find(subject_id);
  if (it == fold_of.end()) throw ValidationError("subject " + subject_id + " has no fold");
  return it->second;
}

FoldAssignment stratified_group_kfold(std::span<const std::string> subject_ids, std::span<const int> labels, int k,
                                      std::uint64_t seed) {
  if (subject_ids.size() != labels.size()) throw ShapeError("subject_ids and labels differ in length");
  if (k < 2) throw ValidationError("k must be >= 2");

  struct Group {
    std::string id;
    int pos = 0;
    int neg = 0;
  };
  std::map<std::string, Group> by_id;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& g = by_id[subject_ids[i]];
    g.id = subject_ids[i];
    (labels[i] ? g.pos : g.neg) += 1;
  }
  if (by_id.size() < static_cast<std::size_t>(k)) {
    throw ValidationError("fewer subjects (" + std::to_string(by_id.size()) + ") than folds (" +
                          std::to_string(k) + ")");
  }

  std::vector<Group> groups;
  groups.reserve(by_id.size());
  double total_pos = 0.0;
  double total_neg = 0.0;
  for (auto& [id, g] : by_id) {
    total_pos += g.pos;
    total_neg += g.neg;
    groups.push_back(std::move(g));
  }
  auto rng = make_stream(seed, 0xf01d);
  shuffle_portable(groups.begin(), groups.end(), rng);
  std::stable_sort(groups.begin(), groups.end(),
                   [](const Group& a, const Group& b) { return a.pos + a.neg > b.pos + b.neg; });

  const double target_pos = total_pos / k;
  const double target_neg = total_neg / k;
  std::vector<double> pos(k, 0.0);
  std::vector<double> neg(k, 0.0);
  std::vector<int> members(k, 0);
  int empty = k;

  FoldAssignment out;
  out.k = k;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    const bool must_fill = groups.size() - gi <= static_cast<std::size_t>(empty);
    int best = -1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (int f = 0; f < k; ++f) {
      if (must_fill && members[f] > 0) continue;
      const double dp = pos[f] + g.pos - target_pos;
      const double dn = neg[f] + g.neg - target_neg;
      const double cp = pos[f] - target_pos;
      const double cn = neg[f] - target_neg;
      const double cost = dp * dp + dn * dn - cp * cp - cn * cn;
      if (cost < best_cost) {
        best_cost = cost;
        best = f;
      }
    }
    pos[best] += g.pos;
    neg[best] += g.neg;
    if (members[best]++ == 0) --empty;
    out.fold_of.emplace(g.id, best);
  }
  return out;
}

FoldAssignment stratified_group_kfold(const data::DatasetManifest& m, int k, std::uint64_t seed) {
  std::vector<std::string> ids;
  std::vector<int> labels;
  ids.reserve(m.records.size());
  labels.reserve(m.records.size());
  for (const auto& r : m.records) {
    ids.push_back(r.subject_id);
    labels.push_back(r.pfoa.value_or(false) ? 1 : 0);
  }
  return stratified_group_kfold(ids, labels, k, seed);
}

std::vector<std::vector<std::size_t>> fold_members(const FoldAssignment& folds,
                                                   std::span<const std::string> subject_ids) {
  std::vector<std::vector<std::size_t>> out(folds.k);
  for (std::size_t i = 0; i < subject_ids.size(); ++i) out[folds.fold(subject_ids[i])].push_back(i);
  return out;
}

}  // namespace pfoa::eval
