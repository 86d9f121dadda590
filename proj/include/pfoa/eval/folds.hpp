#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pfoa/datamodel.hpp"

namespace pfoa::eval {

// Subject-wise fold membership.
struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of;

  int fold(const std::string& subject_id) const;
};

// Greedy stratified group k-fold.
//
// Subjects are sorted by id, shuffled with the seed, then stably ordered by
// knee count (largest first). Each subject goes to the fold whose
// (positives, negatives) stay closest to the per-fold targets in squared
// distance; ties go to the lowest fold index. A fold is never left empty.
// One entry per knee; labels are 0/1.
FoldAssignment stratified_group_kfold(std::span<const std::string> subject_ids, std::span<const int> labels, int k,
                                      std::uint64_t seed);

// Records without a PFOA status count as negatives for balancing.
FoldAssignment stratified_group_kfold(const data::DatasetManifest& m, int k, std::uint64_t seed);

// Knee indices of each validation fold.
std::vector<std::vector<std::size_t>> fold_members(const FoldAssignment& folds,
                                                   std::span<const std::string> subject_ids);

}  // namespace pfoa::eval
