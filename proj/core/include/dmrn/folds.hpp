#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dmrn {

/// k disjoint test folds of study indices that together cover every study.
struct FoldPlan {
  std::vector<std::vector<std::size_t>> folds;
  std::uint64_t seed = 0;

  std::size_t k() const { return folds.size(); }
  /// Every study not in fold `f`, ascending.
  std::vector<std::size_t> train_indices(std::size_t f) const;
};

/// Stratified assignment: each class's studies are shuffled and dealt
/// round-robin, continuing where the previous class stopped, so fold sizes
/// differ by at most one overall and per class. Throws ContractError when
/// k < 2 or k exceeds the study count.
FoldPlan make_folds(std::span<const int> study_labels, std::size_t k, std::uint64_t seed);

}  // namespace dmrn
