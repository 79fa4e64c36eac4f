#include "dmrn/folds.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <string>

#include "dmrn/error.hpp"

namespace dmrn {

std::vector<std::size_t> FoldPlan::train_indices(std::size_t f) const {
  std::vector<std::size_t> out;
  for (std::size_t g = 0; g < folds.size(); ++g) {
    if (g != f) out.insert(out.end(), folds[g].begin(), folds[g].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FoldPlan make_folds(std::span<const int> study_labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ContractError("make_folds: k must be at least 2");
  if (k > study_labels.size()) {
    throw ContractError("make_folds: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(study_labels.size()) + " studies");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < study_labels.size(); ++i) by_class[study_labels[i]].push_back(i);

  std::mt19937_64 rng(seed);
  FoldPlan plan;
  plan.seed = seed;
  plan.folds.resize(k);
  std::size_t next = 0;
  for (auto& [label, members] : by_class) {
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[rng() % i]);
    }
    for (std::size_t idx : members) {
      plan.folds[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

}  // namespace dmrn
