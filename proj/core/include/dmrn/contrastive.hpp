#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>

#include "dmrn/model.hpp"

namespace dmrn {

/// Multi-scale contrastive loss settings.
struct LossConfig {
  double margin = 1.0;
  StageSet stages = StageSet::all();
  std::array<double, kStageCount> stage_weights{1.0, 1.0, 1.0, 1.0};

  void validate() const;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// Euclidean distance between two stage embeddings.
double stage_distance(std::span<const double> a, std::span<const double> b);

/// Y = 0: D²/2. Y = 1: max(0, m − D)²/2.
double pair_loss(double distance, int label, double margin);

/// d(pair_loss)/dD. The kink at D = m takes the one-sided value 0.
double pair_loss_derivative(double distance, int label, double margin);

/// Distances of one pair at each stage (only the used stages need a value).
struct PairDistances {
  std::array<std::optional<double>, kStageCount> distance;
  int label = 0;
};

/// Weighted sum over used stages and all pairs of pair_loss. Throws
/// ContractError when a pair lacks a distance for a used stage.
double total_loss(std::span<const PairDistances> pairs, const LossConfig& config);

/// Number of additive terms in the total: pairs × |stages|.
inline std::size_t loss_term_count(std::size_t pairs, const LossConfig& config) {
  return pairs * config.stages.count();
}

/// Per-pair pair_loss of a distance vector [N], recorded on the tape.
template <typename T>
Var<T> contrastive_terms(Var<T> distances, std::span<const int> labels, T margin);

template <typename T>
struct MultiScaleLoss {
  Var<T> total;                                            // raw weighted sum
  std::array<std::optional<Var<T>>, kStageCount> distances;  // [N] per used stage
  std::array<std::optional<Var<T>>, kStageCount> terms;      // [N] per used stage
  std::size_t term_count = 0;
};

/// Loss of a batch of pairs from the two branches' stage embeddings.
template <typename T>
MultiScaleLoss<T> multi_scale_loss(const StageEmbeddings<T>& first,
                                   const StageEmbeddings<T>& second,
                                   std::span<const int> labels, const LossConfig& config);

}  // namespace dmrn
