#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dmrn {

/// Two training-set indices and the pair label: 0 same class, 1 different.
struct TrainingPair {
  std::size_t anchor = 0;
  std::size_t partner = 0;
  int label = 0;

  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

enum class SamplerMode {
  uniform,         // partner uniform over all other slices
  class_balanced,  // partner class uniform over classes, then partner within it
};

SamplerMode parse_sampler_mode(const std::string& text);
std::string to_string(SamplerMode mode);

struct SamplerConfig {
  SamplerMode mode = SamplerMode::class_balanced;
  std::uint64_t seed = 0;
  /// 0 means one pair per training slice (P = f).
  std::size_t pairs_per_epoch = 0;
  /// Declared class count; 0 infers max(label) + 1. Declared classes
  /// without slices are skipped by the balanced sampler with a warning.
  std::size_t num_classes = 0;
};

struct PairSample {
  std::vector<TrainingPair> pairs;
  std::vector<std::string> warnings;
};

/// Draws one epoch of pairs over a training set given by its class labels.
/// Anchors cycle through every slice (each exactly once when P = f); the
/// returned list is shuffled. Self-pairs never occur.
PairSample sample_pairs(std::span<const int> labels, const SamplerConfig& config);

/// Pairs produced by exhaustive pairing of f items: f(f−1)/2.
constexpr std::uint64_t exhaustive_count(std::uint64_t f) {
  return f < 2 ? 0 : f * (f - 1) / 2;
}

/// CSV with header anchor_id,partner_id,Y.
void write_pairs_csv(std::ostream& out, std::span<const TrainingPair> pairs,
                     std::span<const std::string> ids);

}  // namespace dmrn
