#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmrn/contrastive.hpp"
#include "dmrn/dataset.hpp"
#include "dmrn/model.hpp"
#include "dmrn/pairing.hpp"

namespace dmrn {

struct TrainConfig {
  BackboneConfig model;
  std::size_t epochs = 200;
  std::size_t batch_size = 10;  // pairs
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Multiply the learning rate by lr_gamma every lr_step_epochs (0 = off).
  std::size_t lr_step_epochs = 0;
  double lr_gamma = 0.1;
  std::uint64_t seed = 1;
  SamplerConfig sampler;
  LossConfig loss;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double raw_loss = 0.0;        // weighted sum over all pairs and stages
  double mean_pair_loss = 0.0;  // raw_loss / pairs
  std::array<std::optional<double>, kStageCount> stage_loss;
  double same_loss = 0.0;       // contribution of Y = 0 pairs
  double different_loss = 0.0;  // contribution of Y = 1 pairs
  std::size_t same_pairs = 0;
  std::size_t different_pairs = 0;
  double learning_rate = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::vector<std::string> warnings;

  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  ModelParams<float> params;
  TrainingLog log;
};

/// Sampler settings of one epoch (1-based); pairs are redrawn every epoch
/// from a seed derived from the training seed and the epoch number.
SamplerConfig epoch_sampler(const TrainConfig& config, std::size_t epoch);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains the twin network on images [N,C,S,S] with per-image class labels.
/// Pairs are resampled every epoch. Throws ContractError when fewer than two
/// images or classes are given and TrainingError on a non-finite loss.
TrainResult train(const Tensor<float>& images, std::span<const int> labels,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

TrainResult train(std::span<const SliceRef> slices, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace dmrn
