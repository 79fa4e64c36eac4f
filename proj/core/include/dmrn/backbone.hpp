#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "dmrn/ops.hpp"

namespace dmrn {

inline constexpr std::size_t kStageCount = 4;

/// Miniature residual network: a 3×3 stem, a stride-2 downsample, then four
/// stages whose first block halves the resolution. Stage t therefore runs
/// at input_size / 2^(t+1), i.e. S/4, S/8, S/16, S/32.
struct BackboneConfig {
  std::size_t input_size = 64;
  std::size_t input_channels = 1;
  std::array<std::size_t, kStageCount> stage_channels{16, 32, 64, 128};
  std::size_t blocks_per_stage = 2;

  /// Throws ConfigError unless input_size is a positive multiple of 32,
  /// channel widths are positive and input has 1 or 3 channels.
  void validate() const;

  /// Spatial size of stage `stage` (0-based).
  std::size_t stage_size(std::size_t stage) const { return input_size >> (stage + 2); }

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

enum class Mode { train, eval };

/// Convolution followed by batch norm; the convolution has no bias.
template <typename T>
struct ConvBn {
  Tensor<T> weight;
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> stats;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

/// out = relu(bn2(conv2(relu(bn1(conv1(x))))) + skip(x)).
/// skip is a 1×1 projection when stride or width changes, identity otherwise.
template <typename T>
struct ResidualBlock {
  ConvBn<T> first;
  ConvBn<T> second;
  std::optional<ConvBn<T>> projection;
};

template <typename T>
struct BackboneParams {
  ConvBn<T> stem;
  ConvBn<T> downsample;
  std::array<std::vector<ResidualBlock<T>>, kStageCount> stages;
};

/// He-initialized backbone. Batch-norm scale 1, shift 0.
template <typename T>
BackboneParams<T> init_backbone(const BackboneConfig& config, std::mt19937_64& rng);

template <typename T>
Var<T> conv_bn(Var<T> x, ConvBn<T>& layer, Mode mode);

template <typename T>
Var<T> residual_block(Var<T> x, ResidualBlock<T>& block, Mode mode);

/// Runs x[N,C,S,S] through the backbone and returns the final block output
/// of each stage.
template <typename T>
std::array<Var<T>, kStageCount> forward_stages(Var<T> x, BackboneParams<T>& params,
                                               Mode mode);

}  // namespace dmrn
