#pragma once

#include <cstddef>
#include <random>

#include "dmrn/ops.hpp"

namespace dmrn {

/// Output width of an RPU: a quarter of the channel count, at least 1.
constexpr std::size_t rpu_embedding_dim(std::size_t channels) {
  return channels / 4 == 0 ? 1 : channels / 4;
}

/// Residual pooling unit weights. No batch norm anywhere inside.
template <typename T>
struct RpuParams {
  Tensor<T> conv_a;     // [C,C,3,3]
  Tensor<T> conv_b;     // [C,C,3,3]
  Tensor<T> fc_weight;  // [C/4,C]
  Tensor<T> fc_bias;    // [C/4]

  std::size_t channels() const { return conv_a.dim(0); }
  std::size_t embedding_dim() const { return fc_weight.dim(0); }
};

template <typename T>
RpuParams<T> init_rpu(std::size_t channels, std::mt19937_64& rng);

/// conv_a -> relu -> conv_b, plus the input map, averaged to 1×1 and
/// reduced by the fully connected layer: [N,C,H,W] -> [N, C/4].
/// The summed map and the fc output are left linear.
template <typename T>
Var<T> rpu_forward(Var<T> feature_map, RpuParams<T>& params);

}  // namespace dmrn
