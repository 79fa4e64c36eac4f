#include "dmrn/backbone.hpp"

#include <cmath>
#include <string>

namespace dmrn {

void BackboneConfig::validate() const {
  if (input_size == 0 || input_size % 32 != 0) {
    throw ConfigError("backbone: input_size must be a positive multiple of 32, got " +
                      std::to_string(input_size));
  }
  if (input_channels != 1 && input_channels != 3) {
    throw ConfigError("backbone: input_channels must be 1 or 3, got " +
                      std::to_string(input_channels));
  }
  for (std::size_t c : stage_channels) {
    if (c == 0) throw ConfigError("backbone: stage channel widths must be positive");
  }
  if (blocks_per_stage == 0) throw ConfigError("backbone: blocks_per_stage must be >= 1");
}

namespace {

template <typename T>
Tensor<T> he_normal(Shape shape, std::mt19937_64& rng) {
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> t(std::move(shape));
  for (T& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
ConvBn<T> make_conv_bn(std::size_t in, std::size_t out, std::size_t kernel,
                       std::size_t stride, std::mt19937_64& rng) {
  ConvBn<T> layer;
  layer.weight = he_normal<T>(Shape{out, in, kernel, kernel}, rng);
  layer.gamma = Tensor<T>(Shape{out}, T{1});
  layer.beta = Tensor<T>(Shape{out}, T{0});
  layer.stats.running_mean = Tensor<T>(Shape{out}, T{0});
  layer.stats.running_var = Tensor<T>(Shape{out}, T{1});
  layer.stride = stride;
  layer.padding = kernel / 2;
  return layer;
}

}  // namespace

template <typename T>
BackboneParams<T> init_backbone(const BackboneConfig& config, std::mt19937_64& rng) {
  config.validate();
  BackboneParams<T> p;
  const std::size_t stem_width = config.stage_channels[0];
  p.stem = make_conv_bn<T>(config.input_channels, stem_width, 3, 1, rng);
  p.downsample = make_conv_bn<T>(stem_width, stem_width, 3, 2, rng);

  std::size_t in = stem_width;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const std::size_t out = config.stage_channels[s];
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
      const std::size_t stride = b == 0 ? 2 : 1;
      ResidualBlock<T> block;
      block.first = make_conv_bn<T>(in, out, 3, stride, rng);
      block.second = make_conv_bn<T>(out, out, 3, 1, rng);
      if (stride != 1 || in != out) block.projection = make_conv_bn<T>(in, out, 1, stride, rng);
      p.stages[s].push_back(std::move(block));
      in = out;
    }
  }
  return p;
}

template <typename T>
Var<T> conv_bn(Var<T> x, ConvBn<T>& layer, Mode mode) {
  Tape<T>& tape = *x.tape;
  Var<T> y = conv2d(x, tape.parameter(layer.weight), {layer.stride, layer.padding});
  BatchNormOptions options;
  options.training = mode == Mode::train;
  return batch_norm(y, tape.parameter(layer.gamma), tape.parameter(layer.beta),
                    layer.stats, options);
}

template <typename T>
Var<T> residual_block(Var<T> x, ResidualBlock<T>& block, Mode mode) {
  Var<T> h = relu(conv_bn(x, block.first, mode));
  h = conv_bn(h, block.second, mode);
  Var<T> skip = block.projection ? conv_bn(x, *block.projection, mode) : x;
  return relu(add(h, skip));
}

template <typename T>
std::array<Var<T>, kStageCount> forward_stages(Var<T> x, BackboneParams<T>& params,
                                               Mode mode) {
  Var<T> h = relu(conv_bn(x, params.stem, mode));
  h = relu(conv_bn(h, params.downsample, mode));
  std::array<Var<T>, kStageCount> out;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    for (auto& block : params.stages[s]) h = residual_block(h, block, mode);
    out[s] = h;
  }
  return out;
}

#define DMRN_INSTANTIATE_BACKBONE(T)                                              \
  template BackboneParams<T> init_backbone(const BackboneConfig&, std::mt19937_64&); \
  template Var<T> conv_bn(Var<T>, ConvBn<T>&, Mode);                               \
  template Var<T> residual_block(Var<T>, ResidualBlock<T>&, Mode);                 \
  template std::array<Var<T>, kStageCount> forward_stages(Var<T>, BackboneParams<T>&, \
                                                          Mode);

DMRN_INSTANTIATE_BACKBONE(float)
DMRN_INSTANTIATE_BACKBONE(double)

#undef DMRN_INSTANTIATE_BACKBONE

}  // namespace dmrn
