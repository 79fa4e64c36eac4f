#include "dmrn/rpu.hpp"

#include <cmath>

namespace dmrn {

template <typename T>
RpuParams<T> init_rpu(std::size_t channels, std::mt19937_64& rng) {
  if (channels == 0) throw ConfigError("rpu: channel count must be positive");
  const std::size_t dim = rpu_embedding_dim(channels);
  auto fill = [&rng](Tensor<T>& t, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (T& v : t.data()) v = static_cast<T>(dist(rng));
  };
  RpuParams<T> p;
  const double conv_std = std::sqrt(2.0 / static_cast<double>(channels * 9));
  p.conv_a = Tensor<T>(Shape{channels, channels, 3, 3});
  fill(p.conv_a, conv_std);
  p.conv_b = Tensor<T>(Shape{channels, channels, 3, 3});
  fill(p.conv_b, conv_std);
  p.fc_weight = Tensor<T>(Shape{dim, channels});
  fill(p.fc_weight, std::sqrt(1.0 / static_cast<double>(channels)));
  p.fc_bias = Tensor<T>(Shape{dim}, T{0});
  return p;
}

template <typename T>
Var<T> rpu_forward(Var<T> feature_map, RpuParams<T>& params) {
  const Shape s = feature_map.shape();
  if (s.size() != 4 || s[1] != params.channels()) {
    throw ShapeError("rpu: feature map " + shape_to_string(s) + " does not match " +
                     std::to_string(params.channels()) + "-channel unit");
  }
  Tape<T>& tape = *feature_map.tape;
  Var<T> h = relu(conv2d(feature_map, tape.parameter(params.conv_a)));
  h = conv2d(h, tape.parameter(params.conv_b));
  h = add(h, feature_map);
  h = reshape(adaptive_avg_pool(h), Shape{s[0], s[1]});
  return fully_connected(h, tape.parameter(params.fc_weight),
                         tape.parameter(params.fc_bias));
}

template RpuParams<float> init_rpu(std::size_t, std::mt19937_64&);
template RpuParams<double> init_rpu(std::size_t, std::mt19937_64&);
template Var<float> rpu_forward(Var<float>, RpuParams<float>&);
template Var<double> rpu_forward(Var<double>, RpuParams<double>&);

}  // namespace dmrn
