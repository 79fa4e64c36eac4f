#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "dmrn/backbone.hpp"
#include "dmrn/rpu.hpp"

namespace dmrn {

/// Subset of the four backbone stages, addressed 1..4 in user-facing APIs.
class StageSet {
 public:
  StageSet() = default;
  StageSet(std::initializer_list<int> stages);

  static StageSet all() { return StageSet{1, 2, 3, 4}; }
  /// Parses "1,2,3,4" or "4".
  static StageSet parse(const std::string& text);

  bool contains(std::size_t index0) const { return used_[index0]; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  std::vector<int> to_list() const;
  std::string to_string() const;

  friend bool operator==(const StageSet&, const StageSet&) = default;

 private:
  std::array<bool, kStageCount> used_{};
};

/// The single parameter set shared by both branches of the twin network:
/// backbone plus one RPU per stage.
template <typename T>
struct ModelParams {
  BackboneConfig config;
  BackboneParams<T> backbone;
  std::array<RpuParams<T>, kStageCount> rpus;

  /// Visits every trainable tensor as f(name, tensor) in a fixed order.
  template <typename F>
  void for_each_parameter(F&& f);
  /// Visits batch-norm running statistics as f(name, tensor).
  template <typename F>
  void for_each_buffer(F&& f);

  std::size_t parameter_count();
  void zero_grad();
};

template <typename T>
ModelParams<T> init_params(const BackboneConfig& config, std::uint64_t seed);

/// Per-stage embeddings; stages outside the requested set stay empty.
template <typename T>
using StageEmbeddings = std::array<std::optional<Var<T>>, kStageCount>;

/// Backbone followed by the RPUs of the requested stages.
template <typename T>
StageEmbeddings<T> embed_stages(Var<T> x, ModelParams<T>& params, Mode mode,
                                StageSet stages);

/// Two branches over one parameter object. Both branches resolve to the
/// same ModelParams, so every update reaches both.
template <typename T>
class TwinNetwork {
 public:
  explicit TwinNetwork(ModelParams<T>& shared) : params_(&shared) {}

  ModelParams<T>& branch(int /*which*/) { return *params_; }
  bool shares_weights() { return &branch(0) == &branch(1); }

  std::array<StageEmbeddings<T>, 2> forward(Var<T> first, Var<T> second, Mode mode,
                                            StageSet stages) {
    return {embed_stages(first, branch(0), mode, stages),
            embed_stages(second, branch(1), mode, stages)};
  }

 private:
  ModelParams<T>* params_;
};

namespace detail {

template <typename T, typename F>
void visit_conv_bn(const std::string& prefix, ConvBn<T>& layer, F& f, bool buffers) {
  if (buffers) {
    f(prefix + ".bn.running_mean", layer.stats.running_mean);
    f(prefix + ".bn.running_var", layer.stats.running_var);
  } else {
    f(prefix + ".conv.weight", layer.weight);
    f(prefix + ".bn.gamma", layer.gamma);
    f(prefix + ".bn.beta", layer.beta);
  }
}

template <typename T, typename F>
void visit_model(ModelParams<T>& m, F& f, bool buffers) {
  visit_conv_bn("stem", m.backbone.stem, f, buffers);
  visit_conv_bn("downsample", m.backbone.downsample, f, buffers);
  for (std::size_t s = 0; s < kStageCount; ++s) {
    for (std::size_t b = 0; b < m.backbone.stages[s].size(); ++b) {
      auto& block = m.backbone.stages[s][b];
      const std::string p = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      visit_conv_bn(p + ".first", block.first, f, buffers);
      visit_conv_bn(p + ".second", block.second, f, buffers);
      if (block.projection) visit_conv_bn(p + ".projection", *block.projection, f, buffers);
    }
  }
  if (buffers) return;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    const std::string p = "rpu" + std::to_string(s + 1);
    f(p + ".conv_a", m.rpus[s].conv_a);
    f(p + ".conv_b", m.rpus[s].conv_b);
    f(p + ".fc.weight", m.rpus[s].fc_weight);
    f(p + ".fc.bias", m.rpus[s].fc_bias);
  }
}

}  // namespace detail

template <typename T>
template <typename F>
void ModelParams<T>::for_each_parameter(F&& f) {
  detail::visit_model(*this, f, false);
}

template <typename T>
template <typename F>
void ModelParams<T>::for_each_buffer(F&& f) {
  detail::visit_model(*this, f, true);
}

}  // namespace dmrn
