#include "dmrn/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dmrn {

void LossConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("loss: margin must be positive");
  if (stages.empty()) throw ConfigError("loss: at least one stage must be used");
  for (double w : stage_weights) {
    if (!(w >= 0.0)) throw ConfigError("loss: stage weights must be non-negative");
  }
}

double stage_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("stage_distance: dimensions " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

double pair_loss(double distance, int label, double margin) {
  if (label == 0) return 0.5 * distance * distance;
  const double gap = distance >= margin ? 0.0 : margin - distance;
  return 0.5 * gap * gap;
}

double pair_loss_derivative(double distance, int label, double margin) {
  if (label == 0) return distance;
  return distance < margin ? -(margin - distance) : 0.0;
}

double total_loss(std::span<const PairDistances> pairs, const LossConfig& config) {
  double total = 0.0;
  for (std::size_t t = 0; t < kStageCount; ++t) {
    if (!config.stages.contains(t)) continue;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (!pairs[i].distance[t]) {
        throw ContractError("total_loss: pair " + std::to_string(i) +
                            " has no distance for stage " + std::to_string(t + 1));
      }
      total += config.stage_weights[t] *
               pair_loss(*pairs[i].distance[t], pairs[i].label, config.margin);
    }
  }
  return total;
}

template <typename T>
Var<T> contrastive_terms(Var<T> distances, std::span<const int> labels, T margin) {
  const auto d = distances.value().data();
  if (distances.shape().size() != 1 || d.size() != labels.size()) {
    throw ShapeError("contrastive_terms: " + std::to_string(labels.size()) +
                     " labels for distances " + shape_to_string(distances.shape()));
  }
  Tensor<T> y(Shape{d.size()});
  for (std::size_t i = 0; i < d.size(); ++i) {
    y[i] = static_cast<T>(pair_loss(d[i], labels[i], margin));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  const std::size_t di = distances.id;
  return distances.tape->record(
      std::move(y), {di}, [di, margin, lab = std::move(lab)](Tape<T>& t, std::size_t self) {
        const auto dy = t.grad(self);
        const auto dv = t.value(di).data();
        auto dd = t.grad(di);
        for (std::size_t i = 0; i < dd.size(); ++i) {
          dd[i] += dy[i] * static_cast<T>(pair_loss_derivative(dv[i], lab[i], margin));
        }
      });
}

template <typename T>
MultiScaleLoss<T> multi_scale_loss(const StageEmbeddings<T>& first,
                                   const StageEmbeddings<T>& second,
                                   std::span<const int> labels, const LossConfig& config) {
  config.validate();
  MultiScaleLoss<T> out;
  std::optional<Var<T>> total;
  for (std::size_t t = 0; t < kStageCount; ++t) {
    if (!config.stages.contains(t)) continue;
    if (!first[t] || !second[t]) {
      throw ContractError("multi_scale_loss: missing embedding for stage " +
                          std::to_string(t + 1));
    }
    Var<T> dist = l2_distance(*first[t], *second[t]);
    if (dist.shape().empty()) dist = reshape(dist, Shape{1});
    Var<T> terms = contrastive_terms(dist, labels, static_cast<T>(config.margin));
    Var<T> stage_sum = sum(terms);
    if (config.stage_weights[t] != 1.0) {
      stage_sum = scale(stage_sum, static_cast<T>(config.stage_weights[t]));
    }
    total = total ? add(*total, stage_sum) : stage_sum;
    out.distances[t] = dist;
    out.terms[t] = terms;
    out.term_count += labels.size();
  }
  out.total = *total;
  return out;
}

template Var<float> contrastive_terms(Var<float>, std::span<const int>, float);
template Var<double> contrastive_terms(Var<double>, std::span<const int>, double);
template MultiScaleLoss<float> multi_scale_loss(const StageEmbeddings<float>&,
                                                const StageEmbeddings<float>&,
                                                std::span<const int>, const LossConfig&);
template MultiScaleLoss<double> multi_scale_loss(const StageEmbeddings<double>&,
                                                 const StageEmbeddings<double>&,
                                                 std::span<const int>, const LossConfig&);

}  // namespace dmrn
