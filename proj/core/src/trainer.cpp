#include "dmrn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ostream>
#include <set>
#include <sstream>

#include "dmrn/error.hpp"

namespace dmrn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Tensor<float> gather(const Tensor<float>& images, std::span<const std::size_t> rows) {
  Shape shape = images.shape();
  const std::size_t per = images.numel() / shape[0];
  shape[0] = rows.size();
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::memcpy(out.data().data() + i * per, images.data().data() + rows[i] * per,
                per * sizeof(float));
  }
  return out;
}

struct Velocity {
  std::vector<std::vector<float>> buffers;
};

void sgd_step(ModelParams<float>& params, Velocity& velocity, double lr, double momentum,
              double weight_decay) {
  std::size_t k = 0;
  params.for_each_parameter([&](const std::string&, Tensor<float>& p) {
    if (velocity.buffers.size() <= k) velocity.buffers.emplace_back(p.numel(), 0.0f);
    auto& v = velocity.buffers[k++];
    auto value = p.data();
    if (!p.has_grad()) p.ensure_grad();
    auto grad = p.grad();
    const float mu = static_cast<float>(momentum);
    const float wd = static_cast<float>(weight_decay);
    const float step = static_cast<float>(lr);
    for (std::size_t i = 0; i < value.size(); ++i) {
      v[i] = mu * v[i] + grad[i] + wd * value[i];
      value[i] -= step * v[i];
    }
  });
}

std::string stage_distance_summary(const MultiScaleLoss<float>& loss) {
  std::ostringstream out;
  for (std::size_t s = 0; s < kStageCount; ++s) {
    if (!loss.distances[s]) continue;
    out << " stage" << (s + 1) << "=[";
    const auto& d = loss.distances[s]->value();
    for (std::size_t i = 0; i < d.numel(); ++i) out << (i ? "," : "") << d.data()[i];
    out << ']';
  }
  return out.str();
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and non-negative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (lr_step_epochs > 0 && !(lr_gamma > 0.0)) throw ConfigError("lr_gamma must be positive");
}

void TrainingLog::write_csv(std::ostream& out) const {
  out << "epoch,raw_loss,mean_pair_loss";
  for (std::size_t s = 0; s < kStageCount; ++s) out << ",stage" << (s + 1) << "_loss";
  out << ",same_loss,different_loss,same_pairs,different_pairs,learning_rate\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  for (const auto& e : epochs) {
    out << e.epoch << ',' << num(e.raw_loss) << ',' << num(e.mean_pair_loss);
    for (const auto& s : e.stage_loss) out << ',' << (s ? num(*s) : std::string());
    out << ',' << num(e.same_loss) << ',' << num(e.different_loss) << ',' << e.same_pairs << ','
        << e.different_pairs << ',' << num(e.learning_rate) << '\n';
  }
}

SamplerConfig epoch_sampler(const TrainConfig& config, std::size_t epoch) {
  SamplerConfig sampler = config.sampler;
  sampler.seed = splitmix64(config.seed ^ splitmix64(config.sampler.seed + epoch));
  return sampler;
}

TrainResult train(const Tensor<float>& images, std::span<const int> labels,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (images.shape().size() != 4) throw ShapeError("train: images must be [N,C,S,S]");
  if (images.shape()[0] != labels.size()) throw ShapeError("train: label count mismatch");
  if (labels.size() < 2) throw ContractError("train: need at least two training slices");
  if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
    throw ContractError("train: training slices must span at least two classes");
  }
  const auto& m = config.model;
  if (images.shape()[1] != m.input_channels || images.shape()[2] != m.input_size ||
      images.shape()[3] != m.input_size) {
    throw ShapeError("train: images " + shape_to_string(images.shape()) +
                     " do not match the model input");
  }

  TrainResult result{init_params<float>(config.model, config.seed), {}};
  ModelParams<float>& params = result.params;
  TwinNetwork<float> twin(params);
  Velocity velocity;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    PairSample sample = sample_pairs(labels, epoch_sampler(config, epoch));
    if (epoch == 1) {
      for (auto& w : sample.warnings) result.log.warnings.push_back(std::move(w));
    }

    double lr = config.learning_rate;
    if (config.lr_step_epochs > 0) {
      lr *= std::pow(config.lr_gamma, static_cast<double>((epoch - 1) / config.lr_step_epochs));
    }

    EpochRecord record;
    record.epoch = epoch;
    record.learning_rate = lr;
    std::array<double, kStageCount> stage_sum{};

    const auto& pairs = sample.pairs;
    for (std::size_t start = 0, batch = 0; start < pairs.size();
         start += config.batch_size, ++batch) {
      const std::size_t end = std::min(pairs.size(), start + config.batch_size);
      std::vector<std::size_t> first_rows, second_rows;
      std::vector<int> pair_labels;
      for (std::size_t i = start; i < end; ++i) {
        first_rows.push_back(pairs[i].anchor);
        second_rows.push_back(pairs[i].partner);
        pair_labels.push_back(pairs[i].label);
      }

      params.zero_grad();
      Tape<float> tape;
      Var<float> x1 = tape.constant(gather(images, first_rows));
      Var<float> x2 = tape.constant(gather(images, second_rows));
      auto branches = twin.forward(x1, x2, Mode::train, config.loss.stages);
      MultiScaleLoss<float> loss =
          multi_scale_loss(branches[0], branches[1], pair_labels, config.loss);

      const double total = loss.total.value().item();
      if (!std::isfinite(total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch) + ";" + stage_distance_summary(loss));
      }
      record.raw_loss += total;
      for (std::size_t s = 0; s < kStageCount; ++s) {
        if (!loss.terms[s]) continue;
        const auto& terms = loss.terms[s]->value();
        const double w = config.loss.stage_weights[s];
        for (std::size_t i = 0; i < terms.numel(); ++i) {
          const double t = w * terms.data()[i];
          stage_sum[s] += t;
          (pair_labels[i] == 0 ? record.same_loss : record.different_loss) += t;
        }
      }

      Var<float> objective =
          scale(loss.total, 1.0f / static_cast<float>(pair_labels.size()));
      tape.backward(objective);
      sgd_step(params, velocity, lr, config.momentum, config.weight_decay);
    }

    for (const auto& p : pairs) (p.label == 0 ? record.same_pairs : record.different_pairs)++;
    record.mean_pair_loss = pairs.empty() ? 0.0 : record.raw_loss / static_cast<double>(pairs.size());
    for (std::size_t s = 0; s < kStageCount; ++s) {
      if (config.loss.stages.contains(s)) record.stage_loss[s] = stage_sum[s];
    }
    if (!twin.shares_weights()) throw TrainingError("twin branches no longer share parameters");
    result.log.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  params.for_each_parameter([](const std::string&, Tensor<float>& p) { p.drop_grad(); });
  return result;
}

TrainResult train(std::span<const SliceRef> slices, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  std::vector<int> labels;
  labels.reserve(slices.size());
  for (const auto& s : slices) labels.push_back(s.label());
  return train(stack_images<float>(slices), labels, config, on_epoch);
}

}  // namespace dmrn
