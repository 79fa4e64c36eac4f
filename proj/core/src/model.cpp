#include "dmrn/model.hpp"

#include <sstream>

namespace dmrn {

StageSet::StageSet(std::initializer_list<int> stages) {
  for (int s : stages) {
    if (s < 1 || s > static_cast<int>(kStageCount)) {
      throw ConfigError("stage index out of range 1..4: " + std::to_string(s));
    }
    used_[static_cast<std::size_t>(s - 1)] = true;
  }
}

StageSet StageSet::parse(const std::string& text) {
  StageSet set;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    int s = 0;
    try {
      s = std::stoi(item);
    } catch (const std::exception&) {
      throw ConfigError("invalid stage list: '" + text + "'");
    }
    if (s < 1 || s > static_cast<int>(kStageCount)) {
      throw ConfigError("stage index out of range 1..4: " + item);
    }
    set.used_[static_cast<std::size_t>(s - 1)] = true;
  }
  if (set.empty()) throw ConfigError("stage list must not be empty");
  return set;
}

std::size_t StageSet::count() const {
  std::size_t n = 0;
  for (bool u : used_) n += u;
  return n;
}

std::vector<int> StageSet::to_list() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < kStageCount; ++i) {
    if (used_[i]) out.push_back(static_cast<int>(i + 1));
  }
  return out;
}

std::string StageSet::to_string() const {
  std::string out;
  for (int s : to_list()) {
    if (!out.empty()) out += ',';
    out += std::to_string(s);
  }
  return out;
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() {
  std::size_t n = 0;
  for_each_parameter([&n](const std::string&, Tensor<T>& t) { n += t.numel(); });
  return n;
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for_each_parameter([](const std::string&, Tensor<T>& t) { t.zero_grad(); });
}

template <typename T>
ModelParams<T> init_params(const BackboneConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams<T> m;
  m.config = config;
  m.backbone = init_backbone<T>(config, rng);
  for (std::size_t s = 0; s < kStageCount; ++s) {
    m.rpus[s] = init_rpu<T>(config.stage_channels[s], rng);
  }
  return m;
}

template <typename T>
StageEmbeddings<T> embed_stages(Var<T> x, ModelParams<T>& params, Mode mode,
                                StageSet stages) {
  const Shape& s = x.shape();
  const auto& cfg = params.config;
  if (s.size() != 4 || s[1] != cfg.input_channels || s[2] != cfg.input_size ||
      s[3] != cfg.input_size) {
    throw ShapeError("model expects [N," + std::to_string(cfg.input_channels) + "," +
                     std::to_string(cfg.input_size) + "," +
                     std::to_string(cfg.input_size) + "], got " + shape_to_string(s));
  }
  const auto maps = forward_stages(x, params.backbone, mode);
  StageEmbeddings<T> out;
  for (std::size_t t = 0; t < kStageCount; ++t) {
    if (stages.contains(t)) out[t] = rpu_forward(maps[t], params.rpus[t]);
  }
  return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_params(const BackboneConfig&, std::uint64_t);
template ModelParams<double> init_params(const BackboneConfig&, std::uint64_t);
template StageEmbeddings<float> embed_stages(Var<float>, ModelParams<float>&, Mode, StageSet);
template StageEmbeddings<double> embed_stages(Var<double>, ModelParams<double>&, Mode,
                                              StageSet);

}  // namespace dmrn
