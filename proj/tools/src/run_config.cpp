#include "run_config.hpp"

#include <fstream>
#include <set>

#include "dmrn/error.hpp"

namespace dmrn::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

std::array<std::size_t, kStageCount> parse_channels(const std::string& text) {
  std::array<std::size_t, kStageCount> out{};
  std::size_t i = 0, pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    if (i >= kStageCount) throw ConfigError("channels: expected four comma-separated widths");
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out[i++] = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError("channels: invalid width '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (i != kStageCount) throw ConfigError("channels: expected four comma-separated widths");
  return out;
}

}  // namespace

json to_json(const RunConfig& c) {
  const auto& t = c.train;
  return json{
      {"seed", c.seed},
      {"model",
       {{"input_size", t.model.input_size},
        {"input_channels", t.model.input_channels},
        {"stage_channels", t.model.stage_channels},
        {"blocks_per_stage", t.model.blocks_per_stage}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"lr_step_epochs", t.lr_step_epochs},
        {"lr_gamma", t.lr_gamma}}},
      {"sampler",
       {{"mode", to_string(t.sampler.mode)},
        {"pairs_per_epoch", t.sampler.pairs_per_epoch},
        {"num_classes", t.sampler.num_classes}}},
      {"loss",
       {{"margin", t.loss.margin},
        {"stages", t.loss.stages.to_list()},
        {"stage_weights", t.loss.stage_weights}}},
      {"svm",
       {{"C", c.cv.svm.C}, {"iterations", c.cv.svm.iterations}, {"standardize", c.cv.standardize}}},
      {"cv", {{"k", c.cv.k}, {"baseline", c.cv.baseline}, {"jobs", c.cv.jobs}}},
  };
}

RunConfig from_json(const json& j, RunConfig c) {
  reject_unknown(j, {"seed", "model", "train", "sampler", "loss", "svm", "cv"}, "config");
  read(j, "seed", c.seed, "config");
  auto& t = c.train;
  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, {"input_size", "input_channels", "stage_channels", "blocks_per_stage"},
                   "model");
    read(m, "input_size", t.model.input_size, "model");
    read(m, "input_channels", t.model.input_channels, "model");
    read(m, "stage_channels", t.model.stage_channels, "model");
    read(m, "blocks_per_stage", t.model.blocks_per_stage, "model");
  }
  if (j.contains("train")) {
    const auto& s = j["train"];
    reject_unknown(s, {"epochs", "batch_size", "learning_rate", "momentum", "weight_decay",
                       "lr_step_epochs", "lr_gamma"},
                   "train");
    read(s, "epochs", t.epochs, "train");
    read(s, "batch_size", t.batch_size, "train");
    read(s, "learning_rate", t.learning_rate, "train");
    read(s, "momentum", t.momentum, "train");
    read(s, "weight_decay", t.weight_decay, "train");
    read(s, "lr_step_epochs", t.lr_step_epochs, "train");
    read(s, "lr_gamma", t.lr_gamma, "train");
  }
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    reject_unknown(s, {"mode", "pairs_per_epoch", "num_classes"}, "sampler");
    std::string mode = to_string(t.sampler.mode);
    read(s, "mode", mode, "sampler");
    try {
      t.sampler.mode = parse_sampler_mode(mode);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("sampler.mode: ") + e.what());
    }
    read(s, "pairs_per_epoch", t.sampler.pairs_per_epoch, "sampler");
    read(s, "num_classes", t.sampler.num_classes, "sampler");
  }
  if (j.contains("loss")) {
    const auto& s = j["loss"];
    reject_unknown(s, {"margin", "stages", "stage_weights"}, "loss");
    read(s, "margin", t.loss.margin, "loss");
    if (s.contains("stages")) {
      std::vector<int> stages;
      read(s, "stages", stages, "loss");
      std::string text;
      for (int v : stages) text += (text.empty() ? "" : ",") + std::to_string(v);
      t.loss.stages = StageSet::parse(text);
    }
    read(s, "stage_weights", t.loss.stage_weights, "loss");
  }
  if (j.contains("svm")) {
    const auto& s = j["svm"];
    reject_unknown(s, {"C", "iterations", "standardize"}, "svm");
    read(s, "C", c.cv.svm.C, "svm");
    read(s, "iterations", c.cv.svm.iterations, "svm");
    read(s, "standardize", c.cv.standardize, "svm");
  }
  if (j.contains("cv")) {
    const auto& s = j["cv"];
    reject_unknown(s, {"k", "baseline", "jobs"}, "cv");
    read(s, "k", c.cv.k, "cv");
    read(s, "baseline", c.cv.baseline, "cv");
    read(s, "jobs", c.cv.jobs, "cv");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

void apply_overrides(RunConfig& c, const Overrides& o) {
  auto& t = c.train;
  if (o.seed) c.seed = *o.seed;
  if (o.epochs) t.epochs = *o.epochs;
  if (o.batch_size) t.batch_size = *o.batch_size;
  if (o.learning_rate) t.learning_rate = *o.learning_rate;
  if (o.momentum) t.momentum = *o.momentum;
  if (o.weight_decay) t.weight_decay = *o.weight_decay;
  if (o.lr_step_epochs) t.lr_step_epochs = *o.lr_step_epochs;
  if (o.lr_gamma) t.lr_gamma = *o.lr_gamma;
  if (o.channels) t.model.stage_channels = parse_channels(*o.channels);
  if (o.blocks) t.model.blocks_per_stage = *o.blocks;
  if (o.sampler) {
    try {
      t.sampler.mode = parse_sampler_mode(*o.sampler);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("--sampler: ") + e.what());
    }
  }
  if (o.pairs_per_epoch) t.sampler.pairs_per_epoch = *o.pairs_per_epoch;
  if (o.stages) t.loss.stages = StageSet::parse(*o.stages);
  if (o.margin) t.loss.margin = *o.margin;
  if (o.svm_c) c.cv.svm.C = *o.svm_c;
  if (o.svm_iterations) c.cv.svm.iterations = *o.svm_iterations;
  if (o.standardize) c.cv.standardize = *o.standardize;
  if (o.k) c.cv.k = *o.k;
  if (o.baseline) c.cv.baseline = *o.baseline;
  if (o.jobs) c.cv.jobs = *o.jobs;

  t.seed = c.seed;
  t.sampler.seed = c.seed;
  c.cv.fold_seed = c.seed;
  if (c.cv.k < 2) throw ConfigError("k must be at least 2");
  if (c.cv.jobs == 0) throw ConfigError("jobs must be at least 1");
  if (!(c.cv.svm.C > 0.0)) throw ConfigError("svm C must be positive");
  if (c.cv.svm.iterations == 0) throw ConfigError("svm iterations must be at least 1");
}

void bind_to_dataset(RunConfig& c, const Shape& image_shape, std::size_t num_classes,
                     bool geometry_from_file) {
  if (image_shape.size() != 3 || image_shape[1] != image_shape[2]) {
    throw DataError("dataset images must be square [C,S,S], got " + shape_to_string(image_shape));
  }
  auto& m = c.train.model;
  if (geometry_from_file &&
      (m.input_channels != image_shape[0] || m.input_size != image_shape[1])) {
    throw ConfigError("config model input " + std::to_string(m.input_channels) + "x" +
                      std::to_string(m.input_size) + " does not match dataset images " +
                      shape_to_string(image_shape));
  }
  m.input_channels = image_shape[0];
  m.input_size = image_shape[1];
  c.train.sampler.num_classes = num_classes;
  c.train.validate();
}

json to_json(const SynthSpec& s) {
  return json{{"preset", s.preset},
              {"image_size", s.image_size},
              {"studies_per_class", s.studies_per_class},
              {"slices_per_class", s.slices_per_class},
              {"min_slices_per_study", s.min_slices_per_study},
              {"max_slices_per_study", s.max_slices_per_study},
              {"difficulty", s.difficulty},
              {"seed", s.seed}};
}

}  // namespace dmrn::cli
