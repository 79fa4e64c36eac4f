#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "dmrn/cross_validation.hpp"
#include "dmrn/synth.hpp"
#include "dmrn/trainer.hpp"

namespace dmrn::cli {

/// Everything a command needs, fully resolved before it runs.
struct RunConfig {
  std::uint64_t seed = 1;
  TrainConfig train;
  CvConfig cv;
};

/// Flat overrides collected from the command line; unset fields keep the
/// file (or default) value.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> learning_rate;
  std::optional<double> momentum;
  std::optional<double> weight_decay;
  std::optional<std::size_t> lr_step_epochs;
  std::optional<double> lr_gamma;
  std::optional<std::string> channels;
  std::optional<std::size_t> blocks;
  std::optional<std::string> sampler;
  std::optional<std::size_t> pairs_per_epoch;
  std::optional<std::string> stages;
  std::optional<double> margin;
  std::optional<double> svm_c;
  std::optional<std::size_t> svm_iterations;
  std::optional<bool> standardize;
  std::optional<std::size_t> k;
  std::optional<bool> baseline;
  std::optional<std::size_t> jobs;
};

nlohmann::json to_json(const RunConfig& config);

/// Reads the keys present in `j` on top of `base`. Throws ConfigError on
/// unknown keys or ill-typed values.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});

RunConfig load_run_config(const std::filesystem::path& path);

/// Applies the overrides, then derives every seed from the resolved one.
void apply_overrides(RunConfig& config, const Overrides& overrides);

/// Takes the model input geometry from the dataset. Throws ConfigError when
/// the config already names a different geometry.
void bind_to_dataset(RunConfig& config, const Shape& image_shape, std::size_t num_classes,
                     bool geometry_from_file);

nlohmann::json to_json(const SynthSpec& spec);

}  // namespace dmrn::cli
