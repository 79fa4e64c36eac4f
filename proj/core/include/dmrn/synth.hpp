#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmrn/dataset.hpp"

namespace dmrn {

enum class GeneratorFamily {
  oriented_grating,
  soft_blob,
  mixed_density_blob,
  ellipse_ring,
  speckle_mass,
};

std::string to_string(GeneratorFamily family);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Appearance of one synthetic class. Every sampled parameter lies inside
/// its range; `mix` bounds the blend weight of another class's texture.
struct ClassRecipe {
  int class_id = 0;
  std::string name;
  GeneratorFamily family = GeneratorFamily::soft_blob;
  Range radius;       // pixels at 64×64, scaled with image size
  Range contrast;     // mass intensity
  Range orientation;  // radians
  Range frequency;    // cycles per pixel at 64×64
  Range noise;        // pixel noise standard deviation
  Range offset;       // centre displacement, pixels at 64×64
  Range mix;          // cross-class blend weight
};

/// Recipes for the five classes at a given overlap level in [0, 1].
/// At 0 the classes differ in size, brightness and texture with almost no
/// jitter; towards 1 size and brightness ranges converge, jitter, noise and
/// cross-class blending grow, and texture is the remaining cue.
std::vector<ClassRecipe> class_recipes(double difficulty);

/// Parameters drawn for one study (shared by its slices up to small jitter).
struct StudyLatent {
  double radius, contrast, orientation, frequency, noise, cx, cy, aspect, phase, mix;
  int mix_class;
  std::uint64_t texture_seed;  // lump layout and background
};

StudyLatent sample_latent(const ClassRecipe& recipe, std::size_t num_classes,
                          std::uint64_t seed);

struct SynthSpec {
  std::size_t image_size = 64;
  std::vector<std::size_t> studies_per_class;
  /// Target slice totals per class, clamped to what the per-study bounds allow.
  std::vector<std::size_t> slices_per_class;
  std::size_t min_slices_per_study = 3;
  std::size_t max_slices_per_study = 40;
  double difficulty = 0.5;
  std::uint64_t seed = 1;
  std::string preset;

  void validate() const;

  /// Study and slice counts of the five-class reference cohort,
  /// 54:35:58:33:49 studies and 1707:245:1047:350:716 slices, each scaled
  /// and rounded half-up.
  static SynthSpec table1(double study_scale = 1.0, double slice_scale = 1.0);

  /// "table1", "table1-small" or "tiny".
  static SynthSpec from_preset(const std::string& name);
};

/// Slice counts for each study of one class: every count within
/// [min, max], total equal to the clamped target.
std::vector<std::size_t> allocate_slices(std::size_t studies, std::size_t target,
                                         std::size_t min_per_study,
                                         std::size_t max_per_study, std::uint64_t seed);

/// Renders one slice.
Tensor<float> render_slice(const ClassRecipe& recipe, const ClassRecipe& mix_recipe,
                           const StudyLatent& study, std::size_t image_size,
                           std::uint64_t slice_seed);

/// Deterministic in-memory dataset.
Dataset generate(const SynthSpec& spec);

/// generate() followed by save_dataset().
Dataset generate_to(const SynthSpec& spec, const std::filesystem::path& root);

}  // namespace dmrn
