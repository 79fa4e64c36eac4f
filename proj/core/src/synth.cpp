#include "dmrn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace dmrn {
namespace {

constexpr std::array<std::size_t, 5> kTable1Studies{54, 35, 58, 33, 49};
constexpr std::array<std::size_t, 5> kTable1Slices{1707, 245, 1047, 350, 716};
constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Toolchain-independent draws so generated files match byte for byte.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() { return state_ = splitmix64(state_); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double uniform(const Range& r) { return uniform(r.lo, r.hi); }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

 private:
  std::uint64_t state_;
};

std::size_t round_half_up(double v) { return static_cast<std::size_t>(std::floor(v + 0.5 + 1e-9)); }

double lerp(double a, double b, double t) { return a + (b - a) * t; }

Range around(double centre, double half) { return {centre - half, centre + half}; }

}  // namespace

std::string to_string(GeneratorFamily family) {
  switch (family) {
    case GeneratorFamily::oriented_grating: return "oriented_grating";
    case GeneratorFamily::soft_blob: return "soft_blob";
    case GeneratorFamily::mixed_density_blob: return "mixed_density_blob";
    case GeneratorFamily::ellipse_ring: return "ellipse_ring";
    case GeneratorFamily::speckle_mass: return "speckle_mass";
  }
  return "unknown";
}

std::vector<ClassRecipe> class_recipes(double difficulty) {
  const double d = std::clamp(difficulty, 0.0, 1.0);
  struct Base {
    GeneratorFamily family;
    double radius, contrast, orientation, frequency;
  };
  const std::array<Base, 5> bases{{
      {GeneratorFamily::oriented_grating, 16.0, 0.95, 0.3, 0.18},
      {GeneratorFamily::soft_blob, 8.0, 0.45, 0.0, 0.0},
      {GeneratorFamily::mixed_density_blob, 13.0, 0.75, 1.1, 0.0},
      {GeneratorFamily::ellipse_ring, 14.0, 0.90, 0.7, 0.0},
      {GeneratorFamily::speckle_mass, 10.0, 0.60, 0.0, 0.35},
  }};
  std::vector<ClassRecipe> out;
  for (std::size_t c = 0; c < bases.size(); ++c) {
    const Base& b = bases[c];
    ClassRecipe r;
    r.class_id = static_cast<int>(c);
    r.family = b.family;
    r.name = to_string(b.family);
    const double radius = lerp(b.radius, 12.0, d);
    r.radius = around(radius, radius * (0.04 + 0.30 * d));
    r.contrast = around(lerp(b.contrast, 0.7, d), 0.02 + 0.15 * d);
    r.orientation = around(b.orientation, 0.5 * kPi * (0.05 + 0.95 * d));
    r.frequency = around(b.frequency, 0.01 + 0.03 * d);
    r.noise = {0.02 + 0.06 * d, 0.03 + 0.08 * d};
    r.offset = {0.0, 1.0 + 8.0 * d};
    r.mix = {0.0, 0.45 * d};
    out.push_back(std::move(r));
  }
  return out;
}

StudyLatent sample_latent(const ClassRecipe& recipe, std::size_t num_classes,
                          std::uint64_t seed) {
  Rng rng(seed);
  StudyLatent z{};
  z.radius = rng.uniform(recipe.radius);
  z.contrast = rng.uniform(recipe.contrast);
  z.orientation = rng.uniform(recipe.orientation);
  z.frequency = rng.uniform(recipe.frequency);
  z.noise = rng.uniform(recipe.noise);
  const double off = rng.uniform(recipe.offset);
  const double angle = rng.uniform(0.0, 2.0 * kPi);
  z.cx = off * std::cos(angle);
  z.cy = off * std::sin(angle);
  z.aspect = recipe.family == GeneratorFamily::ellipse_ring ? rng.uniform(1.15, 1.5)
                                                           : rng.uniform(1.0, 1.1);
  z.phase = rng.uniform(0.0, 2.0 * kPi);
  z.mix = rng.uniform(recipe.mix);
  std::size_t other = rng.index(num_classes - 1);
  if (other >= static_cast<std::size_t>(recipe.class_id)) ++other;
  z.mix_class = static_cast<int>(other);
  z.texture_seed = rng.next();
  return z;
}

namespace {

struct Geometry {
  double u, v, rho;
};

// Intensity of a family's texture inside the mass, before masking.
double texture(GeneratorFamily family, const Geometry& g, const StudyLatent& z,
               double contrast, double scale, const std::vector<std::array<double, 3>>& lumps,
               double speckle) {
  switch (family) {
    case GeneratorFamily::oriented_grating:
      return contrast + 0.22 * std::sin(2.0 * kPi * z.frequency * g.u / scale + z.phase);
    case GeneratorFamily::soft_blob:
      return contrast * (1.0 - 0.25 * g.rho * g.rho);
    case GeneratorFamily::mixed_density_blob: {
      double fat = 0.0;
      for (const auto& l : lumps) {
        const double du = g.u - l[0], dv = g.v - l[1];
        fat += std::exp(-(du * du + dv * dv) / (2.0 * l[2] * l[2]));
      }
      return contrast - 0.45 * std::min(fat, 1.0);
    }
    case GeneratorFamily::ellipse_ring: {
      const double t = (g.rho - 0.82) / 0.1;
      return 0.12 + (contrast - 0.12) * std::exp(-0.5 * t * t);
    }
    case GeneratorFamily::speckle_mass:
      return contrast + 0.28 * speckle;
  }
  return contrast;
}

}  // namespace

Tensor<float> render_slice(const ClassRecipe& recipe, const ClassRecipe& mix_recipe,
                           const StudyLatent& study, std::size_t image_size,
                           std::uint64_t slice_seed) {
  Rng rng(slice_seed);
  StudyLatent z = study;
  z.radius *= 1.0 + 0.05 * rng.uniform(-1.0, 1.0);
  z.cx += 0.7 * rng.uniform(-1.0, 1.0);
  z.cy += 0.7 * rng.uniform(-1.0, 1.0);
  z.phase += 0.4 * rng.uniform(-1.0, 1.0);
  z.orientation += 0.05 * rng.uniform(-1.0, 1.0);

  const std::size_t n = image_size;
  const double scale = static_cast<double>(n) / 64.0;
  const double r = z.radius * scale;

  // Lumps and background are study-level so neighbouring slices stay correlated.
  Rng study_rng(study.texture_seed);
  std::vector<std::array<double, 3>> lumps;
  const std::size_t lump_count = 3 + study_rng.index(3);
  for (std::size_t k = 0; k < lump_count; ++k) {
    const double a = study_rng.uniform(0.0, 2.0 * kPi);
    const double d = study_rng.uniform(0.0, 0.65) * r;
    lumps.push_back({d * std::cos(a), d * std::sin(a), r * study_rng.uniform(0.12, 0.22)});
  }
  const double bg_fx = study_rng.uniform(0.5, 2.0), bg_fy = study_rng.uniform(0.5, 2.0);
  const double bg_p1 = study_rng.uniform(0.0, 2.0 * kPi), bg_p2 = study_rng.uniform(0.0, 2.0 * kPi);

  // Short-correlation speckle field, redrawn per slice.
  std::vector<double> raw(n * n), speckle(n * n, 0.0);
  for (double& v : raw) v = rng.normal();
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double acc = 0.0;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
          const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(n) ||
              xx >= static_cast<std::ptrdiff_t>(n)) {
            continue;
          }
          acc += raw[static_cast<std::size_t>(yy) * n + static_cast<std::size_t>(xx)];
          ++cnt;
        }
      }
      speckle[y * n + x] = acc / std::sqrt(static_cast<double>(cnt));
    }
  }

  const double edge = (recipe.family == GeneratorFamily::soft_blob ? 2.5 : 1.0) * scale;
  const double c = std::cos(z.orientation), s = std::sin(z.orientation);
  const double mix_contrast = 0.5 * (mix_recipe.contrast.lo + mix_recipe.contrast.hi);

  Tensor<float> img(Shape{1, n, n});
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double px = static_cast<double>(x) + 0.5 - 0.5 * static_cast<double>(n);
      const double py = static_cast<double>(y) + 0.5 - 0.5 * static_cast<double>(n);
      const double dx = px - z.cx * scale, dy = py - z.cy * scale;
      Geometry g;
      g.u = dx * c + dy * s;
      g.v = -dx * s + dy * c;
      const double ru = g.u / (r * z.aspect), rv = g.v * z.aspect / r;
      g.rho = std::sqrt(ru * ru + rv * rv);
      const double mask = 1.0 / (1.0 + std::exp((g.rho - 1.0) * r / edge));

      const double sp = speckle[y * n + x];
      double inside = texture(recipe.family, g, z, z.contrast, scale, lumps, sp);
      if (z.mix > 0.0) {
        const double other = texture(mix_recipe.family, g, z, mix_contrast, scale, lumps, sp);
        inside = (1.0 - z.mix) * inside + z.mix * other;
      }
      const double background =
          0.2 + 0.04 * std::sin(2.0 * kPi * bg_fx * px / static_cast<double>(n) + bg_p1) +
          0.04 * std::sin(2.0 * kPi * bg_fy * py / static_cast<double>(n) + bg_p2);
      const double value = background * (1.0 - mask) + inside * mask + z.noise * rng.normal();
      img.data()[y * n + x] = static_cast<float>(value);
    }
  }
  return img;
}

void SynthSpec::validate() const {
  if (image_size == 0 || image_size % 32 != 0) {
    throw ConfigError("synth: image_size must be a positive multiple of 32");
  }
  if (studies_per_class.size() < 2 || studies_per_class.size() != slices_per_class.size()) {
    throw ConfigError("synth: need matching per-class study and slice counts for >= 2 classes");
  }
  if (studies_per_class.size() > 5) throw ConfigError("synth: at most 5 classes are defined");
  if (min_slices_per_study == 0 || min_slices_per_study > max_slices_per_study) {
    throw ConfigError("synth: invalid slices-per-study range");
  }
  if (!(difficulty >= 0.0 && difficulty <= 1.0)) {
    throw ConfigError("synth: difficulty must lie in [0, 1]");
  }
}

SynthSpec SynthSpec::table1(double study_scale, double slice_scale) {
  SynthSpec spec;
  for (std::size_t c = 0; c < kTable1Studies.size(); ++c) {
    spec.studies_per_class.push_back(
        std::max<std::size_t>(1, round_half_up(static_cast<double>(kTable1Studies[c]) * study_scale)));
    spec.slices_per_class.push_back(round_half_up(static_cast<double>(kTable1Slices[c]) * slice_scale));
  }
  return spec;
}

SynthSpec SynthSpec::from_preset(const std::string& name) {
  SynthSpec spec;
  if (name == "table1") {
    spec = table1(1.0, 1.0);
  } else if (name == "table1-small") {
    // 47 studies, 205 slices: Table-1 study ratios at a fifth, slices at a
    // twentieth (raised to the per-study minimum where needed).
    spec = table1(0.2, 0.05);
    spec.min_slices_per_study = 2;
    spec.max_slices_per_study = 12;
    spec.difficulty = 0.5;
  } else if (name == "tiny") {
    spec.studies_per_class = {3, 3, 3, 3, 3};
    spec.slices_per_class = {6, 6, 6, 6, 6};
    spec.min_slices_per_study = 2;
    spec.max_slices_per_study = 2;
    spec.difficulty = 0.3;
  } else {
    throw ConfigError("unknown dataset preset '" + name + "' (table1|table1-small|tiny)");
  }
  spec.preset = name;
  return spec;
}

std::vector<std::size_t> allocate_slices(std::size_t studies, std::size_t target,
                                         std::size_t min_per_study,
                                         std::size_t max_per_study, std::uint64_t seed) {
  if (studies == 0) return {};
  target = std::clamp(target, studies * min_per_study, studies * max_per_study);
  Rng rng(seed);
  std::vector<double> weight(studies);
  for (double& w : weight) w = rng.uniform(0.25, 1.75);
  std::vector<std::size_t> counts(studies, min_per_study);
  std::size_t remaining = target - studies * min_per_study;
  // Hand out the surplus one slice at a time to the study with the largest
  // weight-to-count deficit that still has room.
  while (remaining > 0) {
    std::size_t best = studies;
    double best_score = -1.0;
    for (std::size_t i = 0; i < studies; ++i) {
      if (counts[i] >= max_per_study) continue;
      const double score = weight[i] / static_cast<double>(counts[i] + 1);
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    ++counts[best];
    --remaining;
  }
  return counts;
}

Dataset generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t classes = spec.studies_per_class.size();
  auto recipes = class_recipes(spec.difficulty);
  recipes.resize(classes);

  Dataset data;
  data.num_classes = classes;
  for (const auto& r : recipes) data.class_names.push_back(r.name);
  data.image_shape = {1, spec.image_size, spec.image_size};

  nlohmann::json prov = {{"generator", "dmrn-synth"},
                         {"preset", spec.preset},
                         {"image_size", spec.image_size},
                         {"studies_per_class", spec.studies_per_class},
                         {"slices_per_class", spec.slices_per_class},
                         {"min_slices_per_study", spec.min_slices_per_study},
                         {"max_slices_per_study", spec.max_slices_per_study},
                         {"difficulty", spec.difficulty},
                         {"seed", spec.seed}};
  data.provenance = prov.dump();

  std::size_t study_index = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const auto counts =
        allocate_slices(spec.studies_per_class[c], spec.slices_per_class[c],
                        spec.min_slices_per_study, spec.max_slices_per_study,
                        splitmix64(spec.seed ^ (0x51CE5ULL + c)));
    for (std::size_t k = 0; k < counts.size(); ++k, ++study_index) {
      const std::uint64_t study_seed = splitmix64(spec.seed * 1000003ULL + study_index);
      const StudyLatent z = sample_latent(recipes[c], classes, study_seed);
      Study study;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "study_%03zu", study_index);
      study.id = buf;
      study.label = static_cast<int>(c);
      for (std::size_t j = 0; j < counts[k]; ++j) {
        Slice slice;
        std::snprintf(buf, sizeof(buf), "slice_%03zu", j);
        slice.id = study.id + "/" + buf;
        slice.file = slice.id + ".f32";
        slice.image = render_slice(recipes[c], recipes[static_cast<std::size_t>(z.mix_class)], z,
                                   spec.image_size, splitmix64(study_seed ^ (j + 1)));
        study.slices.push_back(std::move(slice));
      }
      data.studies.push_back(std::move(study));
    }
  }
  return data;
}

Dataset generate_to(const SynthSpec& spec, const std::filesystem::path& root) {
  Dataset data = generate(spec);
  save_dataset(data, root);
  return data;
}

}  // namespace dmrn
