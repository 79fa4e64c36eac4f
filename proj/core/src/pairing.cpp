#include "dmrn/pairing.hpp"

#include <algorithm>
#include <ostream>
#include <random>

#include "dmrn/error.hpp"

namespace dmrn {

SamplerMode parse_sampler_mode(const std::string& text) {
  if (text == "uniform") return SamplerMode::uniform;
  if (text == "class_balanced") return SamplerMode::class_balanced;
  throw ConfigError("unknown sampler mode '" + text + "' (uniform|class_balanced)");
}

std::string to_string(SamplerMode mode) {
  return mode == SamplerMode::uniform ? "uniform" : "class_balanced";
}

namespace {

// Uniform integer in [0, n) from a 64-bit engine. std::uniform_int_distribution
// is implementation-defined; this keeps pair lists identical across toolchains.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

}  // namespace

PairSample sample_pairs(std::span<const int> labels, const SamplerConfig& config) {
  const std::size_t f = labels.size();
  if (f < 2) throw ContractError("sample_pairs: need at least 2 training slices");
  for (int l : labels) {
    if (l < 0) throw ContractError("sample_pairs: negative class label");
  }

  std::size_t classes = config.num_classes;
  const int max_label = *std::max_element(labels.begin(), labels.end());
  if (classes == 0) classes = static_cast<std::size_t>(max_label) + 1;
  if (static_cast<std::size_t>(max_label) >= classes) {
    throw ContractError("sample_pairs: label " + std::to_string(max_label) +
                        " outside declared class count");
  }

  PairSample out;
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < f; ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  if (config.mode == SamplerMode::class_balanced) {
    for (std::size_t c = 0; c < classes; ++c) {
      if (members[c].empty()) {
        out.warnings.push_back("class " + std::to_string(c) +
                               " has no training slices; excluded from pairing");
      }
    }
  }

  std::mt19937_64 rng(config.seed);
  const std::size_t count = config.pairs_per_epoch == 0 ? f : config.pairs_per_epoch;
  out.pairs.reserve(count);
  std::vector<std::size_t> eligible;
  eligible.reserve(classes);

  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t anchor = k % f;
    std::size_t partner = 0;
    if (config.mode == SamplerMode::uniform) {
      partner = uniform_index(rng, f - 1);
      if (partner >= anchor) ++partner;
    } else {
      const auto anchor_class = static_cast<std::size_t>(labels[anchor]);
      eligible.clear();
      for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t available = members[c].size() - (c == anchor_class ? 1 : 0);
        if (!members[c].empty() && available > 0) eligible.push_back(c);
      }
      const std::size_t c = eligible[uniform_index(rng, eligible.size())];
      const auto& pool = members[c];
      if (c == anchor_class) {
        // Skip the anchor itself by drawing from the pool minus one slot.
        const auto self = static_cast<std::size_t>(
            std::lower_bound(pool.begin(), pool.end(), anchor) - pool.begin());
        std::size_t j = uniform_index(rng, pool.size() - 1);
        if (j >= self) ++j;
        partner = pool[j];
      } else {
        partner = pool[uniform_index(rng, pool.size())];
      }
    }
    out.pairs.push_back({anchor, partner, labels[anchor] == labels[partner] ? 0 : 1});
  }

  for (std::size_t i = out.pairs.size(); i > 1; --i) {
    std::swap(out.pairs[i - 1], out.pairs[uniform_index(rng, i)]);
  }
  return out;
}

void write_pairs_csv(std::ostream& out, std::span<const TrainingPair> pairs,
                     std::span<const std::string> ids) {
  out << "anchor_id,partner_id,Y\n";
  for (const auto& p : pairs) {
    out << ids[p.anchor] << ',' << ids[p.partner] << ',' << p.label << '\n';
  }
}

}  // namespace dmrn
