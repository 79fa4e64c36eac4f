#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dmrn/ops.hpp"
#include "dmrn/tape.hpp"

namespace dmrn::testing {

using Leaves = std::vector<Var<double>>;
using Builder = std::function<Var<double>(Tape<double>&, const Leaves&)>;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

/// Reduces any tensor to a scalar with fixed random weights, so that every
/// output element carries a distinct, nonzero sensitivity.
inline Var<double> weighted_sum(Tape<double>& tape, Var<double> x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Tensor<double> w = random_tensor(x.shape(), rng);
  return sum(mul(x, tape.constant(std::move(w))));
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Elements left out because every tried step straddled a kink.
  std::size_t kinks = 0;
};

struct GradCheckOptions {
  double h = 1e-5;
  double floor = 1e-6;
  /// When set, an element whose central difference at step s disagrees with
  /// the one at s/2 is retried at s/10, s/100, s/1000. Differences at two
  /// steps only disagree when a ReLU or hinge changes branch inside the
  /// interval; a wrong backward still disagrees with agreeing differences.
  bool kink_aware = false;
};

/// Compares reverse-mode gradients with central differences for every
/// element of every tensor in `tensors`. The relative error of one element
/// is |a − n| / max(|a| + |n|, floor).
inline GradCheck check_gradients(const std::vector<Tensor<double>*>& tensors,
                                 const Builder& build, const GradCheckOptions& options) {
  const double h = options.h, floor = options.floor;
  auto evaluate = [&]() {
    Tape<double> tape;
    Leaves leaves;
    for (auto* t : tensors) leaves.push_back(tape.parameter(*t));
    return build(tape, leaves).value().item();
  };

  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    Leaves leaves;
    for (auto* t : tensors) {
      t->zero_grad();
      leaves.push_back(tape.parameter(*t));
    }
    tape.backward(build(tape, leaves));
    for (auto* t : tensors) analytic.emplace_back(t->grad().begin(), t->grad().end());
  }

  GradCheck out;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto values = tensors[k]->data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto central = [&](double step) {
        values[i] = saved + step;
        const double up = evaluate();
        values[i] = saved - step;
        const double down = evaluate();
        values[i] = saved;
        return (up - down) / (2.0 * step);
      };
      double numeric = central(h);
      if (options.kink_aware) {
        bool smooth = false;
        for (double step = h; step >= h * 1e-3 * 0.5; step *= 0.1) {
          if (step != h) numeric = central(step);
          const double half = central(0.5 * step);
          if (std::abs(numeric - half) <= 1e-4 * std::max(std::abs(numeric) + std::abs(half), floor)) {
            smooth = true;
            break;
          }
        }
        if (!smooth) {
          ++out.kinks;
          continue;
        }
      }
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor);
      out.max_rel_error = std::max(out.max_rel_error, rel);
      ++out.checked;
    }
  }
  return out;
}

inline GradCheck check_gradients(const std::vector<Tensor<double>*>& tensors,
                                 const Builder& build, double h = 1e-5, double floor = 1e-6) {
  return check_gradients(tensors, build, GradCheckOptions{h, floor, false});
}

}  // namespace dmrn::testing
