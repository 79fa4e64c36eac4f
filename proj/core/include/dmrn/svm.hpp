#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dmrn {

/// Dense row-major feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

/// Per-column z-scoring fitted on training features.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static FeatureScaler fit(const FeatureMatrix& x);
  FeatureMatrix apply(const FeatureMatrix& x) const;
  std::vector<double> apply(std::span<const double> row) const;
};

struct SvmConfig {
  double C = 1.0;
  std::size_t iterations = 2000;
};

/// One-vs-rest linear SVM.
struct SvmModel {
  std::vector<int> classes;                 // sorted class labels
  std::vector<std::vector<double>> weights;  // one per class
  std::vector<double> bias;
  double C = 1.0;

  std::vector<double> decision_values(std::span<const double> x) const;
};

/// Primal objective ½‖w‖² + C Σ max(0, 1 − yᵢ(w·xᵢ + b)) for labels ±1.
double svm_objective(std::span<const double> w, double b, const FeatureMatrix& x,
                     std::span<const int> signs, double C);

/// Sum of hinge losses of a binary model.
double hinge_loss(std::span<const double> w, double b, const FeatureMatrix& x,
                  std::span<const int> signs);

struct BinarySvm {
  std::vector<double> w;
  double b = 0.0;
};

/// Deterministic full-batch subgradient descent on the objective scaled by
/// 1/(C·n): step 1/(λ(t+1)) with λ = 1/(C·n), capped at 10, weighted
/// iterate averaging, returning the best point seen. Labels are ±1.
BinarySvm train_binary_svm(const FeatureMatrix& x, std::span<const int> signs,
                           const SvmConfig& config);

/// One binary problem per class (class vs rest). Throws ContractError with
/// fewer than two classes.
SvmModel svm_train(const FeatureMatrix& x, std::span<const int> labels,
                   const SvmConfig& config = {});

/// Softmax over one-vs-rest decision values.
std::vector<double> softmax(std::span<const double> values);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace dmrn
