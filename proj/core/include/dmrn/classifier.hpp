#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "dmrn/dataset.hpp"
#include "dmrn/model.hpp"
#include "dmrn/svm.hpp"

namespace dmrn {

/// Last-stage RPU outputs of a batch [N,C,S,S] -> [N, D], batch norm in
/// inference mode. `branch` selects which twin computes it; both share
/// one parameter set.
template <typename T>
Tensor<T> embed_batch(ModelParams<T>& params, const Tensor<T>& images, int branch = 0);

/// Embedding of a single [C,S,S] image.
std::vector<double> embed(ModelParams<float>& params, const Tensor<float>& image,
                          int branch = 0);

/// Embeddings of many slices, computed in batches.
FeatureMatrix embed_slices(ModelParams<float>& params, std::span<const SliceRef> slices,
                           std::size_t batch_size = 32);

/// Flattened raw pixels, for the floor baseline.
FeatureMatrix pixel_features(std::span<const SliceRef> slices);

/// Softmax over the model's one-vs-rest decision values, ordered as
/// model.classes.
std::vector<double> predict_proba(const SvmModel& model, std::span<const double> features);

/// Feature standardization + linear SVM.
struct SliceClassifier {
  FeatureScaler scaler;
  SvmModel svm;
  bool standardize = true;

  static SliceClassifier fit(const FeatureMatrix& x, std::span<const int> labels,
                             const SvmConfig& config, bool standardize = true);
  std::vector<double> predict_proba(std::span<const double> features) const;
};

struct StudyPrediction {
  int predicted_class = 0;
  std::vector<double> probabilities;  // ordered as the model's classes
};

/// Arithmetic mean of per-slice probability vectors; ties in the argmax
/// resolve to the lowest class index. Throws ContractError when empty.
StudyPrediction average_slice_probabilities(std::span<const std::vector<double>> slice_probs,
                                            std::span<const int> classes);

/// Embeds every slice of the study, classifies each and averages.
StudyPrediction classify_study(const Study& study, ModelParams<float>& params,
                               const SliceClassifier& classifier);

/// CSV: slice_id,study_id,true_class,e_1..e_D.
void write_embeddings_csv(std::ostream& out, std::span<const SliceRef> slices,
                          const FeatureMatrix& features);

}  // namespace dmrn
