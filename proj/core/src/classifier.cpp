#include "dmrn/classifier.hpp"

#include <cstdio>
#include <ostream>

namespace dmrn {

template <typename T>
Tensor<T> embed_batch(ModelParams<T>& params, const Tensor<T>& images, int branch) {
  TwinNetwork<T> twin(params);
  Tape<T> tape;
  const auto stages = embed_stages(tape.constant(images), twin.branch(branch), Mode::eval,
                                   StageSet{static_cast<int>(kStageCount)});
  Tensor<T> out = stages[kStageCount - 1]->value();
  out.drop_grad();
  return out;
}

template Tensor<float> embed_batch(ModelParams<float>&, const Tensor<float>&, int);
template Tensor<double> embed_batch(ModelParams<double>&, const Tensor<double>&, int);

std::vector<double> embed(ModelParams<float>& params, const Tensor<float>& image, int branch) {
  Tensor<float> batch = image;
  Shape shape{1};
  shape.insert(shape.end(), image.shape().begin(), image.shape().end());
  batch.reshape(shape);
  const Tensor<float> e = embed_batch(params, batch, branch);
  return {e.data().begin(), e.data().end()};
}

FeatureMatrix embed_slices(ModelParams<float>& params, std::span<const SliceRef> slices,
                           std::size_t batch_size) {
  if (batch_size == 0) batch_size = 1;
  const std::size_t dim = params.rpus[kStageCount - 1].embedding_dim();
  FeatureMatrix out(slices.size(), dim);
  for (std::size_t start = 0; start < slices.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, slices.size() - start);
    const Tensor<float> e =
        embed_batch(params, stack_images<float>(slices.subspan(start, count)));
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < dim; ++j) out.row(start + i)[j] = e[i * dim + j];
    }
  }
  return out;
}

FeatureMatrix pixel_features(std::span<const SliceRef> slices) {
  if (slices.empty()) return {};
  const std::size_t dim = slices[0].slice->image.numel();
  FeatureMatrix out(slices.size(), dim);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto px = slices[i].slice->image.data();
    if (px.size() != dim) throw ShapeError("pixel_features: slices differ in size");
    std::copy(px.begin(), px.end(), out.row(i).begin());
  }
  return out;
}

std::vector<double> predict_proba(const SvmModel& model, std::span<const double> features) {
  return softmax(model.decision_values(features));
}

SliceClassifier SliceClassifier::fit(const FeatureMatrix& x, std::span<const int> labels,
                                     const SvmConfig& config, bool standardize) {
  SliceClassifier c;
  c.standardize = standardize;
  if (standardize) {
    c.scaler = FeatureScaler::fit(x);
    c.svm = svm_train(c.scaler.apply(x), labels, config);
  } else {
    c.svm = svm_train(x, labels, config);
  }
  return c;
}

std::vector<double> SliceClassifier::predict_proba(std::span<const double> features) const {
  if (!standardize) return dmrn::predict_proba(svm, features);
  return dmrn::predict_proba(svm, scaler.apply(features));
}

StudyPrediction average_slice_probabilities(std::span<const std::vector<double>> slice_probs,
                                            std::span<const int> classes) {
  if (slice_probs.empty()) throw ContractError("classify_study: study has no slices");
  StudyPrediction out;
  out.probabilities.assign(classes.size(), 0.0);
  for (const auto& p : slice_probs) {
    if (p.size() != classes.size()) throw ShapeError("classify_study: probability width mismatch");
    for (std::size_t c = 0; c < p.size(); ++c) out.probabilities[c] += p[c];
  }
  for (double& v : out.probabilities) v /= static_cast<double>(slice_probs.size());
  out.predicted_class = classes[argmax(out.probabilities)];
  return out;
}

StudyPrediction classify_study(const Study& study, ModelParams<float>& params,
                               const SliceClassifier& classifier) {
  if (study.slices.empty()) throw ContractError("classify_study: study " + study.id + " has no slices");
  std::vector<SliceRef> refs;
  for (const auto& s : study.slices) refs.push_back({&study, &s});
  const FeatureMatrix features = embed_slices(params, refs);
  std::vector<std::vector<double>> probs;
  for (std::size_t i = 0; i < features.rows; ++i) {
    probs.push_back(classifier.predict_proba(features.row(i)));
  }
  return average_slice_probabilities(probs, classifier.svm.classes);
}

void write_embeddings_csv(std::ostream& out, std::span<const SliceRef> slices,
                          const FeatureMatrix& features) {
  out << "slice_id,study_id,true_class";
  for (std::size_t j = 0; j < features.cols; ++j) out << ",e_" << (j + 1);
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < slices.size(); ++i) {
    out << slices[i].slice->id << ',' << slices[i].study->id << ',' << slices[i].label();
    for (double v : features.row(i)) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace dmrn
