#include "dmrn/cross_validation.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "dmrn/error.hpp"

namespace dmrn {

namespace {

std::vector<int> slice_labels(std::span<const SliceRef> slices) {
  std::vector<int> out;
  out.reserve(slices.size());
  for (const auto& s : slices) out.push_back(s.label());
  return out;
}

StudyPrediction predict_study(const FeatureMatrix& features, std::size_t first,
                              std::size_t count, const SliceClassifier& classifier) {
  std::vector<std::vector<double>> probs;
  probs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    probs.push_back(classifier.predict_proba(features.row(first + i)));
  }
  return average_slice_probabilities(probs, classifier.svm.classes);
}

FoldResult run_fold(const Dataset& data, const FoldPlan& plan, std::size_t f,
                    const TrainConfig& train_config, const CvConfig& cv_config) {
  FoldResult out;
  out.fold = f;
  out.confusion = ConfusionMatrix(data.num_classes);

  const auto train_studies = plan.train_indices(f);
  const auto& test_studies = plan.folds[f];
  const auto train_slices = collect_slices(data, train_studies);
  const auto test_slices = collect_slices(data, test_studies);
  const auto train_labels = slice_labels(train_slices);

  TrainConfig config = train_config;
  config.sampler.num_classes = data.num_classes;
  TrainResult trained = train(train_slices, config);
  out.log = std::move(trained.log);

  const FeatureMatrix train_features = embed_slices(trained.params, train_slices);
  const FeatureMatrix test_features = embed_slices(trained.params, test_slices);
  const auto classifier =
      SliceClassifier::fit(train_features, train_labels, cv_config.svm, cv_config.standardize);

  std::optional<SliceClassifier> baseline;
  FeatureMatrix test_pixels;
  if (cv_config.baseline) {
    baseline = SliceClassifier::fit(pixel_features(train_slices), train_labels, cv_config.svm,
                                    cv_config.standardize);
    test_pixels = pixel_features(test_slices);
    out.baseline_confusion = ConfusionMatrix(data.num_classes);
  }

  std::size_t row = 0;
  for (std::size_t study_index : test_studies) {
    const Study& study = data.studies[study_index];
    StudyOutcome outcome;
    outcome.study_index = study_index;
    outcome.fold = f;
    outcome.truth = study.label;
    outcome.prediction = predict_study(test_features, row, study.slices.size(), classifier);
    out.confusion.add(study.label, outcome.prediction.predicted_class);
    if (baseline) {
      outcome.baseline = predict_study(test_pixels, row, study.slices.size(), *baseline);
      out.baseline_confusion->add(study.label, outcome.baseline->predicted_class);
    }
    row += study.slices.size();
    out.outcomes.push_back(std::move(outcome));
  }
  return out;
}

[[noreturn]] void rethrow_with_fold(std::size_t f, std::exception_ptr error) {
  const std::string prefix = "fold " + std::to_string(f) + ": ";
  try {
    std::rethrow_exception(error);
  } catch (const TrainingError& e) {
    throw TrainingError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const ContractError& e) {
    throw ContractError(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

}  // namespace

CvResult cross_validate(const Dataset& data, const TrainConfig& train_config,
                        const CvConfig& cv_config, const FoldCallback& on_fold) {
  train_config.validate();
  if (data.num_classes < 2) throw ContractError("cross_validate: need at least two classes");
  const auto labels = data.study_labels();

  CvResult result;
  result.plan = make_folds(labels, cv_config.k, cv_config.fold_seed);
  const std::size_t k = result.plan.k();
  result.folds.resize(k);
  std::vector<std::exception_ptr> errors(k);

  std::mutex callback_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t f = next++; f < k; f = next++) {
      try {
        result.folds[f] = run_fold(data, result.plan, f, train_config, cv_config);
        if (on_fold) {
          std::lock_guard lock(callback_mutex);
          on_fold(result.folds[f]);
        }
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(cv_config.jobs, 1, k);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  for (std::size_t f = 0; f < k; ++f) {
    if (errors[f]) rethrow_with_fold(f, errors[f]);
  }

  result.pooled = ConfusionMatrix(data.num_classes);
  if (cv_config.baseline) result.baseline_pooled = ConfusionMatrix(data.num_classes);
  for (const auto& fold : result.folds) {
    result.pooled += fold.confusion;
    if (fold.baseline_confusion) *result.baseline_pooled += *fold.baseline_confusion;
  }
  result.report = compute_metrics(result.pooled);
  if (result.baseline_pooled) result.baseline_report = compute_metrics(*result.baseline_pooled);
  return result;
}

void write_predictions_csv(std::ostream& out, const Dataset& data, const CvResult& result) {
  out << "study_id,fold,true_class,predicted_class";
  for (std::size_t c = 0; c < data.num_classes; ++c) out << ",p_" << c;
  out << '\n';
  std::vector<const StudyOutcome*> ordered(data.studies.size(), nullptr);
  for (const auto& fold : result.folds) {
    for (const auto& o : fold.outcomes) ordered[o.study_index] = &o;
  }
  char buf[32];
  for (const StudyOutcome* o : ordered) {
    if (!o) continue;
    out << data.studies[o->study_index].id << ',' << o->fold << ',' << o->truth << ','
        << o->prediction.predicted_class;
    for (double p : o->prediction.probabilities) {
      std::snprintf(buf, sizeof(buf), "%.9g", p);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace dmrn
