#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dmrn/classifier.hpp"
#include "dmrn/dataset.hpp"
#include "dmrn/folds.hpp"
#include "dmrn/metrics.hpp"
#include "dmrn/trainer.hpp"

namespace dmrn {

struct CvConfig {
  std::size_t k = 5;
  std::uint64_t fold_seed = 1;
  SvmConfig svm;
  bool standardize = true;
  /// Also evaluate a linear SVM on raw pixels over the same folds.
  bool baseline = true;
  /// Folds trained concurrently; each fold owns its parameters.
  std::size_t jobs = 1;
};

struct StudyOutcome {
  std::size_t study_index = 0;
  std::size_t fold = 0;
  int truth = 0;
  StudyPrediction prediction;
  std::optional<StudyPrediction> baseline;
};

struct FoldResult {
  std::size_t fold = 0;
  ConfusionMatrix confusion;
  std::optional<ConfusionMatrix> baseline_confusion;
  TrainingLog log;
  std::vector<StudyOutcome> outcomes;
};

struct CvResult {
  FoldPlan plan;
  std::vector<FoldResult> folds;
  ConfusionMatrix pooled;
  EvalReport report;
  std::optional<ConfusionMatrix> baseline_pooled;
  std::optional<EvalReport> baseline_report;
};

/// Called after each fold finishes; may be invoked from worker threads,
/// but never concurrently.
using FoldCallback = std::function<void(const FoldResult&)>;

/// Trains on k−1 folds, embeds the held-out studies with one branch,
/// classifies slices with a linear SVM and averages per study. Errors are
/// rethrown with the fold index prefixed.
CvResult cross_validate(const Dataset& data, const TrainConfig& train_config,
                        const CvConfig& cv_config, const FoldCallback& on_fold = {});

/// CSV: study_id,fold,true_class,predicted_class,p_0..p_{K-1}.
void write_predictions_csv(std::ostream& out, const Dataset& data, const CvResult& result);

}  // namespace dmrn
