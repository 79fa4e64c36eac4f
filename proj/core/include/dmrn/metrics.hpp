#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dmrn {

/// K×K counts, rows = true class, columns = predicted class.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes);

  void add(int truth, int predicted, std::uint64_t count = 1);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * classes_ + predicted];
  }
  std::size_t classes() const { return classes_; }
  std::uint64_t total() const;
  std::uint64_t trace() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// Exact numerator/denominator; undefined when the denominator is 0.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 0;

  bool defined() const { return den != 0; }
  std::optional<double> value() const {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

/// One-vs-all counts and metrics of one class.
struct ClassMetrics {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
  Ratio sensitivity;  // TP / (TP + FN)
  Ratio specificity;  // TN / (TN + FP)
  Ratio precision;    // TP / (TP + FP)
  Ratio f1;           // 2TP / (2TP + FP + FN)
};

/// Aggregate of Sen/Spe/Pre/F1. A macro value averages only the classes
/// where the metric is defined; `excluded` counts the rest.
struct MetricSummary {
  std::optional<double> sensitivity, specificity, precision, f1;
  std::size_t excluded = 0;
};

struct EvalReport {
  Ratio accuracy;  // trace / total, multi-class
  std::vector<ClassMetrics> per_class;
  MetricSummary macro;
  MetricSummary micro;
  std::vector<std::string> flags;  // e.g. "class 3 precision undefined"
};

/// Throws ContractError for an empty matrix.
EvalReport compute_metrics(const ConfusionMatrix& confusion);

/// Long-format CSV: scope,class,metric,value (value "NA" when undefined).
void write_report_csv(std::ostream& out, const EvalReport& report,
                      const std::vector<std::string>& class_names);

/// Aligned human-readable table.
void write_report_table(std::ostream& out, const EvalReport& report,
                        const std::vector<std::string>& class_names);

/// CSV grid with a header row of predicted classes.
void write_confusion_csv(std::ostream& out, const ConfusionMatrix& confusion,
                         const std::vector<std::string>& class_names);

}  // namespace dmrn
