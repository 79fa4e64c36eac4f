#include "dmrn/metrics.hpp"

#include <cstdio>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "dmrn/error.hpp"

namespace dmrn {

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {}

void ConfusionMatrix::add(int truth, int predicted, std::uint64_t count) {
  if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= classes_ ||
      static_cast<std::size_t>(predicted) >= classes_) {
    throw ContractError("confusion matrix: class index out of range");
  }
  counts_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted)] += count;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t c = 0; c < classes_; ++c) t += at(c, c);
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw ContractError("confusion matrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

EvalReport compute_metrics(const ConfusionMatrix& confusion) {
  const std::size_t k = confusion.classes();
  const std::uint64_t total = confusion.total();
  if (total == 0) throw ContractError("compute_metrics: empty confusion matrix");

  EvalReport r;
  r.accuracy = {confusion.trace(), total};
  std::uint64_t sum_tp = 0, sum_fp = 0, sum_fn = 0, sum_tn = 0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics m;
    m.tp = confusion.at(c, c);
    for (std::size_t j = 0; j < k; ++j) {
      if (j == c) continue;
      m.fn += confusion.at(c, j);
      m.fp += confusion.at(j, c);
    }
    m.tn = total - m.tp - m.fn - m.fp;
    m.sensitivity = {m.tp, m.tp + m.fn};
    m.specificity = {m.tn, m.tn + m.fp};
    m.precision = {m.tp, m.tp + m.fp};
    m.f1 = {2 * m.tp, 2 * m.tp + m.fp + m.fn};
    sum_tp += m.tp;
    sum_fp += m.fp;
    sum_fn += m.fn;
    sum_tn += m.tn;
    r.per_class.push_back(m);
  }

  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
  };
  Acc sen, spe, pre, f1;
  auto fold = [&](Acc& acc, const Ratio& ratio, std::size_t c, const char* name) {
    if (auto v = ratio.value()) {
      acc.sum += *v;
      ++acc.n;
    } else {
      r.flags.push_back("class " + std::to_string(c) + " " + name +
                        " undefined (zero denominator); excluded from macro mean");
      ++r.macro.excluded;
    }
  };
  for (std::size_t c = 0; c < k; ++c) {
    fold(sen, r.per_class[c].sensitivity, c, "sensitivity");
    fold(spe, r.per_class[c].specificity, c, "specificity");
    fold(pre, r.per_class[c].precision, c, "precision");
    fold(f1, r.per_class[c].f1, c, "f1");
  }
  auto mean = [](const Acc& a) -> std::optional<double> {
    if (a.n == 0) return std::nullopt;
    return a.sum / static_cast<double>(a.n);
  };
  r.macro.sensitivity = mean(sen);
  r.macro.specificity = mean(spe);
  r.macro.precision = mean(pre);
  r.macro.f1 = mean(f1);

  r.micro.sensitivity = Ratio{sum_tp, sum_tp + sum_fn}.value();
  r.micro.specificity = Ratio{sum_tn, sum_tn + sum_fp}.value();
  r.micro.precision = Ratio{sum_tp, sum_tp + sum_fp}.value();
  r.micro.f1 = Ratio{2 * sum_tp, 2 * sum_tp + sum_fp + sum_fn}.value();
  return r;
}

namespace {

std::string format_value(std::optional<double> v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

std::string class_name(const std::vector<std::string>& names, std::size_t c) {
  return c < names.size() ? names[c] : "class" + std::to_string(c);
}

}  // namespace

void write_report_csv(std::ostream& out, const EvalReport& report,
                      const std::vector<std::string>& class_names) {
  out << "scope,class,metric,value\n";
  out << "overall,all,accuracy," << format_value(report.accuracy.value()) << '\n';
  auto summary = [&](const char* scope, const MetricSummary& s) {
    out << scope << ",all,sensitivity," << format_value(s.sensitivity) << '\n';
    out << scope << ",all,specificity," << format_value(s.specificity) << '\n';
    out << scope << ",all,precision," << format_value(s.precision) << '\n';
    out << scope << ",all,f1," << format_value(s.f1) << '\n';
  };
  summary("macro", report.macro);
  summary("micro", report.micro);
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    const std::string name = class_name(class_names, c);
    out << "class," << name << ",sensitivity," << format_value(m.sensitivity.value()) << '\n';
    out << "class," << name << ",specificity," << format_value(m.specificity.value()) << '\n';
    out << "class," << name << ",precision," << format_value(m.precision.value()) << '\n';
    out << "class," << name << ",f1," << format_value(m.f1.value()) << '\n';
  }
}

void write_report_table(std::ostream& out, const EvalReport& report,
                        const std::vector<std::string>& class_names) {
  auto pct = [](std::optional<double> v) {
    if (!v) return std::string("NA");
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * *v);
    return std::string(buf);
  };
  std::size_t width = 8;
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    width = std::max(width, class_name(class_names, c).size() + 2);
  }
  out << std::left << std::setw(static_cast<int>(width)) << "" << std::right << std::setw(9)
      << "Acc." << std::setw(9) << "Sen." << std::setw(9) << "Spe." << std::setw(9) << "Pre."
      << std::setw(9) << "F1" << '\n';
  auto row = [&](const std::string& label, const std::string& acc, const std::string& sen,
                 const std::string& spe, const std::string& pre, const std::string& f1) {
    out << std::left << std::setw(static_cast<int>(width)) << label << std::right
        << std::setw(9) << acc << std::setw(9) << sen << std::setw(9) << spe << std::setw(9)
        << pre << std::setw(9) << f1 << '\n';
  };
  row("macro", pct(report.accuracy.value()), pct(report.macro.sensitivity),
      pct(report.macro.specificity), pct(report.macro.precision), pct(report.macro.f1));
  row("micro", pct(report.accuracy.value()), pct(report.micro.sensitivity),
      pct(report.micro.specificity), pct(report.micro.precision), pct(report.micro.f1));
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    row(class_name(class_names, c), "", pct(m.sensitivity.value()), pct(m.specificity.value()),
        pct(m.precision.value()), pct(m.f1.value()));
  }
  for (const auto& f : report.flags) out << "note: " << f << '\n';
}

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& confusion,
                         const std::vector<std::string>& class_names) {
  out << "true\\predicted";
  for (std::size_t c = 0; c < confusion.classes(); ++c) out << ',' << class_name(class_names, c);
  out << '\n';
  for (std::size_t t = 0; t < confusion.classes(); ++t) {
    out << class_name(class_names, t);
    for (std::size_t p = 0; p < confusion.classes(); ++p) out << ',' << confusion.at(t, p);
    out << '\n';
  }
}

}  // namespace dmrn
