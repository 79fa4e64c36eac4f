#include "dmrn/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Dense>

#include "dmrn/error.hpp"

namespace dmrn {

FeatureScaler FeatureScaler::fit(const FeatureMatrix& x) {
  FeatureScaler s;
  s.mean.assign(x.cols, 0.0);
  s.inv_std.assign(x.cols, 1.0);
  if (x.rows == 0) return s;
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) s.mean[j] += x.row(i)[j];
  }
  for (double& m : s.mean) m /= static_cast<double>(x.rows);
  std::vector<double> var(x.cols, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = x.row(i)[j] - s.mean[j];
      var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < x.cols; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(x.rows));
    s.inv_std[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  return s;
}

FeatureMatrix FeatureScaler::apply(const FeatureMatrix& x) const {
  FeatureMatrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) {
      out.row(i)[j] = (x.row(i)[j] - mean[j]) * inv_std[j];
    }
  }
  return out;
}

std::vector<double> FeatureScaler::apply(std::span<const double> row) const {
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) * inv_std[j];
  return out;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

double hinge_loss(std::span<const double> w, double b, const FeatureMatrix& x,
                  std::span<const int> signs) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    loss += std::max(0.0, 1.0 - signs[i] * (dot(w, x.row(i)) + b));
  }
  return loss;
}

double svm_objective(std::span<const double> w, double b, const FeatureMatrix& x,
                     std::span<const int> signs, double C) {
  return 0.5 * dot(w, w) + C * hinge_loss(w, b, x, signs);
}

namespace {

// Runs the binary solver for every column of `signs` at once; the problems
// are independent but share each pass over X.
std::vector<BinarySvm> train_columns(const FeatureMatrix& x, const Eigen::MatrixXd& Y,
                                     const SvmConfig& config) {
  if (!(config.C > 0.0)) throw ConfigError("svm: C must be positive");
  if (x.rows == 0) throw ContractError("svm: no training samples");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto n = static_cast<Eigen::Index>(x.rows), d = static_cast<Eigen::Index>(x.cols);
  const Eigen::Index k = Y.cols();
  const Eigen::Map<const RowMajor> X(x.values.data(), n, d);
  const double lambda = 1.0 / (config.C * static_cast<double>(n));

  // Columns [0, k) hold the current iterates, [k, 2k) the weighted averages.
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(d, 2 * k);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(2 * k);
  Eigen::MatrixXd scores(n, 2 * k);
  Eigen::MatrixXd active(n, k);
  double weight_sum = 0.0;

  std::vector<BinarySvm> best(static_cast<std::size_t>(k),
                              BinarySvm{std::vector<double>(x.cols, 0.0), 0.0});
  std::vector<double> best_obj(static_cast<std::size_t>(k),
                               std::numeric_limits<double>::infinity());
  auto consider = [&](Eigen::Index problem, Eigen::Index col) {
    double hinge = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      hinge += std::max(0.0, 1.0 - Y(i, problem) * scores(i, col));
    }
    const double o = 0.5 * W.col(col).squaredNorm() + config.C * hinge;
    auto& slot = best[static_cast<std::size_t>(problem)];
    if (o < best_obj[static_cast<std::size_t>(problem)]) {
      best_obj[static_cast<std::size_t>(problem)] = o;
      Eigen::Map<Eigen::VectorXd>(slot.w.data(), d) = W.col(col);
      slot.b = b[col];
    }
  };

  for (std::size_t t = 1; t <= config.iterations + 1; ++t) {
    scores.noalias() = X * W;
    scores.rowwise() += b;
    for (Eigen::Index p = 0; p < k; ++p) {
      consider(p, p);
      if (t > 1) consider(p, k + p);
    }
    if (t > config.iterations) break;

    for (Eigen::Index p = 0; p < k; ++p) {
      for (Eigen::Index i = 0; i < n; ++i) {
        active(i, p) = Y(i, p) * scores(i, p) < 1.0 ? Y(i, p) / static_cast<double>(n) : 0.0;
      }
    }
    Eigen::MatrixXd grad = lambda * W.leftCols(k);
    grad.noalias() -= X.transpose() * active;
    const double eta = std::min(1.0 / (lambda * static_cast<double>(t + 1)), 10.0);
    W.leftCols(k) -= eta * grad;
    b.head(k) += eta * active.colwise().sum();

    const double wt = static_cast<double>(t);
    const double keep = weight_sum / (weight_sum + wt), take = wt / (weight_sum + wt);
    W.rightCols(k) = keep * W.rightCols(k) + take * W.leftCols(k);
    b.tail(k) = keep * b.tail(k) + take * b.head(k);
    weight_sum += wt;
  }
  return best;
}

}  // namespace

BinarySvm train_binary_svm(const FeatureMatrix& x, std::span<const int> signs,
                           const SvmConfig& config) {
  if (signs.size() != x.rows) throw ShapeError("svm: sign count does not match samples");
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(x.rows), 1);
  for (std::size_t i = 0; i < x.rows; ++i) Y(static_cast<Eigen::Index>(i), 0) = signs[i];
  return std::move(train_columns(x, Y, config).front());
}

SvmModel svm_train(const FeatureMatrix& x, std::span<const int> labels,
                   const SvmConfig& config) {
  if (labels.size() != x.rows) {
    throw ShapeError("svm_train: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(x.rows) + " samples");
  }
  const std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2) throw ContractError("svm_train: need at least two classes");

  SvmModel model;
  model.C = config.C;
  model.classes.assign(classes.begin(), classes.end());
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(x.rows),
                    static_cast<Eigen::Index>(model.classes.size()));
  for (std::size_t c = 0; c < model.classes.size(); ++c) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          labels[i] == model.classes[c] ? 1.0 : -1.0;
    }
  }
  for (auto& m : train_columns(x, Y, config)) {
    model.weights.push_back(std::move(m.w));
    model.bias.push_back(m.b);
  }
  return model;
}

std::vector<double> SvmModel::decision_values(std::span<const double> x) const {
  std::vector<double> out(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) out[c] = dot(weights[c], x) + bias[c];
  return out;
}

std::vector<double> softmax(std::span<const double> values) {
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  const double mx = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(values[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace dmrn
