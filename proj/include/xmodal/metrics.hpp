#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xmodal/errors.hpp"

namespace xmodal {

/// K x K counts, rows = true class, columns = predicted class.
using Confusion = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Confusion confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, int n_classes) {
  if (y_true.size() != y_pred.size()) throw ShapeMismatch("confusion_matrix: label vectors differ in length");
  Confusion c = Confusion::Zero(n_classes, n_classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_true[i] >= n_classes || y_pred[i] < 0 || y_pred[i] >= n_classes)
      throw LabelRange("confusion_matrix: label outside [0, " + std::to_string(n_classes) + ")");
    ++c(y_true[i], y_pred[i]);
  }
  return c;
}

/// F1 of each class; zero when a class has no true and no predicted windows.
inline std::vector<double> per_class_f1(const Confusion& c) {
  std::vector<double> f1(static_cast<std::size_t>(c.rows()), 0.0);
  for (Eigen::Index k = 0; k < c.rows(); ++k) {
    const double tp = static_cast<double>(c(k, k));
    const double denom = static_cast<double>(c.row(k).sum() + c.col(k).sum());
    f1[k] = denom > 0 ? 2.0 * tp / denom : 0.0;
  }
  return f1;
}

/// Unweighted mean of per-class F1 over all classes, Null included.
inline double macro_f1(const Confusion& c) {
  if (c.rows() < 2 || c.rows() != c.cols()) throw ShapeMismatch("macro_f1 needs a square confusion with K >= 2");
  double sum = 0;
  for (double f : per_class_f1(c)) sum += f;
  return sum / static_cast<double>(c.rows());
}

inline double accuracy(const Confusion& c) {
  const long total = c.sum();
  return total > 0 ? static_cast<double>(c.trace()) / static_cast<double>(total) : 0.0;
}

struct MeanStd {
  double mean = 0;
  double std = 0;  // population
};

inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  for (double x : xs) out.std += (x - out.mean) * (x - out.mean);
  out.std = std::sqrt(out.std / static_cast<double>(xs.size()));
  return out;
}

}  // namespace xmodal
