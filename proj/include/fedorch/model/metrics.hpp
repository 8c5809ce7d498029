#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "fedorch/error.hpp"
#include "fedorch/model/dataset.hpp"
#include "fedorch/model/model.hpp"

namespace fedorch {

struct Metrics {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double corr = 0.0;

  bool operator==(const Metrics&) const = default;
};

// Pearson correlation; 0 when either side has zero variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a <= 0.0 || var_b <= 0.0) return 0.0;
  const double r = cov / std::sqrt(var_a * var_b);
  // rounding can push |r| a hair past 1
  return r > 1.0 ? 1.0 : (r < -1.0 ? -1.0 : r);
}

inline Metrics compute_metrics(std::span<const double> predictions,
                               std::span<const double> targets) {
  if (predictions.empty()) throw InvalidInput("metrics over an empty set");
  if (predictions.size() != targets.size()) {
    throw InvalidInput("prediction and target counts differ");
  }
  double se = 0.0;
  double ae = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    se += r * r;
    ae += std::abs(r);
  }
  const auto n = static_cast<double>(predictions.size());
  Metrics m;
  m.mse = se / n;
  m.rmse = std::sqrt(m.mse);
  m.mae = ae / n;
  m.corr = pearson(predictions, targets);
  return m;
}

inline Metrics evaluate(const ModelSpec& spec, const ParameterVector& params,
                        const Dataset& test) {
  if (test.empty()) throw InvalidInput("evaluation on an empty test set");
  const auto predictions = forward(spec, params, test);
  return compute_metrics(predictions, test.targets());
}

}  // namespace fedorch
