#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedorch/error.hpp"
#include "fedorch/model/parameter_vector.hpp"

namespace fedorch {

struct ContributionWeights {
  std::vector<double> raw;
  std::vector<double> normalized;
};

inline ContributionWeights normalize_weights(std::span<const double> p) {
  if (p.empty()) throw InvalidInput("no contribution weights");
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(p[k] > 0.0) || !std::isfinite(p[k])) {
      throw InvalidInput("contribution weight " + std::to_string(k) +
                         " must be positive and finite");
    }
    total += p[k];
  }
  ContributionWeights w;
  w.raw.assign(p.begin(), p.end());
  w.normalized.reserve(p.size());
  for (double v : p) w.normalized.push_back(v / total);
  return w;
}

// Static contribution values: p_k = number of local training examples.
inline ContributionWeights weights_from_examples(
    std::span<const std::size_t> num_examples) {
  std::vector<double> raw;
  raw.reserve(num_examples.size());
  for (std::size_t k = 0; k < num_examples.size(); ++k) {
    if (num_examples[k] == 0) {
      throw InvalidInput("learner " + std::to_string(k) + " reports zero training examples");
    }
    raw.push_back(static_cast<double>(num_examples[k]));
  }
  return normalize_weights(raw);
}

struct WeightedModel {
  const ParameterVector* params = nullptr;
  double weight = 0.0;
};

/// Community model: sum_k (p_k / sum_j p_j) * w_k, accumulated in ascending
/// input order so the result is bitwise reproducible. The first term seeds
/// the accumulator, so a single model is returned bit for bit.
inline ParameterVector weighted_average(std::span<const WeightedModel> models) {
  if (models.empty()) throw InvalidInput("weighted_average of zero models");
  std::vector<double> raw;
  raw.reserve(models.size());
  for (const auto& m : models) raw.push_back(m.weight);
  const auto weights = normalize_weights(raw);

  const auto& layout = models.front().params->layout();
  for (std::size_t k = 0; k < models.size(); ++k) {
    const auto& p = *models[k].params;
    if (!layouts_compatible(p.layout(), layout)) {
      throw InvalidInput("model " + std::to_string(k) + " has a different parameter layout");
    }
    if (!p.all_finite()) {
      throw InvalidInput("model " + std::to_string(k) + " has non-finite parameters");
    }
  }

  std::vector<double> acc(layout_size(layout));
  const auto first = models.front().params->values();
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = weights.normalized[0] * first[i];
  for (std::size_t k = 1; k < models.size(); ++k) {
    const auto v = models[k].params->values();
    const double a = weights.normalized[k];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += a * v[i];
  }
  return ParameterVector(layout, std::move(acc));
}

inline ParameterVector weighted_average(
    const std::vector<std::pair<ParameterVector, double>>& models) {
  std::vector<WeightedModel> refs;
  refs.reserve(models.size());
  for (const auto& [params, weight] : models) refs.push_back({&params, weight});
  return weighted_average(refs);
}

}  // namespace fedorch
