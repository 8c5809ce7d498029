#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedorch/error.hpp"
#include "fedorch/model/dataset.hpp"
#include "fedorch/rng.hpp"

namespace fedorch {

struct SyntheticTaskSpec {
  std::size_t input_dim = 16;
  std::uint64_t true_weight_seed = 7;
  double noise_sigma = 0.5;
  // Noiseless targets are affinely mapped onto this range (defaults mirror an
  // adult age span in years).
  double target_low = 45.0;
  double target_high = 81.0;

  void validate() const {
    if (input_dim == 0) throw InvalidInput("task.input_dim must be positive");
    if (!(noise_sigma >= 0.0)) throw InvalidInput("task.noise_sigma must be >= 0");
    if (!(target_low < target_high)) {
      throw InvalidInput("task.target_low must be below task.target_high");
    }
  }
};

// Ground-truth weights: standard normal draws from Rng(true_weight_seed).
inline std::vector<double> synthetic_true_weights(const SyntheticTaskSpec& spec) {
  Rng rng(spec.true_weight_seed);
  std::vector<double> w(spec.input_dim);
  for (auto& v : w) v = rng.normal();
  return w;
}

/// Features ~ N(0, 1); noiseless target = X w_true rescaled so the sample's
/// min/max land on [target_low, target_high]; then N(0, sigma^2) noise.
inline Dataset generate_synthetic(const SyntheticTaskSpec& spec, std::size_t n,
                                  std::uint64_t seed) {
  spec.validate();
  if (n == 0) throw InvalidInput("synthetic dataset needs n >= 1");
  const auto w = synthetic_true_weights(spec);
  const std::size_t d = spec.input_dim;

  Rng rng(seed);
  std::vector<double> features(n * d);
  for (auto& v : features) v = rng.normal();

  std::vector<double> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += features[i * d + j] * w[j];
    raw[i] = z;
  }
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double span = spec.target_high - spec.target_low;

  std::vector<double> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    double t = hi > lo ? spec.target_low + (raw[i] - lo) / (hi - lo) * span
                       : spec.target_low + 0.5 * span;
    t = std::clamp(t, spec.target_low, spec.target_high);
    targets[i] = t;
  }
  if (spec.noise_sigma > 0.0) {
    for (auto& t : targets) t += spec.noise_sigma * rng.normal();
  }
  return Dataset(d, std::move(features), std::move(targets));
}

}  // namespace fedorch
