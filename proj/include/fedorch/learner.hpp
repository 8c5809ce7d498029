#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fedorch/error.hpp"
#include "fedorch/log.hpp"
#include "fedorch/model/dataset.hpp"
#include "fedorch/model/model.hpp"
#include "fedorch/model/parameter_vector.hpp"
#include "fedorch/rng.hpp"

namespace fedorch {

struct Hyperparams {
  double learning_rate = 5e-5;
  std::size_t batch_size = 1;
  std::uint64_t seed = 1990;
};

enum class ClockKind { monotonic, simulated };

/// Source of per-batch durations. The simulated clock charges a fixed cost per
/// batch and never reads wall time.
struct Clock {
  ClockKind kind = ClockKind::simulated;
  double batch_seconds = 0.12;

  static Clock monotonic() { return {ClockKind::monotonic, 0.0}; }
  static Clock simulated(double seconds_per_batch) {
    return {ClockKind::simulated, seconds_per_batch};
  }
};

struct TaskAssignment {
  std::uint32_t round = 0;
  std::size_t learner_index = 0;
  ParameterVector community_params;
  std::uint64_t num_batches = 1;
  Hyperparams hyperparams;
};

struct LocalUpdate {
  std::size_t learner_index = 0;
  std::uint32_t round = 0;
  ParameterVector params;
  std::size_t num_examples = 0;
  double observed_batch_time = 0.0;  // median seconds per batch
  double busy_seconds = 0.0;         // sum over executed batches
  std::uint64_t batches_executed = 0;
};

/// Seed for a learner's data order in a given round:
/// mix64(global_seed ^ mix64((round << 32) | learner_index)), mix64 being the
/// splitmix64 finalizer. Injective in (round, learner_index) for a fixed
/// global seed.
constexpr std::uint64_t hash_seed(std::uint64_t global_seed, std::uint32_t round,
                                  std::uint32_t learner_index) noexcept {
  const std::uint64_t key = (static_cast<std::uint64_t>(round) << 32) | learner_index;
  return mix64(global_seed ^ mix64(key));
}

inline std::size_t effective_batch_size(std::size_t requested, std::size_t shard_rows) {
  if (requested == 0) throw InvalidInput("batch_size must be positive");
  if (requested > shard_rows) {
    log().warn("batch_size {} exceeds shard size {}; clamping", requested, shard_rows);
    return shard_rows;
  }
  return requested;
}

inline std::uint64_t batches_per_epoch(std::size_t rows, std::size_t batch_size) {
  return (rows + batch_size - 1) / batch_size;
}

/// Runs exactly num_batches SGD steps from start over data. Rows are visited
/// in an order shuffled by Rng(order_seed) and reshuffled (same generator,
/// continued) each time an epoch is exhausted; the final batch of an epoch
/// may be short. When durations is non-null, the wall time of every batch is
/// appended to it.
inline ParameterVector local_train(const ModelSpec& spec, ParameterVector start,
                                   const Dataset& data, std::uint64_t num_batches,
                                   double learning_rate, std::size_t batch_size,
                                   std::uint64_t order_seed,
                                   std::vector<double>* durations = nullptr) {
  detail::check_params(spec, start);
  if (data.empty()) throw InvalidInput("training on an empty shard");
  if (data.cols() != spec.input_dim) {
    throw InvalidInput("shard has " + std::to_string(data.cols()) +
                       " features, model expects " + std::to_string(spec.input_dim));
  }
  const std::size_t n = data.rows();
  const std::size_t beta = std::min(batch_size, n);

  detail::Network net(spec);
  std::vector<double> grad(start.size());
  auto params = start.values();

  Rng rng(order_seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span(order));
  std::size_t pos = 0;

  using steady = std::chrono::steady_clock;
  for (std::uint64_t b = 0; b < num_batches; ++b) {
    if (pos >= n) {
      rng.shuffle(std::span(order));
      pos = 0;
    }
    const std::size_t len = std::min(beta, n - pos);
    const auto rows = std::span<const std::size_t>(order).subspan(pos, len);
    pos += len;

    const auto t0 = durations ? steady::now() : steady::time_point{};
    detail::mse_gradient(net, params, data, rows, grad);
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] = params[i] - learning_rate * grad[i];
    }
    if (durations) {
      durations->push_back(std::chrono::duration<double>(steady::now() - t0).count());
    }
  }
  if (!start.all_finite()) {
    throw RunAborted("training diverged: parameters became non-finite");
  }
  return start;
}

inline double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  if (values.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

/// Executes one round of local work: exactly assignment.num_batches SGD
/// batches starting from the community model.
inline LocalUpdate execute_task(const ModelSpec& spec, const TaskAssignment& assignment,
                                const Dataset& shard, const Clock& clock) {
  if (assignment.num_batches == 0) throw InvalidInput("assignment with zero batches");
  if (shard.empty()) throw InvalidInput("learner shard is empty");
  const std::size_t beta = effective_batch_size(assignment.hyperparams.batch_size, shard.rows());
  const auto seed = hash_seed(assignment.hyperparams.seed, assignment.round,
                              static_cast<std::uint32_t>(assignment.learner_index));

  LocalUpdate update;
  update.learner_index = assignment.learner_index;
  update.round = assignment.round;
  update.num_examples = shard.rows();
  update.batches_executed = assignment.num_batches;

  if (clock.kind == ClockKind::simulated) {
    update.params = local_train(spec, assignment.community_params, shard,
                                assignment.num_batches,
                                assignment.hyperparams.learning_rate, beta, seed);
    update.observed_batch_time = clock.batch_seconds;
    update.busy_seconds = static_cast<double>(assignment.num_batches) * clock.batch_seconds;
  } else {
    std::vector<double> durations;
    durations.reserve(assignment.num_batches);
    update.params = local_train(spec, assignment.community_params, shard,
                                assignment.num_batches,
                                assignment.hyperparams.learning_rate, beta, seed,
                                &durations);
    update.busy_seconds = std::accumulate(durations.begin(), durations.end(), 0.0);
    update.observed_batch_time = median(std::move(durations));
  }
  return update;
}

}  // namespace fedorch
