#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fedorch/error.hpp"

namespace fedorch {

/// What the scheduler knows about one learner.
struct LearnerProfile {
  std::size_t learner_index = 0;
  std::size_t num_examples = 0;
  std::size_t batch_size = 1;
  // Seconds per local batch; zero until measured.
  double batch_time = 0.0;

  std::size_t batches_per_epoch() const {
    return (num_examples + batch_size - 1) / batch_size;
  }
};

struct SyncPolicy {
  std::size_t local_epochs = 4;
};

struct SemiSyncPolicy {
  double lambda = 4.0;
};

using Policy = std::variant<SyncPolicy, SemiSyncPolicy>;

inline std::string policy_tag(const Policy& policy) {
  return std::holds_alternative<SyncPolicy>(policy) ? "sync" : "semisync";
}

inline void validate_policy(const Policy& policy) {
  if (const auto* s = std::get_if<SyncPolicy>(&policy)) {
    if (s->local_epochs == 0) throw InvalidInput("policy.local_epochs must be >= 1");
  } else {
    const double lambda = std::get<SemiSyncPolicy>(policy).lambda;
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw InvalidInput("policy.lambda must be > 0");
    }
  }
}

struct SchedulePlan {
  std::optional<double> t_max;          // semi-sync only
  std::vector<std::uint64_t> batches;   // B_k, indexed like the profiles

  bool operator==(const SchedulePlan&) const = default;
};

namespace detail {

inline void check_profile(const LearnerProfile& p, bool need_time) {
  if (p.num_examples == 0) {
    throw InvalidInput("learner " + std::to_string(p.learner_index) + " has no examples");
  }
  if (p.batch_size == 0) {
    throw InvalidInput("learner " + std::to_string(p.learner_index) + " has batch_size 0");
  }
  if (need_time && !(p.batch_time > 0.0)) {
    throw InvalidInput("learner " + std::to_string(p.learner_index) +
                       " has no positive batch time");
  }
}

inline void check_profiles(std::span<const LearnerProfile> profiles, bool need_time) {
  if (profiles.empty()) throw InvalidInput("no learner profiles");
  for (const auto& p : profiles) check_profile(p, need_time);
}

}  // namespace detail

// ceil(|D| / beta) * t_beta
inline double epoch_time(const LearnerProfile& profile) {
  detail::check_profile(profile, true);
  return static_cast<double>(profile.batches_per_epoch()) * profile.batch_time;
}

// lambda times the slowest learner's epoch time.
inline double compute_tmax(std::span<const LearnerProfile> profiles, double lambda) {
  detail::check_profiles(profiles, true);
  if (!(lambda > 0.0)) throw InvalidInput("lambda must be > 0");
  double slowest = 0.0;
  for (const auto& p : profiles) slowest = std::max(slowest, epoch_time(p));
  return lambda * slowest;
}

/// B_k = max(1, floor(t_max / t_beta_k)). The quotient gets 1e-9 of slack
/// before flooring so that values like 4 * (n * t) / t that are integral in
/// exact arithmetic do not round down a whole batch.
inline SchedulePlan semisync_allocations(std::span<const LearnerProfile> profiles,
                                         double lambda) {
  SchedulePlan plan;
  const double t_max = compute_tmax(profiles, lambda);
  plan.t_max = t_max;
  for (const auto& p : profiles) {
    const double q = std::floor(t_max / p.batch_time + 1e-9);
    plan.batches.push_back(q < 1.0 ? 1 : static_cast<std::uint64_t>(q));
  }
  return plan;
}

// B_k = E * ceil(|D_k| / beta_k)
inline SchedulePlan sync_allocations(std::span<const LearnerProfile> profiles,
                                     const SyncPolicy& policy) {
  detail::check_profiles(profiles, false);
  if (policy.local_epochs == 0) throw InvalidInput("local_epochs must be >= 1");
  SchedulePlan plan;
  for (const auto& p : profiles) {
    plan.batches.push_back(policy.local_epochs * p.batches_per_epoch());
  }
  return plan;
}

inline SchedulePlan allocate(std::span<const LearnerProfile> profiles,
                             const Policy& policy) {
  if (const auto* s = std::get_if<SyncPolicy>(&policy)) {
    return sync_allocations(profiles, *s);
  }
  return semisync_allocations(profiles, std::get<SemiSyncPolicy>(policy).lambda);
}

// B_k * t_beta_k per learner.
inline std::vector<double> busy_time(std::span<const LearnerProfile> profiles,
                                     const SchedulePlan& plan) {
  detail::check_profiles(profiles, true);
  if (plan.batches.size() != profiles.size()) {
    throw InvalidInput("schedule plan does not match the learner profiles");
  }
  std::vector<double> busy;
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    busy.push_back(static_cast<double>(plan.batches[k]) * profiles[k].batch_time);
  }
  return busy;
}

// Time each learner waits at the barrier for the busiest one.
inline std::vector<double> idle_time(std::span<const LearnerProfile> profiles,
                                     const SchedulePlan& plan) {
  auto busy = busy_time(profiles, plan);
  const double longest = *std::max_element(busy.begin(), busy.end());
  for (auto& b : busy) b = longest - b;
  return busy;
}

}  // namespace fedorch
