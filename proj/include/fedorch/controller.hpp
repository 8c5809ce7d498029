#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fedorch/aggregation.hpp"
#include "fedorch/error.hpp"
#include "fedorch/learner.hpp"
#include "fedorch/log.hpp"
#include "fedorch/model/metrics.hpp"
#include "fedorch/model/model.hpp"
#include "fedorch/policy.hpp"

namespace fedorch {

enum class Phase {
  awaiting_registration,
  calibrating,
  ready,  // calibrated, or previous round aggregated
  round_open,
  aggregating,
  finished,
};

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::awaiting_registration: return "awaiting_registration";
    case Phase::calibrating: return "calibrating";
    case Phase::ready: return "ready";
    case Phase::round_open: return "round_open";
    case Phase::aggregating: return "aggregating";
    case Phase::finished: return "finished";
  }
  return "?";
}

struct RoundRecord {
  std::uint32_t round = 0;
  SchedulePlan plan;
  std::size_t updates_received = 0;
  double round_seconds = 0.0;       // simulated or wall, per the clock
  double cumulative_seconds = 0.0;
  Metrics metrics;
  std::size_t messages_sent = 0;
  std::size_t messages_received = 0;
  std::vector<double> busy_seconds;  // per learner
  std::vector<double> idle_seconds;  // per learner, relative to the busiest
  ParameterVector community;         // model after this round's aggregation
};

struct ControllerOptions {
  std::size_t expected_learners = 1;
  Policy policy = SyncPolicy{};
  ModelSpec model;
  ParameterVector initial;
  Hyperparams hyperparams;
  ClockKind clock = ClockKind::simulated;
  // Blend each round's observed batch time into the profile (EMA, weight 0.5)
  // instead of keeping the calibration measurement.
  bool reestimate_batch_time = false;
};

/// Federation controller: registers the fixed set of learners, calibrates
/// their batch times, hands out per-round work, and folds the returned local
/// models into the community model with example-count weights.
///
/// All public members are safe to call concurrently; each takes the internal
/// lock, and every phase precondition is checked before any state changes.
class Controller {
 public:
  explicit Controller(ControllerOptions options) : opt_(std::move(options)) {
    if (opt_.expected_learners == 0) throw InvalidInput("federation needs at least one learner");
    if (opt_.expected_learners > 0xFFFF) throw InvalidInput("too many learners for the wire format");
    validate_policy(opt_.policy);
    detail::check_params(opt_.model, opt_.initial);
    if (!opt_.initial.all_finite()) throw InvalidInput("initial model has non-finite values");
    community_ = opt_.initial;
  }

  std::size_t register_learner(const LearnerProfile& profile) {
    std::lock_guard lock(mu_);
    require(Phase::awaiting_registration, "register_learner");
    if (profile.learner_index >= opt_.expected_learners) {
      throw InvalidInput("learner index " + std::to_string(profile.learner_index) +
                         " outside federation of " + std::to_string(opt_.expected_learners));
    }
    if (registry_.count(profile.learner_index)) {
      throw InvalidInput("learner " + std::to_string(profile.learner_index) + " already registered");
    }
    if (profile.num_examples == 0 || profile.batch_size == 0) {
      throw InvalidInput("learner " + std::to_string(profile.learner_index) +
                         " registered without data or batch size");
    }
    registry_[profile.learner_index] = profile;
    log().debug("registered learner {} ({} examples)", profile.learner_index, profile.num_examples);
    if (registry_.size() == opt_.expected_learners) transition(Phase::calibrating);
    return profile.learner_index;
  }

  /// One epoch per learner (round 0) to measure batch times. The resulting
  /// models are discarded.
  std::vector<TaskAssignment> calibration_tasks() const {
    std::lock_guard lock(mu_);
    require(Phase::calibrating, "calibration_tasks");
    std::vector<TaskAssignment> tasks;
    for (const auto& [index, p] : registry_) {
      TaskAssignment t;
      t.round = 0;
      t.learner_index = index;
      t.community_params = community_;
      t.num_batches = p.batches_per_epoch();
      t.hyperparams = opt_.hyperparams;
      tasks.push_back(std::move(t));
    }
    return tasks;
  }

  // Returns true once every learner has reported its calibration epoch.
  bool receive_calibration(const LocalUpdate& update) {
    std::lock_guard lock(mu_);
    require(Phase::calibrating, "receive_calibration");
    auto it = registry_.find(update.learner_index);
    if (it == registry_.end()) {
      throw InvalidInput("calibration report from unknown learner " +
                         std::to_string(update.learner_index));
    }
    if (update.round != 0) throw InvalidInput("calibration report must carry round 0");
    if (!calibrated_.insert_or_assign(update.learner_index, true).second) {
      throw InvalidInput("duplicate calibration report from learner " +
                         std::to_string(update.learner_index));
    }
    it->second.batch_time = positive_time(update.observed_batch_time);
    calibration_seconds_ = std::max(calibration_seconds_, update.busy_seconds);
    if (calibrated_.size() == opt_.expected_learners) transition(Phase::ready);
    return phase_ == Phase::ready;
  }

  // Uses the batch times supplied at registration instead of measuring.
  void skip_calibration() {
    std::lock_guard lock(mu_);
    require(Phase::calibrating, "skip_calibration");
    for (const auto& [index, p] : registry_) {
      if (!(p.batch_time > 0.0)) {
        throw InvalidInput("learner " + std::to_string(index) +
                           " has no batch time; calibration required");
      }
    }
    transition(Phase::ready);
  }

  std::vector<TaskAssignment> start_round() {
    std::lock_guard lock(mu_);
    require(Phase::ready, "start_round");
    const auto profiles = profile_list();
    plan_ = allocate(profiles, opt_.policy);
    ++round_;
    buffer_.clear();
    round_started_ = std::chrono::steady_clock::now();
    std::vector<TaskAssignment> tasks;
    for (std::size_t k = 0; k < profiles.size(); ++k) {
      TaskAssignment t;
      t.round = round_;
      t.learner_index = profiles[k].learner_index;
      t.community_params = community_;
      t.num_batches = plan_.batches[k];
      t.hyperparams = opt_.hyperparams;
      tasks.push_back(std::move(t));
    }
    transition(Phase::round_open);
    return tasks;
  }

  // Returns true when the N-th update of the round arrives.
  bool receive_update(LocalUpdate update) {
    std::lock_guard lock(mu_);
    require(Phase::round_open, "receive_update");
    const auto index = update.learner_index;
    if (!registry_.count(index)) {
      throw InvalidInput("update from unknown learner " + std::to_string(index));
    }
    if (update.round != round_) {
      throw InvalidInput("learner " + std::to_string(index) + " reported round " +
                         std::to_string(update.round) + " during round " + std::to_string(round_));
    }
    if (buffer_.count(index)) {
      throw InvalidInput("duplicate update from learner " + std::to_string(index) +
                         " in round " + std::to_string(round_));
    }
    if (!layouts_compatible(update.params.layout(), community_.layout()) ||
        !update.params.all_finite()) {
      transition(Phase::finished);
      aborted_ = true;
      throw RunAborted("learner " + std::to_string(index) + " returned an incompatible or "
                       "non-finite model in round " + std::to_string(round_) + "; run aborted");
    }
    const auto slot = position_of(index);
    if (update.batches_executed != plan_.batches[slot]) {
      transition(Phase::finished);
      aborted_ = true;
      throw RunAborted("learner " + std::to_string(index) + " executed " +
                       std::to_string(update.batches_executed) + " of " +
                       std::to_string(plan_.batches[slot]) + " batches in round " +
                       std::to_string(round_));
    }
    update.params = ParameterVector(community_.layout(),
                                    {update.params.values().begin(), update.params.values().end()});
    buffer_.emplace(index, std::move(update));
    if (buffer_.size() == opt_.expected_learners) {
      round_finished_ = std::chrono::steady_clock::now();
      transition(Phase::aggregating);
      return true;
    }
    return false;
  }

  /// Aggregates the buffered updates (ascending learner index, weights =
  /// example counts) and evaluates the new community model on test.
  RoundRecord complete_round(const Dataset& test) {
    std::lock_guard lock(mu_);
    require(Phase::aggregating, "complete_round");

    std::vector<WeightedModel> models;
    RoundRecord rec;
    rec.round = round_;
    rec.plan = plan_;
    rec.updates_received = buffer_.size();
    for (const auto& [index, u] : buffer_) {
      models.push_back({&u.params, static_cast<double>(u.num_examples)});
      rec.busy_seconds.push_back(u.busy_seconds);
    }
    community_ = weighted_average(models);
    rec.metrics = evaluate(opt_.model, community_, test);
    rec.community = community_;

    const double longest = *std::max_element(rec.busy_seconds.begin(), rec.busy_seconds.end());
    for (double b : rec.busy_seconds) rec.idle_seconds.push_back(longest - b);
    rec.round_seconds =
        opt_.clock == ClockKind::simulated
            ? longest
            : std::chrono::duration<double>(round_finished_ - round_started_).count();
    elapsed_ += rec.round_seconds;
    rec.cumulative_seconds = elapsed_;
    rec.messages_sent = opt_.expected_learners;
    rec.messages_received = buffer_.size();

    if (opt_.reestimate_batch_time) {
      for (const auto& [index, u] : buffer_) {
        auto& p = registry_[index];
        p.batch_time = positive_time(0.5 * p.batch_time + 0.5 * u.observed_batch_time);
      }
    }
    buffer_.clear();
    history_.push_back(rec);
    transition(Phase::ready);
    log().info("round {} done: mae={:.6g} mse={:.6g} t={:.6g}s", rec.round, rec.metrics.mae,
               rec.metrics.mse, rec.cumulative_seconds);
    return rec;
  }

  void finish() {
    std::lock_guard lock(mu_);
    if (phase_ != Phase::ready) {
      throw StateError(std::string("finish: controller is ") + to_string(phase_) +
                       ", expected ready");
    }
    transition(Phase::finished);
  }

  void abort(const std::string& reason) {
    std::lock_guard lock(mu_);
    log().error("federation aborted: {}", reason);
    aborted_ = true;
    phase_ = Phase::finished;
  }

  Phase phase() const {
    std::lock_guard lock(mu_);
    return phase_;
  }
  std::uint32_t round() const {
    std::lock_guard lock(mu_);
    return round_;
  }
  bool aborted() const {
    std::lock_guard lock(mu_);
    return aborted_;
  }
  std::size_t registered() const {
    std::lock_guard lock(mu_);
    return registry_.size();
  }
  ParameterVector community() const {
    std::lock_guard lock(mu_);
    return community_;
  }
  std::vector<LearnerProfile> profiles() const {
    std::lock_guard lock(mu_);
    return profile_list();
  }
  std::vector<RoundRecord> history() const {
    std::lock_guard lock(mu_);
    return history_;
  }
  double calibration_seconds() const {
    std::lock_guard lock(mu_);
    return calibration_seconds_;
  }
  const ControllerOptions& options() const noexcept { return opt_; }

 private:
  void require(Phase expected, const char* op) const {
    if (phase_ != expected) {
      throw StateError(std::string(op) + ": controller is " + to_string(phase_) +
                       ", expected " + to_string(expected));
    }
  }

  void transition(Phase next) {
    log().debug("controller phase {} -> {} (round {})", to_string(phase_), to_string(next), round_);
    phase_ = next;
  }

  std::vector<LearnerProfile> profile_list() const {
    std::vector<LearnerProfile> out;
    for (const auto& [index, p] : registry_) out.push_back(p);
    return out;
  }

  std::size_t position_of(std::size_t learner_index) const {
    return static_cast<std::size_t>(std::distance(registry_.begin(), registry_.find(learner_index)));
  }

  // Real clocks can report 0 for sub-resolution batches; the scheduler needs > 0.
  static double positive_time(double t) { return t > 0.0 ? t : 1e-9; }

  ControllerOptions opt_;
  mutable std::mutex mu_;
  Phase phase_ = Phase::awaiting_registration;
  std::uint32_t round_ = 0;
  std::map<std::size_t, LearnerProfile> registry_;
  std::map<std::size_t, bool> calibrated_;
  std::map<std::size_t, LocalUpdate> buffer_;
  ParameterVector community_;
  SchedulePlan plan_;
  std::vector<RoundRecord> history_;
  double elapsed_ = 0.0;
  double calibration_seconds_ = 0.0;
  bool aborted_ = false;
  std::chrono::steady_clock::time_point round_started_{};
  std::chrono::steady_clock::time_point round_finished_{};
};

}  // namespace fedorch
