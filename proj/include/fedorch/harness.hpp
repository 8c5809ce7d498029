#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "fedorch/config.hpp"
#include "fedorch/data/csv.hpp"
#include "fedorch/data/partition.hpp"
#include "fedorch/data/synthetic.hpp"
#include "fedorch/federation.hpp"
#include "fedorch/learner.hpp"
#include "fedorch/model/metrics.hpp"
#include "fedorch/policy.hpp"

namespace fedorch {

struct TaskData {
  Dataset train;
  Dataset test;
};

// Synthetic tasks draw train_size + test_size rows in one pass (one target
// rescale) and split them in order: the first train_size rows train.
inline TaskData load_task(const TaskConfig& task) {
  if (task.kind == TaskKind::csv) {
    TaskData d{load_csv(task.train_csv), load_csv(task.test_csv)};
    if (d.train.cols() != d.test.cols()) {
      throw ConfigError("task.test", "feature count differs from the training file");
    }
    return d;
  }
  const auto all = generate_synthetic(task.synthetic, task.train_size + task.test_size, task.data_seed);
  return {all.slice(0, task.train_size), all.slice(task.train_size, all.rows())};
}

inline FederationOptions federation_options(const ExperimentConfig& cfg, std::size_t input_dim) {
  FederationOptions o;
  o.model = cfg.model_spec(input_dim);
  o.policy = cfg.policy;
  o.hyperparams = cfg.hyperparams;
  o.rounds = cfg.rounds;
  o.target_mae = cfg.target_mae;
  o.clock = cfg.clock.kind;
  o.reestimate_batch_time = cfg.reestimate_batch_time;
  return o;
}

inline std::vector<Dataset> shard_datasets(const ExperimentConfig& cfg, const Dataset& train) {
  std::vector<Dataset> out;
  for (auto& s : partition(train, cfg.partition)) out.push_back(std::move(s.data));
  return out;
}

inline const char* time_column(ClockKind k) {
  return k == ClockKind::simulated ? "sim_seconds" : "wall_seconds";
}

inline std::string csv_header(ClockKind clock) {
  return fmt::format("round,{},mse,rmse,mae,corr,policy,messages_cumulative\n", time_column(clock));
}

/// Round history as CSV: one row per federation round, messages_cumulative
/// counting model messages (learner uploads plus controller assignments).
inline std::string rounds_csv(const std::vector<RoundRecord>& history, const std::string& tag,
                              ClockKind clock) {
  std::string out = csv_header(clock);
  std::size_t messages = 0;
  for (const auto& r : history) {
    messages += r.messages_sent + r.messages_received;
    out += fmt::format("{},{},{},{},{},{},{},{}\n", r.round, r.cumulative_seconds, r.metrics.mse,
                       r.metrics.rmse, r.metrics.mae, r.metrics.corr, tag, messages);
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunAborted("cannot write " + path.string());
  out << text;
}

inline void write_config_echo(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  write_text(dir / "config.resolved.json", to_json(cfg).dump(2) + "\n");
}

struct ExperimentResult {
  FederationResult federation;
  std::string csv;
};

/// In-process federated run; writes rounds.csv and config.resolved.json to
/// out_dir when it is non-empty.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out_dir = {}) {
  const auto data = load_task(cfg.task);
  const auto shards = shard_datasets(cfg, data.train);
  const auto opts = federation_options(cfg, data.train.cols());
  if (!out_dir.empty()) write_config_echo(cfg, out_dir);
  ExperimentResult res;
  res.federation = run_federation(opts, shards, cfg.clocks(), data.test);
  res.csv = rounds_csv(res.federation.history, policy_tag(cfg.policy), cfg.clock.kind);
  if (!out_dir.empty()) write_text(out_dir / "rounds.csv", res.csv);
  return res;
}

// ---------------------------------------------------------------------------
// Centralized baseline

struct EpochRecord {
  std::size_t epoch = 0;
  double cumulative_seconds = 0.0;
  Metrics metrics;
  ParameterVector params;
};

/// Trains one model on the whole training set. Epoch e shuffles with
/// hash_seed(seed, e, 0), which is exactly what learner 0 of a one-learner
/// federation uses in round e.
inline std::vector<EpochRecord> centralized_train(const ModelSpec& spec, ParameterVector params,
                                                  const Dataset& train, const Dataset& test,
                                                  std::size_t epochs, const Hyperparams& hp,
                                                  const Clock& clock) {
  const std::size_t beta = effective_batch_size(hp.batch_size, train.rows());
  const auto batches = batches_per_epoch(train.rows(), beta);
  std::vector<EpochRecord> history;
  double elapsed = 0.0;
  for (std::size_t e = 1; e <= epochs; ++e) {
    const auto seed = hash_seed(hp.seed, static_cast<std::uint32_t>(e), 0);
    if (clock.kind == ClockKind::simulated) {
      params = local_train(spec, std::move(params), train, batches, hp.learning_rate, beta, seed);
      elapsed += static_cast<double>(batches) * clock.batch_seconds;
    } else {
      const auto t0 = std::chrono::steady_clock::now();
      params = local_train(spec, std::move(params), train, batches, hp.learning_rate, beta, seed);
      elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    history.push_back({e, elapsed, evaluate(spec, params, test), params});
  }
  return history;
}

// Matched work: R * E epochs under sync, floor(R * lambda) under semi-sync.
inline std::size_t centralized_epochs(const ExperimentConfig& cfg) {
  if (const auto* s = std::get_if<SyncPolicy>(&cfg.policy)) return cfg.rounds * s->local_epochs;
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(cfg.rounds) * std::get<SemiSyncPolicy>(cfg.policy).lambda));
}

inline std::string epochs_csv(const std::vector<EpochRecord>& history, ClockKind clock) {
  std::string out = csv_header(clock);
  for (const auto& r : history) {
    out += fmt::format("{},{},{},{},{},{},centralized,0\n", r.epoch, r.cumulative_seconds,
                       r.metrics.mse, r.metrics.rmse, r.metrics.mae, r.metrics.corr);
  }
  return out;
}

struct CentralizedResult {
  std::vector<EpochRecord> history;
  Metrics initial;
  std::string csv;
};

inline CentralizedResult run_centralized(const ExperimentConfig& cfg,
                                         const std::filesystem::path& out_dir = {}) {
  const auto data = load_task(cfg.task);
  const auto spec = cfg.model_spec(data.train.cols());
  const auto init = init_model(spec, cfg.hyperparams.seed);
  if (!out_dir.empty()) write_config_echo(cfg, out_dir);
  CentralizedResult res;
  res.initial = evaluate(spec, init, data.test);
  res.history = centralized_train(spec, init, data.train, data.test, centralized_epochs(cfg),
                                  cfg.hyperparams, cfg.clock_for(0));
  res.csv = epochs_csv(res.history, cfg.clock.kind);
  if (!out_dir.empty()) write_text(out_dir / "centralized.csv", res.csv);
  return res;
}

// ---------------------------------------------------------------------------
// Partition export and schedule inspection

inline std::vector<ShardSummary> run_partition(const ExperimentConfig& cfg,
                                               const std::filesystem::path& out_dir) {
  const auto data = load_task(cfg.task);
  const auto shards = partition(data.train, cfg.partition);
  write_config_echo(cfg, out_dir);
  write_csv(out_dir / "test.csv", data.test);
  return export_shards(out_dir, shards);
}

// Profiles from explicit schedule_profiles, else from the partition sizes and
// the configured simulated batch costs.
inline std::vector<LearnerProfile> schedule_profiles(const ExperimentConfig& cfg) {
  std::vector<LearnerProfile> profiles;
  if (!cfg.schedule_profiles.empty()) {
    for (std::size_t k = 0; k < cfg.schedule_profiles.size(); ++k) {
      const auto& p = cfg.schedule_profiles[k];
      profiles.push_back({k, p.num_examples, p.batch_size, p.batch_time});
    }
    return profiles;
  }
  if (cfg.clock.kind != ClockKind::simulated) {
    throw ConfigError("clock.kind", "inspect-schedule needs explicit batch times "
                                    "(simulated clock or schedule_profiles)");
  }
  const auto data = load_task(cfg.task);
  const auto shards = partition(data.train, cfg.partition);
  for (const auto& s : shards) {
    const auto beta = std::min(cfg.hyperparams.batch_size, s.data.rows());
    profiles.push_back({s.learner_index, s.data.rows(), beta,
                        cfg.clock_for(s.learner_index).batch_seconds});
  }
  return profiles;
}

inline SchedulePlan inspect_schedule(const ExperimentConfig& cfg, std::ostream& out) {
  const auto profiles = schedule_profiles(cfg);
  const auto plan = allocate(profiles, cfg.policy);
  const auto idle = idle_time(profiles, plan);
  const auto busy = busy_time(profiles, plan);
  out << "policy: " << policy_tag(cfg.policy);
  if (const auto* s = std::get_if<SyncPolicy>(&cfg.policy)) {
    out << " (local_epochs=" << s->local_epochs << ")\n";
  } else {
    out << " (lambda=" << std::get<SemiSyncPolicy>(cfg.policy).lambda << ")\n";
    out << fmt::format("t_max: {:.2f} s\n", *plan.t_max);
  }
  out << fmt::format("{:>7} {:>9} {:>6} {:>10} {:>12} {:>10} {:>12} {:>10}\n", "learner",
                     "examples", "batch", "t_batch", "epoch_s", "B_k", "busy_s", "idle_s");
  for (std::size_t k = 0; k < profiles.size(); ++k) {
    const auto& p = profiles[k];
    out << fmt::format("{:>7} {:>9} {:>6} {:>10.4f} {:>12.2f} {:>10} {:>12.2f} {:>10.2f}\n",
                       p.learner_index, p.num_examples, p.batch_size, p.batch_time, epoch_time(p),
                       plan.batches[k], busy[k], idle[k]);
  }
  return plan;
}

}  // namespace fedorch
