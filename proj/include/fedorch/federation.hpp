#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedorch/controller.hpp"
#include "fedorch/error.hpp"
#include "fedorch/learner.hpp"
#include "fedorch/log.hpp"
#include "fedorch/transport/codec.hpp"
#include "fedorch/transport/session.hpp"

namespace fedorch {

struct FederationOptions {
  ModelSpec model;
  Policy policy = SyncPolicy{};
  Hyperparams hyperparams;
  std::size_t rounds = 25;
  // Stop early once the community model's test MAE is at or below this.
  std::optional<double> target_mae;
  ClockKind clock = ClockKind::simulated;
  bool reestimate_batch_time = false;
  // Initial community model; init_model(model, hyperparams.seed) when unset.
  std::optional<ParameterVector> initial;
};

struct FederationResult {
  std::vector<RoundRecord> history;
  ParameterVector community;
  std::vector<LearnerProfile> profiles;  // after calibration
  double calibration_seconds = 0.0;
  // Summed over the controller's sessions.
  std::uint64_t transport_model_messages = 0;
  std::uint64_t transport_frames = 0;
};

/// Learner side of a session: register, then serve ASSIGN frames until
/// SHUTDOWN. Returns 0 on a clean shutdown and 1 after reporting an error to
/// the controller.
inline int run_learner(const ModelSpec& spec, std::size_t learner_index, const Dataset& shard,
                       std::size_t batch_size, const Clock& clock, wire::Session& session,
                       ParameterVector* final_model = nullptr) {
  std::uint32_t round = 0;
  const auto index16 = static_cast<std::uint16_t>(learner_index);
  try {
    LearnerProfile profile;
    profile.learner_index = learner_index;
    profile.num_examples = shard.rows();
    profile.batch_size = effective_batch_size(batch_size, shard.rows());
    profile.batch_time = clock.kind == ClockKind::simulated ? clock.batch_seconds : 0.0;
    session.send(wire::make_register(profile));
    while (true) {
      const auto msg = session.recv();
      round = msg.round;
      switch (msg.kind) {
        case wire::Kind::Assign: {
          auto task = wire::parse_assign(msg);
          task.hyperparams.batch_size = profile.batch_size;
          const auto update = execute_task(spec, task, shard, clock);
          session.send(wire::make_update(update));
          break;
        }
        case wire::Kind::Community:
          if (final_model) *final_model = wire::parse_params(msg.payload);
          break;
        case wire::Kind::Shutdown:
          log().debug("learner {} shutting down", learner_index);
          return 0;
        default:
          throw wire::WireError(wire::ErrorKind::malformed_payload,
                                std::string("learner cannot handle ") + wire::to_string(msg.kind));
      }
    }
  } catch (const wire::TransportError& e) {
    log().error("learner {}: transport failure in round {}: {}", learner_index, round, e.what());
    return 1;
  } catch (const std::exception& e) {
    log().error("learner {}: {} (round {})", learner_index, e.what(), round);
    try {
      session.send(wire::make_error(round, index16, e.what()));
    } catch (...) {
    }
    return 1;
  }
}

namespace detail {

inline LocalUpdate expect_update(wire::Session& s, std::size_t learner, std::uint32_t round) {
  wire::Envelope msg;
  try {
    msg = s.recv();
  } catch (const std::exception& e) {
    throw RunAborted("learner " + std::to_string(learner) + " failed in round " +
                     std::to_string(round) + ": " + e.what());
  }
  if (msg.kind == wire::Kind::Error) {
    throw RunAborted("learner " + std::to_string(learner) + " failed in round " +
                     std::to_string(round) + ": " + wire::parse_error(msg));
  }
  if (msg.kind != wire::Kind::Update) {
    throw RunAborted("learner " + std::to_string(learner) + " sent " + wire::to_string(msg.kind) +
                     " in round " + std::to_string(round) + ", expected UPDATE");
  }
  if (msg.learner_index != learner) {
    throw RunAborted("session of learner " + std::to_string(learner) + " carried a frame for learner " +
                     std::to_string(msg.learner_index));
  }
  return wire::parse_update(msg);
}

// Sends every task, then gathers the replies concurrently (one reader per
// session); the controller serializes the resulting state changes. A failure
// sends SHUTDOWN everywhere but still waits for the other replies.
template <typename OnUpdate>
void exchange(const std::vector<TaskAssignment>& tasks,
              std::map<std::size_t, wire::Session*>& sessions, OnUpdate on_update) {
  for (const auto& t : tasks) sessions.at(t.learner_index)->send(wire::make_assign(t));

  std::mutex err_mu;
  std::exception_ptr first_error;
  std::vector<std::thread> readers;
  readers.reserve(tasks.size());
  for (const auto& t : tasks) {
    readers.emplace_back([&, learner = t.learner_index, round = t.round] {
      try {
        on_update(expect_update(*sessions.at(learner), learner, round));
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (first_error) return;
        first_error = std::current_exception();
        // Healthy learners still finish this task, then read SHUTDOWN and exit.
        for (auto& [i, s] : sessions) {
          try {
            s->send({wire::kVersion, wire::Kind::Shutdown, round, 0, {}});
          } catch (...) {
          }
        }
      }
    });
  }
  for (auto& r : readers) r.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

/// Controller side: drives registration, calibration and the federation
/// rounds over already-established sessions (one per learner, any order).
inline FederationResult serve_controller(const FederationOptions& opts, std::size_t num_learners,
                                         std::vector<std::unique_ptr<wire::Session>>& sessions,
                                         const Dataset& test) {
  if (sessions.size() != num_learners) {
    throw InvalidInput("expected " + std::to_string(num_learners) + " sessions, got " +
                       std::to_string(sessions.size()));
  }
  ControllerOptions copt;
  copt.expected_learners = num_learners;
  copt.policy = opts.policy;
  copt.model = opts.model;
  copt.initial = opts.initial ? *opts.initial : init_model(opts.model, opts.hyperparams.seed);
  copt.hyperparams = opts.hyperparams;
  copt.clock = opts.clock;
  copt.reestimate_batch_time = opts.reestimate_batch_time;
  Controller controller(copt);

  std::map<std::size_t, wire::Session*> by_learner;
  auto shutdown_all = [&] {
    for (auto& s : sessions) {
      try {
        s->send({wire::kVersion, wire::Kind::Shutdown, controller.round(), 0, {}});
      } catch (...) {
      }
    }
  };

  try {
    for (auto& s : sessions) {
      const auto msg = s->recv();
      if (msg.kind != wire::Kind::Register) {
        throw RunAborted(std::string("expected REGISTER, got ") + wire::to_string(msg.kind) +
                         " from learner " + std::to_string(msg.learner_index));
      }
      const auto index = controller.register_learner(wire::parse_register(msg));
      by_learner[index] = s.get();
    }

    detail::exchange(controller.calibration_tasks(), by_learner,
                     [&](LocalUpdate u) { controller.receive_calibration(u); });
    log().info("calibration done ({:.6g}s)", controller.calibration_seconds());

    for (std::size_t r = 0; r < opts.rounds; ++r) {
      detail::exchange(controller.start_round(), by_learner,
                       [&](LocalUpdate u) { controller.receive_update(std::move(u)); });
      const auto rec = controller.complete_round(test);
      if (opts.target_mae && rec.metrics.mae <= *opts.target_mae) {
        log().info("target MAE {} reached in round {}", *opts.target_mae, rec.round);
        break;
      }
    }
    controller.finish();
  } catch (const std::exception& e) {
    controller.abort(e.what());
    shutdown_all();
    for (auto& s : sessions) s->close();
    if (dynamic_cast<const RunAborted*>(&e)) throw;
    throw RunAborted(e.what());
  }

  const auto community = controller.community();
  for (auto& s : sessions) {
    s->send({wire::kVersion, wire::Kind::Community, controller.round(), 0,
             wire::params_payload(community)});
  }
  shutdown_all();

  FederationResult result;
  result.history = controller.history();
  result.community = community;
  result.profiles = controller.profiles();
  result.calibration_seconds = controller.calibration_seconds();
  for (const auto& s : sessions) {
    const auto& c = s->counters();
    result.transport_model_messages += c.model_sent + c.model_received;
    result.transport_frames += c.frames_sent + c.frames_received;
  }
  return result;
}

/// Runs the whole federation inside this process: one thread per learner,
/// each talking to the controller through an in-process session.
inline FederationResult run_federation(const FederationOptions& opts,
                                       const std::vector<Dataset>& shards,
                                       const std::vector<Clock>& clocks, const Dataset& test) {
  if (shards.empty()) throw InvalidInput("federation needs at least one shard");
  if (clocks.size() != shards.size()) throw InvalidInput("need one clock per learner");

  std::vector<std::unique_ptr<wire::Session>> controller_side;
  std::vector<std::unique_ptr<wire::Session>> learner_side;
  for (std::size_t k = 0; k < shards.size(); ++k) {
    auto [c, l] = wire::make_inprocess_pair();
    controller_side.push_back(std::move(c));
    learner_side.push_back(std::move(l));
  }

  std::vector<std::thread> learners;
  std::vector<int> exit_codes(shards.size(), 0);
  for (std::size_t k = 0; k < shards.size(); ++k) {
    learners.emplace_back([&, k] {
      exit_codes[k] = run_learner(opts.model, k, shards[k], opts.hyperparams.batch_size,
                                  clocks[k], *learner_side[k]);
    });
  }

  FederationResult result;
  std::exception_ptr failure;
  try {
    result = serve_controller(opts, shards.size(), controller_side, test);
  } catch (...) {
    failure = std::current_exception();
  }
  for (auto& t : learners) t.join();
  if (failure) std::rethrow_exception(failure);
  return result;
}

}  // namespace fedorch
