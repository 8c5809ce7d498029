// fedorch: experiment harness for federated training runs.
//
//   fedorch run --config cfg.json [--out DIR] [--mode inprocess|distributed]
//   fedorch run --config cfg.json --mode distributed --listen HOST:PORT [--spawn-learners]
//   fedorch run --config cfg.json --mode distributed --connect HOST:PORT --learner-index K
//   fedorch centralized --config cfg.json [--out DIR]
//   fedorch partition --config cfg.json [--out DIR]
//   fedorch inspect-schedule --config cfg.json
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fedorch/fedorch.hpp"

extern char** environ;

namespace {

using namespace fedorch;

struct Args {
  std::string config;
  std::string out;
  std::string mode;
  std::string listen;
  std::string connect;
  std::optional<std::size_t> learner_index;
  bool spawn_learners = false;
};

std::filesystem::path output_dir(const Args& a, const ExperimentConfig& cfg) {
  return a.out.empty() ? cfg.output : std::filesystem::path(a.out);
}

void print_summary(const std::vector<RoundRecord>& history, const FederationResult& res,
                   const std::string& tag) {
  if (history.empty()) {
    std::cout << "no rounds executed\n";
    return;
  }
  const auto& last = history.back();
  std::cout << fmt::format(
      "{}: {} rounds, {:.2f} s, final mse={:.6g} rmse={:.6g} mae={:.6g} corr={:.6g}, "
      "model messages={}\n",
      tag, history.size(), last.cumulative_seconds, last.metrics.mse, last.metrics.rmse,
      last.metrics.mae, last.metrics.corr, res.transport_model_messages);
}

int spawn_learner(const std::string& config, const std::string& endpoint, std::size_t k,
                  pid_t& pid) {
  const std::string self = std::filesystem::read_symlink("/proc/self/exe").string();
  std::vector<std::string> argv_s = {self,        "run",      "--config",        config,
                                     "--mode",    "distributed", "--connect",    endpoint,
                                     "--learner-index", std::to_string(k)};
  std::vector<char*> argv;
  for (auto& s : argv_s) argv.push_back(s.data());
  argv.push_back(nullptr);
  return posix_spawn(&pid, self.c_str(), nullptr, nullptr, argv.data(), environ);
}

int run_distributed_learner(const Args& a, const ExperimentConfig& cfg) {
  if (!a.learner_index) throw ConfigError("--learner-index", "required with --connect");
  const auto k = *a.learner_index;
  if (k >= cfg.partition.num_learners) {
    throw ConfigError("--learner-index", "outside partition.num_learners");
  }
  const auto data = load_task(cfg.task);
  const auto shards = shard_datasets(cfg, data.train);
  const auto spec = cfg.model_spec(data.train.cols());
  auto session = wire::tcp_connect(wire::Endpoint::parse(a.connect));
  return run_learner(spec, k, shards[k], cfg.hyperparams.batch_size, cfg.clock_for(k), *session);
}

int run_distributed_controller(const Args& a, const ExperimentConfig& cfg) {
  if (a.listen.empty()) throw ConfigError("--listen", "required for a distributed controller");
  const auto data = load_task(cfg.task);
  const auto opts = federation_options(cfg, data.train.cols());
  wire::TcpListener listener(wire::Endpoint::parse(a.listen));
  log().info("controller listening on port {}", listener.port());

  std::vector<pid_t> children;
  if (a.spawn_learners) {
    const std::string endpoint = "127.0.0.1:" + std::to_string(listener.port());
    for (std::size_t k = 0; k < cfg.partition.num_learners; ++k) {
      pid_t pid = 0;
      if (spawn_learner(a.config, endpoint, k, pid) != 0) {
        throw RunAborted("failed to spawn learner " + std::to_string(k));
      }
      children.push_back(pid);
    }
  }

  std::vector<std::unique_ptr<wire::Session>> sessions;
  for (std::size_t k = 0; k < cfg.partition.num_learners; ++k) sessions.push_back(listener.accept());

  const auto out = output_dir(a, cfg);
  write_config_echo(cfg, out);
  int code = 0;
  try {
    const auto res = serve_controller(opts, cfg.partition.num_learners, sessions, data.test);
    write_text(out / "rounds.csv", rounds_csv(res.history, policy_tag(cfg.policy), cfg.clock.kind));
    print_summary(res.history, res, policy_tag(cfg.policy));
  } catch (...) {
    for (pid_t pid : children) waitpid(pid, nullptr, 0);
    throw;
  }
  for (pid_t pid : children) {
    int status = 0;
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) code = 1;
  }
  return code;
}

int cmd_run(const Args& a) {
  auto cfg = load_config(a.config);
  if (!a.mode.empty()) cfg.mode = a.mode == "distributed" ? RunMode::distributed : RunMode::inprocess;
  if (cfg.mode == RunMode::distributed) {
    if (!a.connect.empty()) return run_distributed_learner(a, cfg);
    return run_distributed_controller(a, cfg);
  }
  const auto res = run_experiment(cfg, output_dir(a, cfg));
  print_summary(res.federation.history, res.federation, policy_tag(cfg.policy));
  return 0;
}

int cmd_centralized(const Args& a) {
  const auto cfg = load_config(a.config);
  const auto res = run_centralized(cfg, output_dir(a, cfg));
  if (res.history.empty()) {
    std::cout << fmt::format("centralized: 0 epochs, initial mae={:.6g}\n", res.initial.mae);
  } else {
    const auto& m = res.history.back().metrics;
    std::cout << fmt::format("centralized: {} epochs, final mse={:.6g} rmse={:.6g} mae={:.6g} corr={:.6g}\n",
                             res.history.size(), m.mse, m.rmse, m.mae, m.corr);
  }
  return 0;
}

int cmd_partition(const Args& a) {
  const auto cfg = load_config(a.config);
  const auto out = output_dir(a, cfg);
  for (const auto& s : run_partition(cfg, out)) {
    std::cout << fmt::format("learner {:>3}: {:>6} rows, target [{:.3f}, {:.3f}] mean {:.3f}\n",
                             s.learner_index, s.rows, s.target_min, s.target_max, s.target_mean);
  }
  std::cout << "wrote shards and manifest.csv to " << out.string() << "\n";
  return 0;
}

int cmd_inspect(const Args& a) {
  const auto cfg = load_config(a.config);
  inspect_schedule(cfg, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedorch - federated training orchestration and simulation"};
  app.require_subcommand(1);
  Args args;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "experiment config (JSON)")->required();
    sub->add_option("--out", args.out, "output directory (overrides config 'output')");
  };
  auto* run = app.add_subcommand("run", "federated training run");
  add_common(run);
  run->add_option("--mode", args.mode, "inprocess or distributed")
      ->check(CLI::IsMember({"inprocess", "distributed"}));
  run->add_option("--listen", args.listen, "controller address host:port (distributed)");
  run->add_option("--connect", args.connect, "controller address to dial (distributed learner)");
  run->add_option("--learner-index", args.learner_index, "this learner's index (with --connect)");
  run->add_flag("--spawn-learners", args.spawn_learners,
                "controller launches the learner processes itself");
  auto* cen = app.add_subcommand("centralized", "centralized baseline with matched work");
  add_common(cen);
  auto* part = app.add_subcommand("partition", "write per-learner shard CSVs and a manifest");
  add_common(part);
  auto* insp = app.add_subcommand("inspect-schedule", "print the per-round work allocation");
  add_common(insp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return cmd_run(args);
    if (*cen) return cmd_centralized(args);
    if (*part) return cmd_partition(args);
    if (*insp) return cmd_inspect(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
