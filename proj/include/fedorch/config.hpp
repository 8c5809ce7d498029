#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedorch/data/partition.hpp"
#include "fedorch/data/synthetic.hpp"
#include "fedorch/error.hpp"
#include "fedorch/learner.hpp"
#include "fedorch/model/model.hpp"
#include "fedorch/policy.hpp"

namespace fedorch {

// Invalid configuration; field() is the dotted path of the offending key.
class ConfigError : public InvalidInput {
 public:
  ConfigError(std::string field, const std::string& message)
      : InvalidInput(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class TaskKind { synthetic, csv };
enum class RunMode { inprocess, distributed };

struct TaskConfig {
  TaskKind kind = TaskKind::synthetic;
  SyntheticTaskSpec synthetic;
  std::size_t train_size = 8356;
  std::size_t test_size = 2090;
  std::uint64_t data_seed = 1990;
  std::filesystem::path train_csv;
  std::filesystem::path test_csv;
};

struct ModelConfig {
  ModelKind kind = ModelKind::linear;
  std::vector<std::size_t> hidden_dims;
};

struct ClockConfig {
  ClockKind kind = ClockKind::simulated;
  // One entry applies to every learner; otherwise one per learner.
  std::vector<double> batch_seconds{0.12};
};

// Explicit learner facts for inspect-schedule, bypassing data and calibration.
struct ProfileOverride {
  std::size_t num_examples = 0;
  std::size_t batch_size = 1;
  double batch_time = 0.0;
};

/// Everything a run needs. Defaults reproduce the reference experiment: 8
/// learners on a skewed non-IID split, vanilla SGD at lr 5e-5 with batch size
/// 1, 4 local epochs (sync) or lambda = 4 (semi-sync), seed 1990, 25 rounds,
/// 0.12 s per simulated batch.
struct ExperimentConfig {
  TaskConfig task;
  ModelConfig model;
  PartitionPlan partition{PartitionScheme::skewed_noniid, 8, 1, skewed_preset_fractions(), 1990};
  Policy policy = SyncPolicy{4};
  std::size_t rounds = 25;
  std::optional<double> target_mae;
  Hyperparams hyperparams{5e-5, 1, 1990};
  ClockConfig clock;
  bool reestimate_batch_time = false;
  RunMode mode = RunMode::inprocess;
  std::filesystem::path output = "out";
  std::vector<ProfileOverride> schedule_profiles;

  Clock clock_for(std::size_t learner) const {
    if (clock.kind == ClockKind::monotonic) return Clock::monotonic();
    const double s = clock.batch_seconds.size() == 1 ? clock.batch_seconds[0]
                                                     : clock.batch_seconds.at(learner);
    return Clock::simulated(s);
  }

  std::vector<Clock> clocks() const {
    std::vector<Clock> out;
    for (std::size_t k = 0; k < partition.num_learners; ++k) out.push_back(clock_for(k));
    return out;
  }

  ModelSpec model_spec(std::size_t input_dim) const {
    ModelSpec s{model.kind, input_dim, model.hidden_dims, Activation::relu};
    s.validate();
    return s;
  }
};

namespace detail {

using nlohmann::json;

// Reads keys from one JSON object, rejecting unknown ones.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_.at(key).is_null();
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const auto& v = obj_.at(key);
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!non_negative_integer(v)) throw ConfigError(field(key), "must be a non-negative integer");
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      if (!v.is_array()) throw ConfigError(field(key), "must be an array");
      for (const auto& e : v) {
        if (!non_negative_integer(e)) {
          throw ConfigError(field(key), "entries must be non-negative integers");
        }
      }
    }
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key), "has the wrong type");
    }
  }

  template <typename T>
  void get_positive(const std::string& key, T& out) {
    if (has(key)) {
      const auto& v = obj_.at(key);
      if (!v.is_number() || !(v.get<double>() > 0)) throw ConfigError(field(key), "must be positive");
    }
    get(key, out);
  }

  std::string get_enum(const std::string& key, const std::string& fallback,
                       std::initializer_list<const char*> allowed) {
    std::string v = fallback;
    get(key, v);
    for (const char* a : allowed) {
      if (v == a) return v;
    }
    std::string list;
    for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
    throw ConfigError(field(key), "'" + v + "' is not one of {" + list + "}");
  }

  void finish() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(field(key), "unknown key");
    }
  }

 private:
  static bool non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::filesystem::path resolve_path(const std::filesystem::path& p,
                                          const std::filesystem::path& base) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace detail

/// Builds a config from JSON; relative CSV paths resolve against base_dir.
inline ExperimentConfig parse_config(const nlohmann::json& doc,
                                     const std::filesystem::path& base_dir = {}) {
  ExperimentConfig cfg;
  detail::ObjectReader root(doc, "");

  if (root.has("task")) {
    detail::ObjectReader r(root.raw("task"), "task");
    const auto kind = r.get_enum("kind", "synthetic", {"synthetic", "csv"});
    auto& t = cfg.task;
    if (kind == "synthetic") {
      t.kind = TaskKind::synthetic;
      r.get_positive("input_dim", t.synthetic.input_dim);
      r.get("true_weight_seed", t.synthetic.true_weight_seed);
      r.get("noise_sigma", t.synthetic.noise_sigma);
      r.get("target_low", t.synthetic.target_low);
      r.get("target_high", t.synthetic.target_high);
      r.get_positive("train_size", t.train_size);
      r.get_positive("test_size", t.test_size);
      r.get("data_seed", t.data_seed);
      if (!(t.synthetic.noise_sigma >= 0)) throw ConfigError("task.noise_sigma", "must be >= 0");
      if (!(t.synthetic.target_low < t.synthetic.target_high)) {
        throw ConfigError("task.target_low", "must be below task.target_high");
      }
    } else {
      t.kind = TaskKind::csv;
      std::string train;
      std::string test;
      r.get("train", train);
      r.get("test", test);
      if (train.empty()) throw ConfigError("task.train", "required for csv tasks");
      if (test.empty()) throw ConfigError("task.test", "required for csv tasks");
      t.train_csv = detail::resolve_path(train, base_dir);
      t.test_csv = detail::resolve_path(test, base_dir);
      if (!std::filesystem::exists(t.train_csv)) {
        throw ConfigError("task.train", "file " + t.train_csv.string() + " does not exist");
      }
      if (!std::filesystem::exists(t.test_csv)) {
        throw ConfigError("task.test", "file " + t.test_csv.string() + " does not exist");
      }
    }
    r.finish();
  }

  if (root.has("model")) {
    detail::ObjectReader r(root.raw("model"), "model");
    const auto kind = r.get_enum("kind", "linear", {"linear", "mlp"});
    cfg.model.kind = kind == "linear" ? ModelKind::linear : ModelKind::mlp;
    r.get("hidden_dims", cfg.model.hidden_dims);
    r.get_enum("activation", "relu", {"relu"});
    if (cfg.model.kind == ModelKind::mlp && cfg.model.hidden_dims.empty()) {
      throw ConfigError("model.hidden_dims", "mlp needs at least one hidden layer");
    }
    if (cfg.model.kind == ModelKind::linear && !cfg.model.hidden_dims.empty()) {
      throw ConfigError("model.hidden_dims", "linear models take no hidden layers");
    }
    for (auto h : cfg.model.hidden_dims) {
      if (h == 0) throw ConfigError("model.hidden_dims", "widths must be positive");
    }
    r.finish();
  }

  if (root.has("partition")) {
    detail::ObjectReader r(root.raw("partition"), "partition");
    const auto scheme = r.get_enum("scheme", "skewed_noniid",
                                   {"uniform_iid", "uniform_noniid", "skewed_noniid"});
    auto& p = cfg.partition;
    p.scheme = scheme == "uniform_iid"      ? PartitionScheme::uniform_iid
               : scheme == "uniform_noniid" ? PartitionScheme::uniform_noniid
                                            : PartitionScheme::skewed_noniid;
    r.get_positive("num_learners", p.num_learners);
    r.get_positive("buckets_per_learner", p.buckets_per_learner);
    r.get("seed", p.seed);
    if (r.has("size_fractions")) {
      r.get("size_fractions", p.size_fractions);
    } else if (p.scheme == PartitionScheme::skewed_noniid && p.num_learners == 8) {
      p.size_fractions = skewed_preset_fractions();
    } else {
      p.size_fractions.clear();
    }
    if (p.num_learners > 0xFFFF) throw ConfigError("partition.num_learners", "at most 65535");
    try {
      p.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError("partition.size_fractions", e.what());
    }
    r.finish();
  }

  if (root.has("policy")) {
    detail::ObjectReader r(root.raw("policy"), "policy");
    const auto kind = r.get_enum("kind", "sync", {"sync", "semisync"});
    if (kind == "sync") {
      SyncPolicy s{4};
      r.get_positive("local_epochs", s.local_epochs);
      cfg.policy = s;
    } else {
      SemiSyncPolicy s{4.0};
      r.get_positive("lambda", s.lambda);
      cfg.policy = s;
    }
    r.finish();
  }

  root.get("rounds", cfg.rounds);
  if (root.has("target_mae")) {
    double t = 0;
    root.get("target_mae", t);
    if (!(t > 0)) throw ConfigError("target_mae", "must be positive");
    cfg.target_mae = t;
  }

  if (root.has("hyperparams")) {
    detail::ObjectReader r(root.raw("hyperparams"), "hyperparams");
    r.get_positive("learning_rate", cfg.hyperparams.learning_rate);
    r.get_positive("batch_size", cfg.hyperparams.batch_size);
    r.get("seed", cfg.hyperparams.seed);
    r.finish();
  }

  if (root.has("clock")) {
    detail::ObjectReader r(root.raw("clock"), "clock");
    const auto kind = r.get_enum("kind", "simulated", {"simulated", "monotonic"});
    cfg.clock.kind = kind == "simulated" ? ClockKind::simulated : ClockKind::monotonic;
    if (r.has("batch_seconds")) {
      const auto& v = r.raw("batch_seconds");
      try {
        cfg.clock.batch_seconds =
            v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
      } catch (const nlohmann::json::exception&) {
        throw ConfigError("clock.batch_seconds", "must be a number or an array of numbers");
      }
    }
    r.finish();
  }
  if (cfg.clock.batch_seconds.empty()) throw ConfigError("clock.batch_seconds", "must not be empty");
  for (double s : cfg.clock.batch_seconds) {
    if (!(s > 0)) throw ConfigError("clock.batch_seconds", "entries must be positive");
  }
  if (cfg.clock.batch_seconds.size() != 1 &&
      cfg.clock.batch_seconds.size() != cfg.partition.num_learners) {
    throw ConfigError("clock.batch_seconds", "needs 1 or partition.num_learners entries");
  }

  root.get("reestimate_batch_time", cfg.reestimate_batch_time);
  const auto mode = root.get_enum("mode", "inprocess", {"inprocess", "distributed"});
  cfg.mode = mode == "inprocess" ? RunMode::inprocess : RunMode::distributed;
  std::string output = cfg.output.string();
  root.get("output", output);
  cfg.output = output;

  if (root.has("schedule_profiles")) {
    const auto& arr = root.raw("schedule_profiles");
    if (!arr.is_array()) throw ConfigError("schedule_profiles", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      detail::ObjectReader r(arr[i], "schedule_profiles[" + std::to_string(i) + "]");
      ProfileOverride p;
      r.get_positive("num_examples", p.num_examples);
      r.get_positive("batch_size", p.batch_size);
      r.get_positive("batch_time", p.batch_time);
      if (p.num_examples == 0) throw ConfigError(r.field("num_examples"), "required");
      if (!(p.batch_time > 0)) throw ConfigError(r.field("batch_time"), "required");
      r.finish();
      cfg.schedule_profiles.push_back(p);
    }
  }
  root.finish();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc, path.parent_path());
}

/// Fully resolved config, every default filled in. Parsing it back yields the
/// same ExperimentConfig.
inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  using nlohmann::json;
  json j;
  if (cfg.task.kind == TaskKind::synthetic) {
    const auto& s = cfg.task.synthetic;
    j["task"] = {{"kind", "synthetic"},         {"input_dim", s.input_dim},
                 {"true_weight_seed", s.true_weight_seed}, {"noise_sigma", s.noise_sigma},
                 {"target_low", s.target_low},  {"target_high", s.target_high},
                 {"train_size", cfg.task.train_size}, {"test_size", cfg.task.test_size},
                 {"data_seed", cfg.task.data_seed}};
  } else {
    j["task"] = {{"kind", "csv"},
                 {"train", std::filesystem::absolute(cfg.task.train_csv).string()},
                 {"test", std::filesystem::absolute(cfg.task.test_csv).string()}};
  }
  j["model"] = {{"kind", cfg.model.kind == ModelKind::linear ? "linear" : "mlp"},
                {"hidden_dims", cfg.model.hidden_dims},
                {"activation", "relu"}};
  j["partition"] = {{"scheme", to_string(cfg.partition.scheme)},
                    {"num_learners", cfg.partition.num_learners},
                    {"buckets_per_learner", cfg.partition.buckets_per_learner},
                    {"size_fractions", cfg.partition.size_fractions},
                    {"seed", cfg.partition.seed}};
  if (const auto* s = std::get_if<SyncPolicy>(&cfg.policy)) {
    j["policy"] = {{"kind", "sync"}, {"local_epochs", s->local_epochs}};
  } else {
    j["policy"] = {{"kind", "semisync"}, {"lambda", std::get<SemiSyncPolicy>(cfg.policy).lambda}};
  }
  j["rounds"] = cfg.rounds;
  if (cfg.target_mae) j["target_mae"] = *cfg.target_mae;
  j["hyperparams"] = {{"learning_rate", cfg.hyperparams.learning_rate},
                      {"batch_size", cfg.hyperparams.batch_size},
                      {"seed", cfg.hyperparams.seed}};
  j["clock"] = {{"kind", cfg.clock.kind == ClockKind::simulated ? "simulated" : "monotonic"},
                {"batch_seconds", cfg.clock.batch_seconds}};
  j["reestimate_batch_time"] = cfg.reestimate_batch_time;
  j["mode"] = cfg.mode == RunMode::inprocess ? "inprocess" : "distributed";
  j["output"] = cfg.output.string();
  if (!cfg.schedule_profiles.empty()) {
    json arr = json::array();
    for (const auto& p : cfg.schedule_profiles) {
      arr.push_back({{"num_examples", p.num_examples},
                     {"batch_size", p.batch_size},
                     {"batch_time", p.batch_time}});
    }
    j["schedule_profiles"] = arr;
  }
  return j;
}

}  // namespace fedorch
