#ifndef GONBA_CONFIG_HPP
#define GONBA_CONFIG_HPP

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gonba/agents.hpp"
#include "gonba/common.hpp"
#include "gonba/eval.hpp"
#include "gonba/event_log.hpp"
#include "gonba/kpi_model.hpp"
#include "gonba/rl_env.hpp"

namespace gonba {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every recognised key. An empty default means "unset".
inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys{
      {"seed", "", "master seed (required)"},
      {"log", "", "event log CSV"},
      {"log.case_column", "case_id", "case id column"},
      {"log.activity_column", "activity", "activity column"},
      {"log.timestamp_column", "timestamp", "timestamp column"},
      {"log.sample_fraction", "1.0", "fraction of traces kept"},
      {"out_dir", "out", "output directory"},
      {"dfg", "", "DFG JSON (default <out_dir>/dfg.json)"},
      {"bank", "", "KPI model bank JSON (default <out_dir>/bank.json)"},
      {"artifact", "", "policy artifact JSON (default <out_dir>/artifact.json)"},
      {"dfg.min_frequency", "1", "drop edges seen fewer times"},
      {"goal.direction", "minimize", "minimize | maximize"},
      {"goal.omega", "", "goal threshold in days (default: quantile of goal values)"},
      {"goal.quantile", "0.75", "quantile used when goal.omega is unset"},
      {"reward.type", "r", "r (terminal) | r' (terminal + balancing)"},
      {"reward.k", "1", "balancing window"},
      {"reward.invalid_penalty", "-4", "penalty for invalid actions (ppo-neg, dqn-neg)"},
      {"reward.max_steps", "0", "episode length cap (0: longest trace)"},
      {"reward.mae_relaxation", "true", "widen the goal test by the KPI MAE"},
      {"agent.method", "maskable-ppo", "maskable-ppo | ppo-neg | dqn-neg"},
      {"agent.epochs", "20", "passes over the training seeds"},
      {"agent.split", "0.65", "fraction of traces used for training"},
      {"ppo.actor_lr", "0.0003", ""},
      {"ppo.critic_lr", "0.001", ""},
      {"ppo.clip", "0.2", ""},
      {"ppo.gamma", "0.99", ""},
      {"ppo.horizon", "4096", "time-steps between updates"},
      {"ppo.update_epochs", "10", ""},
      {"ppo.minibatch", "256", ""},
      {"ppo.entropy_coef", "0.01", ""},
      {"ppo.standardize_advantages", "true", ""},
      {"ppo.max_grad_norm", "0.5", ""},
      {"ppo.hidden", "64", ""},
      {"dqn.lr", "0.001", ""},
      {"dqn.replay_capacity", "20000", ""},
      {"dqn.batch_size", "64", ""},
      {"dqn.target_sync", "500", ""},
      {"dqn.eps_start", "1.0", ""},
      {"dqn.eps_end", "0.05", ""},
      {"dqn.eps_decay_steps", "20000", ""},
      {"dqn.gamma", "0.99", ""},
      {"dqn.hidden", "64", ""},
      {"dqn.warmup", "500", ""},
      {"kpi.backend", "tabular", "tabular | neural"},
      {"kpi.epochs", "25", ""},
      {"kpi.learning_rate", "0.01", ""},
      {"kpi.window", "4", ""},
      {"kpi.hidden", "64", ""},
      {"kpi.holdout", "0.2", "fraction held out for MAE"},
      {"eval.episodes", "100", ""},
      {"eval.acc_mode", "per-position", "per-position | whole-window"},
      {"eval.ks", "1,2,3", "comma-separated window sizes"},
      {"recommend.prefix", "", "activity[:kpi] list, e.g. A:0,B:1.5"},
      {"recommend.top", "0", "number of candidates shown (0: all)"},
      {"serve.host", "127.0.0.1", ""},
      {"serve.port", "8080", ""},
      {"serve.idle_timeout_minutes", "30", ""},
  };
  return keys;
}

/// Flat key = value run configuration: schema defaults, then a config file,
/// then command-line overrides.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
  }

  static RunConfig load(const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
    RunConfig c;
    if (path) {
      std::ifstream in(*path);
      if (!in) throw UsageError("cannot open config file '" + *path + "'");
      c.read(in, *path);
    }
    for (const auto& o : overrides) {
      auto eq = o.find('=');
      if (eq == std::string::npos) throw UsageError("override '" + o + "' is not key=value");
      c.set(std::string(detail::trim(o.substr(0, eq))), std::string(detail::trim(o.substr(eq + 1))));
    }
    return c;
  }

  void read(std::istream& in, const std::string& origin = "<config>") {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      auto t = detail::trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      if (eq == std::string_view::npos)
        throw UsageError(origin + ":" + std::to_string(n) + ": expected key = value");
      set(std::string(detail::trim(t.substr(0, eq))), std::string(detail::trim(t.substr(eq + 1))));
    }
  }

  void set(const std::string& key, std::string value) {
    if (!values_.count(key)) throw UsageError("unknown config key '" + key + "'");
    values_[key] = std::move(value);
  }

  bool has(const std::string& key) const { return !raw(key).empty(); }

  const std::string& raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
    return it->second;
  }

  std::string str(const std::string& key) const {
    if (!has(key)) throw UsageError("config key '" + key + "' is required");
    return raw(key);
  }

  double real(const std::string& key) const {
    const auto& s = str(key);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
      throw UsageError("config key '" + key + "' expects a number, got '" + s + "'");
    return v;
  }

  std::uint64_t u64(const std::string& key) const {
    const auto& s = str(key);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw UsageError("config key '" + key + "' expects a non-negative integer, got '" + s + "'");
    return v;
  }

  std::size_t count(const std::string& key) const { return static_cast<std::size_t>(u64(key)); }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw UsageError("config key '" + key + "' expects true or false, got '" + s + "'");
  }

  std::uint64_t seed() const {
    if (!has("seed")) throw UsageError("a seed is required (set seed = N or pass --seed N)");
    return u64("seed");
  }

  std::filesystem::path out_dir() const { return str("out_dir"); }

  /// Explicit path for `key`, or `<out_dir>/<fallback>`.
  std::filesystem::path path_or_default(const std::string& key, const std::string& fallback) const {
    return has(key) ? std::filesystem::path(raw(key)) : out_dir() / fallback;
  }

  ColumnMap columns() const {
    return {str("log.case_column"), str("log.activity_column"), str("log.timestamp_column")};
  }

  KpiTrainConfig kpi() const {
    KpiTrainConfig c;
    c.backend = parse_kpi_backend(str("kpi.backend"));
    c.epochs = count("kpi.epochs");
    c.learning_rate = real("kpi.learning_rate");
    c.window = count("kpi.window");
    c.hidden = count("kpi.hidden");
    c.holdout = real("kpi.holdout");
    c.seed = seed();
    return c;
  }

  /// Reward settings; `omega` and `max_steps` come from the data when unset.
  RewardConfig reward(Days derived_omega, std::size_t longest_trace) const {
    RewardConfig c;
    c.omega = has("goal.omega") ? real("goal.omega") : derived_omega;
    c.direction = parse_goal_direction(str("goal.direction"));
    const auto type = str("reward.type");
    if (type != "r" && type != "r'") throw UsageError("reward.type must be r or r'");
    c.balancing_enabled = type == "r'";
    c.k = count("reward.k");
    c.invalid_penalty = real("reward.invalid_penalty");
    c.max_steps = count("reward.max_steps");
    if (c.max_steps == 0) c.max_steps = longest_trace;
    c.mae_relaxation = flag("reward.mae_relaxation");
    c.validate();
    return c;
  }

  TrainOptions train_options() const {
    TrainOptions o;
    o.method = parse_method(str("agent.method"));
    o.epochs = count("agent.epochs");
    o.seed = seed();
    o.ppo.actor_lr = real("ppo.actor_lr");
    o.ppo.critic_lr = real("ppo.critic_lr");
    o.ppo.clip = real("ppo.clip");
    o.ppo.gamma = real("ppo.gamma");
    o.ppo.horizon = count("ppo.horizon");
    o.ppo.update_epochs = count("ppo.update_epochs");
    o.ppo.minibatch = count("ppo.minibatch");
    o.ppo.entropy_coef = real("ppo.entropy_coef");
    o.ppo.standardize_advantages = flag("ppo.standardize_advantages");
    o.ppo.max_grad_norm = real("ppo.max_grad_norm");
    o.ppo.hidden = count("ppo.hidden");
    o.dqn.lr = real("dqn.lr");
    o.dqn.replay_capacity = count("dqn.replay_capacity");
    o.dqn.batch_size = count("dqn.batch_size");
    o.dqn.target_sync = count("dqn.target_sync");
    o.dqn.eps_start = real("dqn.eps_start");
    o.dqn.eps_end = real("dqn.eps_end");
    o.dqn.eps_decay_steps = count("dqn.eps_decay_steps");
    o.dqn.gamma = real("dqn.gamma");
    o.dqn.hidden = count("dqn.hidden");
    o.dqn.warmup = count("dqn.warmup");
    o.ppo.validate();
    o.dqn.validate();
    return o;
  }

  EvalConfig eval() const {
    EvalConfig c;
    c.episodes = count("eval.episodes");
    c.acc_mode = parse_acc_mode(str("eval.acc_mode"));
    c.ks.clear();
    std::stringstream ss(str("eval.ks"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      auto t = std::string(detail::trim(item));
      std::size_t k = 0;
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), k);
      if (ec != std::errc() || p != t.data() + t.size() || k == 0)
        throw UsageError("eval.ks expects positive integers, got '" + t + "'");
      c.ks.push_back(k);
    }
    c.seed = seed();
    return c;
  }

  double split_ratio() const {
    const double r = real("agent.split");
    if (!(r > 0.0 && r < 1.0)) throw UsageError("agent.split must lie in (0, 1)");
    return r;
  }

  /// Sorted `key = value` lines of every key, defaults included.
  std::string snapshot() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
    return out.str();
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gonba

#endif  // GONBA_CONFIG_HPP
