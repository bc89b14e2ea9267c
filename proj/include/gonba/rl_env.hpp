#ifndef GONBA_RL_ENV_HPP
#define GONBA_RL_ENV_HPP

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gonba/common.hpp"
#include "gonba/dfg.hpp"
#include "gonba/event_log.hpp"
#include "gonba/kpi_model.hpp"

namespace gonba {

enum class GoalDirection { minimize, maximize };

inline std::string to_string(GoalDirection d) { return d == GoalDirection::minimize ? "minimize" : "maximize"; }

inline GoalDirection parse_goal_direction(const std::string& s) {
  if (s == "minimize") return GoalDirection::minimize;
  if (s == "maximize") return GoalDirection::maximize;
  throw UsageError("unknown goal direction '" + s + "' (expected minimize or maximize)");
}

/// How the environment treats actions that are not DFG successors.
enum class InvalidActions {
  /// The agent must never choose them; doing so is a usage error.
  masked,
  /// They cost `invalid_penalty` and leave the state unchanged.
  penalized,
};

struct RewardConfig {
  Days omega = 1.0;
  GoalDirection direction = GoalDirection::minimize;
  bool balancing_enabled = false;
  std::size_t k = 1;
  double invalid_penalty = -4.0;
  /// Longest generated activity sequence (the seed activity included).
  std::size_t max_steps = 16;
  /// Widen the goal test by the cumulative per-length MAE.
  bool mae_relaxation = true;

  void validate() const {
    if (!(omega > 0.0)) throw UsageError("omega must be positive");
    if (k < 1) throw UsageError("balancing window k must be at least 1");
    if (max_steps < 1) throw UsageError("max_steps must be at least 1");
  }

  nlohmann::json to_json() const {
    return {{"omega", omega},
            {"direction", to_string(direction)},
            {"balancing", balancing_enabled},
            {"k", k},
            {"invalid_penalty", invalid_penalty},
            {"max_steps", max_steps},
            {"mae_relaxation", mae_relaxation}};
  }

  static RewardConfig from_json(const nlohmann::json& j) {
    RewardConfig c;
    c.omega = j.at("omega").get<double>();
    c.direction = parse_goal_direction(j.at("direction").get<std::string>());
    c.balancing_enabled = j.at("balancing").get<bool>();
    c.k = j.at("k").get<std::size_t>();
    c.invalid_penalty = j.at("invalid_penalty").get<double>();
    c.max_steps = j.at("max_steps").get<std::size_t>();
    c.mae_relaxation = j.at("mae_relaxation").get<bool>();
    c.validate();
    return c;
  }
};

struct EnvState {
  Activity prev_activity = 0;
  Days prev_kpi = 0.0;
  std::size_t steps_taken = 0;
  Days accumulated_goal = 0.0;
  std::vector<KpiStep> prefix;

  std::vector<Activity> activities() const {
    std::vector<Activity> out;
    out.reserve(prefix.size());
    for (const auto& s : prefix) out.push_back(s.activity);
    return out;
  }
};

struct EpisodeRecord {
  std::string seed_trace_id;
  std::vector<Activity> activities;
  std::vector<Days> kpis;
  std::vector<double> rewards;
  double terminal_reward = 0.0;
  double balancing = 0.0;
  Days goal_value = 0.0;
  Days mae_total = 0.0;
  bool goal_satisfied = false;
  bool conformant = false;
  std::size_t invalid_actions = 0;
  /// Ended by the step cap instead of a valid EOS.
  bool truncated = false;

  nlohmann::json to_json(const ActivityVocab& vocab) const {
    std::vector<std::string> labels;
    for (auto a : activities) labels.push_back(vocab.label(a));
    return {{"seed_trace_id", seed_trace_id},
            {"activities", labels},
            {"kpis", kpis},
            {"rewards", rewards},
            {"terminal_reward", terminal_reward},
            {"balancing", balancing},
            {"goal_value", goal_value},
            {"mae_total", mae_total},
            {"goal_satisfied", goal_satisfied},
            {"conformant", conformant},
            {"invalid_actions", invalid_actions},
            {"truncated", truncated}};
  }
};

/// +2|G-ω|/ω when the goal is satisfied, -2|G-ω|/ω otherwise.
inline double terminal_reward(Days goal, Days omega, bool satisfied) {
  const double magnitude = 2.0 * std::abs(goal - omega) / omega;
  return satisfied ? magnitude : -magnitude;
}

/// Goal test relaxed by `mae_total` towards the lenient side.
inline bool goal_satisfied(Days goal, Days omega, Days mae_total, GoalDirection direction) {
  return direction == GoalDirection::minimize ? goal - mae_total <= omega : goal + mae_total > omega;
}

/// Sum over the last k positions (aligned from the end) of +0.5 for a match
/// and -0.5 for a mismatch; a position missing from either side mismatches.
inline double balancing_reward(const std::vector<Activity>& generated, const std::vector<Activity>& truth,
                               std::size_t k) {
  double r = 0.0;
  for (std::size_t i = 1; i <= k; ++i) {
    const bool match = i <= generated.size() && i <= truth.size() &&
                       generated[generated.size() - i] == truth[truth.size() - i];
    r += match ? 0.5 : -0.5;
  }
  return r;
}

/// Entry a is true iff a is a DFG successor of the previous activity. Indexed
/// over the vocabulary followed by EOS.
inline std::vector<bool> action_mask(const EnvState& state, const Dfg& dfg) {
  std::vector<bool> mask(dfg.vocab().action_count(), false);
  for (Activity a : dfg.valid_actions(state.prev_activity)) mask[a] = true;
  return mask;
}

/// DFG successors from which EOS is still reachable without the generated
/// sequence exceeding `max_steps` activities. Equal to the plain mask until
/// the budget binds.
inline std::vector<bool> action_mask(const EnvState& state, const Dfg& dfg, std::size_t max_steps) {
  std::vector<bool> mask(dfg.vocab().action_count(), false);
  const std::size_t budget = max_steps > state.steps_taken ? max_steps - state.steps_taken : 0;
  for (Activity a : dfg.valid_actions(state.prev_activity)) {
    if (a == dfg.vocab().eos()) {
      mask[a] = true;
    } else if (auto d = dfg.distance_to_eos(a); d && *d <= budget) {
      mask[a] = true;
    }
  }
  return mask;
}

/// Outcome of one environment transition.
struct Transition {
  double reward = 0.0;
  bool done = false;
  /// The action was rejected (penalized variant only).
  bool invalid = false;
};

/// Episodic environment seeded by the first event of a ground-truth trace.
/// The DFG and bank are borrowed and must outlive the environment.
class Environment {
 public:
  Environment(const Dfg& dfg, const PrefixModelBank& bank, RewardConfig cfg, InvalidActions invalid)
      : dfg_(&dfg), bank_(&bank), cfg_(cfg), invalid_(invalid) {
    cfg_.validate();
    if (!(dfg.vocab() == bank.vocab())) throw DataError("DFG and KPI model bank use different vocabularies");
  }

  const RewardConfig& config() const { return cfg_; }
  InvalidActions invalid_actions() const { return invalid_; }
  const Dfg& dfg() const { return *dfg_; }
  const PrefixModelBank& bank() const { return *bank_; }

  const EnvState& reset(const Trace& gt) {
    if (gt.events.empty()) throw DataError("cannot seed an episode from an empty trace");
    if (!dfg_->is_conformant(gt)) throw DataError("seed trace '" + gt.id + "' does not conform to the DFG");
    const Event& first = gt.events.front();
    start(first.activity, first.activity_time, gt.id);
    gt_ = gt.activities();
    return state_;
  }

  /// Starts an episode from a bare first activity with no ground truth (the
  /// balancing term then compares against an empty sequence).
  const EnvState& start(Activity first, Days kpi, std::string id) {
    const ActivityVocab& v = dfg_->vocab();
    if (first >= v.size() || !dfg_->has_edge(v.start(), first))
      throw DataError("activity " + std::to_string(first) + " cannot start a case");
    if (auto d = dfg_->distance_to_eos(first); !d || *d > cfg_.max_steps)
      throw DataError("EOS is not reachable within max_steps from '" + v.label(first) + "'");
    gt_.clear();
    state_ = EnvState{first, kpi, 1, kpi, {{first, kpi}}};
    record_ = EpisodeRecord{};
    record_.seed_trace_id = std::move(id);
    attempts_ = 0;
    done_ = false;
    return state_;
  }

  const EnvState& state() const { return state_; }
  bool done() const { return done_; }
  const std::vector<Activity>& ground_truth() const { return gt_; }

  /// Valid actions for the current state: the horizon-aware mask under the
  /// masked variant, the plain DFG mask otherwise.
  std::vector<bool> mask() const {
    return invalid_ == InvalidActions::masked ? action_mask(state_, *dfg_, cfg_.max_steps)
                                              : action_mask(state_, *dfg_);
  }

  /// KPI the bank predicts for taking `action` now.
  Days predict_kpi(Activity action) const { return bank_->predict(state_.prefix, action).value; }

  Transition step(Activity action) { return step(action, std::nullopt); }

  /// As step(action) but with a realized KPI replacing the prediction.
  Transition step(Activity action, std::optional<Days> realized_kpi) {
    if (done_) throw UsageError("step called on a finished episode");
    const ActivityVocab& v = dfg_->vocab();
    if (action > v.eos()) throw UsageError("action " + std::to_string(action) + " is outside the action space");
    ++attempts_;

    bool valid = dfg_->has_edge(state_.prev_activity, action);
    if (valid && invalid_ == InvalidActions::masked) valid = mask()[action];

    Transition t;
    if (!valid) {
      if (invalid_ == InvalidActions::masked)
        throw UsageError("action '" + v.label(action) + "' is masked out after '" + v.label(state_.prev_activity) + "'");
      t.invalid = true;
      t.reward = cfg_.invalid_penalty;
      ++record_.invalid_actions;
      if (attempts_ >= cfg_.max_steps + 1) {
        record_.truncated = true;
        t.reward += finish();
        t.done = true;
      }
    } else if (action == v.eos()) {
      t.reward = finish();
      t.done = true;
    } else {
      Days kpi = realized_kpi ? *realized_kpi : bank_->predict(state_.prefix, action).value;
      if (!std::isfinite(kpi) || kpi < 0.0) throw UsageError("KPI values must be finite and non-negative");
      state_.prefix.push_back({action, kpi});
      state_.prev_activity = action;
      state_.prev_kpi = kpi;
      state_.accumulated_goal += kpi;
      ++state_.steps_taken;
      if (invalid_ == InvalidActions::penalized && state_.steps_taken >= cfg_.max_steps) {
        record_.truncated = true;
        t.reward = finish();
        t.done = true;
      }
    }
    record_.rewards.push_back(t.reward);
    done_ = t.done;
    return t;
  }

  /// Complete record of a finished episode.
  const EpisodeRecord& record() const {
    if (!done_) throw UsageError("episode is still running");
    return record_;
  }

 private:
  double finish() {
    record_.activities = state_.activities();
    record_.kpis.clear();
    for (const auto& s : state_.prefix) record_.kpis.push_back(s.kpi);
    record_.goal_value = state_.accumulated_goal;
    record_.mae_total = cfg_.mae_relaxation ? bank_->cumulative_mae(state_.prefix.size() - 1) : 0.0;
    record_.goal_satisfied = goal_satisfied(record_.goal_value, cfg_.omega, record_.mae_total, cfg_.direction);
    record_.terminal_reward = terminal_reward(record_.goal_value, cfg_.omega, record_.goal_satisfied);
    record_.balancing = cfg_.balancing_enabled ? balancing_reward(record_.activities, gt_, cfg_.k) : 0.0;
    record_.conformant = !record_.truncated && record_.invalid_actions == 0 && dfg_->is_conformant(record_.activities);
    return record_.terminal_reward + record_.balancing;
  }

  const Dfg* dfg_;
  const PrefixModelBank* bank_;
  RewardConfig cfg_;
  InvalidActions invalid_;
  std::vector<Activity> gt_;
  EnvState state_;
  EpisodeRecord record_;
  std::size_t attempts_ = 0;
  bool done_ = true;
};

}  // namespace gonba

#endif  // GONBA_RL_ENV_HPP
