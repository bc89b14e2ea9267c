#ifndef GONBA_PIPELINE_HPP
#define GONBA_PIPELINE_HPP

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gonba/agents.hpp"
#include "gonba/config.hpp"
#include "gonba/dfg.hpp"
#include "gonba/eval.hpp"
#include "gonba/event_log.hpp"
#include "gonba/kpi_model.hpp"
#include "gonba/rl_env.hpp"

namespace gonba::pipeline {

namespace fs = std::filesystem;

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw UsageError(what + " '" + p.string() + "' does not exist");
}

inline nlohmann::json read_json(const fs::path& p, const std::string& what) {
  require_file(p, what);
  std::ifstream in(p);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError(what + " '" + p.string() + "' is not valid JSON");
  return j;
}

template <class Writer>
void write_file(const fs::path& p, Writer&& write) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + p.string() + "'");
  write(out);
  if (!out) throw UsageError("failed writing '" + p.string() + "'");
}

inline void write_text(const fs::path& p, const std::string& text) {
  write_file(p, [&](std::ostream& o) { o << text; });
}

inline void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

inline bool verbose() {
  const char* v = std::getenv("GONBA_VERBOSE");
  return v && *v && std::string(v) != "0";
}

inline void snapshot(const RunConfig& cfg, const std::string& command) {
  write_text(cfg.out_dir() / (command + ".config.txt"), cfg.snapshot());
}

/// Event log named by the config, down-sampled when requested.
inline EventLog load_log(const RunConfig& cfg) {
  const fs::path p = cfg.str("log");
  require_file(p, "event log");
  EventLog log = parse_csv(p.string(), cfg.columns());
  const double f = cfg.real("log.sample_fraction");
  if (f < 1.0) log = sample(log, f, cfg.seed());
  if (log.traces.empty()) throw DataError("event log '" + p.string() + "' has no traces");
  return log;
}

inline Dfg load_dfg(const RunConfig& cfg) { return Dfg::from_json(read_json(cfg.path_or_default("dfg", "dfg.json"), "DFG")); }

inline PrefixModelBank load_bank(const RunConfig& cfg) {
  return PrefixModelBank::from_json(read_json(cfg.path_or_default("bank", "bank.json"), "KPI model bank"));
}

inline PolicyArtifact load_artifact(const RunConfig& cfg) {
  return PolicyArtifact::from_json(read_json(cfg.path_or_default("artifact", "artifact.json"), "policy artifact"));
}

/// Log re-read against the DFG vocabulary and restricted to conformant traces.
inline EventLog conformant_log(const RunConfig& cfg, const Dfg& dfg) {
  const fs::path p = cfg.str("log");
  require_file(p, "event log");
  EventLog log = parse_csv(p.string(), cfg.columns(), dfg.vocab());
  const double f = cfg.real("log.sample_fraction");
  if (f < 1.0) log = sample(log, f, cfg.seed());
  if (!(log.vocab == dfg.vocab())) throw DataError("event log has activities the DFG does not know");
  auto [kept, report] = filter_conformant(dfg, log);
  if (kept.traces.empty()) throw DataError("no trace of the event log conforms to the DFG");
  return kept;
}

/// Training and test portions of the conformant log.
inline std::pair<EventLog, EventLog> train_test(const RunConfig& cfg, const EventLog& log) {
  return split(log, cfg.split_ratio(), cfg.seed());
}

inline RewardConfig reward_for(const RunConfig& cfg, const EventLog& log) {
  return cfg.reward(goal_threshold(log, cfg.real("goal.quantile")), log.max_trace_length());
}

inline void discover_cmd(const RunConfig& cfg) {
  cfg.seed();
  const EventLog log = load_log(cfg);
  const Dfg dfg = discover(log, cfg.count("dfg.min_frequency"));
  const auto stats = dataset_stats(log, dfg, cfg.real("goal.quantile"));
  const fs::path out = cfg.out_dir();
  const fs::path json = cfg.path_or_default("dfg", "dfg.json");
  write_json(json, dfg.to_json());
  write_file(out / "dfg.csv", [&](std::ostream& o) { dfg.write_edge_list(o); });
  write_file(out / "dfg.dot", [&](std::ostream& o) { dfg.write_dot(o); });
  write_json(out / "stats.json", {{"traces", stats.trace_count},
                                  {"events", stats.event_count},
                                  {"activities", stats.activity_count},
                                  {"mean_trace_length", stats.mean_trace_length},
                                  {"conformant_fraction", stats.conformant_fraction},
                                  {"mean_duration_days", stats.mean_duration_days},
                                  {"goal_threshold_days", stats.goal_threshold_days},
                                  {"dfg_hash", dfg.content_hash()}});
  snapshot(cfg, "discover");
  std::cout << "discovered " << dfg.edges().size() << " edges over " << dfg.vocab().size() << " activities; "
            << stats.trace_count << " traces, " << stats.conformant_fraction * 100.0 << "% conformant -> "
            << json.string() << "\n";
}

inline void train_kpi_cmd(const RunConfig& cfg) {
  const Dfg dfg = load_dfg(cfg);
  const EventLog log = conformant_log(cfg, dfg);
  const PrefixModelBank bank = train_bank(log, cfg.kpi());
  const fs::path json = cfg.path_or_default("bank", "bank.json");
  write_json(json, bank.to_json());
  write_file(cfg.out_dir() / "mae.csv", [&](std::ostream& o) {
    o << "prefix_length,mae_days\n";
    for (const auto& [len, mae] : bank.mae_by_length()) o << len << "," << mae << "\n";
  });
  snapshot(cfg, "train-kpi");
  std::cout << "trained " << bank.mae_by_length().size() << " " << to_string(cfg.kpi().backend)
            << " KPI models, mean MAE " << bank.average_mae() << " days -> " << json.string() << "\n";
}

inline void train_agent_cmd(const RunConfig& cfg) {
  const Dfg dfg = load_dfg(cfg);
  const PrefixModelBank bank = load_bank(cfg);
  const EventLog log = conformant_log(cfg, dfg);
  const RewardConfig reward = reward_for(cfg, log);
  const auto [train_part, test_part] = train_test(cfg, log);
  TrainOptions opt = cfg.train_options();
  std::ostringstream curve;
  curve << "epoch,episodes,mean_return,goal_satisfied,conformant\n";
  opt.on_epoch = [&](const EpochStats& s) {
    curve << s.epoch << "," << s.episodes << "," << s.mean_return << "," << s.goal_satisfied_fraction << ","
          << s.conformant_fraction << "\n";
    if (verbose())
      std::cerr << "epoch " << s.epoch << ": return " << s.mean_return << ", GS " << s.goal_satisfied_fraction
                << ", C " << s.conformant_fraction << "\n";
  };
  const PolicyArtifact artifact = train(dfg, bank, reward, train_part, opt);
  const fs::path json = cfg.path_or_default("artifact", "artifact.json");
  write_json(json, artifact.to_json());
  write_text(cfg.out_dir() / "training.csv", curve.str());
  snapshot(cfg, "train-agent");
  std::cout << "trained " << to_string(opt.method) << " for " << opt.epochs << " epochs on "
            << train_part.traces.size() << " traces (omega " << reward.omega << " days) -> " << json.string()
            << "\n";
}

inline EvalResult evaluate_cmd(const RunConfig& cfg) {
  const Dfg dfg = load_dfg(cfg);
  const PrefixModelBank bank = load_bank(cfg);
  const PolicyArtifact artifact = load_artifact(cfg);
  artifact.verify(dfg, bank);
  const EventLog log = conformant_log(cfg, dfg);
  const auto [train_part, test_part] = train_test(cfg, log);
  EvalResult result = evaluate(artifact, test_part, dfg, bank, cfg.eval());
  const fs::path out = cfg.out_dir();
  write_json(out / "report.json", result.report.to_json());
  write_text(out / "report.txt", result.report.to_table());
  write_file(out / "episodes.csv", [&](std::ostream& o) { write_episode_csv(result, dfg.vocab(), o); });
  write_file(out / "episodes.jsonl", [&](std::ostream& o) {
    for (const auto& row : result.rows) o << row.record.to_json(dfg.vocab()).dump() << "\n";
  });
  write_file(out / "outcomes.csv", [&](std::ostream& o) { write_outcome_csv(result.report, o); });
  snapshot(cfg, "evaluate");
  std::cout << result.report.to_table();
  return result;
}

/// Parses "A:0,B:1.5"; a missing KPI is predicted by the bank.
inline std::vector<std::pair<std::string, std::optional<Days>>> parse_prefix(const std::string& text) {
  std::vector<std::pair<std::string, std::optional<Days>>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = std::string(detail::trim(item));
    if (t.empty()) throw UsageError("empty activity in recommend.prefix");
    auto colon = t.rfind(':');
    if (colon == std::string::npos) {
      out.emplace_back(t, std::nullopt);
      continue;
    }
    const auto num = std::string(detail::trim(t.substr(colon + 1)));
    double v = 0.0;
    auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
    if (ec != std::errc() || p != num.data() + num.size() || !std::isfinite(v) || v < 0.0)
      throw UsageError("bad KPI '" + num + "' in recommend.prefix");
    out.emplace_back(std::string(detail::trim(t.substr(0, colon))), v);
  }
  if (out.empty()) throw UsageError("recommend.prefix is required");
  return out;
}

/// Ranked next actions for the configured prefix, as JSON.
inline nlohmann::json recommend_cmd(const RunConfig& cfg) {
  const Dfg dfg = load_dfg(cfg);
  const PrefixModelBank bank = load_bank(cfg);
  const PolicyArtifact artifact = load_artifact(cfg);
  artifact.verify(dfg, bank);
  const auto& vocab = dfg.vocab();
  const auto prefix = parse_prefix(cfg.str("recommend.prefix"));

  auto lookup = [&](const std::string& label) {
    auto a = vocab.find(label);
    if (!a || *a >= vocab.size()) throw UsageError("unknown activity '" + label + "'");
    return *a;
  };
  Environment env(dfg, bank, artifact.reward, InvalidActions::masked);
  try {
    env.start(lookup(prefix.front().first), prefix.front().second.value_or(0.0), "recommend");
    for (std::size_t i = 1; i < prefix.size(); ++i) {
      const Activity a = lookup(prefix[i].first);
      if (!env.mask()[a]) throw UsageError("prefix step '" + prefix[i].first + "' is not a valid next activity");
      env.step(a, prefix[i].second);
    }
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }

  const auto& state = env.state();
  const auto mask = env.mask();
  const auto probs = artifact.probabilities(state, mask);
  const Activity best = act_greedy(artifact, state, mask);
  std::vector<Activity> order;
  for (Activity a = 0; a < mask.size(); ++a)
    if (mask[a]) order.push_back(a);
  std::stable_sort(order.begin(), order.end(), [&](Activity x, Activity y) { return probs[x] > probs[y]; });
  if (const auto top = cfg.count("recommend.top"); top > 0 && order.size() > top) order.resize(top);

  const Days mae = artifact.reward.mae_relaxation ? bank.cumulative_mae(state.prefix.size() - 1) : 0.0;
  nlohmann::json cands = nlohmann::json::array();
  for (Activity a : order) {
    const Days kpi = env.predict_kpi(a);
    cands.push_back({{"activity", vocab.label(a)},
                     {"probability", probs[a]},
                     {"predicted_kpi", kpi},
                     {"projected_goal", state.accumulated_goal + kpi},
                     {"recommended", a == best}});
  }
  return {{"prefix", [&] {
             std::vector<std::string> v;
             for (const auto& s : state.prefix) v.push_back(vocab.label(s.activity));
             return v;
           }()},
          {"accumulated_goal", state.accumulated_goal},
          {"omega", artifact.reward.omega},
          {"mae_total", mae},
          {"projected_satisfied", goal_satisfied(state.accumulated_goal, artifact.reward.omega, mae,
                                                 artifact.reward.direction)},
          {"recommended", vocab.label(best)},
          {"candidates", std::move(cands)}};
}

}  // namespace gonba::pipeline

#endif  // GONBA_PIPELINE_HPP
