#ifndef GONBA_EVAL_HPP
#define GONBA_EVAL_HPP

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gonba/agents.hpp"
#include "gonba/common.hpp"
#include "gonba/dfg.hpp"
#include "gonba/event_log.hpp"
#include "gonba/kpi_model.hpp"
#include "gonba/rl_env.hpp"

namespace gonba {

/// Damerau-Levenshtein distance with unrestricted adjacent transpositions
/// (Lowrance-Wagner), so the result is a true metric.
template <class T>
std::size_t dl_distance(const std::vector<T>& a, const std::vector<T>& b) {
  const std::size_t n = a.size(), m = b.size();
  const std::size_t inf = n + m;
  // d has a sentinel row/column at index 0; string positions start at 1.
  std::vector<std::vector<std::size_t>> d(n + 2, std::vector<std::size_t>(m + 2, 0));
  d[0][0] = inf;
  for (std::size_t i = 0; i <= n; ++i) {
    d[i + 1][0] = inf;
    d[i + 1][1] = i;
  }
  for (std::size_t j = 0; j <= m; ++j) {
    d[0][j + 1] = inf;
    d[1][j + 1] = j;
  }
  std::map<T, std::size_t> last_row;
  for (std::size_t i = 1; i <= n; ++i) {
    std::size_t last_match_col = 0;
    for (std::size_t j = 1; j <= m; ++j) {
      auto it = last_row.find(b[j - 1]);
      const std::size_t i1 = it == last_row.end() ? 0 : it->second;
      const std::size_t j1 = last_match_col;
      const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      if (cost == 0) last_match_col = j;
      d[i + 1][j + 1] = std::min({d[i][j] + cost, d[i + 1][j] + 1, d[i][j + 1] + 1,
                                  d[i1][j1] + (i - i1 - 1) + 1 + (j - j1 - 1)});
    }
    last_row[a[i - 1]] = i;
  }
  return d[n + 1][m + 1];
}

enum class AccMode {
  /// Share of matching positions in the last-k window.
  per_position,
  /// 1 when the whole last-k window matches, else 0.
  whole_window,
};

inline std::string to_string(AccMode m) { return m == AccMode::per_position ? "per-position" : "whole-window"; }

inline AccMode parse_acc_mode(const std::string& s) {
  if (s == "per-position") return AccMode::per_position;
  if (s == "whole-window") return AccMode::whole_window;
  throw UsageError("unknown accuracy mode '" + s + "' (expected per-position or whole-window)");
}

/// Agreement over the last k positions, aligned from the end; positions
/// missing from either sequence count as mismatches.
inline double acc_last_k(const std::vector<Activity>& generated, const std::vector<Activity>& truth, std::size_t k,
                         AccMode mode = AccMode::per_position) {
  if (k == 0) throw UsageError("accuracy window k must be at least 1");
  std::size_t matches = 0;
  for (std::size_t i = 1; i <= k; ++i) {
    if (i <= generated.size() && i <= truth.size() && generated[generated.size() - i] == truth[truth.size() - i])
      ++matches;
  }
  if (mode == AccMode::whole_window) return matches == k ? 1.0 : 0.0;
  return static_cast<double>(matches) / static_cast<double>(k);
}

/// Among episodes whose seed trace violated the goal, the share whose
/// generated sequence satisfies it. nullopt when no seed violated the goal.
inline std::optional<double> gv_turned_gs(const std::vector<EpisodeRecord>& records,
                                          const std::vector<bool>& truth_satisfied) {
  if (records.size() != truth_satisfied.size()) throw UsageError("one ground-truth flag per episode is required");
  std::size_t gv = 0, turned = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (truth_satisfied[i]) continue;
    ++gv;
    if (records[i].goal_satisfied) ++turned;
  }
  if (gv == 0) return std::nullopt;
  return static_cast<double>(turned) / static_cast<double>(gv);
}

struct EvalConfig {
  std::size_t episodes = 100;
  std::vector<std::size_t> ks{1, 2, 3};
  AccMode acc_mode = AccMode::per_position;
  std::uint64_t seed = 0;
};

struct EpisodeRow {
  EpisodeRecord record;
  std::vector<Activity> truth;
  Days truth_goal = 0.0;
  bool truth_satisfied = false;
  std::size_t dl = 0;
  std::map<std::size_t, double> acc;
};

struct EvalReport {
  std::string method;
  std::string reward_type;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  double gs_truth_fraction = 0.0;
  double mae_kpi = 0.0;
  double gs_pred_fraction = 0.0;
  std::optional<double> gv_turned_gs_fraction;
  std::map<std::size_t, double> acc_k;
  double conformance_fraction = 0.0;
  double mean_dl_distance = 0.0;
  std::map<std::string, double> outcome_distribution;
  std::map<std::string, double> truth_outcome_distribution;

  nlohmann::json to_json() const {
    nlohmann::json acc = nlohmann::json::object();
    for (const auto& [k, v] : acc_k) acc[std::to_string(k)] = v;
    return {{"version", 1},
            {"method", method},
            {"reward_type", reward_type},
            {"episodes", episodes},
            {"seed", seed},
            {"gs_truth_fraction", gs_truth_fraction},
            {"mae_kpi_days", mae_kpi},
            {"gs_pred_fraction", gs_pred_fraction},
            {"gv_turned_gs_fraction",
             gv_turned_gs_fraction ? nlohmann::json(*gv_turned_gs_fraction) : nlohmann::json(nullptr)},
            {"acc_k", acc},
            {"conformance_fraction", conformance_fraction},
            {"mean_dl_distance", mean_dl_distance},
            {"outcome_distribution", outcome_distribution},
            {"truth_outcome_distribution", truth_outcome_distribution}};
  }

  /// Aligned text table in the column order GS(GT)%, MAE, reward, GS_pred%,
  /// GV turned GS%, Acc_k..., followed by C% and mean DL distance.
  std::string to_table() const {
    auto pct = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
      return std::string(buf);
    };
    auto num = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", v);
      return std::string(buf);
    };
    std::vector<std::string> head{"GS(GT)%", "MAE_KPI(days)", "Reward", "GS_pred%", "GVturnedGS%"};
    std::vector<std::string> row{pct(gs_truth_fraction), num(mae_kpi), reward_type, pct(gs_pred_fraction),
                                 gv_turned_gs_fraction ? pct(*gv_turned_gs_fraction) : "n/a"};
    for (const auto& [k, v] : acc_k) {
      head.push_back("Acc" + std::to_string(k) + "%");
      row.push_back(pct(v));
    }
    head.insert(head.end(), {"C%", "DL"});
    row.insert(row.end(), {pct(conformance_fraction), num(mean_dl_distance)});
    std::ostringstream out;
    for (int pass = 0; pass < 2; ++pass) {
      const auto& cells = pass == 0 ? head : row;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const std::size_t w = std::max(head[i].size(), row[i].size());
        out << (i ? "  " : "") << std::string(w - cells[i].size(), ' ') << cells[i];
      }
      out << '\n';
    }
    return out.str();
  }
};

struct EvalResult {
  EvalReport report;
  std::vector<EpisodeRow> rows;
};

/// Greedy rollout of `artifact` from the first event of `seed`.
inline EpisodeRecord rollout_greedy(const PolicyArtifact& artifact, Environment& env, const Trace& seed) {
  env.reset(seed);
  const std::vector<bool> all_valid(env.dfg().vocab().action_count(), true);
  while (!env.done()) {
    const auto mask = env.invalid_actions() == InvalidActions::masked ? env.mask() : all_valid;
    env.step(act_greedy(artifact, env.state(), mask));
  }
  return env.record();
}

/// Rolls the greedy policy out from test traces sampled without replacement
/// (seeded order, cycling once exhausted) and aggregates the metrics.
inline EvalResult evaluate(const PolicyArtifact& artifact, const EventLog& test_log, const Dfg& dfg,
                           const PrefixModelBank& bank, const EvalConfig& cfg = {}) {
  if (test_log.traces.empty()) throw DataError("evaluation needs at least one test trace");
  if (cfg.episodes == 0) throw UsageError("evaluation needs at least one episode");
  artifact.verify(dfg, bank);
  Environment env(dfg, bank, artifact.reward, artifact.invalid_actions());

  std::vector<std::size_t> order(test_log.traces.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(cfg.seed);
  rng.shuffle(order);

  EvalResult out;
  auto& rep = out.report;
  rep.method = to_string(artifact.method);
  rep.reward_type = artifact.reward.balancing_enabled ? "r'(k=" + std::to_string(artifact.reward.k) + ")" : "r";
  rep.episodes = cfg.episodes;
  rep.seed = cfg.seed;
  rep.mae_kpi = bank.average_mae();

  std::vector<EpisodeRecord> records;
  std::vector<bool> truth_flags;
  std::map<std::string, std::size_t> outcomes, truth_outcomes;
  const auto& vocab = dfg.vocab();
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    const Trace& seed = test_log.traces[order[e % order.size()]];
    EpisodeRow row;
    row.record = rollout_greedy(artifact, env, seed);
    row.truth = seed.activities();
    row.truth_goal = goal_value(seed);
    row.truth_satisfied = goal_satisfied(row.truth_goal, artifact.reward.omega, 0.0, artifact.reward.direction);
    row.dl = dl_distance(row.record.activities, row.truth);
    for (auto k : cfg.ks) row.acc[k] = acc_last_k(row.record.activities, row.truth, k, cfg.acc_mode);

    rep.gs_truth_fraction += row.truth_satisfied ? 1.0 : 0.0;
    rep.gs_pred_fraction += row.record.goal_satisfied ? 1.0 : 0.0;
    rep.conformance_fraction += row.record.conformant ? 1.0 : 0.0;
    rep.mean_dl_distance += static_cast<double>(row.dl);
    for (const auto& [k, v] : row.acc) rep.acc_k[k] += v;
    if (!row.record.activities.empty()) ++outcomes[vocab.label(row.record.activities.back())];
    ++truth_outcomes[test_log.vocab.label(row.truth.back())];
    records.push_back(row.record);
    truth_flags.push_back(row.truth_satisfied);
    out.rows.push_back(std::move(row));
  }
  const double n = static_cast<double>(cfg.episodes);
  rep.gs_truth_fraction /= n;
  rep.gs_pred_fraction /= n;
  rep.conformance_fraction /= n;
  rep.mean_dl_distance /= n;
  for (auto& [k, v] : rep.acc_k) v /= n;
  rep.gv_turned_gs_fraction = gv_turned_gs(records, truth_flags);
  std::size_t total = 0;
  for (const auto& [l, c] : outcomes) total += c;
  for (const auto& [l, c] : outcomes) rep.outcome_distribution[l] = static_cast<double>(c) / static_cast<double>(total);
  for (const auto& [l, c] : truth_outcomes) rep.truth_outcome_distribution[l] = static_cast<double>(c) / n;
  return out;
}

/// One row per episode.
inline void write_episode_csv(const EvalResult& result, const ActivityVocab& vocab, std::ostream& out) {
  auto join = [&](const std::vector<Activity>& seq) {
    std::string s;
    for (std::size_t i = 0; i < seq.size(); ++i) s += (i ? ";" : "") + vocab.label(seq[i]);
    return detail::quote_csv(s);
  };
  out << "episode,seed_trace_id,generated,truth,goal_value,goal_satisfied,truth_goal_value,truth_satisfied,conformant,"
         "dl_distance";
  std::vector<std::size_t> ks;
  if (!result.rows.empty())
    for (const auto& [k, v] : result.rows.front().acc) ks.push_back(k);
  for (auto k : ks) out << ",acc" << k;
  out << '\n';
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    out << i << ',' << detail::quote_csv(r.record.seed_trace_id) << ',' << join(r.record.activities) << ','
        << join(r.truth) << ',' << r.record.goal_value << ',' << r.record.goal_satisfied << ',' << r.truth_goal << ','
        << r.truth_satisfied << ',' << r.record.conformant << ',' << r.dl;
    for (auto k : ks) out << ',' << r.acc.at(k);
    out << '\n';
  }
}

/// Histogram of last activities (generated vs ground truth), ready to plot.
inline void write_outcome_csv(const EvalReport& report, std::ostream& out) {
  std::map<std::string, std::pair<double, double>> merged;
  for (const auto& [l, v] : report.outcome_distribution) merged[l].first = v;
  for (const auto& [l, v] : report.truth_outcome_distribution) merged[l].second = v;
  out << "activity,generated,truth\n";
  for (const auto& [l, v] : merged) out << detail::quote_csv(l) << ',' << v.first << ',' << v.second << '\n';
}

}  // namespace gonba

#endif  // GONBA_EVAL_HPP
