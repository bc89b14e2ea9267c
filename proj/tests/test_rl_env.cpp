#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace gonba;

namespace {

struct ExampleWorld {
  Dfg dfg = fx::example_dfg();
  const ActivityVocab& v = dfg.vocab();
  // KPI of a candidate depends only on the candidate: A 0, B 1, C 2 days.
  PrefixModelBank bank = fx::table_bank(dfg.vocab(), 3, [](Activity, Activity b) { return double(b); });
  Activity A = *v.find("A"), B = *v.find("B"), C = *v.find("C");

  RewardConfig reward(double omega = 3.0) const {
    RewardConfig r;
    r.omega = omega;
    r.max_steps = 5;
    r.mae_relaxation = false;
    return r;
  }
  Trace trace(const std::string& labels) const {
    Trace t{"gt", {}};
    for (auto a : fx::seq(v, labels)) t.events.push_back({a, {}, 0.0, t.events.size()});
    return t;
  }
};

}  // namespace

TEST(TerminalReward, TableValues) {
  EXPECT_EQ(terminal_reward(13.89, 13.89, true), 0.0);
  EXPECT_EQ(terminal_reward(13.89, 13.89, false), 0.0);
  EXPECT_NEAR(terminal_reward(5.0, 10.0, true), 1.0, 1e-12);
  EXPECT_NEAR(terminal_reward(20.0, 10.0, false), -2.0, 1e-12);
  EXPECT_NEAR(terminal_reward(7.0, 4.0, false), -2.0 * 3.0 / 4.0, 1e-12);
}

TEST(GoalSatisfied, RelaxedTest) {
  EXPECT_TRUE(goal_satisfied(10.0, 13.89, 0.0, GoalDirection::minimize));
  EXPECT_TRUE(goal_satisfied(14.5, 13.89, 0.7, GoalDirection::minimize));
  EXPECT_FALSE(goal_satisfied(15.0, 13.89, 0.5, GoalDirection::minimize));
  EXPECT_TRUE(goal_satisfied(13.89, 13.89, 0.0, GoalDirection::minimize));
  EXPECT_FALSE(goal_satisfied(13.89, 13.89, 0.0, GoalDirection::maximize));
  EXPECT_TRUE(goal_satisfied(13.5, 13.89, 0.5, GoalDirection::maximize));
}

TEST(BalancingReward, TableValues) {
  using V = std::vector<Activity>;
  EXPECT_NEAR(balancing_reward(V{0, 1, 2}, V{5, 1, 2}, 2), 1.0, 1e-12);
  EXPECT_NEAR(balancing_reward(V{0, 1, 2}, V{0, 3, 2}, 3), 0.5, 1e-12);
  // Only one comparable position; it mismatches, the missing one counts -0.5.
  EXPECT_NEAR(balancing_reward(V{4}, V{0, 1, 2}, 2), -1.0, 1e-12);
  EXPECT_NEAR(balancing_reward(V{2}, V{0, 1, 2}, 2), 0.0, 1e-12);
}

TEST(BalancingReward, IsHalfMatchesMinusMismatches) {
  Rng rng(2);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<Activity> a(rng.below(6)), b(rng.below(6));
    for (auto& x : a) x = rng.below(3);
    for (auto& x : b) x = rng.below(3);
    const std::size_t k = 1 + rng.below(4);
    int matches = 0;
    for (std::size_t i = 1; i <= k; ++i)
      if (i <= a.size() && i <= b.size() && a[a.size() - i] == b[b.size() - i]) ++matches;
    EXPECT_NEAR(balancing_reward(a, b, k), 0.5 * (matches - (static_cast<int>(k) - matches)), 1e-12);
  }
}

TEST(ActionMask, Example) {
  ExampleWorld w;
  EnvState s;
  s.prev_activity = w.A;
  auto m = action_mask(s, w.dfg);
  EXPECT_EQ(m, (std::vector<bool>{false, true, true, false}));
  s.prev_activity = w.C;
  EXPECT_EQ(action_mask(s, w.dfg), (std::vector<bool>{false, false, false, true}));
}

TEST(ActionMask, HorizonAwareKeepsEosReachable) {
  ExampleWorld w;
  EnvState s;
  s.prev_activity = w.A;
  s.steps_taken = 1;
  // Budget of one more activity: B needs two (B, C), C needs one.
  EXPECT_EQ(action_mask(s, w.dfg, 2), (std::vector<bool>{false, false, true, false}));
  EXPECT_EQ(action_mask(s, w.dfg, 3), action_mask(s, w.dfg));
}

TEST(Reset, CopiesFirstEvent) {
  auto log = fx::make_log(std::vector<std::vector<fx::Step>>{{{"A", 0.0}, {"B", 1.2}}});
  auto dfg = discover(log);
  auto bank = fx::table_bank(dfg.vocab(), 2, [](Activity, Activity) { return 1.0; });
  RewardConfig r;
  Environment env(dfg, bank, r, InvalidActions::masked);
  const auto& s = env.reset(log.traces[0]);
  EXPECT_EQ(s.prev_activity, 0u);
  EXPECT_EQ(s.prev_kpi, 0.0);
  EXPECT_EQ(s.accumulated_goal, 0.0);
  EXPECT_EQ(s.steps_taken, 1u);
  EXPECT_THROW(env.reset(Trace{"empty", {}}), DataError);
}

TEST(Reset, RejectsNonConformantSeed) {
  ExampleWorld w;
  Environment env(w.dfg, w.bank, w.reward(), InvalidActions::masked);
  EXPECT_THROW(env.reset(w.trace("BA")), DataError);
}

TEST(Step, ValidActionsPayZeroUntilEos) {
  ExampleWorld w;
  Environment env(w.dfg, w.bank, w.reward(3.0), InvalidActions::masked);
  env.reset(w.trace("ABC"));
  auto t = env.step(w.B);
  EXPECT_EQ(t.reward, 0.0);
  EXPECT_FALSE(t.done);
  EXPECT_EQ(env.state().accumulated_goal, 1.0);
  t = env.step(w.C);
  EXPECT_EQ(t.reward, 0.0);
  EXPECT_EQ(env.state().accumulated_goal, 3.0);
  t = env.step(w.v.eos());
  EXPECT_TRUE(t.done);
  // G = ω on the boundary: satisfied, zero reward.
  EXPECT_EQ(t.reward, 0.0);
  EXPECT_TRUE(env.record().goal_satisfied);
  EXPECT_TRUE(env.record().conformant);
  EXPECT_THROW(env.step(w.v.eos()), UsageError);
}

TEST(Step, TerminalRewardUsesRelaxedGoal) {
  ExampleWorld w;
  auto r = w.reward(2.5);
  r.mae_relaxation = true;
  auto bank = fx::table_bank(w.v, 3, [](Activity, Activity b) { return double(b); }, 0.25);
  Environment env(w.dfg, bank, r, InvalidActions::masked);
  env.reset(w.trace("ABC"));
  env.step(w.B);
  env.step(w.C);
  auto t = env.step(w.v.eos());
  // G = 3, two predicted steps with MAE 0.25 each: 3 - 0.5 <= 2.5.
  EXPECT_NEAR(env.record().mae_total, 0.5, 1e-12);
  EXPECT_TRUE(env.record().goal_satisfied);
  EXPECT_NEAR(t.reward, 2.0 * 0.5 / 2.5, 1e-12);
}

TEST(Step, BalancingAddedAtEos) {
  ExampleWorld w;
  auto r = w.reward(3.0);
  r.balancing_enabled = true;
  r.k = 2;
  Environment env(w.dfg, w.bank, r, InvalidActions::masked);
  env.reset(w.trace("ABC"));
  env.step(w.C);
  auto t = env.step(w.v.eos());
  // Generated A,C vs truth A,B,C: last matches, second-to-last does not.
  EXPECT_EQ(env.record().balancing, 0.0);
  EXPECT_NEAR(t.reward, terminal_reward(2.0, 3.0, true) + 0.0, 1e-12);
}

TEST(Step, MaskedVariantRejectsInvalidAction) {
  ExampleWorld w;
  Environment env(w.dfg, w.bank, w.reward(), InvalidActions::masked);
  env.reset(w.trace("AC"));
  EXPECT_THROW(env.step(w.A), UsageError);
  EXPECT_THROW(env.step(99), UsageError);
}

TEST(Step, PenaltyVariantChargesAndKeepsState) {
  ExampleWorld w;
  Environment env(w.dfg, w.bank, w.reward(), InvalidActions::penalized);
  env.reset(w.trace("AC"));
  const auto before = env.state();
  auto t = env.step(w.A);
  EXPECT_EQ(t.reward, -4.0);
  EXPECT_TRUE(t.invalid);
  EXPECT_FALSE(t.done);
  EXPECT_EQ(env.state().prefix.size(), before.prefix.size());
  EXPECT_EQ(env.state().prev_activity, before.prev_activity);
  env.step(w.C);
  env.step(w.v.eos());
  EXPECT_FALSE(env.record().conformant);
  EXPECT_EQ(env.record().invalid_actions, 1u);
}

TEST(Step, PenaltyVariantTruncatesAtCap) {
  ExampleWorld w;
  auto r = w.reward();
  r.max_steps = 3;
  Environment env(w.dfg, w.bank, r, InvalidActions::penalized);
  env.reset(w.trace("AC"));
  std::size_t steps = 0;
  while (!env.done()) {
    env.step(w.A);  // never valid after A
    ++steps;
  }
  EXPECT_EQ(steps, r.max_steps + 1);
  EXPECT_TRUE(env.record().truncated);
  EXPECT_FALSE(env.record().conformant);
}

TEST(Episodes, RandomMaskedRolloutsHoldInvariants) {
  auto log = synthetic::generate(synthetic::branching_process(), 150, 21);
  auto dfg = discover(log);
  auto bank = train_bank(log);
  RewardConfig r;
  r.omega = goal_threshold(log);
  r.max_steps = 6;
  r.balancing_enabled = true;
  r.k = 2;
  Environment env(dfg, bank, r, InvalidActions::masked);
  Rng rng(4);
  for (const auto& t : log.traces) {
    if (!dfg.is_conformant(t)) continue;
    if (dfg.distance_to_eos(t.events[0].activity).value() > r.max_steps) continue;
    env.reset(t);
    std::size_t steps = 0;
    while (!env.done()) {
      auto m = env.mask();
      std::vector<Activity> ok;
      for (Activity a = 0; a < m.size(); ++a)
        if (m[a]) ok.push_back(a);
      ASSERT_FALSE(ok.empty());
      env.step(ok[rng.below(ok.size())]);
      ++steps;
      double sum = 0.0;
      for (const auto& s : env.state().prefix) sum += s.kpi;
      EXPECT_NEAR(env.state().accumulated_goal, sum, 1e-9);
      EXPECT_EQ(env.state().steps_taken, env.state().prefix.size());
    }
    const auto& rec = env.record();
    EXPECT_TRUE(rec.conformant);
    EXPECT_LE(rec.activities.size(), r.max_steps);
    EXPECT_LE(steps, r.max_steps + 1);
    for (std::size_t i = 0; i + 1 < rec.rewards.size(); ++i) EXPECT_EQ(rec.rewards[i], 0.0);
    EXPECT_NEAR(std::abs(rec.terminal_reward), 2.0 * std::abs(rec.goal_value - r.omega) / r.omega, 1e-12);
    EXPECT_EQ(rec.terminal_reward >= 0.0, rec.goal_satisfied || rec.terminal_reward == 0.0);
  }
}

TEST(Environment, RejectsMismatchedVocabularies) {
  ExampleWorld w;
  auto other = fx::table_bank(ActivityVocab(std::vector<std::string>{"X"}), 1, [](Activity, Activity) { return 0.0; });
  EXPECT_THROW(Environment(w.dfg, other, w.reward(), InvalidActions::masked), DataError);
}

TEST(RewardConfig, ValidatesAndRoundTrips) {
  RewardConfig r;
  r.omega = 0.0;
  EXPECT_THROW(r.validate(), UsageError);
  r.omega = 2.0;
  r.k = 3;
  r.balancing_enabled = true;
  auto back = RewardConfig::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
}
