#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace gonba;

namespace {

KpiTrainConfig no_holdout(KpiBackend backend = KpiBackend::tabular) {
  KpiTrainConfig c;
  c.backend = backend;
  c.holdout = 0.0;
  c.seed = 1;
  return c;
}

}  // namespace

TEST(TabularBank, StoresArithmeticMean) {
  auto log = fx::make_log({{{"A", 0.0}, {"B", 2.0}}, {{"A", 0.0}, {"B", 4.0}}});
  auto bank = train_bank(log, no_holdout());
  const Activity a = *log.vocab.find("A"), b = *log.vocab.find("B");
  std::vector<KpiStep> prefix{{a, 0.0}};
  auto p = bank.predict(prefix, b);
  EXPECT_NEAR(p.value, (2.0 + 4.0) / 2.0, 1e-9);
  EXPECT_FALSE(p.fallback);
  EXPECT_EQ(p.prefix_length, 1u);
}

TEST(TabularBank, UnseenKeyFallsBackToGlobalMean) {
  auto log = fx::make_log({{{"A", 0.0}, {"B", 2.0}}, {{"A", 0.0}, {"B", 4.0}}, {{"C", 0.0}, {"A", 9.0}}});
  auto bank = train_bank(log, no_holdout());
  std::vector<KpiStep> prefix{{*log.vocab.find("B"), 1.0}};
  auto p = bank.predict(prefix, *log.vocab.find("C"));
  EXPECT_TRUE(p.fallback);
  EXPECT_NEAR(p.value, (2.0 + 4.0 + 9.0) / 3.0, 1e-9);
}

TEST(TabularBank, MatchesGroupByOracle) {
  auto log = synthetic::generate(synthetic::branching_process(), 300, 12);
  auto bank = train_bank(log, no_holdout());
  // Oracle: group (length, last, candidate) -> mean over all prefixes.
  std::map<std::tuple<std::size_t, Activity, Activity>, std::pair<double, std::size_t>> groups;
  for (const auto& t : log.traces)
    for (std::size_t k = 1; k < t.events.size(); ++k) {
      auto& g = groups[{k, t.events[k - 1].activity, t.events[k].activity}];
      g.first += t.events[k].activity_time;
      ++g.second;
    }
  std::map<std::size_t, std::size_t> per_length;
  for (const auto& [key, g] : groups) per_length[std::get<0>(key)] += g.second;
  for (const auto& [key, g] : groups) {
    const auto [len, last, cand] = key;
    if (per_length[len] < 2) continue;  // constant model
    std::vector<KpiStep> prefix(len, KpiStep{last, 0.0});
    EXPECT_NEAR(bank.predict(prefix, cand).value, g.first / static_cast<double>(g.second), 1e-9);
  }
}

TEST(TabularBank, SingleSampleLengthUsesConstantModel) {
  auto log = fx::make_log({{{"A", 0.0}, {"B", 2.0}}, {{"A", 0.0}, {"B", 4.0}}, {{"A", 0.0}, {"B", 1.0}, {"C", 3.0}}});
  auto bank = train_bank(log, no_holdout());
  EXPECT_TRUE(bank.models().at(2).is_constant());
  std::vector<KpiStep> prefix{{0, 0.0}, {1, 1.0}};
  EXPECT_NEAR(bank.predict(prefix, 2).value, (2.0 + 4.0 + 1.0 + 3.0) / 4.0, 1e-9);
}

TEST(Predict, EosAndErrors) {
  auto log = fx::make_log({{{"A", 0.0}, {"B", 2.0}}, {{"A", 0.0}, {"B", 4.0}}});
  auto bank = train_bank(log, no_holdout());
  std::vector<KpiStep> prefix{{0, 0.0}};
  EXPECT_EQ(bank.predict(prefix, log.vocab.eos()).value, 0.0);
  EXPECT_THROW(bank.predict(std::vector<KpiStep>{}, 1), UsageError);
  EXPECT_THROW(bank.predict(prefix, log.vocab.start()), UsageError);
}

TEST(Predict, LongPrefixUsesLongestModel) {
  auto log = fx::make_log({{{"A", 0.0}, {"B", 2.0}, {"A", 1.0}}, {{"A", 0.0}, {"B", 4.0}, {"A", 3.0}}});
  auto bank = train_bank(log, no_holdout());
  std::vector<KpiStep> prefix{{0, 0.0}, {1, 1.0}, {0, 1.0}, {1, 1.0}};
  auto p = bank.predict(prefix, 0);
  EXPECT_TRUE(p.fallback);
  EXPECT_EQ(p.prefix_length, 2u);
  EXPECT_NEAR(p.value, 2.0, 1e-9);
}

TEST(Predict, NeverNegative) {
  auto vocab = ActivityVocab(std::vector<std::string>{"A", "B"});
  auto bank = fx::table_bank(vocab, 2, [](Activity, Activity) { return -5.0; });
  std::vector<KpiStep> prefix{{0, 0.0}};
  EXPECT_EQ(bank.predict(prefix, 1).value, 0.0);
}

TEST(CumulativeMae, SumsAndExtends) {
  auto vocab = ActivityVocab(std::vector<std::string>{"A"});
  std::map<std::size_t, Regressor> models{{1, {}}, {2, {}}};
  PrefixModelBank bank(vocab, KpiBackend::tabular, 4, {}, models, {{1, 0.5}, {2, 0.3}});
  EXPECT_EQ(bank.cumulative_mae(0), 0.0);
  EXPECT_NEAR(bank.cumulative_mae(2), 0.8, 1e-12);
  EXPECT_NEAR(bank.cumulative_mae(4), 0.5 + 0.3 + 0.3 + 0.3, 1e-12);
}

TEST(Bank, InvariantsAreChecked) {
  auto vocab = ActivityVocab(std::vector<std::string>{"A"});
  std::map<std::size_t, Regressor> models{{1, {}}};
  EXPECT_THROW(PrefixModelBank(vocab, KpiBackend::tabular, 4, {}, models, {}), DataError);
  EXPECT_THROW(PrefixModelBank(vocab, KpiBackend::tabular, 4, {0.0, 0.0}, models, {{1, 0.1}}), DataError);
  EXPECT_THROW(train_bank(EventLog{}), DataError);
}

TEST(NeuralBank, LearnsConstantTarget) {
  std::vector<std::vector<fx::Step>> traces;
  for (int i = 0; i < 40; ++i) traces.push_back({{"A", 0.0}, {i % 2 ? "B" : "C", 1.5}, {"D", 1.5}});
  auto log = fx::make_log(traces);
  auto cfg = no_holdout(KpiBackend::neural);
  cfg.epochs = 25;
  auto bank = train_bank(log, cfg);
  for (const auto& [len, mae] : bank.mae_by_length()) EXPECT_LT(mae, 1e-2) << "length " << len;
}

TEST(NeuralBank, LossGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t vocab = 2 + rng.below(3), window = 1 + rng.below(3);
    Normalization norm{rng.uniform(0, 2), rng.uniform(0.5, 2)};
    std::vector<KpiStep> prefix(1 + rng.below(4));
    for (auto& s : prefix) s = {static_cast<Activity>(rng.below(vocab)), rng.uniform(0, 3)};
    const auto x = detail::kpi_features(prefix, rng.below(vocab), vocab, window, norm);
    nn::Mlp net({x.size(), 4, 4, 1}, rng);
    const double target = norm.apply(rng.uniform(0, 3));
    auto loss = [&] {
      const double e = net.forward(x)[0] - target;
      return 0.5 * e * e;
    };
    nn::Mlp::Tape tape;
    const double g_out = net.forward(x, tape)[0] - target;
    std::vector<double> grad(net.param_count(), 0.0);
    net.backward(tape, std::span<const double>(&g_out, 1), grad);
    EXPECT_LT(fx::relative_error(grad, fx::numeric_gradient(net.params(), loss)), 1e-4) << "seed " << seed;
  }
}

TEST(NeuralBank, FeatureLayout) {
  Normalization norm{1.0, 2.0};
  std::vector<KpiStep> prefix{{0, 1.0}, {2, 5.0}};
  auto x = detail::kpi_features(prefix, 1, 3, 3, norm);
  // 3 slots of (3 one-hot + 1 kpi), then 3 candidate entries; left-padded.
  ASSERT_EQ(x.size(), 3u * 4 + 3);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(x[i], 0.0);
  EXPECT_EQ(x[4], 1.0);
  EXPECT_EQ(x[7], 0.0);
  EXPECT_EQ(x[10], 1.0);
  EXPECT_EQ(x[11], 2.0);
  EXPECT_EQ(x[13], 1.0);
}

TEST(Bank, JsonRoundTripAndDeterminism) {
  auto log = synthetic::generate(synthetic::branching_process(), 120, 5);
  for (auto backend : {KpiBackend::tabular, KpiBackend::neural}) {
    KpiTrainConfig cfg;
    cfg.backend = backend;
    cfg.epochs = 3;
    cfg.seed = 9;
    auto bank = train_bank(log, cfg);
    auto again = train_bank(log, cfg);
    EXPECT_EQ(bank.to_json().dump(), again.to_json().dump());
    auto back = PrefixModelBank::from_json(nlohmann::json::parse(bank.to_json().dump()));
    EXPECT_EQ(back.content_hash(), bank.content_hash());
    const auto& t = log.traces[3];
    auto steps = to_steps(std::span<const Event>(t.events).first(2));
    EXPECT_EQ(back.predict(steps, 0).value, bank.predict(steps, 0).value);
    for (const auto& [len, mae] : bank.mae_by_length()) EXPECT_GE(mae, 0.0);
  }
}
