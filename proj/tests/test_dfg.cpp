#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace gonba;

namespace {

/// Directly-follows pairs counted by hand-rolled iteration over label strings.
std::map<std::pair<std::string, std::string>, std::size_t> count_pairs(const std::vector<std::string>& traces) {
  std::map<std::pair<std::string, std::string>, std::size_t> out;
  for (const auto& t : traces) {
    std::string prev = "<START>";
    for (char c : t) {
      ++out[{prev, std::string(1, c)}];
      prev = std::string(1, c);
    }
    ++out[{prev, "<EOS>"}];
  }
  return out;
}

std::map<std::pair<std::string, std::string>, std::size_t> labelled(const Dfg& dfg) {
  std::map<std::pair<std::string, std::string>, std::size_t> out;
  for (const auto& [e, f] : dfg.edges()) out[{dfg.vocab().label(e.first), dfg.vocab().label(e.second)}] = f;
  return out;
}

std::vector<std::string> random_traces(Rng& rng, std::size_t n, std::size_t alphabet, std::size_t max_len) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string t;
    const std::size_t len = 1 + rng.below(max_len);
    for (std::size_t j = 0; j < len; ++j) t += static_cast<char>('A' + rng.below(alphabet));
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST(Discover, ExampleEdges) {
  auto dfg = fx::example_dfg();
  const std::map<std::pair<std::string, std::string>, std::size_t> expected{
      {{"<START>", "A"}, 2}, {{"A", "B"}, 1}, {{"B", "C"}, 1}, {{"A", "C"}, 1}, {{"C", "<EOS>"}, 2}};
  EXPECT_EQ(labelled(dfg), expected);
  EXPECT_EQ(dfg.edges().size(), 5u);
}

TEST(Discover, SingleTrace) {
  auto dfg = discover(fx::make_log(std::vector<std::string>{"A"}));
  const std::map<std::pair<std::string, std::string>, std::size_t> expected{{{"<START>", "A"}, 1},
                                                                              {{"A", "<EOS>"}, 1}};
  EXPECT_EQ(labelled(dfg), expected);
}

TEST(Discover, DuplicateTracesDoubleFrequencies) {
  auto once = discover(fx::make_log(std::vector<std::string>{"ABC", "AC"}));
  auto twice = discover(fx::make_log(std::vector<std::string>{"ABC", "AC", "ABC", "AC"}));
  for (const auto& [e, f] : once.edges()) EXPECT_EQ(twice.frequency(e.first, e.second), 2 * f);
  EXPECT_EQ(twice.edges().size(), once.edges().size());
}

TEST(Discover, MatchesPairCountOracle) {
  Rng rng(3);
  for (int rep = 0; rep < 30; ++rep) {
    auto traces = random_traces(rng, 1 + rng.below(20), 4, 7);
    EXPECT_EQ(labelled(discover(fx::make_log(traces))), count_pairs(traces));
  }
}

TEST(Discover, ClosureAndFrequencyConservation) {
  Rng rng(8);
  for (int rep = 0; rep < 30; ++rep) {
    auto log = fx::make_log(random_traces(rng, 1 + rng.below(25), 5, 8));
    auto dfg = discover(log);
    for (const auto& t : log.traces) EXPECT_TRUE(dfg.is_conformant(t));
    std::size_t out_start = 0, in_eos = 0;
    for (const auto& [e, f] : dfg.edges()) {
      if (e.first == dfg.vocab().start()) out_start += f;
      if (e.second == dfg.vocab().eos()) in_eos += f;
    }
    EXPECT_EQ(out_start, log.traces.size());
    EXPECT_EQ(in_eos, log.traces.size());
  }
}

TEST(Discover, MinFrequencyPrunesToPaths) {
  // A->B->C appears once; dropping frequency-1 edges leaves A->C->EOS.
  auto log = fx::make_log(std::vector<std::string>{"ABC", "AC", "AC", "AD"});
  auto dfg = discover(log, 2);
  const auto& v = dfg.vocab();
  EXPECT_TRUE(dfg.has_edge(v.start(), *v.find("A")));
  EXPECT_TRUE(dfg.has_edge(*v.find("A"), *v.find("C")));
  EXPECT_FALSE(dfg.has_edge(*v.find("A"), *v.find("B")));
  EXPECT_FALSE(dfg.has_edge(*v.find("A"), *v.find("D")));
  auto [kept, report] = filter_conformant(dfg, log);
  EXPECT_EQ(report.conformant, 2u);
  EXPECT_DOUBLE_EQ(report.fraction, 0.5);
  // Every surviving node still lies on a START -> EOS path.
  for (Activity a = 0; a < v.size(); ++a) {
    bool touched = false;
    for (const auto& [e, f] : dfg.edges()) touched = touched || e.first == a || e.second == a;
    if (touched) {
      EXPECT_TRUE(dfg.distance_to_eos(a).has_value());
    }
  }
}

TEST(ValidActions, Example) {
  auto dfg = fx::example_dfg();
  const auto& v = dfg.vocab();
  EXPECT_EQ(dfg.valid_actions(*v.find("A")), fx::seq(v, "BC"));
  EXPECT_EQ(dfg.valid_actions(*v.find("C")), std::vector<Activity>{v.eos()});
  EXPECT_THROW(dfg.valid_actions(v.eos()), UsageError);
  EXPECT_THROW(dfg.valid_actions(v.start() + 1), UsageError);
}

TEST(Conformance, Examples) {
  auto dfg = fx::example_dfg();
  const auto& v = dfg.vocab();
  EXPECT_TRUE(dfg.is_conformant(fx::seq(v, "ABC")));
  EXPECT_FALSE(dfg.is_conformant(fx::seq(v, "BA")));
  EXPECT_FALSE(dfg.is_conformant(fx::seq(v, "AAB")));
  EXPECT_EQ(dfg.first_violation(fx::seq(v, "AAB")), 1u);
  EXPECT_EQ(dfg.first_violation(fx::seq(v, "AB")), 2u);
  EXPECT_FALSE(dfg.is_conformant(std::vector<Activity>{0, 99}));
}

TEST(Conformance, FilterReport) {
  auto dfg = fx::example_dfg();
  auto log = fx::make_log(std::vector<std::string>{"ABC", "BA", "AC", "AAB"});
  auto [kept, report] = filter_conformant(dfg, log);
  EXPECT_EQ(report.total, 4u);
  EXPECT_EQ(report.conformant, 2u);
  EXPECT_DOUBLE_EQ(report.fraction, 0.5);
  ASSERT_EQ(kept.traces.size(), 2u);
  ASSERT_EQ(report.violations.size(), 2u);
  EXPECT_EQ(report.violations[0], (Violation{"c1", 0}));
  EXPECT_EQ(report.violations[1], (Violation{"c3", 1}));

  auto [none, empty_report] = filter_conformant(dfg, EventLog{{}, dfg.vocab()});
  EXPECT_EQ(empty_report.total, 0u);
  EXPECT_DOUBLE_EQ(empty_report.fraction, 1.0);
}

TEST(Conformance, RandomWalksThroughMasksConform) {
  auto dfg = discover(synthetic::generate(synthetic::branching_process(), 200, 4));
  Rng rng(1);
  for (int rep = 0; rep < 2000; ++rep) {
    std::vector<Activity> s;
    Activity node = dfg.vocab().start();
    while (true) {
      const auto& next = dfg.valid_actions(node);
      node = next[rng.below(next.size())];
      if (node == dfg.vocab().eos()) break;
      s.push_back(node);
    }
    EXPECT_TRUE(dfg.is_conformant(s));
  }
}

TEST(DistanceToEos, Example) {
  auto dfg = fx::example_dfg();
  const auto& v = dfg.vocab();
  EXPECT_EQ(dfg.distance_to_eos(*v.find("C")), 1u);
  EXPECT_EQ(dfg.distance_to_eos(*v.find("A")), 2u);
  EXPECT_EQ(dfg.distance_to_eos(v.start()), 3u);
  EXPECT_EQ(dfg.distance_to_eos(v.eos()), 0u);
}

TEST(Serialization, JsonAndEdgeListRoundTrip) {
  auto dfg = discover(synthetic::generate(synthetic::branching_process(), 80, 6));
  auto back = Dfg::from_json(nlohmann::json::parse(dfg.to_json().dump()));
  EXPECT_EQ(back.edges(), dfg.edges());
  EXPECT_EQ(back.vocab(), dfg.vocab());
  EXPECT_EQ(back.content_hash(), dfg.content_hash());

  std::ostringstream out;
  dfg.write_edge_list(out);
  std::istringstream in(out.str());
  auto from_list = Dfg::read_edge_list(in, dfg.vocab());
  EXPECT_EQ(from_list.content_hash(), dfg.content_hash());

  std::ostringstream dot;
  dfg.write_dot(dot);
  EXPECT_NE(dot.str().find("digraph"), std::string::npos);
}

TEST(Serialization, RejectsInvalidGraphs) {
  auto j = fx::example_dfg().to_json();
  j["edges"].push_back({{"from", "<EOS>"}, {"to", "A"}, {"frequency", 1}});
  EXPECT_THROW(Dfg::from_json(j), DataError);
  auto k = fx::example_dfg().to_json();
  k["edges"][0]["frequency"] = 0;
  EXPECT_THROW(Dfg::from_json(k), DataError);
}
