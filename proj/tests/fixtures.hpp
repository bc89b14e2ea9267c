#ifndef GONBA_TESTS_FIXTURES_HPP
#define GONBA_TESTS_FIXTURES_HPP

#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gonba/gonba.hpp"

namespace fx {

using namespace gonba;

/// One event: label and its activity time in days (ignored for the first).
using Step = std::pair<std::string, double>;

/// Builds a log through the CSV reader; timestamps are epoch milliseconds.
inline EventLog make_log(const std::vector<std::vector<Step>>& traces) {
  std::ostringstream csv;
  csv << "case_id,activity,timestamp\n";
  for (std::size_t t = 0; t < traces.size(); ++t) {
    double ms = 1.6e12 + static_cast<double>(t) * 3.6e6;
    for (std::size_t i = 0; i < traces[t].size(); ++i) {
      if (i > 0) ms += traces[t][i].second * 86'400'000.0;
      csv << "c" << t << "," << traces[t][i].first << "," << static_cast<long long>(ms) << "\n";
    }
  }
  std::istringstream in(csv.str());
  return parse_csv(in);
}

/// Traces of one-character labels, every activity taking one day.
inline EventLog make_log(const std::vector<std::string>& traces) {
  std::vector<std::vector<Step>> steps;
  for (const auto& t : traces) {
    std::vector<Step> s;
    for (char c : t) s.emplace_back(std::string(1, c), 1.0);
    steps.push_back(std::move(s));
  }
  return make_log(steps);
}

inline std::vector<Activity> seq(const ActivityVocab& v, const std::string& labels) {
  std::vector<Activity> out;
  for (char c : labels) out.push_back(v.find(std::string(1, c)).value());
  return out;
}

/// The graph discovered from <A,B,C> and <A,C>.
inline Dfg example_dfg() { return discover(make_log(std::vector<std::string>{"ABC", "AC"})); }

/// Bank whose tabular models return `value(last, candidate)` for every
/// prefix length up to `lengths`, with the given per-length MAE.
template <class F>
PrefixModelBank table_bank(const ActivityVocab& vocab, std::size_t lengths, F value, double mae = 0.0) {
  std::map<std::size_t, Regressor> models;
  std::map<std::size_t, Days> maes;
  for (std::size_t len = 1; len <= lengths; ++len) {
    Regressor r;
    for (Activity a = 0; a < vocab.size(); ++a)
      for (Activity b = 0; b < vocab.size(); ++b) r.table[{a, b}] = {value(a, b), 1};
    models[len] = r;
    maes[len] = mae;
  }
  return PrefixModelBank(vocab, KpiBackend::tabular, 4, {}, models, maes);
}

/// Central-difference gradient of `f` at `params`.
template <class F>
std::vector<double> numeric_gradient(std::span<double> params, F f, double h = 1e-5) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = f();
    params[i] = keep - h;
    const double down = f();
    params[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - b_i| / max(1e-8, |a_i| + |b_i|) over entries where either
/// side is non-negligible.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::abs(a[i]) + std::abs(b[i]);
    if (scale < 1e-7) continue;
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace fx

#endif  // GONBA_TESTS_FIXTURES_HPP
