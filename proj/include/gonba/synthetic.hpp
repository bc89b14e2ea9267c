#ifndef GONBA_SYNTHETIC_HPP
#define GONBA_SYNTHETIC_HPP

#include <cmath>
#include <string>
#include <vector>

#include "gonba/common.hpp"
#include "gonba/event_log.hpp"

namespace gonba::synthetic {

/// Stochastic process used to generate event logs for tests and demos.
/// Arcs leave "<START>" and enter "<EOS>"; the next arc is drawn by weight
/// and its activity time is exponential with the given mean.
struct Process {
  struct Arc {
    std::string from;
    std::string to;
    double weight = 1.0;
    double mean_days = 1.0;
  };
  std::vector<Arc> arcs;
};

inline EventLog generate(const Process& process, std::size_t trace_count, std::uint64_t seed,
                         std::size_t max_length = 64) {
  EventLog log;
  Rng rng(seed);
  const auto base = parse_timestamp("2020-01-01T00:00:00Z").value();
  std::size_t row = 0;
  for (std::size_t t = 0; t < trace_count; ++t) {
    Trace trace{"case-" + std::to_string(t + 1), {}};
    auto ts = base + std::chrono::hours(static_cast<long>(t));
    std::string at(kStartLabel);
    while (trace.events.size() < max_length) {
      std::vector<const Process::Arc*> out;
      double total = 0.0;
      for (const auto& a : process.arcs)
        if (a.from == at) {
          out.push_back(&a);
          total += a.weight;
        }
      if (out.empty()) throw UsageError("synthetic process has no arc leaving '" + at + "'");
      double u = rng.uniform() * total;
      const Process::Arc* pick = out.back();
      for (const auto* a : out) {
        if (u < a->weight) {
          pick = a;
          break;
        }
        u -= a->weight;
      }
      if (pick->to == kEosLabel) break;
      if (!trace.events.empty()) {
        const double days = -pick->mean_days * std::log(1.0 - rng.uniform());
        ts += std::chrono::milliseconds(static_cast<long long>(std::llround(days * kMillisPerDay)));
      }
      trace.events.push_back(Event{log.vocab.intern(pick->to), ts, 0.0, row++});
      at = pick->to;
    }
    if (!trace.events.empty()) log.traces.push_back(std::move(trace));
  }
  return derive_activity_times(std::move(log));
}

/// Eight activities with an exclusive choice, an optional rework loop and
/// two outcomes that differ in duration.
inline Process branching_process() {
  return Process{{
      {"<START>", "Register", 1.0, 0.0},
      {"Register", "Triage", 0.7, 0.3},
      {"Register", "Investigate", 0.3, 0.8},
      {"Triage", "Investigate", 0.6, 1.5},
      {"Triage", "QuickFix", 0.4, 0.4},
      {"Investigate", "Rework", 0.25, 3.0},
      {"Investigate", "Resolve", 0.75, 2.0},
      {"Rework", "Investigate", 1.0, 1.0},
      {"QuickFix", "Resolve", 0.8, 0.5},
      {"QuickFix", "Reject", 0.2, 0.2},
      {"Resolve", "Close", 1.0, 1.0},
      {"Reject", "Close", 1.0, 0.3},
      {"Close", "<EOS>", 1.0, 0.0},
  }};
}

}  // namespace gonba::synthetic

#endif  // GONBA_SYNTHETIC_HPP
