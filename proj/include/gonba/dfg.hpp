#ifndef GONBA_DFG_HPP
#define GONBA_DFG_HPP

#include <deque>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gonba/common.hpp"
#include "gonba/event_log.hpp"

namespace gonba {

struct Violation {
  std::string trace_id;
  /// Index of the first invalid transition; 0 is START -> first activity and
  /// n is last activity -> EOS.
  std::size_t position = 0;

  bool operator==(const Violation&) const = default;
};

struct ConformanceReport {
  std::size_t total = 0;
  std::size_t conformant = 0;
  double fraction = 1.0;
  std::vector<Violation> violations;
};

/// Directly-follows graph over a vocabulary plus the START and EOS sentinels.
/// Immutable once built.
class Dfg {
 public:
  using Edge = std::pair<Activity, Activity>;

  Dfg() = default;

  Dfg(ActivityVocab vocab, std::map<Edge, std::size_t> edges) : vocab_(std::move(vocab)), edges_(std::move(edges)) {
    for (const auto& [e, f] : edges_) {
      if (f == 0) throw DataError("edge frequency must be positive");
      if (e.first == vocab_.eos() || e.second == vocab_.start() || e.first > vocab_.start() ||
          e.second > vocab_.start())
        throw DataError("edge " + vocab_.label(e.first) + " -> " + vocab_.label(e.second) + " is not allowed");
    }
    index();
  }

  const ActivityVocab& vocab() const { return vocab_; }
  const std::map<Edge, std::size_t>& edges() const { return edges_; }
  std::size_t node_count() const { return vocab_.size() + 2; }

  std::size_t frequency(Activity from, Activity to) const {
    auto it = edges_.find({from, to});
    return it == edges_.end() ? 0 : it->second;
  }
  bool has_edge(Activity from, Activity to) const { return edges_.contains({from, to}); }

  /// Out-neighbours of `node` in increasing index order (EOS sorts after every
  /// label). Throws for EOS, for indices outside the graph and for activities
  /// the graph never observed.
  const std::vector<Activity>& valid_actions(Activity node) const {
    if (node >= node_count()) throw UsageError("node " + std::to_string(node) + " is not in the DFG");
    if (node == vocab_.eos()) throw UsageError("EOS has no successors");
    const auto& s = succ_[node];
    if (s.empty()) throw UsageError("activity '" + vocab_.label(node) + "' has no successors in the DFG");
    return s;
  }

  /// Index of the first transition of START, seq..., EOS that is not an edge.
  std::optional<std::size_t> first_violation(const std::vector<Activity>& seq) const {
    Activity prev = vocab_.start();
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (seq[i] >= vocab_.size() || !has_edge(prev, seq[i])) return i;
      prev = seq[i];
    }
    if (!has_edge(prev, vocab_.eos())) return seq.size();
    return std::nullopt;
  }

  bool is_conformant(const std::vector<Activity>& seq) const { return !first_violation(seq); }
  bool is_conformant(const Trace& trace) const { return is_conformant(trace.activities()); }

  /// Fewest transitions from `node` to EOS; nullopt when EOS is unreachable.
  std::optional<std::size_t> distance_to_eos(Activity node) const {
    if (node >= node_count()) return std::nullopt;
    const std::size_t d = dist_eos_[node];
    if (d == kUnreachable) return std::nullopt;
    return d;
  }

  std::string content_hash() const { return hex64(fnv1a64(to_json().dump())); }

  nlohmann::json to_json() const {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [e, f] : edges_)
      edges.push_back({{"from", vocab_.label(e.first)}, {"to", vocab_.label(e.second)}, {"frequency", f}});
    return {{"version", 1}, {"labels", vocab_.labels()}, {"edges", std::move(edges)}};
  }

  static Dfg from_json(const nlohmann::json& j) {
    try {
      if (j.at("version").get<int>() != 1) throw DataError("unsupported DFG document version");
      ActivityVocab vocab(j.at("labels").get<std::vector<std::string>>());
      std::map<Edge, std::size_t> edges;
      for (const auto& e : j.at("edges")) {
        edges[{lookup(vocab, e.at("from").get<std::string>()), lookup(vocab, e.at("to").get<std::string>())}] =
            e.at("frequency").get<std::size_t>();
      }
      return Dfg(std::move(vocab), std::move(edges));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed DFG document: ") + e.what());
    }
  }

  /// Plain edge list: header `from,to,frequency`, one edge per line.
  void write_edge_list(std::ostream& out) const {
    out << "from,to,frequency\n";
    for (const auto& [e, f] : edges_)
      out << detail::quote_csv(vocab_.label(e.first)) << ',' << detail::quote_csv(vocab_.label(e.second)) << ','
          << f << '\n';
  }

  /// Reads an edge list against a vocabulary (the JSON descriptor's labels).
  static Dfg read_edge_list(std::istream& in, const ActivityVocab& vocab) {
    std::string line;
    std::size_t line_no = 0;
    std::map<Edge, std::size_t> edges;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim(line).empty() || (line_no == 1 && line.starts_with("from,"))) continue;
      auto fields = detail::split_csv_record(line);
      if (!fields || fields->size() != 3) throw DataError("edge list line " + std::to_string(line_no) + ": malformed");
      std::size_t f = 0;
      const auto& fs = (*fields)[2];
      auto [p, ec] = std::from_chars(fs.data(), fs.data() + fs.size(), f);
      if (ec != std::errc() || p != fs.data() + fs.size())
        throw DataError("edge list line " + std::to_string(line_no) + ": bad frequency");
      edges[{lookup(vocab, (*fields)[0]), lookup(vocab, (*fields)[1])}] = f;
    }
    return Dfg(vocab, std::move(edges));
  }

  void write_dot(std::ostream& out) const {
    out << "digraph dfg {\n  rankdir=LR;\n";
    for (Activity n = 0; n < node_count(); ++n) {
      const bool sentinel = n >= vocab_.size();
      out << "  n" << n << " [label=\"" << escape_dot(vocab_.label(n)) << "\""
          << (sentinel ? ", shape=circle" : ", shape=box") << "];\n";
    }
    for (const auto& [e, f] : edges_) out << "  n" << e.first << " -> n" << e.second << " [label=\"" << f << "\"];\n";
    out << "}\n";
  }

 private:
  static constexpr std::size_t kUnreachable = static_cast<std::size_t>(-1);

  static Activity lookup(const ActivityVocab& vocab, const std::string& label) {
    auto a = vocab.find(label);
    if (!a) throw DataError("unknown DFG node '" + label + "'");
    return *a;
  }

  static std::string escape_dot(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '"' || c == '\\') out.push_back('\\');
      out.push_back(c);
    }
    return out;
  }

  void index() {
    const std::size_t n = node_count();
    succ_.assign(n, {});
    std::vector<std::vector<Activity>> pred(n);
    for (const auto& [e, f] : edges_) {
      succ_[e.first].push_back(e.second);
      pred[e.second].push_back(e.first);
    }
    dist_eos_.assign(n, kUnreachable);
    std::deque<Activity> queue{vocab_.eos()};
    dist_eos_[vocab_.eos()] = 0;
    while (!queue.empty()) {
      const Activity v = queue.front();
      queue.pop_front();
      for (Activity u : pred[v]) {
        if (dist_eos_[u] == kUnreachable) {
          dist_eos_[u] = dist_eos_[v] + 1;
          queue.push_back(u);
        }
      }
    }
  }

  ActivityVocab vocab_;
  std::map<Edge, std::size_t> edges_;
  std::vector<std::vector<Activity>> succ_;
  std::vector<std::size_t> dist_eos_;
};

namespace detail {

/// Keeps only edges lying on some START -> ... -> EOS path.
inline std::map<Dfg::Edge, std::size_t> prune_to_paths(const ActivityVocab& vocab,
                                                       std::map<Dfg::Edge, std::size_t> edges) {
  const std::size_t n = vocab.size() + 2;
  std::vector<std::vector<Activity>> succ(n), pred(n);
  for (const auto& [e, f] : edges) {
    succ[e.first].push_back(e.second);
    pred[e.second].push_back(e.first);
  }
  auto reach = [n](Activity from, const std::vector<std::vector<Activity>>& adj) {
    std::vector<bool> seen(n, false);
    std::vector<Activity> stack{from};
    seen[from] = true;
    while (!stack.empty()) {
      const Activity v = stack.back();
      stack.pop_back();
      for (Activity u : adj[v])
        if (!seen[u]) {
          seen[u] = true;
          stack.push_back(u);
        }
    }
    return seen;
  };
  const auto fwd = reach(vocab.start(), succ);
  const auto bwd = reach(vocab.eos(), pred);
  std::erase_if(edges, [&](const auto& kv) {
    const auto& [from, to] = kv.first;
    return !(fwd[from] && bwd[from] && fwd[to] && bwd[to]);
  });
  return edges;
}

}  // namespace detail

/// Counts directly-follows pairs, including START -> first and last -> EOS.
/// Edges observed fewer than `min_frequency` times are dropped, after which
/// edges that no longer lie on a START-to-EOS path are pruned so every kept
/// node still has a way out.
inline Dfg discover(const EventLog& log, std::size_t min_frequency = 1) {
  const auto& v = log.vocab;
  std::map<Dfg::Edge, std::size_t> edges;
  for (const auto& t : log.traces) {
    if (t.events.empty()) continue;
    Activity prev = v.start();
    for (const auto& e : t.events) {
      ++edges[{prev, e.activity}];
      prev = e.activity;
    }
    ++edges[{prev, v.eos()}];
  }
  if (min_frequency > 1) {
    std::erase_if(edges, [&](const auto& kv) { return kv.second < min_frequency; });
    edges = detail::prune_to_paths(v, std::move(edges));
  }
  return Dfg(v, std::move(edges));
}

/// Traces whose activities index outside the DFG's vocabulary are violations.
inline std::pair<EventLog, ConformanceReport> filter_conformant(const Dfg& dfg, const EventLog& log) {
  EventLog kept;
  kept.vocab = log.vocab;
  ConformanceReport report;
  report.total = log.traces.size();
  for (const auto& t : log.traces) {
    if (auto pos = dfg.first_violation(t.activities())) {
      report.violations.push_back({t.id, *pos});
    } else {
      kept.traces.push_back(t);
    }
  }
  report.conformant = kept.traces.size();
  report.fraction = report.total == 0 ? 1.0 : static_cast<double>(report.conformant) / static_cast<double>(report.total);
  return {std::move(kept), std::move(report)};
}

inline DatasetStats dataset_stats(const EventLog& log, const Dfg& dfg, double q = 0.75) {
  return dataset_stats(log, filter_conformant(dfg, log).second.fraction, q);
}

}  // namespace gonba

#endif  // GONBA_DFG_HPP
