#ifndef GONBA_EVENT_LOG_HPP
#define GONBA_EVENT_LOG_HPP

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gonba/common.hpp"

namespace gonba {

/// Activity index. Indices below ActivityVocab::size() are labels; size() is
/// the EOS sentinel and size()+1 the START sentinel.
using Activity = std::size_t;

/// Durations are fractional days throughout.
using Days = double;

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

inline constexpr double kMillisPerDay = 86'400'000.0;

inline constexpr std::string_view kStartLabel = "<START>";
inline constexpr std::string_view kEosLabel = "<EOS>";

class ActivityVocab {
 public:
  ActivityVocab() = default;

  explicit ActivityVocab(const std::vector<std::string>& labels) {
    for (const auto& l : labels) {
      if (find(l)) throw DataError("duplicate activity label '" + l + "'");
      intern(l);
    }
  }

  std::size_t size() const { return labels_.size(); }
  Activity eos() const { return labels_.size(); }
  Activity start() const { return labels_.size() + 1; }
  /// Actions are every label plus EOS.
  std::size_t action_count() const { return labels_.size() + 1; }

  Activity intern(std::string_view label) {
    if (label == kStartLabel || label == kEosLabel)
      throw DataError("activity label '" + std::string(label) + "' is reserved");
    if (auto it = index_.find(std::string(label)); it != index_.end()) return it->second;
    labels_.emplace_back(label);
    index_.emplace(labels_.back(), labels_.size() - 1);
    return labels_.size() - 1;
  }

  std::optional<Activity> find(std::string_view label) const {
    if (label == kEosLabel) return eos();
    if (label == kStartLabel) return start();
    if (auto it = index_.find(std::string(label)); it != index_.end()) return it->second;
    return std::nullopt;
  }

  std::string label(Activity a) const {
    if (a < labels_.size()) return labels_[a];
    if (a == eos()) return std::string(kEosLabel);
    if (a == start()) return std::string(kStartLabel);
    throw UsageError("activity index " + std::to_string(a) + " out of range");
  }

  const std::vector<std::string>& labels() const { return labels_; }

  bool operator==(const ActivityVocab& o) const { return labels_ == o.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, Activity> index_;
};

struct Event {
  Activity activity = 0;
  Timestamp timestamp{};
  Days activity_time = 0.0;
  /// Position of the row in the source file; breaks timestamp ties.
  std::size_t order = 0;

  bool operator==(const Event&) const = default;
};

struct Trace {
  std::string id;
  std::vector<Event> events;

  std::vector<Activity> activities() const {
    std::vector<Activity> out;
    out.reserve(events.size());
    for (const auto& e : events) out.push_back(e.activity);
    return out;
  }

  bool operator==(const Trace&) const = default;
};

struct EventLog {
  std::vector<Trace> traces;
  ActivityVocab vocab;

  std::size_t event_count() const {
    std::size_t n = 0;
    for (const auto& t : traces) n += t.events.size();
    return n;
  }

  std::size_t max_trace_length() const {
    std::size_t n = 0;
    for (const auto& t : traces) n = std::max(n, t.events.size());
    return n;
  }

  bool operator==(const EventLog&) const = default;
};

struct ColumnMap {
  std::string case_id = "case_id";
  std::string activity = "activity";
  std::string timestamp = "timestamp";
};

struct DatasetStats {
  std::size_t trace_count = 0;
  std::size_t event_count = 0;
  std::size_t activity_count = 0;
  double mean_trace_length = 0.0;
  double conformant_fraction = 1.0;
  Days mean_duration_days = 0.0;
  Days goal_threshold_days = 0.0;
};

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian date (H. Hinnant's algorithm).
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

constexpr CivilDate civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

class Cursor {
 public:
  explicit Cursor(std::string_view s) : s_(s) {}

  bool done() const { return pos_ >= s_.size(); }
  char peek() const { return done() ? '\0' : s_[pos_]; }
  bool accept(char c) {
    if (peek() != c) return false;
    ++pos_;
    return true;
  }
  std::optional<int> digits(std::size_t n) {
    if (pos_ + n > s_.size()) return std::nullopt;
    int v = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const char c = s_[pos_ + i];
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + (c - '0');
    }
    pos_ += n;
    return v;
  }
  std::size_t digit_run() const {
    std::size_t n = 0;
    while (pos_ + n < s_.size() && s_[pos_ + n] >= '0' && s_[pos_ + n] <= '9') ++n;
    return n;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Splits one CSV record with RFC 4180 quoting. Returns nullopt on an
/// unterminated quote.
inline std::optional<std::vector<std::string>> split_csv_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && !was_quoted && trim(cur).empty()) {
      cur.clear();
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? cur : std::string(trim(cur)));
      cur.clear();
      was_quoted = false;
    } else if (!(was_quoted && (c == ' ' || c == '\r'))) {
      cur.push_back(c);
    }
  }
  if (quoted) return std::nullopt;
  fields.push_back(was_quoted ? cur : std::string(trim(cur)));
  return fields;
}

inline std::string quote_csv(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos &&
      (s.empty() || (s.front() != ' ' && s.back() != ' ')))
    return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Parses an ISO-8601 instant (date separators '-' or '/', 'T' or space
/// before the time, optional fraction, optional Z or numeric offset; no offset
/// means UTC) or an integer count of epoch milliseconds.
inline std::optional<Timestamp> parse_timestamp(std::string_view raw) {
  using std::chrono::milliseconds;
  const std::string_view s = detail::trim(raw);
  if (s.empty()) return std::nullopt;

  {
    std::int64_t ms = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), ms);
    if (ec == std::errc() && p == s.data() + s.size()) return Timestamp(milliseconds(ms));
  }

  detail::Cursor c(s);
  auto year = c.digits(4);
  if (!year) return std::nullopt;
  const char sep = c.peek();
  if (sep != '-' && sep != '/') return std::nullopt;
  c.accept(sep);
  auto month = c.digits(2);
  if (!month || !c.accept(sep)) return std::nullopt;
  auto day = c.digits(2);
  if (!day) return std::nullopt;
  if (*month < 1 || *month > 12 || *day < 1 || *day > 31) return std::nullopt;

  int hh = 0, mi = 0, ss = 0, frac_ms = 0;
  if (c.accept('T') || c.accept(' ')) {
    auto h = c.digits(2);
    if (!h || !c.accept(':')) return std::nullopt;
    auto m = c.digits(2);
    if (!m) return std::nullopt;
    hh = *h;
    mi = *m;
    if (c.accept(':')) {
      auto sec = c.digits(2);
      if (!sec) return std::nullopt;
      ss = *sec;
      if (c.accept('.') || c.accept(',')) {
        const std::size_t n = c.digit_run();
        if (n == 0) return std::nullopt;
        auto f = c.digits(std::min<std::size_t>(n, 3));
        frac_ms = *f;
        for (std::size_t i = n; i < 3; ++i) frac_ms *= 10;
        if (n > 3) c.digits(n - 3);
      }
    }
    if (hh > 23 || mi > 59 || ss > 60) return std::nullopt;
  }

  std::int64_t offset_minutes = 0;
  if (c.accept('Z') || c.accept('z')) {
  } else if (c.peek() == '+' || c.peek() == '-') {
    const int sign = c.peek() == '-' ? -1 : 1;
    c.accept(c.peek());
    auto oh = c.digits(2);
    if (!oh) return std::nullopt;
    c.accept(':');
    auto om = c.digits(2);
    if (!om) return std::nullopt;
    offset_minutes = sign * (*oh * 60 + *om);
  }
  if (!c.done()) return std::nullopt;

  const std::int64_t days =
      detail::days_from_civil(*year, static_cast<unsigned>(*month), static_cast<unsigned>(*day));
  const std::int64_t ms =
      ((days * 24 + hh) * 60 + mi - offset_minutes) * 60'000 + std::int64_t{ss} * 1000 + frac_ms;
  return Timestamp(milliseconds(ms));
}

/// UTC rendering with millisecond precision, e.g. 2020-01-01T10:00:00.000Z.
inline std::string format_timestamp(Timestamp ts) {
  const std::int64_t ms = ts.time_since_epoch().count();
  std::int64_t days = ms / 86'400'000;
  std::int64_t rem = ms % 86'400'000;
  if (rem < 0) {
    rem += 86'400'000;
    --days;
  }
  const auto date = detail::civil_from_days(days);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ",
                static_cast<long long>(date.year), date.month, date.day,
                static_cast<long long>(rem / 3'600'000), static_cast<long long>(rem / 60'000 % 60),
                static_cast<long long>(rem / 1000 % 60), static_cast<long long>(rem % 1000));
  return buf;
}

/// Activity time of each event: days since the previous event of its trace
/// (0 for the first).
inline EventLog derive_activity_times(EventLog log) {
  for (auto& t : log.traces) {
    for (std::size_t i = 0; i < t.events.size(); ++i) {
      t.events[i].activity_time =
          i == 0 ? 0.0
                 : static_cast<double>((t.events[i].timestamp - t.events[i - 1].timestamp).count()) /
                       kMillisPerDay;
    }
  }
  return log;
}

/// Reads a CSV event log. Traces appear in first-seen case order, the
/// vocabulary in first-seen activity order (after any labels already in
/// `base_vocab`), and events within a trace are sorted by timestamp with ties
/// kept in file order. Activity times are derived.
inline EventLog parse_csv(std::istream& in, const ColumnMap& columns = {},
                          const ActivityVocab& base_vocab = {}) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::vector<std::string>> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_record(line);
      break;
    }
  }
  if (!header) throw DataError("event log is empty");
  if (!header->empty() && header->front().starts_with("\xEF\xBB\xBF"))
    header->front().erase(0, 3);

  auto column_index = [&](const std::string& name) {
    auto it = std::find(header->begin(), header->end(), name);
    if (it == header->end())
      throw DataError("column '" + name + "' not found in header (line " + std::to_string(line_no) + ")");
    return static_cast<std::size_t>(it - header->begin());
  };
  const std::size_t case_col = column_index(columns.case_id);
  const std::size_t act_col = column_index(columns.activity);
  const std::size_t ts_col = column_index(columns.timestamp);
  const std::size_t needed = std::max({case_col, act_col, ts_col}) + 1;

  EventLog log;
  log.vocab = base_vocab;
  std::unordered_map<std::string, std::size_t> trace_index;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_record(line);
    if (!fields) throw DataError("line " + std::to_string(line_no) + ": unterminated quoted field");
    if (fields->size() < needed)
      throw DataError("line " + std::to_string(line_no) + ": expected at least " + std::to_string(needed) +
                      " fields, found " + std::to_string(fields->size()));
    const std::string& case_id = (*fields)[case_col];
    const std::string& activity = (*fields)[act_col];
    if (case_id.empty()) throw DataError("line " + std::to_string(line_no) + ": empty case id");
    if (activity.empty()) throw DataError("line " + std::to_string(line_no) + ": missing activity");
    auto ts = parse_timestamp((*fields)[ts_col]);
    if (!ts)
      throw DataError("line " + std::to_string(line_no) + ": unparseable timestamp '" + (*fields)[ts_col] + "'");

    Activity a;
    try {
      a = log.vocab.intern(activity);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto [it, inserted] = trace_index.try_emplace(case_id, log.traces.size());
    if (inserted) log.traces.push_back(Trace{case_id, {}});
    log.traces[it->second].events.push_back(Event{a, *ts, 0.0, row++});
  }
  if (log.traces.empty()) throw DataError("event log has a header but no events");

  for (auto& t : log.traces) {
    std::stable_sort(t.events.begin(), t.events.end(),
                     [](const Event& x, const Event& y) { return x.timestamp < y.timestamp; });
  }
  return derive_activity_times(std::move(log));
}

inline EventLog parse_csv(const std::string& path, const ColumnMap& columns = {},
                          const ActivityVocab& base_vocab = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event log '" + path + "'");
  return parse_csv(in, columns, base_vocab);
}

/// Writes rows in original file order so that parsing the output reproduces
/// the same log.
inline void write_csv(const EventLog& log, std::ostream& out, const ColumnMap& columns = {}) {
  struct Row {
    std::size_t order;
    const Trace* trace;
    const Event* event;
  };
  std::vector<Row> rows;
  for (const auto& t : log.traces)
    for (const auto& e : t.events) rows.push_back({e.order, &t, &e});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.order < b.order; });

  out << detail::quote_csv(columns.case_id) << ',' << detail::quote_csv(columns.activity) << ','
      << detail::quote_csv(columns.timestamp) << '\n';
  for (const auto& r : rows) {
    out << detail::quote_csv(r.trace->id) << ',' << detail::quote_csv(log.vocab.label(r.event->activity)) << ','
        << format_timestamp(r.event->timestamp) << '\n';
  }
}

/// Cumulative KPI over the trace.
inline Days goal_value(const Trace& trace) {
  Days g = 0.0;
  for (const auto& e : trace.events) g += e.activity_time;
  return g;
}

/// Quantile with linear interpolation between order statistics at position
/// (n-1)*q.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw UsageError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = static_cast<double>(values.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Goal threshold ω: the q-quantile (default third quartile) of case goal values.
inline Days goal_threshold(const EventLog& log, double q = 0.75) {
  if (log.traces.empty()) throw UsageError("goal threshold of an empty log");
  std::vector<double> g;
  g.reserve(log.traces.size());
  for (const auto& t : log.traces) g.push_back(goal_value(t));
  return quantile(std::move(g), q);
}

struct PrefixSample {
  std::vector<Event> prefix;
  Event next;
};

/// All (first k events, event k+1) pairs for k = 1..n-1.
inline std::vector<PrefixSample> make_prefixes(const Trace& trace) {
  std::vector<PrefixSample> out;
  for (std::size_t k = 1; k < trace.events.size(); ++k) {
    out.push_back({std::vector<Event>(trace.events.begin(), trace.events.begin() + static_cast<std::ptrdiff_t>(k)),
                   trace.events[k]});
  }
  return out;
}

namespace detail {

inline EventLog subset(const EventLog& log, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  EventLog out;
  out.vocab = log.vocab;
  out.traces.reserve(idx.size());
  for (auto i : idx) out.traces.push_back(log.traces[i]);
  return out;
}

}  // namespace detail

/// Seeded trace-level split; the first part receives floor(n * ratio)
/// traces. Both parts keep the original trace order.
inline std::pair<EventLog, EventLog> split(const EventLog& log, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw UsageError("split ratio must lie in (0, 1)");
  std::vector<std::size_t> idx(log.traces.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const auto n_first = static_cast<std::size_t>(std::floor(static_cast<double>(idx.size()) * ratio));
  std::vector<std::size_t> first(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_first));
  std::vector<std::size_t> second(idx.begin() + static_cast<std::ptrdiff_t>(n_first), idx.end());
  return {detail::subset(log, std::move(first)), detail::subset(log, std::move(second))};
}

/// Seeded random subsample of ceil(n * fraction) traces.
inline EventLog sample(const EventLog& log, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("sample fraction must lie in (0, 1]");
  std::vector<std::size_t> idx(log.traces.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(static_cast<std::size_t>(std::ceil(static_cast<double>(idx.size()) * fraction)));
  return detail::subset(log, std::move(idx));
}

inline DatasetStats dataset_stats(const EventLog& log, double conformant_fraction = 1.0, double q = 0.75) {
  DatasetStats s;
  s.trace_count = log.traces.size();
  s.event_count = log.event_count();
  s.activity_count = log.vocab.size();
  s.conformant_fraction = conformant_fraction;
  if (s.trace_count == 0) return s;
  s.mean_trace_length = static_cast<double>(s.event_count) / static_cast<double>(s.trace_count);
  Days total = 0.0;
  for (const auto& t : log.traces) total += goal_value(t);
  s.mean_duration_days = total / static_cast<double>(s.trace_count);
  s.goal_threshold_days = goal_threshold(log, q);
  return s;
}

}  // namespace gonba

#endif  // GONBA_EVENT_LOG_HPP
