#ifndef GONBA_KPI_MODEL_HPP
#define GONBA_KPI_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gonba/common.hpp"
#include "gonba/event_log.hpp"
#include "gonba/nn.hpp"

namespace gonba {

/// One element of a partial sequence: an activity and its KPI value.
struct KpiStep {
  Activity activity = 0;
  Days kpi = 0.0;

  bool operator==(const KpiStep&) const = default;
};

enum class KpiBackend { tabular, neural };

inline std::string to_string(KpiBackend b) { return b == KpiBackend::tabular ? "tabular" : "neural"; }

inline KpiBackend parse_kpi_backend(const std::string& s) {
  if (s == "tabular") return KpiBackend::tabular;
  if (s == "neural") return KpiBackend::neural;
  throw UsageError("unknown KPI backend '" + s + "' (expected tabular or neural)");
}

struct KpiTrainConfig {
  KpiBackend backend = KpiBackend::tabular;
  std::size_t epochs = 25;
  double learning_rate = 0.01;
  /// Number of most recent prefix positions the neural backend sees.
  std::size_t window = 4;
  std::size_t hidden = 64;
  /// Fraction of traces held out to measure per-length MAE.
  double holdout = 0.2;
  std::uint64_t seed = 0;
};

struct KpiPrediction {
  Days value = 0.0;
  std::size_t prefix_length = 0;
  /// A shorter model, an unseen key or the global mean was used.
  bool fallback = false;
};

/// z-score parameters of the training KPI values; std is never zero.
struct Normalization {
  double mean = 0.0;
  double std = 1.0;

  double apply(double v) const { return (v - mean) / std; }
  double invert(double z) const { return z * std + mean; }
};

/// Per-length KPI regressor. A tabular regressor with no entries is the
/// global-mean model used for lengths with too few samples.
struct Regressor {
  struct Cell {
    double mean = 0.0;
    std::size_t count = 0;
  };

  KpiBackend backend = KpiBackend::tabular;
  /// (last prefix activity, candidate) -> running mean of the candidate's KPI.
  std::map<std::pair<Activity, Activity>, Cell> table;
  double global_mean = 0.0;
  nn::Mlp net;

  bool is_constant() const { return backend == KpiBackend::tabular && table.empty(); }
};

namespace detail {

/// Neural input: for each of the last `window` prefix positions (oldest first,
/// zero-padded on the left) a one-hot activity and its normalized KPI, then a
/// one-hot candidate.
inline std::vector<double> kpi_features(std::span<const KpiStep> prefix, Activity candidate, std::size_t vocab_size,
                                        std::size_t window, const Normalization& norm) {
  const std::size_t slot = vocab_size + 1;
  std::vector<double> x(window * slot + vocab_size, 0.0);
  const std::size_t take = std::min(window, prefix.size());
  const std::size_t first_slot = window - take;
  for (std::size_t i = 0; i < take; ++i) {
    const KpiStep& s = prefix[prefix.size() - take + i];
    double* base = x.data() + (first_slot + i) * slot;
    if (s.activity < vocab_size) base[s.activity] = 1.0;
    base[vocab_size] = norm.apply(s.kpi);
  }
  if (candidate < vocab_size) x[window * slot + candidate] = 1.0;
  return x;
}

}  // namespace detail

/// One KPI regressor per prefix length plus the per-length MAE table used
/// to relax the goal test.
class PrefixModelBank {
 public:
  PrefixModelBank() = default;

  PrefixModelBank(ActivityVocab vocab, KpiBackend backend, std::size_t window, Normalization norm,
                  std::map<std::size_t, Regressor> models, std::map<std::size_t, Days> mae_by_length)
      : vocab_(std::move(vocab)),
        backend_(backend),
        window_(window),
        norm_(norm),
        models_(std::move(models)),
        mae_(std::move(mae_by_length)) {
    if (models_.empty()) throw DataError("a model bank needs at least one prefix-length model");
    if (!(norm_.std > 0.0)) throw DataError("normalization std must be positive");
    for (const auto& [len, m] : models_)
      if (!mae_.contains(len)) throw DataError("MAE table is missing prefix length " + std::to_string(len));
    if (mae_.size() != models_.size()) throw DataError("MAE table and model lengths differ");
  }

  const ActivityVocab& vocab() const { return vocab_; }
  KpiBackend backend() const { return backend_; }
  std::size_t window() const { return window_; }
  const Normalization& normalization() const { return norm_; }
  const std::map<std::size_t, Regressor>& models() const { return models_; }
  const std::map<std::size_t, Days>& mae_by_length() const { return mae_; }
  std::size_t max_length() const { return models_.rbegin()->first; }

  /// KPI of `candidate` following `prefix`. EOS consumes no time.
  KpiPrediction predict(std::span<const KpiStep> prefix, Activity candidate) const {
    if (prefix.empty()) throw UsageError("KPI prediction needs a non-empty prefix");
    if (candidate == vocab_.eos()) return {0.0, prefix.size(), false};
    if (candidate >= vocab_.size())
      throw UsageError("candidate activity " + std::to_string(candidate) + " is not in the vocabulary");

    KpiPrediction out;
    auto it = models_.find(prefix.size());
    if (it == models_.end()) {
      it = prefix.size() > max_length() ? std::prev(models_.end()) : models_.lower_bound(prefix.size());
      out.fallback = true;
    }
    out.prefix_length = it->first;
    const Regressor& r = it->second;

    double v = 0.0;
    if (r.backend == KpiBackend::tabular) {
      auto cell = r.table.find({prefix.back().activity, candidate});
      if (cell == r.table.end()) {
        v = r.global_mean;
        out.fallback = true;
      } else {
        v = cell->second.mean;
      }
    } else {
      const auto x = detail::kpi_features(prefix, candidate, vocab_.size(), window_, norm_);
      v = norm_.invert(r.net.forward(x)[0]);
    }
    out.value = std::isfinite(v) ? std::max(0.0, v) : 0.0;
    return out;
  }

  /// Sum of the MAE of the first `steps` prefix lengths; lengths past the
  /// table reuse its last entry.
  Days cumulative_mae(std::size_t steps) const {
    Days total = 0.0;
    if (mae_.empty()) return total;
    for (std::size_t i = 1; i <= steps; ++i) {
      auto it = mae_.upper_bound(i);
      if (it == mae_.begin()) {
        total += it->second;
      } else {
        total += std::prev(it)->second;
      }
    }
    return total;
  }

  double average_mae() const {
    double s = 0.0;
    for (const auto& [len, m] : mae_) s += m;
    return mae_.empty() ? 0.0 : s / static_cast<double>(mae_.size());
  }

  nlohmann::json to_json() const {
    nlohmann::json models = nlohmann::json::array();
    for (const auto& [len, r] : models_) {
      nlohmann::json m{{"length", len}};
      if (r.backend == KpiBackend::tabular) {
        m["kind"] = "tabular";
        m["global_mean"] = r.global_mean;
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& [key, cell] : r.table)
          entries.push_back({{"last", vocab_.label(key.first)},
                             {"candidate", vocab_.label(key.second)},
                             {"mean", cell.mean},
                             {"count", cell.count}});
        m["entries"] = std::move(entries);
      } else {
        m["kind"] = "neural";
        m["network"] = r.net.to_json();
      }
      models.push_back(std::move(m));
    }
    nlohmann::json mae = nlohmann::json::array();
    for (const auto& [len, v] : mae_) mae.push_back({{"length", len}, {"mae", v}});
    return {{"version", 1},
            {"backend", to_string(backend_)},
            {"labels", vocab_.labels()},
            {"window", window_},
            {"normalization", {{"mean", norm_.mean}, {"std", norm_.std}}},
            {"mae_by_length", std::move(mae)},
            {"models", std::move(models)}};
  }

  static PrefixModelBank from_json(const nlohmann::json& j) {
    try {
      if (j.at("version").get<int>() != 1) throw DataError("unsupported model bank version");
      ActivityVocab vocab(j.at("labels").get<std::vector<std::string>>());
      auto label_to = [&](const std::string& l) {
        auto a = vocab.find(l);
        if (!a) throw DataError("model bank references unknown activity '" + l + "'");
        return *a;
      };
      Normalization norm{j.at("normalization").at("mean").get<double>(), j.at("normalization").at("std").get<double>()};
      std::map<std::size_t, Regressor> models;
      for (const auto& m : j.at("models")) {
        Regressor r;
        const auto kind = m.at("kind").get<std::string>();
        r.backend = parse_kpi_backend(kind);
        if (r.backend == KpiBackend::tabular) {
          r.global_mean = m.at("global_mean").get<double>();
          for (const auto& e : m.at("entries")) {
            Regressor::Cell c{e.at("mean").get<double>(), e.at("count").get<std::size_t>()};
            if (c.count == 0) throw DataError("tabular entry with zero count");
            r.table[{label_to(e.at("last").get<std::string>()), label_to(e.at("candidate").get<std::string>())}] = c;
          }
        } else {
          r.net = nn::Mlp::from_json(m.at("network"));
        }
        models[m.at("length").get<std::size_t>()] = std::move(r);
      }
      std::map<std::size_t, Days> mae;
      for (const auto& e : j.at("mae_by_length")) mae[e.at("length").get<std::size_t>()] = e.at("mae").get<double>();
      return PrefixModelBank(std::move(vocab), parse_kpi_backend(j.at("backend").get<std::string>()),
                             j.at("window").get<std::size_t>(), norm, std::move(models), std::move(mae));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed model bank: ") + e.what());
    }
  }

  std::string content_hash() const { return hex64(fnv1a64(to_json().dump())); }

 private:
  ActivityVocab vocab_;
  KpiBackend backend_ = KpiBackend::tabular;
  std::size_t window_ = 4;
  Normalization norm_;
  std::map<std::size_t, Regressor> models_;
  std::map<std::size_t, Days> mae_;
};

/// Training pair for one prefix length.
struct KpiSample {
  std::vector<KpiStep> prefix;
  Activity candidate = 0;
  Days target = 0.0;
};

inline std::vector<KpiStep> to_steps(std::span<const Event> events) {
  std::vector<KpiStep> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back({e.activity, e.activity_time});
  return out;
}

/// Samples grouped by prefix length.
inline std::map<std::size_t, std::vector<KpiSample>> kpi_samples(const EventLog& log) {
  std::map<std::size_t, std::vector<KpiSample>> out;
  for (const auto& t : log.traces) {
    for (auto& p : make_prefixes(t)) {
      const std::size_t len = p.prefix.size();
      out[len].push_back({to_steps(p.prefix), p.next.activity, p.next.activity_time});
    }
  }
  return out;
}

namespace detail {

inline Regressor fit_tabular(const std::vector<KpiSample>& samples, double global_mean) {
  Regressor r;
  r.backend = KpiBackend::tabular;
  r.global_mean = global_mean;
  for (const auto& s : samples) {
    auto& c = r.table[{s.prefix.back().activity, s.candidate}];
    ++c.count;
    c.mean += (s.target - c.mean) / static_cast<double>(c.count);
  }
  return r;
}

inline Regressor fit_neural(const std::vector<KpiSample>& samples, std::size_t vocab_size, const Normalization& norm,
                            const KpiTrainConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Regressor r;
  r.backend = KpiBackend::neural;
  r.global_mean = norm.mean;
  const std::size_t input = cfg.window * (vocab_size + 1) + vocab_size;
  r.net = nn::Mlp({input, cfg.hidden, cfg.hidden, 1}, rng);

  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  xs.reserve(samples.size());
  for (const auto& s : samples) {
    xs.push_back(kpi_features(s.prefix, s.candidate, vocab_size, cfg.window, norm));
    ys.push_back(norm.apply(s.target));
  }
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> grad(r.net.param_count());
  nn::Mlp::Tape tape;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t i : order) {
      const double y_hat = r.net.forward(xs[i], tape)[0];
      const double g_out = y_hat - ys[i];
      std::fill(grad.begin(), grad.end(), 0.0);
      r.net.backward(tape, std::span<const double>(&g_out, 1), grad);
      nn::clip_norm(grad, 5.0);
      nn::sgd_step(r.net.params(), grad, cfg.learning_rate);
    }
    if (!all_finite(r.net.params())) throw DivergenceError("KPI network parameters diverged");
  }
  return r;
}

}  // namespace detail

/// Trains one regressor per observed prefix length on (1 - holdout) of the
/// traces and measures each length's MAE on the held-out traces (falling back
/// to the training samples when a length has none held out).
inline PrefixModelBank train_bank(const EventLog& train_log, const KpiTrainConfig& cfg = {}) {
  if (train_log.traces.empty()) throw DataError("cannot train a KPI model on an empty log");
  EventLog fit_log = train_log, holdout_log;
  if (cfg.holdout > 0.0 && train_log.traces.size() >= 2) {
    std::tie(fit_log, holdout_log) = split(train_log, 1.0 - cfg.holdout, cfg.seed);
  }
  auto fit_samples = kpi_samples(fit_log);
  if (fit_samples.empty()) throw DataError("no prefixes to train on (every trace has a single event)");

  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& [len, ss] : fit_samples)
    for (const auto& s : ss) {
      sum += s.target;
      ++n;
    }
  Normalization norm;
  norm.mean = sum / static_cast<double>(n);
  for (const auto& [len, ss] : fit_samples)
    for (const auto& s : ss) sq += (s.target - norm.mean) * (s.target - norm.mean);
  norm.std = std::sqrt(sq / static_cast<double>(n));
  if (!(norm.std > 1e-12)) norm.std = 1.0;

  const std::size_t vocab_size = train_log.vocab.size();
  std::map<std::size_t, Regressor> models;
  for (const auto& [len, ss] : fit_samples) {
    if (ss.size() < 2) {
      Regressor constant;
      constant.global_mean = norm.mean;
      models[len] = std::move(constant);
    } else if (cfg.backend == KpiBackend::tabular) {
      models[len] = detail::fit_tabular(ss, norm.mean);
    } else {
      models[len] = detail::fit_neural(ss, vocab_size, norm, cfg, cfg.seed * 1000003ULL + len);
    }
  }

  // MAE needs a bank to predict through; measure with an empty table first.
  std::map<std::size_t, Days> zero_mae;
  for (const auto& [len, m] : models) zero_mae[len] = 0.0;
  PrefixModelBank provisional(train_log.vocab, cfg.backend, cfg.window, norm, models, zero_mae);

  const auto held = kpi_samples(holdout_log);
  std::map<std::size_t, Days> mae;
  for (const auto& [len, m] : models) {
    auto it = held.find(len);
    const auto& eval = (it != held.end() && !it->second.empty()) ? it->second : fit_samples.at(len);
    double err = 0.0;
    for (const auto& s : eval) err += std::abs(provisional.predict(s.prefix, s.candidate).value - s.target);
    mae[len] = err / static_cast<double>(eval.size());
  }
  return PrefixModelBank(train_log.vocab, cfg.backend, cfg.window, norm, std::move(models), std::move(mae));
}

}  // namespace gonba

#endif  // GONBA_KPI_MODEL_HPP
