#ifndef GONBA_SERVICE_HPP
#define GONBA_SERVICE_HPP

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gonba/agents.hpp"
#include "gonba/dfg.hpp"
#include "gonba/kpi_model.hpp"
#include "gonba/rl_env.hpp"

namespace gonba {

inline constexpr int kApiVersion = 1;

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// JSON facade over a loaded policy for stepping cases interactively.
///
/// Handlers are transport-independent; bind_http() wires them to an HTTP
/// server. The artifact, DFG and bank are immutable once loaded; each session
/// has its own lock so steps on one session serialize while different
/// sessions proceed independently.
class RecommendService {
 public:
  using Clock = std::chrono::steady_clock;

  explicit RecommendService(std::chrono::minutes idle_timeout = std::chrono::minutes(30),
                            std::function<Clock::time_point()> now = Clock::now)
      : idle_timeout_(idle_timeout), now_(std::move(now)) {}

  void load(PolicyArtifact artifact, Dfg dfg, PrefixModelBank bank) {
    artifact.verify(dfg, bank);
    auto m = std::make_shared<Model>(Model{std::move(artifact), std::move(dfg), std::move(bank)});
    std::unique_lock lock(sessions_mutex_);
    model_ = std::move(m);
    sessions_.clear();
  }

  bool loaded() const {
    std::shared_lock lock(sessions_mutex_);
    return model_ != nullptr;
  }

  ServiceResponse health() const {
    return {200, {{"version", kApiVersion}, {"status", "ok"}, {"loaded", loaded()}}};
  }

  ServiceResponse get_dfg() const {
    auto m = model();
    if (!m) return unavailable();
    auto doc = m->dfg.to_json();
    doc["version"] = kApiVersion;
    doc["dfg_version"] = 1;
    doc["omega"] = m->artifact.reward.omega;
    return {200, std::move(doc)};
  }

  /// Body: {"first_activity": label, "first_kpi": days (optional, 0)}.
  ServiceResponse start_session(const nlohmann::json& body) {
    auto m = model();
    if (!m) return unavailable();
    const auto label = string_field(body, "first_activity");
    if (!label) return validation("field 'first_activity' (string) is required");
    Days kpi = 0.0;
    if (body.contains("first_kpi")) {
      if (!body["first_kpi"].is_number()) return validation("field 'first_kpi' must be a number");
      kpi = body["first_kpi"].get<double>();
      if (!std::isfinite(kpi) || kpi < 0.0) return validation("field 'first_kpi' must be finite and non-negative");
    }
    const auto& vocab = m->dfg.vocab();
    auto a = vocab.find(*label);
    if (!a || *a >= vocab.size()) return validation("unknown activity '" + *label + "'");
    if (!m->dfg.has_edge(vocab.start(), *a))
      return validation("activity '" + *label + "' cannot start a case", start_labels(*m));

    auto session = std::make_shared<Session>(*m);
    try {
      session->env.start(*a, kpi, "");
    } catch (const Error& e) {
      return validation(e.what());
    }
    session->history.push_back({*a, kpi, "seed"});
    session->last_access = now_();

    std::string id;
    {
      std::unique_lock lock(sessions_mutex_);
      purge_expired_locked();
      id = "s" + std::to_string(++next_id_);
      session->id = id;
      sessions_[id] = session;
    }
    std::lock_guard g(session->mutex);
    return {201, view(*m, *session)};
  }

  /// Body: {"activity": label, "kpi": realized days (optional)}.
  ServiceResponse step_session(const std::string& id, const nlohmann::json& body) {
    auto m = model();
    if (!m) return unavailable();
    auto session = find(id);
    if (!session) return not_found(id);
    std::lock_guard g(session->mutex);
    if (session->env.done()) return {409, error_body("session '" + id + "' is already complete")};
    session->last_access = now_();

    const auto label = string_field(body, "activity");
    if (!label) return validation("field 'activity' (string) is required");
    std::optional<Days> realized;
    if (body.contains("kpi") && !body["kpi"].is_null()) {
      if (!body["kpi"].is_number()) return validation("field 'kpi' must be a number");
      realized = body["kpi"].get<double>();
      if (!std::isfinite(*realized) || *realized < 0.0)
        return validation("field 'kpi' must be finite and non-negative");
    }
    const auto& vocab = m->dfg.vocab();
    const auto mask = session->env.mask();
    auto a = vocab.find(*label);
    if (!a || *a > vocab.eos() || !mask[*a])
      return validation("activity '" + *label + "' is not a valid next activity", valid_labels(vocab, mask));

    const Days kpi = *a == vocab.eos() ? 0.0 : (realized ? *realized : session->env.predict_kpi(*a));
    session->env.step(*a, kpi);
    if (*a != vocab.eos()) session->history.push_back({*a, kpi, realized ? "realized" : "predicted"});
    return {200, view(*m, *session)};
  }

  ServiceResponse get_session(const std::string& id) {
    auto m = model();
    if (!m) return unavailable();
    auto session = find(id);
    if (!session) return not_found(id);
    std::lock_guard g(session->mutex);
    session->last_access = now_();
    return {200, view(*m, *session)};
  }

  std::size_t session_count() const {
    std::shared_lock lock(sessions_mutex_);
    return sessions_.size();
  }

  /// Registers the endpoints on any server exposing httplib::Server's
  /// Get/Post interface.
  template <class Server>
  void bind_http(Server& server) {
    auto reply = [](auto& res, const ServiceResponse& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    auto parse = [](const std::string& text) -> std::optional<nlohmann::json> {
      if (text.empty()) return nlohmann::json::object();
      auto j = nlohmann::json::parse(text, nullptr, false);
      if (j.is_discarded() || !j.is_object()) return std::nullopt;
      return j;
    };
    server.Get("/health", [this, reply](const auto&, auto& res) { reply(res, health()); });
    server.Get("/dfg", [this, reply](const auto&, auto& res) { reply(res, get_dfg()); });
    server.Post("/sessions", [this, reply, parse](const auto& req, auto& res) {
      auto body = parse(req.body);
      reply(res, body ? start_session(*body) : validation("request body must be a JSON object"));
    });
    server.Get(R"(/sessions/([^/]+))", [this, reply](const auto& req, auto& res) {
      reply(res, get_session(req.matches[1]));
    });
    server.Post(R"(/sessions/([^/]+)/step)", [this, reply, parse](const auto& req, auto& res) {
      auto body = parse(req.body);
      reply(res, body ? step_session(req.matches[1], *body) : validation("request body must be a JSON object"));
    });
  }

 private:
  struct Model {
    PolicyArtifact artifact;
    Dfg dfg;
    PrefixModelBank bank;
  };

  struct HistoryEntry {
    Activity activity;
    Days kpi;
    std::string source;
  };

  struct Session {
    explicit Session(const Model& m) : env(m.dfg, m.bank, m.artifact.reward, InvalidActions::masked) {}

    std::string id;
    Environment env;
    std::vector<HistoryEntry> history;
    Clock::time_point last_access;
    std::mutex mutex;
  };

  std::shared_ptr<const Model> model() const {
    std::shared_lock lock(sessions_mutex_);
    return model_;
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::unique_lock lock(sessions_mutex_);
    purge_expired_locked();
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  void purge_expired_locked() {
    const auto now = now_();
    std::erase_if(sessions_, [&](const auto& kv) {
      std::unique_lock g(kv.second->mutex, std::try_to_lock);
      return g.owns_lock() && now - kv.second->last_access > idle_timeout_;
    });
  }

  static std::optional<std::string> string_field(const nlohmann::json& body, const char* name) {
    if (!body.is_object() || !body.contains(name) || !body[name].is_string()) return std::nullopt;
    return body[name].get<std::string>();
  }

  static nlohmann::json error_body(const std::string& msg) { return {{"version", kApiVersion}, {"error", msg}}; }

  static ServiceResponse unavailable() { return {503, error_body("no policy artifact loaded")}; }

  static ServiceResponse not_found(const std::string& id) { return {404, error_body("unknown session '" + id + "'")}; }

  static ServiceResponse validation(const std::string& msg, std::vector<std::string> valid = {}) {
    auto body = error_body(msg);
    if (!valid.empty()) body["valid_actions"] = std::move(valid);
    return {400, std::move(body)};
  }

  static std::vector<std::string> valid_labels(const ActivityVocab& vocab, const std::vector<bool>& mask) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) out.push_back(vocab.label(i));
    return out;
  }

  static std::vector<std::string> start_labels(const Model& m) {
    std::vector<std::string> out;
    for (Activity a : m.dfg.valid_actions(m.dfg.vocab().start())) out.push_back(m.dfg.vocab().label(a));
    return out;
  }

  static nlohmann::json view(const Model& m, const Session& s) {
    const auto& vocab = m.dfg.vocab();
    const auto& state = s.env.state();
    const auto& reward = m.artifact.reward;
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : s.history)
      history.push_back({{"activity", vocab.label(h.activity)}, {"kpi", h.kpi}, {"source", h.source}});
    nlohmann::json out{{"version", kApiVersion},
                       {"session_id", s.id},
                       {"history", std::move(history)},
                       {"accumulated_goal", state.accumulated_goal},
                       {"omega", reward.omega},
                       {"direction", to_string(reward.direction)}};
    if (s.env.done()) {
      const auto& rec = s.env.record();
      std::vector<std::string> seq;
      for (auto a : rec.activities) seq.push_back(vocab.label(a));
      out["done"] = true;
      out["candidates"] = nlohmann::json::array();
      out["summary"] = {{"goal_value", rec.goal_value}, {"mae_total", rec.mae_total},
                        {"satisfied", rec.goal_satisfied}, {"reward", rec.terminal_reward},
                        {"conformant", rec.conformant},   {"sequence", seq}};
      return out;
    }
    const Days mae = reward.mae_relaxation ? m.bank.cumulative_mae(state.prefix.size() - 1) : 0.0;
    const auto mask = s.env.mask();
    const auto probs = m.artifact.probabilities(state, mask);
    const Activity best = act_greedy(m.artifact, state, mask);
    nlohmann::json candidates = nlohmann::json::array();
    for (std::size_t a = 0; a < mask.size(); ++a) {
      if (!mask[a]) continue;
      candidates.push_back({{"activity", vocab.label(a)},
                            {"predicted_kpi", s.env.predict_kpi(a)},
                            {"probability", probs[a]},
                            {"recommended", a == best}});
    }
    out["done"] = false;
    out["mae_total"] = mae;
    out["projected_satisfied"] = goal_satisfied(state.accumulated_goal, reward.omega, mae, reward.direction);
    out["candidates"] = std::move(candidates);
    out["recommended"] = vocab.label(best);
    return out;
  }

  std::chrono::minutes idle_timeout_;
  std::function<Clock::time_point()> now_;
  mutable std::shared_mutex sessions_mutex_;
  std::shared_ptr<const Model> model_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t next_id_ = 0;
};

}  // namespace gonba

#endif  // GONBA_SERVICE_HPP
