#ifndef GONBA_AGENTS_HPP
#define GONBA_AGENTS_HPP

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gonba/common.hpp"
#include "gonba/dfg.hpp"
#include "gonba/event_log.hpp"
#include "gonba/kpi_model.hpp"
#include "gonba/nn.hpp"
#include "gonba/rl_env.hpp"

namespace gonba {

enum class Method { maskable_ppo, ppo_neg, dqn_neg };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::maskable_ppo: return "maskable-ppo";
    case Method::ppo_neg: return "ppo-neg";
    case Method::dqn_neg: return "dqn-neg";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "maskable-ppo") return Method::maskable_ppo;
  if (s == "ppo-neg") return Method::ppo_neg;
  if (s == "dqn-neg") return Method::dqn_neg;
  throw UsageError("unknown method '" + s + "' (expected maskable-ppo, ppo-neg or dqn-neg)");
}

inline InvalidActions invalid_actions_for(Method m) {
  return m == Method::maskable_ppo ? InvalidActions::masked : InvalidActions::penalized;
}

// ---------------------------------------------------------------------------
// Policy primitives

/// Softmax over the entries where `mask` is true; masked entries are exactly 0.
inline std::vector<double> masked_distribution(std::span<const double> logits, const std::vector<bool>& mask) {
  if (mask.size() != logits.size()) throw UsageError("mask and logits differ in length");
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) hi = std::max(hi, logits[i]);
  if (hi == -std::numeric_limits<double>::infinity()) throw UsageError("action mask has no valid entry");
  std::vector<double> p(logits.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) z += (p[i] = std::exp(logits[i] - hi));
  for (double& x : p) x /= z;
  return p;
}

/// Monte-Carlo discounted return from every step to the end of the episode.
inline std::vector<double> discounted_q(std::span<const double> rewards, double gamma) {
  std::vector<double> q(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) q[i] = acc = rewards[i] + gamma * acc;
  return q;
}

/// A = Q - v, optionally standardized to zero mean and unit variance.
inline std::vector<double> advantages(std::span<const double> q, std::span<const double> values,
                                      bool standardize = false) {
  if (q.size() != values.size()) throw UsageError("returns and values differ in length");
  std::vector<double> a(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) a[i] = q[i] - values[i];
  if (standardize && a.size() > 1) {
    double mean = 0.0;
    for (double x : a) mean += x;
    mean /= static_cast<double>(a.size());
    double var = 0.0;
    for (double x : a) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(a.size()));
    for (double& x : a) x = sd > 1e-12 ? (x - mean) / sd : 0.0;
  }
  return a;
}

/// One-hot previous activity followed by its normalized KPI.
inline std::vector<double> state_features(const EnvState& s, std::size_t vocab_size, const Normalization& norm) {
  std::vector<double> x(vocab_size + 1, 0.0);
  if (s.prev_activity < vocab_size) x[s.prev_activity] = 1.0;
  x[vocab_size] = norm.apply(s.prev_kpi);
  return x;
}

/// Index of the largest entry among those allowed by `mask`; ties go to the
/// lowest index.
inline std::size_t masked_argmax(std::span<const double> values, const std::vector<bool>& mask) {
  std::size_t best = values.size();
  for (std::size_t i = 0; i < values.size(); ++i)
    if (mask[i] && (best == values.size() || values[i] > values[best])) best = i;
  if (best == values.size()) throw UsageError("action mask has no valid entry");
  return best;
}

// ---------------------------------------------------------------------------
// PPO

struct PpoConfig {
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  double clip = 0.2;
  double gamma = 0.99;
  /// Time-steps collected between updates (checked at episode boundaries).
  std::size_t horizon = 4096;
  std::size_t update_epochs = 10;
  std::size_t minibatch = 256;
  double entropy_coef = 0.01;
  bool standardize_advantages = true;
  double max_grad_norm = 0.5;
  std::size_t hidden = 64;

  void validate() const {
    if (!(clip > 0.0 && clip < 1.0)) throw UsageError("PPO clip must lie in (0, 1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw UsageError("discount must lie in (0, 1]");
    if (horizon == 0 || update_epochs == 0 || minibatch == 0 || hidden == 0)
      throw UsageError("PPO horizon, epochs, minibatch and hidden width must be positive");
  }

  nlohmann::json to_json() const {
    return {{"actor_lr", actor_lr},   {"critic_lr", critic_lr},       {"clip", clip},
            {"gamma", gamma},         {"horizon", horizon},           {"update_epochs", update_epochs},
            {"minibatch", minibatch}, {"entropy_coef", entropy_coef}, {"standardize_advantages", standardize_advantages},
            {"max_grad_norm", max_grad_norm}, {"hidden", hidden}};
  }

  static PpoConfig from_json(const nlohmann::json& j) {
    PpoConfig c;
    c.actor_lr = j.at("actor_lr");
    c.critic_lr = j.at("critic_lr");
    c.clip = j.at("clip");
    c.gamma = j.at("gamma");
    c.horizon = j.at("horizon");
    c.update_epochs = j.at("update_epochs");
    c.minibatch = j.at("minibatch");
    c.entropy_coef = j.at("entropy_coef");
    c.standardize_advantages = j.at("standardize_advantages");
    c.max_grad_norm = j.at("max_grad_norm");
    c.hidden = j.at("hidden");
    c.validate();
    return c;
  }
};

struct TrajectoryStep {
  std::vector<double> features;
  Activity action = 0;
  double log_prob = 0.0;
  std::vector<bool> mask;
  double reward = 0.0;
  bool done = false;
};

class TrajectoryBuffer {
 public:
  explicit TrajectoryBuffer(std::size_t capacity = 4096) : capacity_(capacity) {}

  void push(TrajectoryStep s) { steps_.push_back(std::move(s)); }
  void clear() { steps_.clear(); }
  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }
  bool full() const { return steps_.size() >= capacity_; }
  std::span<const TrajectoryStep> steps() const { return steps_; }

  /// Per-step discounted returns, computed episode by episode.
  std::vector<double> returns(double gamma) const {
    std::vector<double> q;
    q.reserve(steps_.size());
    std::vector<double> rewards;
    for (const auto& s : steps_) {
      rewards.push_back(s.reward);
      if (s.done) {
        auto ep = discounted_q(rewards, gamma);
        q.insert(q.end(), ep.begin(), ep.end());
        rewards.clear();
      }
    }
    if (!rewards.empty()) throw UsageError("trajectory buffer ends mid-episode");
    return q;
  }

 private:
  std::size_t capacity_;
  std::vector<TrajectoryStep> steps_;
};

struct PpoDiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

/// Clipped-surrogate actor loss with entropy bonus, averaged over `batch`:
///   L = -mean( min(ρA, clip(ρ, 1-ε, 1+ε)A) + c·H )
/// with ρ = π(a|s) / π_old(a|s) under the masked distribution. When `grad`
/// is given, dL/dparams is added to it.
inline double actor_loss(const nn::Mlp& actor, std::span<const TrajectoryStep> batch, std::span<const double> adv,
                         double clip, double entropy_coef, std::vector<double>* grad = nullptr,
                         PpoDiagnostics* diag = nullptr) {
  const double n = static_cast<double>(batch.size());
  double loss = 0.0, entropy_sum = 0.0;
  std::size_t clipped = 0;
  nn::Mlp::Tape tape;
  std::vector<double> g_logits;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto& s = batch[t];
    const auto logits = actor.forward(s.features, tape);
    const auto p = masked_distribution(logits, s.mask);
    const double lp = std::log(p[s.action]);
    const double ratio = std::exp(lp - s.log_prob);
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    const double unclipped_obj = ratio * adv[t];
    const double clipped_obj = clipped_ratio * adv[t];
    const bool use_unclipped = unclipped_obj <= clipped_obj;
    if (!use_unclipped) ++clipped;
    const double surrogate = use_unclipped ? unclipped_obj : clipped_obj;

    double h = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j)
      if (s.mask[j] && p[j] > 0.0) h -= p[j] * std::log(p[j]);
    entropy_sum += h;
    loss -= (surrogate + entropy_coef * h) / n;

    if (grad) {
      const double d_lp = use_unclipped ? ratio * adv[t] : 0.0;
      g_logits.assign(p.size(), 0.0);
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (!s.mask[j]) continue;
        const double d_logp = (j == s.action ? 1.0 : 0.0) - p[j];
        const double d_h = p[j] > 0.0 ? -p[j] * (std::log(p[j]) + h) : 0.0;
        g_logits[j] = -(d_lp * d_logp + entropy_coef * d_h) / n;
      }
      actor.backward(tape, g_logits, *grad);
    }
  }
  if (diag) {
    diag->policy_loss = loss;
    diag->entropy = batch.empty() ? 0.0 : entropy_sum / n;
    diag->clip_fraction = batch.empty() ? 0.0 : static_cast<double>(clipped) / n;
  }
  return loss;
}

/// L = mean( (v(s) - Q)^2 / 2 ).
inline double critic_loss(const nn::Mlp& critic, std::span<const TrajectoryStep> batch,
                          std::span<const double> returns, std::vector<double>* grad = nullptr) {
  const double n = static_cast<double>(batch.size());
  double loss = 0.0;
  nn::Mlp::Tape tape;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const double v = critic.forward(batch[t].features, tape)[0];
    const double err = v - returns[t];
    loss += 0.5 * err * err / n;
    if (grad) {
      const double g = err / n;
      critic.backward(tape, std::span<const double>(&g, 1), *grad);
    }
  }
  return loss;
}

/// Actor, critic and their optimizer state.
struct PpoLearner {
  nn::Mlp actor;
  nn::Mlp critic;
  nn::Adam actor_opt;
  nn::Adam critic_opt;
  PpoConfig cfg;

  PpoLearner() = default;
  PpoLearner(nn::Mlp a, nn::Mlp c, PpoConfig config)
      : actor(std::move(a)),
        critic(std::move(c)),
        actor_opt(actor.param_count(), config.actor_lr),
        critic_opt(critic.param_count(), config.critic_lr),
        cfg(config) {}

  static PpoLearner create(std::size_t input, std::size_t actions, const PpoConfig& cfg, Rng& rng) {
    nn::Mlp actor({input, cfg.hidden, cfg.hidden, actions}, rng, 0.01);
    nn::Mlp critic({input, cfg.hidden, cfg.hidden, 1}, rng);
    return PpoLearner(std::move(actor), std::move(critic), cfg);
  }
};

/// Several epochs of minibatch clipped-surrogate ascent on the buffer's
/// episodes, with the critic regressed toward the Monte-Carlo returns. The
/// buffer is cleared afterwards.
inline PpoDiagnostics ppo_update(TrajectoryBuffer& buffer, PpoLearner& learner, Rng& rng) {
  const auto& cfg = learner.cfg;
  if (buffer.empty()) throw UsageError("PPO update needs at least one completed episode");
  const auto q = buffer.returns(cfg.gamma);
  const auto steps = buffer.steps();

  std::vector<double> values(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) values[i] = learner.critic.forward(steps[i].features)[0];
  const auto adv = advantages(q, values, cfg.standardize_advantages);

  std::vector<std::size_t> order(steps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> g_actor(learner.actor.param_count()), g_critic(learner.critic.param_count());
  std::vector<TrajectoryStep> mb;
  std::vector<double> mb_adv, mb_q;
  PpoDiagnostics diag;
  for (std::size_t epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t end = std::min(order.size(), start + cfg.minibatch);
      mb.clear();
      mb_adv.clear();
      mb_q.clear();
      for (std::size_t i = start; i < end; ++i) {
        mb.push_back(steps[order[i]]);
        mb_adv.push_back(adv[order[i]]);
        mb_q.push_back(q[order[i]]);
      }
      std::fill(g_actor.begin(), g_actor.end(), 0.0);
      std::fill(g_critic.begin(), g_critic.end(), 0.0);
      PpoDiagnostics d;
      actor_loss(learner.actor, mb, mb_adv, cfg.clip, cfg.entropy_coef, &g_actor, &d);
      d.value_loss = critic_loss(learner.critic, mb, mb_q, &g_critic);
      if (!std::isfinite(d.policy_loss) || !std::isfinite(d.value_loss) || !all_finite(g_actor) ||
          !all_finite(g_critic))
        throw DivergenceError("PPO loss became non-finite (policy " + std::to_string(d.policy_loss) + ", value " +
                              std::to_string(d.value_loss) + ")");
      if (cfg.max_grad_norm > 0.0) {
        nn::clip_norm(g_actor, cfg.max_grad_norm);
        nn::clip_norm(g_critic, cfg.max_grad_norm);
      }
      learner.actor_opt.step(learner.actor.params(), g_actor);
      learner.critic_opt.step(learner.critic.params(), g_critic);
      diag = d;
    }
  }
  buffer.clear();
  return diag;
}

// ---------------------------------------------------------------------------
// DQN

struct DqnConfig {
  double lr = 1e-3;
  std::size_t replay_capacity = 20000;
  std::size_t batch_size = 64;
  std::size_t target_sync = 500;
  double eps_start = 1.0;
  double eps_end = 0.05;
  std::size_t eps_decay_steps = 20000;
  double gamma = 0.99;
  std::size_t hidden = 64;
  std::size_t warmup = 500;

  void validate() const {
    if (replay_capacity < batch_size) throw UsageError("replay capacity must be at least the batch size");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw UsageError("discount must lie in [0, 1]");
    if (batch_size == 0 || target_sync == 0 || hidden == 0) throw UsageError("DQN sizes must be positive");
  }

  double epsilon(std::size_t step) const {
    if (step >= eps_decay_steps) return eps_end;
    return eps_start + (eps_end - eps_start) * static_cast<double>(step) / static_cast<double>(eps_decay_steps);
  }

  nlohmann::json to_json() const {
    return {{"lr", lr},
            {"replay_capacity", replay_capacity},
            {"batch_size", batch_size},
            {"target_sync", target_sync},
            {"eps_start", eps_start},
            {"eps_end", eps_end},
            {"eps_decay_steps", eps_decay_steps},
            {"gamma", gamma},
            {"hidden", hidden},
            {"warmup", warmup}};
  }

  static DqnConfig from_json(const nlohmann::json& j) {
    DqnConfig c;
    c.lr = j.at("lr");
    c.replay_capacity = j.at("replay_capacity");
    c.batch_size = j.at("batch_size");
    c.target_sync = j.at("target_sync");
    c.eps_start = j.at("eps_start");
    c.eps_end = j.at("eps_end");
    c.eps_decay_steps = j.at("eps_decay_steps");
    c.gamma = j.at("gamma");
    c.hidden = j.at("hidden");
    c.warmup = j.at("warmup");
    c.validate();
    return c;
  }
};

struct ReplayTransition {
  std::vector<double> state;
  Activity action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool done = false;
};

/// Fixed-capacity ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(ReplayTransition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
  }
  std::size_t size() const { return items_.size(); }
  const ReplayTransition& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<ReplayTransition> items_;
};

struct DqnLearner {
  nn::Mlp q;
  nn::Mlp target;
  nn::Adam opt;
  DqnConfig cfg;
  std::size_t updates = 0;

  DqnLearner() = default;
  DqnLearner(nn::Mlp net, DqnConfig config)
      : q(net), target(std::move(net)), opt(q.param_count(), config.lr), cfg(config) {}

  static DqnLearner create(std::size_t input, std::size_t actions, const DqnConfig& cfg, Rng& rng) {
    return DqnLearner(nn::Mlp({input, cfg.hidden, cfg.hidden, actions}, rng), cfg);
  }
};

/// One gradient step of 0.5 (Q(s,a) - y)^2 on a batch sampled with
/// replacement, with
/// y = r for terminal transitions and r + γ max_a' Q_target(s', a') otherwise.
/// The max runs over every action; invalid ones are discouraged only by the
/// penalty they earned. Returns the batch loss.
inline double dqn_update(const ReplayBuffer& replay, DqnLearner& learner, Rng& rng) {
  const auto& cfg = learner.cfg;
  if (replay.size() == 0) throw UsageError("replay buffer is empty");
  std::vector<double> grad(learner.q.param_count(), 0.0);
  nn::Mlp::Tape tape;
  double loss = 0.0;
  const double n = static_cast<double>(cfg.batch_size);
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    const auto& tr = replay[static_cast<std::size_t>(rng.below(replay.size()))];
    double y = tr.reward;
    if (!tr.done && cfg.gamma > 0.0) {
      const auto next = learner.target.forward(tr.next_state);
      y += cfg.gamma * *std::max_element(next.begin(), next.end());
    }
    const auto out = learner.q.forward(tr.state, tape);
    const double err = out[tr.action] - y;
    loss += 0.5 * err * err / n;
    std::vector<double> g_out(out.size(), 0.0);
    g_out[tr.action] = err / n;
    learner.q.backward(tape, g_out, grad);
  }
  if (!std::isfinite(loss) || !all_finite(grad)) throw DivergenceError("DQN loss became non-finite");
  nn::clip_norm(grad, 10.0);
  learner.opt.step(learner.q.params(), grad);
  if (++learner.updates % cfg.target_sync == 0) learner.target = learner.q;
  return loss;
}

// ---------------------------------------------------------------------------
// Trained policy

/// Everything needed to act: networks, configuration, vocabulary and the
/// content hashes of the DFG and bank it was trained against.
struct PolicyArtifact {
  Method method = Method::maskable_ppo;
  std::vector<std::string> labels;
  Normalization state_norm;
  nn::Mlp actor;
  nn::Mlp critic;
  nn::Mlp q_net;
  PpoConfig ppo;
  DqnConfig dqn;
  RewardConfig reward;
  std::string dfg_hash;
  std::string bank_hash;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;

  std::size_t vocab_size() const { return labels.size(); }
  InvalidActions invalid_actions() const { return invalid_actions_for(method); }

  std::vector<double> features(const EnvState& s) const { return state_features(s, vocab_size(), state_norm); }

  /// Actor logits (PPO) or Q-values (DQN) over the action space.
  std::vector<double> scores(const EnvState& s) const {
    return method == Method::dqn_neg ? q_net.forward(features(s)) : actor.forward(features(s));
  }

  /// Action probabilities under `mask`; DQN policies put all mass on the
  /// greedy action.
  std::vector<double> probabilities(const EnvState& s, const std::vector<bool>& mask) const {
    const auto sc = scores(s);
    if (method != Method::dqn_neg) return masked_distribution(sc, mask);
    std::vector<double> p(sc.size(), 0.0);
    p[masked_argmax(sc, mask)] = 1.0;
    return p;
  }

  void verify(const Dfg& dfg, const PrefixModelBank& bank) const {
    if (dfg.content_hash() != dfg_hash)
      throw DataError("policy artifact was trained against a different DFG (hash " + dfg_hash + ", got " +
                      dfg.content_hash() + ")");
    if (bank.content_hash() != bank_hash)
      throw DataError("policy artifact was trained against a different KPI model bank (hash " + bank_hash + ", got " +
                      bank.content_hash() + ")");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"version", 1},
                     {"method", to_string(method)},
                     {"labels", labels},
                     {"state_norm", {{"mean", state_norm.mean}, {"std", state_norm.std}}},
                     {"ppo", ppo.to_json()},
                     {"dqn", dqn.to_json()},
                     {"reward", reward.to_json()},
                     {"dfg_hash", dfg_hash},
                     {"bank_hash", bank_hash},
                     {"seed", seed},
                     {"epochs", epochs}};
    if (method == Method::dqn_neg) {
      j["q_net"] = q_net.to_json();
    } else {
      j["actor"] = actor.to_json();
      j["critic"] = critic.to_json();
    }
    return j;
  }

  static PolicyArtifact from_json(const nlohmann::json& j) {
    try {
      if (j.at("version").get<int>() != 1) throw DataError("unsupported policy artifact version");
      PolicyArtifact a;
      a.method = parse_method(j.at("method").get<std::string>());
      a.labels = j.at("labels").get<std::vector<std::string>>();
      a.state_norm = {j.at("state_norm").at("mean").get<double>(), j.at("state_norm").at("std").get<double>()};
      a.ppo = PpoConfig::from_json(j.at("ppo"));
      a.dqn = DqnConfig::from_json(j.at("dqn"));
      a.reward = RewardConfig::from_json(j.at("reward"));
      a.dfg_hash = j.at("dfg_hash").get<std::string>();
      a.bank_hash = j.at("bank_hash").get<std::string>();
      a.seed = j.at("seed").get<std::uint64_t>();
      a.epochs = j.at("epochs").get<std::size_t>();
      const std::size_t in = a.labels.size() + 1, out = a.labels.size() + 1;
      auto check = [&](const nn::Mlp& m, std::size_t outputs) {
        if (m.input_size() != in || m.output_size() != outputs)
          throw DataError("policy network shape does not match the vocabulary");
      };
      if (a.method == Method::dqn_neg) {
        a.q_net = nn::Mlp::from_json(j.at("q_net"));
        check(a.q_net, out);
      } else {
        a.actor = nn::Mlp::from_json(j.at("actor"));
        a.critic = nn::Mlp::from_json(j.at("critic"));
        check(a.actor, out);
        check(a.critic, 1);
      }
      return a;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed policy artifact: ") + e.what());
    }
  }
};

/// Most probable action under the masked distribution, lowest index on ties.
inline Activity act_greedy(const PolicyArtifact& artifact, const EnvState& state, const std::vector<bool>& mask) {
  if (artifact.method == Method::dqn_neg) return masked_argmax(artifact.scores(state), mask);
  const auto p = masked_distribution(artifact.scores(state), mask);
  return masked_argmax(p, mask);
}

// ---------------------------------------------------------------------------
// Training

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t episodes = 0;
  double mean_return = 0.0;
  double goal_satisfied_fraction = 0.0;
  double conformant_fraction = 0.0;
};

struct TrainOptions {
  Method method = Method::maskable_ppo;
  std::size_t epochs = 20;
  PpoConfig ppo;
  DqnConfig dqn;
  std::uint64_t seed = 0;
  std::function<void(const EpochStats&)> on_epoch;
};

/// Builds an untrained artifact: networks initialized from the seed.
inline PolicyArtifact initial_artifact(const Dfg& dfg, const PrefixModelBank& bank, const RewardConfig& reward,
                                       const TrainOptions& opt) {
  opt.ppo.validate();
  opt.dqn.validate();
  reward.validate();
  PolicyArtifact a;
  a.method = opt.method;
  a.labels = dfg.vocab().labels();
  a.state_norm = bank.normalization();
  a.ppo = opt.ppo;
  a.dqn = opt.dqn;
  a.reward = reward;
  a.dfg_hash = dfg.content_hash();
  a.bank_hash = bank.content_hash();
  a.seed = opt.seed;
  Rng init(opt.seed ^ 0x5EEDULL);
  const std::size_t in = dfg.vocab().size() + 1, actions = dfg.vocab().action_count();
  if (opt.method == Method::dqn_neg) {
    a.q_net = DqnLearner::create(in, actions, opt.dqn, init).q;
  } else {
    auto l = PpoLearner::create(in, actions, opt.ppo, init);
    a.actor = std::move(l.actor);
    a.critic = std::move(l.critic);
  }
  return a;
}

/// Trains a policy on episodes seeded round-robin from `seeds` (one epoch is
/// one pass over its traces). Deterministic for a fixed seed.
inline PolicyArtifact train(const Dfg& dfg, const PrefixModelBank& bank, const RewardConfig& reward,
                            const EventLog& seeds, const TrainOptions& opt) {
  PolicyArtifact artifact = initial_artifact(dfg, bank, reward, opt);
  if (opt.epochs == 0) return artifact;
  if (seeds.traces.empty()) throw DataError("no seed traces to train on");

  Environment env(dfg, bank, reward, invalid_actions_for(opt.method));
  Rng rng(opt.seed);
  const std::size_t actions = dfg.vocab().action_count();
  const std::vector<bool> all_valid(actions, true);

  PpoLearner ppo;
  DqnLearner dqn;
  if (opt.method == Method::dqn_neg) {
    dqn = DqnLearner(artifact.q_net, opt.dqn);
  } else {
    ppo = PpoLearner(artifact.actor, artifact.critic, opt.ppo);
  }
  TrajectoryBuffer buffer(opt.ppo.horizon);
  ReplayBuffer replay(opt.dqn.replay_capacity);
  std::size_t global_step = 0;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    for (const auto& trace : seeds.traces) {
      env.reset(trace);
      double ret = 0.0;
      while (!env.done()) {
        auto x = state_features(env.state(), dfg.vocab().size(), artifact.state_norm);
        const auto mask = opt.method == Method::maskable_ppo ? env.mask() : all_valid;
        if (opt.method == Method::dqn_neg) {
          Activity a;
          if (rng.uniform() < opt.dqn.epsilon(global_step)) {
            a = static_cast<Activity>(rng.below(actions));
          } else {
            a = masked_argmax(dqn.q.forward(x), mask);
          }
          const auto t = env.step(a);
          ret += t.reward;
          replay.push({std::move(x), a, t.reward,
                       state_features(env.state(), dfg.vocab().size(), artifact.state_norm), t.done});
          ++global_step;
          if (replay.size() >= std::max(opt.dqn.batch_size, opt.dqn.warmup)) dqn_update(replay, dqn, rng);
        } else {
          const auto p = masked_distribution(ppo.actor.forward(x), mask);
          const Activity a = rng.categorical(p);
          const auto t = env.step(a);
          ret += t.reward;
          buffer.push({std::move(x), a, std::log(p[a]), mask, t.reward, t.done});
          ++global_step;
        }
      }
      const auto& rec = env.record();
      ++stats.episodes;
      stats.mean_return += ret;
      stats.goal_satisfied_fraction += rec.goal_satisfied ? 1.0 : 0.0;
      stats.conformant_fraction += rec.conformant ? 1.0 : 0.0;
      if (opt.method != Method::dqn_neg && buffer.full()) ppo_update(buffer, ppo, rng);
    }
    const double n = static_cast<double>(stats.episodes);
    stats.mean_return /= n;
    stats.goal_satisfied_fraction /= n;
    stats.conformant_fraction /= n;
    if (opt.on_epoch) opt.on_epoch(stats);
  }
  if (opt.method != Method::dqn_neg && !buffer.empty()) ppo_update(buffer, ppo, rng);

  if (opt.method == Method::dqn_neg) {
    artifact.q_net = std::move(dqn.q);
  } else {
    artifact.actor = std::move(ppo.actor);
    artifact.critic = std::move(ppo.critic);
  }
  artifact.epochs = opt.epochs;
  return artifact;
}

}  // namespace gonba

#endif  // GONBA_AGENTS_HPP
