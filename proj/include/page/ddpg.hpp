#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "page/numerics.hpp"
#include "page/rng.hpp"
#include "page/serialize.hpp"

namespace page {

struct DdpgConfig {
  int state_dim = 1;
  int action_dim = 1;
  MlpSpec actor_spec;
  MlpSpec critic_spec;
  double l_actor = 1e-4;
  double l_critic = 1e-3;
  double beta = 0.01;        // target-network update rate
  double gamma = 0.99;       // discount
  std::size_t buffer_capacity = 10000;
  int batch_size = 64;
  double noise_std0 = 0.1;   // initial exploration noise (pre-head)
  double noise_decay = 0.995;
  int warmup_steps = 1;      // exploring steps drawn uniformly from the action set
  double reward_clip = 100.0;
  // Box action bounds. With a kBoundedTanh actor head, outputs are rescaled
  // into [lo, hi]; with a kIdentity head they only bound warmup sampling.
  std::vector<double> action_lo;
  std::vector<double> action_hi;

  void validate() const {
    actor_spec.validate();
    critic_spec.validate();
    if (state_dim < 1 || action_dim < 1) throw std::invalid_argument("DdpgConfig: bad dims");
    if (actor_spec.input_size() != state_dim || actor_spec.output_size() != action_dim)
      throw std::invalid_argument("DdpgConfig: actor spec does not match dims");
    if (critic_spec.input_size() != state_dim + action_dim || critic_spec.output_size() != 1)
      throw std::invalid_argument("DdpgConfig: critic spec does not match dims");
    if (!(l_actor > 0.0 && l_critic > 0.0)) throw std::invalid_argument("DdpgConfig: rates must be positive");
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("DdpgConfig: beta must be in (0, 1]");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("DdpgConfig: gamma must be in [0, 1)");
    if (buffer_capacity == 0 || batch_size < 1 ||
        static_cast<std::size_t>(batch_size) > buffer_capacity)
      throw std::invalid_argument("DdpgConfig: need 1 <= batch_size <= buffer_capacity");
    if (noise_std0 < 0.0) throw std::invalid_argument("DdpgConfig: noise_std0 must be >= 0");
    if (!(noise_decay > 0.0 && noise_decay <= 1.0))
      throw std::invalid_argument("DdpgConfig: noise_decay must be in (0, 1]");
    if (warmup_steps < 0) throw std::invalid_argument("DdpgConfig: warmup_steps must be >= 0");
    if (!(reward_clip > 0.0)) throw std::invalid_argument("DdpgConfig: reward_clip must be positive");
    if (actor_spec.output_head != OutputHead::kSimplexSoftmax) {
      if (action_lo.size() != static_cast<std::size_t>(action_dim) ||
          action_hi.size() != static_cast<std::size_t>(action_dim))
        throw std::invalid_argument("DdpgConfig: action bounds must match action_dim");
      for (int i = 0; i < action_dim; ++i)
        if (!(action_lo[static_cast<std::size_t>(i)] < action_hi[static_cast<std::size_t>(i)]))
          throw std::invalid_argument("DdpgConfig: action_lo must be < action_hi");
    }
  }
};

/// Actor {state, hidden..., action} with the given head; critic
/// {state+action, hidden..., 1} with identity head; [-1, 1] box bounds.
inline DdpgConfig default_ddpg_config(int state_dim, int action_dim, OutputHead actor_head,
                                      std::vector<int> hidden = {64, 64}) {
  DdpgConfig cfg;
  cfg.state_dim = state_dim;
  cfg.action_dim = action_dim;
  cfg.actor_spec.layer_sizes = {state_dim};
  cfg.actor_spec.layer_sizes.insert(cfg.actor_spec.layer_sizes.end(), hidden.begin(), hidden.end());
  cfg.actor_spec.layer_sizes.push_back(action_dim);
  cfg.actor_spec.hidden_activation = Activation::kTanh;
  cfg.actor_spec.output_head = actor_head;
  cfg.critic_spec.layer_sizes = {state_dim + action_dim};
  cfg.critic_spec.layer_sizes.insert(cfg.critic_spec.layer_sizes.end(), hidden.begin(), hidden.end());
  cfg.critic_spec.layer_sizes.push_back(1);
  cfg.critic_spec.hidden_activation = Activation::kTanh;
  cfg.critic_spec.output_head = OutputHead::kIdentity;
  cfg.action_lo.assign(static_cast<std::size_t>(action_dim), -1.0);
  cfg.action_hi.assign(static_cast<std::size_t>(action_dim), 1.0);
  return cfg;
}

/// One experience tuple.
struct Transition {
  Vector s;
  Vector a;
  double r = 0.0;
  Vector s_next;
};

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::vector<Transition> items_;
  std::size_t capacity_;
  std::size_t next_ = 0;
};

/// Deterministic policy output in action space (head + box rescale applied),
/// optionally with pre-head Gaussian noise already added to `prehead`.
inline Vector ddpg_policy_from_prehead(const DdpgConfig& cfg, const Vector& prehead) {
  Vector out = apply_head(cfg.actor_spec.output_head, prehead);
  if (cfg.actor_spec.output_head == OutputHead::kBoundedTanh) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = cfg.action_lo[i] + (out[i] + 1.0) * 0.5 * (cfg.action_hi[i] - cfg.action_lo[i]);
  }
  return out;
}

inline Vector ddpg_policy_action(const DdpgConfig& cfg, const ParamVector& actor,
                                 std::span<const double> state) {
  return ddpg_policy_from_prehead(cfg, mlp_forward_prehead(cfg.actor_spec, actor, state));
}

/**
 * Mean critic value over `states` with actions produced by the actor,
 * J = (1/B) sum_j Q(s_j, mu(s_j)), together with dJ/d(actor params). The
 * chain rule runs through the critic's action input, the box rescale and the
 * actor's output head.
 */
inline LossGrad actor_objective_and_grad(const DdpgConfig& cfg, const ParamVector& actor,
                                         const ParamVector& critic,
                                         const std::vector<Vector>& states) {
  if (states.empty()) throw std::invalid_argument("actor_objective_and_grad: empty batch");
  LossGrad result;
  result.grad.assign(actor.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(states.size());
  const auto sd = static_cast<std::size_t>(cfg.state_dim);
  const auto ad = static_cast<std::size_t>(cfg.action_dim);
  Vector critic_in(sd + ad);
  for (const Vector& s : states) {
    MlpTrace actor_trace = mlp_forward_trace(cfg.actor_spec, actor, s);
    const Vector action = ddpg_policy_from_prehead(cfg, actor_trace.post.back());
    std::copy(s.begin(), s.end(), critic_in.begin());
    std::copy(action.begin(), action.end(), critic_in.begin() + static_cast<std::ptrdiff_t>(sd));
    MlpTrace critic_trace = mlp_forward_trace(cfg.critic_spec, critic, critic_in);
    result.loss += critic_trace.post.back()[0] * inv_b;
    const Vector input_grad = mlp_backward(cfg.critic_spec, critic, critic_trace, {inv_b},
                                           /*seed_is_prehead=*/true, nullptr);
    Vector seed(ad);
    for (std::size_t i = 0; i < ad; ++i) {
      seed[i] = input_grad[sd + i];
      if (cfg.actor_spec.output_head == OutputHead::kBoundedTanh)
        seed[i] *= 0.5 * (cfg.action_hi[i] - cfg.action_lo[i]);
    }
    mlp_backward(cfg.actor_spec, actor, actor_trace, std::move(seed), /*seed_is_prehead=*/false,
                 &result.grad);
  }
  return result;
}

struct LearnResult {
  double critic_loss = 0.0;
  double actor_objective = 0.0;
};

/**
 * Actor-critic agent with target networks, replay buffer and decaying
 * Gaussian exploration. All state is single-owner; calls on one agent must
 * be serialized, distinct agents are independent.
 */
class DdpgAgent {
 public:
  DdpgAgent(DdpgConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        buffer_(cfg_.buffer_capacity == 0 ? 1 : cfg_.buffer_capacity),
        rng_(seed),
        noise_std_(cfg_.noise_std0) {
    cfg_.validate();
    actor_ = glorot_init(cfg_.actor_spec, rng_);
    critic_ = glorot_init(cfg_.critic_spec, rng_);
    actor_target_ = actor_;
    critic_target_ = critic_;
  }

  const DdpgConfig& config() const { return cfg_; }

  /**
   * Picks an action for `state`. With explore set, the first warmup_steps
   * calls draw uniformly from the feasible action set; afterwards Gaussian
   * noise with the current std is added to the pre-head activations. Without
   * explore the call is a pure function of the agent's parameters.
   */
  Vector act(std::span<const double> state, bool explore) {
    if (state.size() != static_cast<std::size_t>(cfg_.state_dim))
      throw std::invalid_argument("act: state dimension mismatch");
    if (explore && explore_steps_ < cfg_.warmup_steps) {
      ++explore_steps_;
      return random_feasible_action();
    }
    Vector prehead = mlp_forward_prehead(cfg_.actor_spec, actor_, state);
    if (explore) {
      ++explore_steps_;
      for (auto& z : prehead) z += rng_.normal(0.0, noise_std_);
    }
    return ddpg_policy_from_prehead(cfg_, prehead);
  }

  /// Appends a transition; the reward is clipped to [-reward_clip, reward_clip].
  void store(Transition t) {
    if (t.s.size() != static_cast<std::size_t>(cfg_.state_dim) ||
        t.s_next.size() != static_cast<std::size_t>(cfg_.state_dim) ||
        t.a.size() != static_cast<std::size_t>(cfg_.action_dim))
      throw std::invalid_argument("store: transition dimension mismatch");
    t.r = std::clamp(t.r, -cfg_.reward_clip, cfg_.reward_clip);
    buffer_.push(std::move(t));
  }

  /**
   * One optimization step: sample a batch, regress the critic on bootstrap
   * targets y = r + gamma * Q'(s', mu'(s')), ascend the actor on
   * mean Q(s, mu(s)), then soft-update both target networks with rate beta.
   * Returns nothing until the buffer holds a full batch.
   */
  std::optional<LearnResult> learn_step() {
    const auto b = static_cast<std::size_t>(cfg_.batch_size);
    if (buffer_.size() < b) return std::nullopt;

    const auto sd = static_cast<std::size_t>(cfg_.state_dim);
    const auto ad = static_cast<std::size_t>(cfg_.action_dim);
    std::vector<double> critic_inputs(b * (sd + ad));
    std::vector<double> targets(b);
    std::vector<Vector> states(b);
    for (std::size_t j = 0; j < b; ++j) {
      const auto idx = static_cast<std::size_t>(
          rng_.uniform_int(0, static_cast<std::int64_t>(buffer_.size()) - 1));
      const Transition& t = buffer_[idx];
      double* row = critic_inputs.data() + j * (sd + ad);
      std::copy(t.s.begin(), t.s.end(), row);
      std::copy(t.a.begin(), t.a.end(), row + sd);
      const Vector next_action = ddpg_policy_action(cfg_, actor_target_, t.s_next);
      Vector next_in(sd + ad);
      std::copy(t.s_next.begin(), t.s_next.end(), next_in.begin());
      std::copy(next_action.begin(), next_action.end(),
                next_in.begin() + static_cast<std::ptrdiff_t>(sd));
      const Vector q_next = mlp_forward_prehead(cfg_.critic_spec, critic_target_, next_in);
      targets[j] = t.r + cfg_.gamma * q_next[0];
      states[j] = t.s;
    }

    LearnResult out;
    const LossGrad critic_lg =
        mse_loss_and_grad(cfg_.critic_spec, critic_, critic_inputs, targets);
    out.critic_loss = critic_lg.loss;
    sgd_step_inplace(critic_, critic_lg.grad, cfg_.l_critic);

    const LossGrad actor_lg = actor_objective_and_grad(cfg_, actor_, critic_, states);
    out.actor_objective = actor_lg.loss;
    for (std::size_t i = 0; i < actor_.size(); ++i)
      actor_[i] += cfg_.l_actor * actor_lg.grad[i];  // gradient ascent

    soft_update(actor_target_, actor_);
    soft_update(critic_target_, critic_);
    return out;
  }

  /// Multiplies the exploration std by noise_decay, floored at 1% of std0.
  void decay_noise() {
    noise_std_ = std::max(noise_std_ * cfg_.noise_decay, 0.01 * cfg_.noise_std0);
  }

  const ParamVector& actor_params() const { return actor_; }
  const ParamVector& critic_params() const { return critic_; }
  const ParamVector& actor_target_params() const { return actor_target_; }
  const ParamVector& critic_target_params() const { return critic_target_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  double noise_std() const { return noise_std_; }
  std::int64_t explore_steps() const { return explore_steps_; }

  // --- checkpointing: config + the four parameter vectors -------------------

  void save(std::ostream& os) const {
    write_i64(os, cfg_.state_dim);
    write_i64(os, cfg_.action_dim);
    auto write_spec = [&os](const MlpSpec& s) {
      std::vector<std::int64_t> sizes(s.layer_sizes.begin(), s.layer_sizes.end());
      write_i64_vec(os, sizes);
      write_i64(os, static_cast<std::int64_t>(s.hidden_activation));
      write_i64(os, static_cast<std::int64_t>(s.output_head));
    };
    write_spec(cfg_.actor_spec);
    write_spec(cfg_.critic_spec);
    write_f64(os, cfg_.l_actor);
    write_f64(os, cfg_.l_critic);
    write_f64(os, cfg_.beta);
    write_f64(os, cfg_.gamma);
    write_i64(os, static_cast<std::int64_t>(cfg_.buffer_capacity));
    write_i64(os, cfg_.batch_size);
    write_f64(os, cfg_.noise_std0);
    write_f64(os, cfg_.noise_decay);
    write_i64(os, cfg_.warmup_steps);
    write_f64(os, cfg_.reward_clip);
    write_f64_vec(os, cfg_.action_lo);
    write_f64_vec(os, cfg_.action_hi);
    write_f64_vec(os, actor_);
    write_f64_vec(os, critic_);
    write_f64_vec(os, actor_target_);
    write_f64_vec(os, critic_target_);
    write_f64(os, noise_std_);
    write_i64(os, explore_steps_);
  }

  static DdpgAgent load(std::istream& is, std::uint64_t seed) {
    DdpgConfig cfg;
    cfg.state_dim = static_cast<int>(read_i64(is));
    cfg.action_dim = static_cast<int>(read_i64(is));
    auto read_spec = [&is]() {
      MlpSpec s;
      for (auto v : read_i64_vec(is)) s.layer_sizes.push_back(static_cast<int>(v));
      s.hidden_activation = static_cast<Activation>(read_i64(is));
      s.output_head = static_cast<OutputHead>(read_i64(is));
      return s;
    };
    cfg.actor_spec = read_spec();
    cfg.critic_spec = read_spec();
    cfg.l_actor = read_f64(is);
    cfg.l_critic = read_f64(is);
    cfg.beta = read_f64(is);
    cfg.gamma = read_f64(is);
    cfg.buffer_capacity = static_cast<std::size_t>(read_i64(is));
    cfg.batch_size = static_cast<int>(read_i64(is));
    cfg.noise_std0 = read_f64(is);
    cfg.noise_decay = read_f64(is);
    cfg.warmup_steps = static_cast<int>(read_i64(is));
    cfg.reward_clip = read_f64(is);
    cfg.action_lo = read_f64_vec(is);
    cfg.action_hi = read_f64_vec(is);
    DdpgAgent agent(cfg, seed);
    agent.actor_ = read_f64_vec(is);
    agent.critic_ = read_f64_vec(is);
    agent.actor_target_ = read_f64_vec(is);
    agent.critic_target_ = read_f64_vec(is);
    agent.noise_std_ = read_f64(is);
    agent.explore_steps_ = read_i64(is);
    if (agent.actor_.size() != cfg.actor_spec.param_count() ||
        agent.critic_.size() != cfg.critic_spec.param_count())
      throw std::runtime_error("DdpgAgent::load: corrupt checkpoint");
    return agent;
  }

 private:
  Vector random_feasible_action() {
    const auto ad = static_cast<std::size_t>(cfg_.action_dim);
    if (cfg_.actor_spec.output_head == OutputHead::kSimplexSoftmax)
      return rng_.uniform_simplex(ad);
    Vector a(ad);
    for (std::size_t i = 0; i < ad; ++i) a[i] = rng_.uniform(cfg_.action_lo[i], cfg_.action_hi[i]);
    return a;
  }

  void soft_update(ParamVector& target, const ParamVector& main) {
    for (std::size_t i = 0; i < target.size(); ++i)
      target[i] = cfg_.beta * main[i] + (1.0 - cfg_.beta) * target[i];
  }

  DdpgConfig cfg_;
  ParamVector actor_, critic_, actor_target_, critic_target_;
  ReplayBuffer buffer_;
  Rng rng_;
  double noise_std_;
  std::int64_t explore_steps_ = 0;
};

}  // namespace page
