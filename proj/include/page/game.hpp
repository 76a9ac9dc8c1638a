#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "page/flcore.hpp"
#include "page/numerics.hpp"
#include "page/rng.hpp"

namespace page {

/// Scaling applied when a utility becomes an MDP reward.
struct RewardScale {
  double kappa = 1.0;       // bias ratio factor
  double r_max = 100.0;     // reward clip
  double loss_floor = 1e-8;  // losses are clamped here before the reciprocal

  void validate() const {
    if (!(kappa > 0.0)) throw std::invalid_argument("RewardScale: kappa must be positive");
    if (!(r_max > 0.0)) throw std::invalid_argument("RewardScale: r_max must be positive");
    if (!(loss_floor > 0.0)) throw std::invalid_argument("RewardScale: loss_floor must be positive");
  }
};

/// Unclipped server utility 1 / sum_i p_i * f_i (losses floored first).
inline double server_utility(std::span<const double> losses, const AggregationWeights& weights,
                             double loss_floor = 1e-8) {
  weights.validate();
  if (losses.size() != weights.p.size())
    throw std::invalid_argument("server_utility: loss/weight count mismatch");
  double f = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i)
    f += weights.p[i] * std::max(losses[i], loss_floor);
  return 1.0 / std::max(f, loss_floor);
}

/// Unclipped client utility 1 / f_i (loss floored first).
inline double client_utility(double loss, double loss_floor = 1e-8) {
  return 1.0 / std::max(loss, loss_floor);
}

/// Server reward kappa_g * min(1 / sum p_i f_i, r_max).
inline double server_reward(std::span<const double> losses, const AggregationWeights& weights,
                            const RewardScale& scale) {
  scale.validate();
  return scale.kappa * std::min(server_utility(losses, weights, scale.loss_floor), scale.r_max);
}

/// Client reward kappa_l * min(1 / f_i, r_max).
inline double client_reward(double loss, const RewardScale& scale) {
  scale.validate();
  return scale.kappa * std::min(client_utility(loss, scale.loss_floor), scale.r_max);
}

/// Softmax map from raw actor outputs onto valid aggregation weights.
inline AggregationWeights server_action_to_weights(std::span<const double> raw) {
  AggregationWeights w;
  w.p = softmax(raw);
  w.validate();
  return w;
}

/// Feasible ranges for the client strategy (alpha, eta).
struct ActionBounds {
  int alpha_min = 1;
  int alpha_max = 10;
  double eta_min = 1e-4;
  double eta_max = 0.5;

  void validate() const {
    if (alpha_min < 1 || alpha_min > alpha_max)
      throw std::invalid_argument("ActionBounds: need 1 <= alpha_min <= alpha_max");
    if (!(eta_min > 0.0) || !(eta_min <= eta_max))
      throw std::invalid_argument("ActionBounds: need 0 < eta_min <= eta_max");
  }
};

struct ClientAction {
  int alpha = 1;
  double eta = 0.0;
};

/**
 * Decodes a raw 2-vector into (alpha, eta): each coordinate is squashed by
 * tanh to [-1, 1] and mapped affinely onto its range. alpha is rounded to
 * the nearest integer with ties toward alpha_min; eta is mapped on a log
 * scale so the action range covers orders of magnitude evenly.
 */
inline ClientAction client_action_decode(std::span<const double> raw, const ActionBounds& bounds) {
  bounds.validate();
  if (raw.size() != 2) throw std::invalid_argument("client_action_decode: raw action must have length 2");
  const double ta = 0.5 * (std::tanh(raw[0]) + 1.0);  // in [0, 1]
  const double te = 0.5 * (std::tanh(raw[1]) + 1.0);
  ClientAction out;
  const double alpha_real = bounds.alpha_min + ta * (bounds.alpha_max - bounds.alpha_min);
  out.alpha = static_cast<int>(std::ceil(alpha_real - 0.5));  // .5 ties round down
  out.alpha = std::clamp(out.alpha, bounds.alpha_min, bounds.alpha_max);
  const double log_eta = std::log(bounds.eta_min) + te * (std::log(bounds.eta_max) - std::log(bounds.eta_min));
  out.eta = std::clamp(std::exp(log_eta), bounds.eta_min, bounds.eta_max);
  return out;
}

enum class DiscountConvention {
  kGammaPowT,        // sum_t gamma^t * u(t), t starting at 1
  kGammaPowTMinus1,  // sum_t gamma^(t-1) * u(t)
};

/**
 * Per-stage utility log of one game. Stage t is 1-based. Utilities are the
 * unclipped, unscaled reciprocals of losses; reward shaping (kappa, clip)
 * never enters the payoff accounting.
 */
struct PayoffLedger {
  double gamma = 0.99;
  std::vector<double> server_utilities;                // u_CS(t)
  std::vector<std::vector<double>> client_utilities;   // [t-1][i]

  std::size_t stages() const { return server_utilities.size(); }

  void add_stage(double u_server, std::vector<double> u_clients) {
    server_utilities.push_back(u_server);
    client_utilities.push_back(std::move(u_clients));
  }

  /// Discounted payoff accumulated from stage tau (1-based) through the end.
  /// Accumulation runs backward, so U(tau) = gamma^tau * u(tau) + U(tau + 1)
  /// holds exactly, term by term.
  std::pair<double, std::vector<double>> accumulate(
      std::size_t tau, DiscountConvention conv = DiscountConvention::kGammaPowT) const {
    if (tau < 1 || tau > stages()) throw std::invalid_argument("accumulate: stage out of range");
    const std::size_t n_clients = client_utilities.empty() ? 0 : client_utilities.front().size();
    double u_cs = 0.0;
    std::vector<double> u_i(n_clients, 0.0);
    for (std::size_t t = stages(); t >= tau; --t) {
      const double exponent = conv == DiscountConvention::kGammaPowT
                                  ? static_cast<double>(t)
                                  : static_cast<double>(t) - 1.0;
      const double disc = std::pow(gamma, exponent);
      u_cs = disc * server_utilities[t - 1] + u_cs;
      for (std::size_t i = 0; i < n_clients; ++i)
        u_i[i] = disc * client_utilities[t - 1][i] + u_i[i];
    }
    return {u_cs, std::move(u_i)};
  }
};

// --- empirical equilibrium diagnostic ----------------------------------------

/// A unilateral single-stage deviation: `player`'s policy action at `stage`
/// (1-based) is mixed toward a random feasible action with coefficient `mix`
/// in [0, 1]; mix = 0 is the identity probe. `seed` fixes the random target.
struct FseProbeSpec {
  int player = 0;
  int stage = 1;
  double mix = 0.0;
  std::uint64_t seed = 0;
};

struct StageRolloutResult {
  // utilities[player][t-1]; player 0 is the follower (server) by convention
  std::vector<std::vector<double>> utilities;
  double probe_magnitude = 0.0;  // realized action-space distance, 0 when unprobed
};

/**
 * Replays a fixed number of stages of a game under frozen policies. A probe
 * overrides one player's action at one stage; everything else (including any
 * training randomness) must be identical across calls so that the identity
 * probe reproduces the baseline bit for bit.
 */
class StageGameReplayer {
 public:
  virtual ~StageGameReplayer() = default;
  virtual int num_players() const = 0;
  virtual int horizon() const = 0;
  virtual StageRolloutResult rollout(const FseProbeSpec* probe) = 0;
};

struct FseProbeOutcome {
  int player = 0;
  int stage = 1;
  double mix = 0.0;
  double magnitude = 0.0;
  double payoff_delta = 0.0;
  double relative_delta = 0.0;
};

struct FseReport {
  std::vector<FseProbeOutcome> probes;   // random probes (identity probe excluded)
  bool identity_delta_zero = false;
  std::optional<double> positive_fraction;
  double max_delta = 0.0;           // largest positive payoff delta, 0 if none
  double max_relative_delta = 0.0;  // relative to the probed player's baseline
  std::vector<double> baseline_payoffs;
  bool certified = false;

  nlohmann::json to_json() const {
    nlohmann::json probes_json = nlohmann::json::array();
    for (const auto& p : probes)
      probes_json.push_back({{"player", p.player},
                             {"stage", p.stage},
                             {"mix", p.mix},
                             {"magnitude", p.magnitude},
                             {"payoff_delta", p.payoff_delta},
                             {"relative_delta", p.relative_delta}});
    nlohmann::json j{{"probes", probes_json},
                     {"identity_delta_zero", identity_delta_zero},
                     {"max_delta", max_delta},
                     {"max_relative_delta", max_relative_delta},
                     {"baseline_payoffs", baseline_payoffs},
                     {"certified", certified}};
    if (positive_fraction)
      j["positive_fraction"] = *positive_fraction;
    else
      j["positive_fraction"] = nullptr;
    return j;
  }
};

struct FseDiagnosticConfig {
  int probes = 100;
  double gamma = 0.99;
  std::uint64_t seed = 0;
  double min_mix = 0.0;  // random probes draw mix uniformly from (min_mix, max_mix]
  double max_mix = 1.0;
  DiscountConvention convention = DiscountConvention::kGammaPowT;
  // certificate thresholds
  double max_positive_fraction = 0.05;
  double max_relative_gain = 0.01;
};

namespace detail {

inline double discounted_payoff(const std::vector<double>& utilities, double gamma,
                                DiscountConvention conv) {
  double acc = 0.0;
  for (std::size_t t = utilities.size(); t >= 1; --t) {
    const double exponent =
        conv == DiscountConvention::kGammaPowT ? static_cast<double>(t) : static_cast<double>(t) - 1.0;
    acc = std::pow(gamma, exponent) * utilities[t - 1] + acc;
  }
  return acc;
}

}  // namespace detail

/**
 * Samples unilateral single-stage deviations and reports how often a player
 * could profit. Every rollout shares the replayer's deterministic seeds, so
 * the only source of payoff differences is the perturbed action itself. The
 * run is certified as an empirical equilibrium when at most
 * `max_positive_fraction` of probes improve and no probe gains more than
 * `max_relative_gain` of the probed player's baseline payoff.
 */
inline FseReport fse_diagnostic(StageGameReplayer& replayer, const FseDiagnosticConfig& cfg) {
  if (replayer.num_players() < 1 || replayer.horizon() < 1)
    throw std::invalid_argument("fse_diagnostic: replayer must have players and a horizon");
  if (cfg.probes < 0) throw std::invalid_argument("fse_diagnostic: probes must be >= 0");
  if (!(cfg.min_mix >= 0.0 && cfg.min_mix <= cfg.max_mix && cfg.max_mix <= 1.0))
    throw std::invalid_argument("fse_diagnostic: need 0 <= min_mix <= max_mix <= 1");

  FseReport report;
  const StageRolloutResult baseline = replayer.rollout(nullptr);
  if (baseline.utilities.size() != static_cast<std::size_t>(replayer.num_players()))
    throw std::runtime_error("fse_diagnostic: replayer returned wrong player count");
  report.baseline_payoffs.resize(baseline.utilities.size());
  for (std::size_t p = 0; p < baseline.utilities.size(); ++p)
    report.baseline_payoffs[p] =
        detail::discounted_payoff(baseline.utilities[p], cfg.gamma, cfg.convention);

  // identity probe: must replay to the exact baseline
  FseProbeSpec identity{0, 1, 0.0, cfg.seed};
  const StageRolloutResult id_run = replayer.rollout(&identity);
  report.identity_delta_zero =
      detail::discounted_payoff(id_run.utilities[0], cfg.gamma, cfg.convention) ==
      report.baseline_payoffs[0];

  Rng rng(derive_seed(cfg.seed, 0x9e37));
  int positive = 0;
  for (int k = 0; k < cfg.probes; ++k) {
    FseProbeSpec probe;
    probe.player = static_cast<int>(rng.uniform_int(0, replayer.num_players() - 1));
    probe.stage = static_cast<int>(rng.uniform_int(1, replayer.horizon()));
    probe.mix = cfg.min_mix + (cfg.max_mix - cfg.min_mix) * rng.uniform();
    if (probe.mix <= 0.0) probe.mix = cfg.max_mix;  // keep random probes non-identity
    probe.seed = rng.next_u64();
    const StageRolloutResult run = replayer.rollout(&probe);
    const double payoff = detail::discounted_payoff(run.utilities[static_cast<std::size_t>(probe.player)],
                                                    cfg.gamma, cfg.convention);
    FseProbeOutcome outcome;
    outcome.player = probe.player;
    outcome.stage = probe.stage;
    outcome.mix = probe.mix;
    outcome.magnitude = run.probe_magnitude;
    outcome.payoff_delta = payoff - report.baseline_payoffs[static_cast<std::size_t>(probe.player)];
    const double denom =
        std::max(std::abs(report.baseline_payoffs[static_cast<std::size_t>(probe.player)]), 1e-12);
    outcome.relative_delta = outcome.payoff_delta / denom;
    if (outcome.payoff_delta > 0.0) {
      ++positive;
      report.max_delta = std::max(report.max_delta, outcome.payoff_delta);
      report.max_relative_delta = std::max(report.max_relative_delta, outcome.relative_delta);
    }
    report.probes.push_back(outcome);
  }
  if (cfg.probes > 0) {
    report.positive_fraction = static_cast<double>(positive) / cfg.probes;
    report.certified = report.identity_delta_zero &&
                       *report.positive_fraction <= cfg.max_positive_fraction &&
                       report.max_relative_delta <= cfg.max_relative_gain;
  }
  return report;
}

}  // namespace page
