#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "page/data.hpp"
#include "page/ddpg.hpp"
#include "page/flcore.hpp"
#include "page/game.hpp"
#include "page/numerics.hpp"
#include "page/rng.hpp"
#include "page/stats.hpp"

namespace page {

enum class Algorithm { kPage, kFedAvg, kFedProx };
enum class FedAvgWeighting { kDataSize, kUniform };

/// Equilibrium rule: both accuracy series must stay within epsilon over a
/// trailing window of `window` rounds.
struct StopRule {
  int window = 20;
  double epsilon = 0.005;

  void validate() const {
    if (window < 2) throw std::invalid_argument("StopRule: window must be >= 2");
    if (epsilon < 0.0) throw std::invalid_argument("StopRule: epsilon must be >= 0");
  }
};

/// Replaces both agents with fixed actions: uniform aggregation weights and
/// a constant (alpha, eta). Used to reduce the adaptive loop to FedAvg.
struct FrozenPolicy {
  bool enabled = false;
  int alpha = 5;
  double eta = 0.05;
};

struct DataSpec {
  enum class Kind { kSynthetic, kFile };
  Kind kind = Kind::kSynthetic;
  SyntheticConfig synthetic;     // num_clients and seed are filled per run
  std::string source_path;       // kFile: pooled source samples
  std::string server_test_path;  // kFile: server-side test set
  std::optional<double> dirichlet_delta;  // label-skew re-partition of the pooled data
  std::optional<double> quantity_sigma;   // quantity-skew re-partition
  double train_fraction = 0.7;

  void validate() const {
    if (dirichlet_delta && quantity_sigma)
      throw std::invalid_argument("DataSpec: dirichlet_delta and quantity_sigma are exclusive");
    if (dirichlet_delta && !(*dirichlet_delta > 0.0))
      throw std::invalid_argument("DataSpec: dirichlet_delta must be positive");
    if (quantity_sigma && !(*quantity_sigma > 0.0))
      throw std::invalid_argument("DataSpec: quantity_sigma must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw std::invalid_argument("DataSpec: train_fraction must be in (0, 1)");
    if (kind == Kind::kFile && server_test_path.empty())
      throw std::invalid_argument("DataSpec: file data needs a server test set");
    if (kind == Kind::kSynthetic) synthetic.validate();
  }
};

/// Tunable DDPG hyper-parameters; network specs are derived at build time.
struct AgentHyper {
  std::vector<int> hidden = {64, 64};
  double l_actor = 1e-4;
  double l_critic = 1e-3;
  double beta = 0.01;
  double gamma = 0.99;
  std::size_t buffer_capacity = 10000;
  int batch_size = 64;
  double noise_std0 = 0.1;
  double noise_decay = 0.995;
  int warmup_steps = 1;
  double reward_clip = 100.0;
  double raw_action_range = 2.5;  // warmup box half-width for unbounded actors

  void validate() const {
    if (hidden.empty()) throw std::invalid_argument("AgentHyper: need at least one hidden layer");
    for (int h : hidden)
      if (h < 1) throw std::invalid_argument("AgentHyper: hidden sizes must be >= 1");
    if (!(raw_action_range > 0.0))
      throw std::invalid_argument("AgentHyper: raw_action_range must be positive");
  }
};

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::kPage;
  int num_clients = 10;
  int t_max = 1000;
  int runs = 3;
  std::uint64_t master_seed = 42;
  DataSpec data;
  std::vector<int> model_hidden;  // FL model hidden layers; empty = logistic regression
  LocalTrainSpec local;           // baseline strategy + batch size + prox coefficient
  AgentHyper server_agent;
  AgentHyper client_agent;
  ActionBounds bounds;
  double kappa_global = 1.0;
  double kappa_local = 1.0;
  StopRule stop;
  FrozenPolicy freeze;
  FedAvgWeighting fedavg_weighting = FedAvgWeighting::kDataSize;
  std::optional<int> server_eval_subsample;  // cap on D_CS rows used for the server state
  bool timing = false;                       // fill wall_ms (off keeps output byte-stable)

  void validate() const {
    if (num_clients < 1) throw std::invalid_argument("ExperimentConfig: num_clients must be >= 1");
    if (t_max < 1) throw std::invalid_argument("ExperimentConfig: t_max must be >= 1");
    if (runs < 1) throw std::invalid_argument("ExperimentConfig: runs must be >= 1");
    for (int h : model_hidden)
      if (h < 1) throw std::invalid_argument("ExperimentConfig: model hidden sizes must be >= 1");
    if (!(kappa_global > 0.0 && kappa_local > 0.0))
      throw std::invalid_argument("ExperimentConfig: kappa ratios must be positive");
    if (freeze.enabled && algorithm != Algorithm::kPage)
      throw std::invalid_argument("ExperimentConfig: freeze only applies to page");
    if (freeze.enabled &&
        (freeze.alpha < bounds.alpha_min || freeze.alpha > bounds.alpha_max ||
         freeze.eta < bounds.eta_min || freeze.eta > bounds.eta_max))
      throw std::invalid_argument("ExperimentConfig: frozen action outside bounds");
    if (server_eval_subsample && *server_eval_subsample < 1)
      throw std::invalid_argument("ExperimentConfig: server_eval_subsample must be >= 1");
    data.validate();
    local.validate();
    server_agent.validate();
    client_agent.validate();
    bounds.validate();
    stop.validate();
  }

  MlpSpec model_spec(int dims, int classes) const {
    MlpSpec spec;
    spec.layer_sizes.push_back(dims);
    spec.layer_sizes.insert(spec.layer_sizes.end(), model_hidden.begin(), model_hidden.end());
    spec.layer_sizes.push_back(classes);
    spec.hidden_activation = Activation::kTanh;
    spec.output_head = OutputHead::kSoftmaxLogits;
    return spec;
  }
};

/// Per-round metrics; the raw material of every summary and check.
struct RoundRecord {
  int t = 0;
  double global_acc = 0.0;
  double global_loss = 0.0;
  double mean_local_acc = 0.0;
  double var_local_acc = 0.0;
  double r_cs = 0.0;
  double mean_r_i = 0.0;
  std::vector<double> weights;
  std::vector<int> alphas;
  std::vector<double> etas;
  double wall_ms = 0.0;
};

struct RunResult {
  std::vector<RoundRecord> history;
  ParamVector global_model;
  std::vector<ParamVector> local_models;
  std::optional<int> equilibrium_round;
  PayoffLedger ledger;
  // serialized agents (server first), present for adaptive page runs
  std::vector<std::string> agent_blobs;
};

namespace seed_tags {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kPartition = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kModelInit = 4;
inline constexpr std::uint64_t kServerAgent = 5;
inline constexpr std::uint64_t kClientAgent = 6;
inline constexpr std::uint64_t kLocalTrain = 7;
inline constexpr std::uint64_t kEvalSubsample = 8;
inline constexpr std::uint64_t kFseReplay = 9;
}  // namespace seed_tags

struct Federation {
  std::vector<ClientData> clients;
  Dataset server_test;
};

namespace detail {

inline Dataset pool_clients(const std::vector<ClientData>& clients) {
  Dataset pooled;
  pooled.dim = clients.front().train.dim;
  pooled.num_classes = clients.front().train.num_classes;
  for (const auto& c : clients)
    for (const Dataset* part : {&c.train, &c.test})
      for (std::size_t i = 0; i < part->size(); ++i)
        pooled.append_row(part->row(i), part->labels[i]);
  return pooled;
}

inline std::vector<ClientData> split_all(const std::vector<Dataset>& parts, double fraction,
                                         std::uint64_t run_seed) {
  std::vector<ClientData> out(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].size() < 2)
      throw std::invalid_argument("partitioned client " + std::to_string(i) +
                                  " has fewer than 2 samples; adjust data config");
    out[i] = split_train_test(parts[i], fraction, derive_seed(run_seed, seed_tags::kSplit, i));
  }
  return out;
}

}  // namespace detail

/// Materializes the client datasets and the server test set for one run.
inline Federation build_federation(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  Federation fed;
  const DataSpec& ds = cfg.data;
  if (ds.kind == DataSpec::Kind::kSynthetic) {
    SyntheticConfig scfg = ds.synthetic;
    scfg.num_clients = cfg.num_clients;
    scfg.seed = derive_seed(run_seed, seed_tags::kData);
    SyntheticData gen = generate_synthetic(scfg);
    fed.server_test = std::move(gen.server_test);
    if (ds.dirichlet_delta || ds.quantity_sigma) {
      const Dataset pooled = detail::pool_clients(gen.clients);
      const auto pseed = derive_seed(run_seed, seed_tags::kPartition);
      std::vector<Dataset> parts =
          ds.dirichlet_delta
              ? partition_dirichlet(pooled, cfg.num_clients, *ds.dirichlet_delta, pseed)
              : partition_quantity_lognormal(pooled, cfg.num_clients, *ds.quantity_sigma, pseed);
      fed.clients = detail::split_all(parts, ds.train_fraction, run_seed);
    } else {
      fed.clients = std::move(gen.clients);
    }
  } else {
    const Dataset source = load_dataset_file(ds.source_path);
    fed.server_test = load_dataset_file(ds.server_test_path);
    const auto pseed = derive_seed(run_seed, seed_tags::kPartition);
    std::vector<Dataset> parts;
    if (ds.dirichlet_delta)
      parts = partition_dirichlet(source, cfg.num_clients, *ds.dirichlet_delta, pseed);
    else if (ds.quantity_sigma)
      parts = partition_quantity_lognormal(source, cfg.num_clients, *ds.quantity_sigma, pseed);
    else
      parts = partition_uniform(source, cfg.num_clients, pseed);
    fed.clients = detail::split_all(parts, ds.train_fraction, run_seed);
  }
  for (std::size_t i = 0; i < fed.clients.size(); ++i)
    if (fed.clients[i].train.size() == 0 || fed.clients[i].test.size() == 0)
      throw std::invalid_argument("client " + std::to_string(i) +
                                  " has an empty train or test split; adjust data config");
  if (fed.server_test.size() == 0)
    throw std::invalid_argument("server test set is empty");
  return fed;
}

/**
 * First round t >= window (1-based) at which both accuracy series move by at
 * most epsilon (max - min) over the trailing window; nullopt if never.
 */
inline std::optional<int> detect_equilibrium(std::span<const double> global_acc,
                                             std::span<const double> mean_local_acc,
                                             int window, double epsilon) {
  if (window < 2) throw std::invalid_argument("detect_equilibrium: window must be >= 2");
  if (global_acc.size() != mean_local_acc.size())
    throw std::invalid_argument("detect_equilibrium: series length mismatch");
  const auto k = static_cast<std::size_t>(window);
  for (std::size_t t = k; t <= global_acc.size(); ++t) {
    bool stable = true;
    for (std::span<const double> series : {global_acc, mean_local_acc}) {
      double lo = series[t - k], hi = series[t - k];
      for (std::size_t j = t - k + 1; j < t; ++j) {
        lo = std::min(lo, series[j]);
        hi = std::max(hi, series[j]);
      }
      if (hi - lo > epsilon) {
        stable = false;
        break;
      }
    }
    if (stable) return static_cast<int>(t);
  }
  return std::nullopt;
}

inline std::optional<int> detect_equilibrium(const std::vector<RoundRecord>& history, int window,
                                             double epsilon) {
  std::vector<double> g, l;
  g.reserve(history.size());
  l.reserve(history.size());
  for (const auto& r : history) {
    g.push_back(r.global_acc);
    l.push_back(r.mean_local_acc);
  }
  return detect_equilibrium(g, l, window, epsilon);
}

namespace detail {

inline DdpgConfig build_server_agent_config(const ExperimentConfig& cfg) {
  DdpgConfig c = default_ddpg_config(cfg.num_clients, cfg.num_clients,
                                     OutputHead::kSimplexSoftmax, cfg.server_agent.hidden);
  c.l_actor = cfg.server_agent.l_actor;
  c.l_critic = cfg.server_agent.l_critic;
  c.beta = cfg.server_agent.beta;
  c.gamma = cfg.server_agent.gamma;
  c.buffer_capacity = cfg.server_agent.buffer_capacity;
  c.batch_size = cfg.server_agent.batch_size;
  c.noise_std0 = cfg.server_agent.noise_std0;
  c.noise_decay = cfg.server_agent.noise_decay;
  c.warmup_steps = cfg.server_agent.warmup_steps;
  c.reward_clip = cfg.server_agent.reward_clip;
  return c;
}

inline DdpgConfig build_client_agent_config(const ExperimentConfig& cfg) {
  DdpgConfig c = default_ddpg_config(1, 2, OutputHead::kIdentity, cfg.client_agent.hidden);
  c.l_actor = cfg.client_agent.l_actor;
  c.l_critic = cfg.client_agent.l_critic;
  c.beta = cfg.client_agent.beta;
  c.gamma = cfg.client_agent.gamma;
  c.buffer_capacity = cfg.client_agent.buffer_capacity;
  c.batch_size = cfg.client_agent.batch_size;
  c.noise_std0 = cfg.client_agent.noise_std0;
  c.noise_decay = cfg.client_agent.noise_decay;
  c.warmup_steps = cfg.client_agent.warmup_steps;
  c.reward_clip = cfg.client_agent.reward_clip;
  const double r = cfg.client_agent.raw_action_range;
  c.action_lo = {-r, -r};
  c.action_hi = {r, r};
  return c;
}

inline AggregationWeights baseline_weights(const ExperimentConfig& cfg, const Federation& fed) {
  if (cfg.fedavg_weighting == FedAvgWeighting::kUniform)
    return AggregationWeights::uniform(fed.clients.size());
  AggregationWeights w;
  double total = 0.0;
  for (const auto& c : fed.clients) total += static_cast<double>(c.train.size());
  for (const auto& c : fed.clients) w.p.push_back(static_cast<double>(c.train.size()) / total);
  return w;
}

inline Dataset subsample_rows(const Dataset& d, int count, std::uint64_t seed) {
  if (count >= static_cast<int>(d.size())) return d;
  Rng rng(seed);
  auto perm = rng.permutation(d.size());
  Dataset out;
  out.dim = d.dim;
  out.num_classes = d.num_classes;
  for (int i = 0; i < count; ++i) out.append_row(d.row(perm[static_cast<std::size_t>(i)]),
                                                 d.labels[perm[static_cast<std::size_t>(i)]]);
  return out;
}

}  // namespace detail

/**
 * Runs one full experiment with the given run seed. All three algorithms
 * share this engine; they differ only in how the per-round strategy
 * (aggregation weights and local (alpha, eta)) is chosen, so a frozen
 * adaptive run reproduces its baseline counterpart bit for bit.
 */
inline RunResult run_single(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  cfg.validate();
  const Federation fed = build_federation(cfg, run_seed);
  const int n = cfg.num_clients;
  const auto nc = static_cast<std::size_t>(n);
  const MlpSpec model = cfg.model_spec(static_cast<int>(fed.server_test.dim),
                                       static_cast<int>(fed.server_test.num_classes));

  Rng model_rng(derive_seed(run_seed, seed_tags::kModelInit));
  ParamVector global = glorot_init(model, model_rng);

  const bool adaptive = cfg.algorithm == Algorithm::kPage && !cfg.freeze.enabled;
  std::unique_ptr<DdpgAgent> server_agent;
  std::vector<DdpgAgent> client_agents;
  if (adaptive) {
    server_agent = std::make_unique<DdpgAgent>(detail::build_server_agent_config(cfg),
                                               derive_seed(run_seed, seed_tags::kServerAgent));
    const DdpgConfig client_cfg = detail::build_client_agent_config(cfg);
    client_agents.reserve(nc);
    for (std::size_t i = 0; i < nc; ++i)
      client_agents.emplace_back(client_cfg, derive_seed(run_seed, seed_tags::kClientAgent, i));
  }

  const Dataset server_eval_set =
      cfg.server_eval_subsample
          ? detail::subsample_rows(fed.server_test, *cfg.server_eval_subsample,
                                   derive_seed(run_seed, seed_tags::kEvalSubsample))
          : fed.server_test;

  const RewardScale scale_g{cfg.kappa_global, cfg.server_agent.reward_clip, 1e-8};
  const RewardScale scale_l{cfg.kappa_local, cfg.client_agent.reward_clip, 1e-8};
  const AggregationWeights fixed_weights =
      cfg.algorithm == Algorithm::kPage ? AggregationWeights::uniform(nc)
                                        : detail::baseline_weights(cfg, fed);

  RunResult result;
  result.ledger.gamma = cfg.server_agent.gamma;

  // previous-round MDP bookkeeping
  Vector prev_server_state, prev_server_action;
  double prev_server_reward = 0.0;
  std::vector<double> prev_client_state(nc, 0.0), prev_client_reward(nc, 0.0);
  std::vector<Vector> prev_client_action(nc);

  std::vector<ParamVector> updated(nc);
  std::vector<double> local_losses(nc), local_accs(nc), client_states(nc), client_rewards(nc);
  std::vector<int> alphas(nc);
  std::vector<double> etas(nc);
  std::vector<Vector> raw_actions(nc);

  for (int t = 1; t <= cfg.t_max; ++t) {
    const auto tick = std::chrono::steady_clock::now();

    // (1)-(2) distribute W(t); clients observe local accuracy and pick strategies
    for (std::size_t i = 0; i < nc; ++i)
      client_states[i] = evaluate(model, global, fed.clients[i].test).accuracy;
    if (adaptive) {
      for (std::size_t i = 0; i < nc; ++i) {
        DdpgAgent& agent = client_agents[i];
        if (t > 1)
          agent.store({{prev_client_state[i]}, prev_client_action[i], prev_client_reward[i],
                       {client_states[i]}});
        agent.learn_step();
        raw_actions[i] = agent.act(std::vector<double>{client_states[i]}, /*explore=*/true);
        agent.decay_noise();
        const ClientAction ca = client_action_decode(raw_actions[i], cfg.bounds);
        alphas[i] = ca.alpha;
        etas[i] = ca.eta;
      }
    } else {
      const int a = cfg.freeze.enabled ? cfg.freeze.alpha : cfg.local.epochs;
      const double e = cfg.freeze.enabled ? cfg.freeze.eta : cfg.local.learning_rate;
      for (std::size_t i = 0; i < nc; ++i) {
        alphas[i] = a;
        etas[i] = e;
      }
    }

    // (3)-(4) local training on the distributed model
    const double prox = cfg.algorithm == Algorithm::kFedProx ? cfg.local.prox_mu : 0.0;
    for (std::size_t i = 0; i < nc; ++i) {
      LocalTrainSpec ts;
      ts.epochs = alphas[i];
      ts.learning_rate = etas[i];
      ts.minibatch_size = cfg.local.minibatch_size;
      ts.prox_mu = prox;
      updated[i] = local_train(model, global, fed.clients[i].train, ts, global,
                               derive_seed(run_seed, seed_tags::kLocalTrain,
                                           static_cast<std::uint64_t>(t), i));
      const EvalResult test_eval = evaluate(model, updated[i], fed.clients[i].test);
      local_accs[i] = test_eval.accuracy;
      local_losses[i] = evaluate(model, updated[i], fed.clients[i].train).loss;
    }

    // (5) server observes per-client accuracy on its test set and reacts
    Vector server_state(nc);
    for (std::size_t i = 0; i < nc; ++i)
      server_state[i] = evaluate(model, updated[i], server_eval_set).accuracy;
    AggregationWeights weights;
    if (adaptive) {
      if (t > 1)
        server_agent->store({prev_server_state, prev_server_action, prev_server_reward,
                             server_state});
      server_agent->learn_step();
      weights.p = server_agent->act(server_state, /*explore=*/true);
      server_agent->decay_noise();
      weights.validate();
    } else {
      weights = fixed_weights;
    }

    // stage rewards and utilities
    const double r_cs = server_reward(local_losses, weights, scale_g);
    for (std::size_t i = 0; i < nc; ++i) client_rewards[i] = client_reward(local_losses[i], scale_l);
    {
      std::vector<double> u_clients(nc);
      for (std::size_t i = 0; i < nc; ++i) u_clients[i] = client_utility(local_losses[i]);
      result.ledger.add_stage(server_utility(local_losses, weights), std::move(u_clients));
    }

    // (6) aggregate
    global = aggregate(updated, weights);

    RoundRecord rec;
    rec.t = t;
    const EvalResult global_eval = evaluate(model, global, fed.server_test);
    rec.global_acc = global_eval.accuracy;
    rec.global_loss = global_eval.loss;
    rec.mean_local_acc = mean(local_accs);
    rec.var_local_acc = variance(local_accs);
    rec.r_cs = r_cs;
    rec.mean_r_i = mean(client_rewards);
    rec.weights = weights.p;
    rec.alphas = alphas;
    rec.etas = etas;
    if (cfg.timing)
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                              tick)
                        .count();
    result.history.push_back(std::move(rec));

    prev_server_state = std::move(server_state);
    prev_server_action = weights.p;
    prev_server_reward = r_cs;
    for (std::size_t i = 0; i < nc; ++i) {
      prev_client_state[i] = client_states[i];
      prev_client_reward[i] = client_rewards[i];
      if (adaptive) prev_client_action[i] = raw_actions[i];
    }

    result.equilibrium_round = detect_equilibrium(result.history, cfg.stop.window,
                                                  cfg.stop.epsilon);
    if (result.equilibrium_round) break;
  }

  result.global_model = std::move(global);
  result.local_models = std::move(updated);
  if (adaptive) {
    std::ostringstream server_blob;
    server_agent->save(server_blob);
    result.agent_blobs.push_back(server_blob.str());
    for (const auto& agent : client_agents) {
      std::ostringstream blob;
      agent.save(blob);
      result.agent_blobs.push_back(blob.str());
    }
  }
  return result;
}

inline RunResult run_page(const ExperimentConfig& cfg) {
  if (cfg.algorithm != Algorithm::kPage)
    throw std::invalid_argument("run_page: config algorithm is not page");
  return run_single(cfg, cfg.master_seed);
}

inline RunResult run_fedavg(const ExperimentConfig& cfg) {
  if (cfg.algorithm != Algorithm::kFedAvg)
    throw std::invalid_argument("run_fedavg: config algorithm is not fedavg");
  return run_single(cfg, cfg.master_seed);
}

inline RunResult run_fedprox(const ExperimentConfig& cfg) {
  if (cfg.algorithm != Algorithm::kFedProx)
    throw std::invalid_argument("run_fedprox: config algorithm is not fedprox");
  return run_single(cfg, cfg.master_seed);
}

struct SummaryStat {
  double mean = 0.0;
  double variance = 0.0;
};

struct ReplicatedResult {
  std::vector<std::uint64_t> seeds;
  std::vector<RunResult> runs;
  SummaryStat final_global_acc;
  SummaryStat final_local_acc;
  SummaryStat equilibrium_round;  // detected round, or rounds actually run
};

/// Repeats the experiment `runs` times with seeds master_seed + k and
/// aggregates the final metrics (mean and population variance).
inline ReplicatedResult run_replicated(const ExperimentConfig& cfg) {
  cfg.validate();
  ReplicatedResult out;
  std::vector<double> finals_g, finals_l, eq_rounds;
  for (int k = 0; k < cfg.runs; ++k) {
    const std::uint64_t seed = cfg.master_seed + static_cast<std::uint64_t>(k);
    out.seeds.push_back(seed);
    out.runs.push_back(run_single(cfg, seed));
    const RunResult& r = out.runs.back();
    finals_g.push_back(r.history.back().global_acc);
    finals_l.push_back(r.history.back().mean_local_acc);
    eq_rounds.push_back(static_cast<double>(
        r.equilibrium_round ? *r.equilibrium_round : r.history.back().t));
  }
  out.final_global_acc = {mean(finals_g), variance(finals_g)};
  out.final_local_acc = {mean(finals_l), variance(finals_l)};
  out.equilibrium_round = {mean(eq_rounds), variance(eq_rounds)};
  return out;
}

// --- checkpointing -----------------------------------------------------------

struct Checkpoint {
  std::string config_json;  // serialized ExperimentConfig (see page/config.hpp)
  std::uint64_t run_seed = 0;
  ParamVector global_model;
  std::vector<ParamVector> local_models;
  std::vector<std::string> agent_blobs;  // server first, then one per client
};

inline void save_checkpoint(const Checkpoint& ck, std::ostream& os) {
  os.write("PAGECKP1", 8);
  write_string(os, ck.config_json);
  write_u64(os, ck.run_seed);
  write_f64_vec(os, ck.global_model);
  write_i64(os, static_cast<std::int64_t>(ck.local_models.size()));
  for (const auto& m : ck.local_models) write_f64_vec(os, m);
  write_i64(os, static_cast<std::int64_t>(ck.agent_blobs.size()));
  for (const auto& b : ck.agent_blobs) write_string(os, b);
}

inline Checkpoint load_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != "PAGECKP1")
    throw std::runtime_error("load_checkpoint: not a checkpoint file");
  Checkpoint ck;
  ck.config_json = read_string(is);
  ck.run_seed = read_u64(is);
  ck.global_model = read_f64_vec(is);
  const std::int64_t n_models = read_i64(is);
  for (std::int64_t i = 0; i < n_models; ++i) ck.local_models.push_back(read_f64_vec(is));
  const std::int64_t n_agents = read_i64(is);
  for (std::int64_t i = 0; i < n_agents; ++i) ck.agent_blobs.push_back(read_string(is));
  return ck;
}

/**
 * Frozen-policy replay of the federated game from a checkpoint. Player 0 is
 * the server; players 1..N are the clients. Rollouts share every training
 * seed, so the identity probe reproduces the baseline exactly and any payoff
 * delta is attributable to the probed action alone.
 */
class PageReplayer : public StageGameReplayer {
 public:
  PageReplayer(const ExperimentConfig& cfg, const Checkpoint& ck, int horizon)
      : cfg_(cfg), horizon_(horizon), start_global_(ck.global_model) {
    cfg_.validate();
    if (horizon < 1) throw std::invalid_argument("PageReplayer: horizon must be >= 1");
    if (ck.agent_blobs.size() != static_cast<std::size_t>(cfg.num_clients) + 1)
      throw std::invalid_argument("PageReplayer: checkpoint has no adaptive agents");
    run_seed_ = ck.run_seed;
    fed_ = build_federation(cfg_, run_seed_);
    server_eval_set_ =
        cfg_.server_eval_subsample
            ? detail::subsample_rows(fed_.server_test, *cfg_.server_eval_subsample,
                                     derive_seed(run_seed_, seed_tags::kEvalSubsample))
            : fed_.server_test;
    model_ = cfg_.model_spec(static_cast<int>(fed_.server_test.dim),
                             static_cast<int>(fed_.server_test.num_classes));
    if (start_global_.size() != model_.param_count())
      throw std::invalid_argument("PageReplayer: global model size mismatch");
    for (std::size_t i = 0; i < ck.agent_blobs.size(); ++i) {
      std::istringstream blob(ck.agent_blobs[i]);
      agents_.push_back(DdpgAgent::load(blob, derive_seed(run_seed_, seed_tags::kFseReplay, i)));
    }
  }

  int num_players() const override { return cfg_.num_clients + 1; }
  int horizon() const override { return horizon_; }

  StageRolloutResult rollout(const FseProbeSpec* probe) override {
    const auto nc = static_cast<std::size_t>(cfg_.num_clients);
    StageRolloutResult out;
    out.utilities.assign(nc + 1, std::vector<double>(static_cast<std::size_t>(horizon_), 0.0));

    ParamVector global = start_global_;
    std::vector<ParamVector> updated(nc);
    std::vector<double> losses(nc);
    for (int t = 1; t <= horizon_; ++t) {
      for (std::size_t i = 0; i < nc; ++i) {
        const double state = evaluate(model_, global, fed_.clients[i].test).accuracy;
        const Vector raw = agents_[i + 1].act(std::vector<double>{state}, /*explore=*/false);
        ClientAction ca = client_action_decode(raw, cfg_.bounds);
        if (probe && probe->player == static_cast<int>(i) + 1 && probe->stage == t)
          ca = perturb_client_action(ca, *probe, out.probe_magnitude);
        LocalTrainSpec ts;
        ts.epochs = ca.alpha;
        ts.learning_rate = ca.eta;
        ts.minibatch_size = cfg_.local.minibatch_size;
        updated[i] = local_train(model_, global, fed_.clients[i].train, ts, global,
                                 derive_seed(run_seed_, seed_tags::kFseReplay,
                                             static_cast<std::uint64_t>(t), i));
        losses[i] = evaluate(model_, updated[i], fed_.clients[i].train).loss;
        out.utilities[i + 1][static_cast<std::size_t>(t - 1)] = client_utility(losses[i]);
      }
      Vector server_state(nc);
      for (std::size_t i = 0; i < nc; ++i)
        server_state[i] = evaluate(model_, updated[i], server_eval_set_).accuracy;
      AggregationWeights weights;
      weights.p = agents_[0].act(server_state, /*explore=*/false);
      if (probe && probe->player == 0 && probe->stage == t)
        weights = perturb_weights(weights, *probe, out.probe_magnitude);
      weights.validate();
      out.utilities[0][static_cast<std::size_t>(t - 1)] = server_utility(losses, weights);
      global = aggregate(updated, weights);
    }
    return out;
  }

 private:
  ClientAction perturb_client_action(const ClientAction& a, const FseProbeSpec& probe,
                                     double& magnitude) const {
    Rng rng(probe.seed);
    const int alpha_rand =
        static_cast<int>(rng.uniform_int(cfg_.bounds.alpha_min, cfg_.bounds.alpha_max));
    const double log_eta_rand =
        rng.uniform(std::log(cfg_.bounds.eta_min), std::log(cfg_.bounds.eta_max));
    ClientAction out;
    const double alpha_mixed = (1.0 - probe.mix) * a.alpha + probe.mix * alpha_rand;
    out.alpha = std::clamp(static_cast<int>(std::ceil(alpha_mixed - 0.5)),
                           cfg_.bounds.alpha_min, cfg_.bounds.alpha_max);
    const double log_eta_mixed = (1.0 - probe.mix) * std::log(a.eta) + probe.mix * log_eta_rand;
    out.eta = std::clamp(std::exp(log_eta_mixed), cfg_.bounds.eta_min, cfg_.bounds.eta_max);
    const double da = static_cast<double>(out.alpha - a.alpha) /
                      std::max(1, cfg_.bounds.alpha_max - cfg_.bounds.alpha_min);
    const double de = (std::log(out.eta) - std::log(a.eta)) /
                      std::max(1e-12, std::log(cfg_.bounds.eta_max) - std::log(cfg_.bounds.eta_min));
    magnitude = std::sqrt(da * da + de * de);
    return out;
  }

  AggregationWeights perturb_weights(const AggregationWeights& w, const FseProbeSpec& probe,
                                     double& magnitude) const {
    Rng rng(probe.seed);
    const auto target = rng.uniform_simplex(w.p.size());
    AggregationWeights out;
    out.p.resize(w.p.size());
    double dist2 = 0.0;
    for (std::size_t i = 0; i < w.p.size(); ++i) {
      out.p[i] = (1.0 - probe.mix) * w.p[i] + probe.mix * target[i];
      dist2 += (out.p[i] - w.p[i]) * (out.p[i] - w.p[i]);
    }
    magnitude = std::sqrt(dist2);
    return out;
  }

  ExperimentConfig cfg_;
  int horizon_;
  std::uint64_t run_seed_;
  ParamVector start_global_;
  Federation fed_;
  Dataset server_eval_set_;
  MlpSpec model_;
  std::vector<DdpgAgent> agents_;
};

}  // namespace page
