#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "page/orchestrator.hpp"

namespace page {

/// Configuration / usage problem; the CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Tracks which keys of a JSON object were consumed so unknown keys can be
/// rejected with their full path.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const {
    const auto it = j_.find(key);
    return it != j_.end() && !it->is_null();
  }

  const nlohmann::json* find(const std::string& key) {
    consumed_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  template <typename T>
  T require(const std::string& key) {
    const nlohmann::json* v = find(key);
    if (!v) throw ConfigError(key_path(key) + ": missing required key");
    return convert<T>(*v, key);
  }

  template <typename T>
  T get_or(const std::string& key, T fallback) {
    const nlohmann::json* v = find(key);
    if (!v) return fallback;
    return convert<T>(*v, key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!consumed_.count(it.key()))
        throw ConfigError(key_path(it.key()) + ": unknown key");
  }

 private:
  template <typename T>
  T convert(const nlohmann::json& v, const std::string& key) {
    try {
      return v.get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key_path(key) + ": wrong type");
    }
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> consumed_;
};

inline Algorithm parse_algorithm(const std::string& s, const std::string& path) {
  if (s == "page") return Algorithm::kPage;
  if (s == "fedavg") return Algorithm::kFedAvg;
  if (s == "fedprox") return Algorithm::kFedProx;
  throw ConfigError(path + ": must be one of page, fedavg, fedprox");
}

inline std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kPage: return "page";
    case Algorithm::kFedAvg: return "fedavg";
    case Algorithm::kFedProx: return "fedprox";
  }
  throw std::logic_error("unknown algorithm");
}

inline AgentHyper parse_agent(const nlohmann::json& j, const std::string& path) {
  StrictObject o(j, path);
  AgentHyper h;
  h.hidden = o.get_or<std::vector<int>>("hidden", h.hidden);
  h.l_actor = o.get_or<double>("l_actor", h.l_actor);
  h.l_critic = o.get_or<double>("l_critic", h.l_critic);
  h.beta = o.get_or<double>("beta", h.beta);
  h.gamma = o.get_or<double>("gamma", h.gamma);
  h.buffer_capacity = o.get_or<std::size_t>("buffer_capacity", h.buffer_capacity);
  h.batch_size = o.get_or<int>("batch_size", h.batch_size);
  h.noise_std0 = o.get_or<double>("noise_std0", h.noise_std0);
  h.noise_decay = o.get_or<double>("noise_decay", h.noise_decay);
  h.warmup_steps = o.get_or<int>("warmup_steps", h.warmup_steps);
  h.reward_clip = o.get_or<double>("reward_clip", h.reward_clip);
  h.raw_action_range = o.get_or<double>("raw_action_range", h.raw_action_range);
  o.finish();
  return h;
}

inline nlohmann::json agent_to_json(const AgentHyper& h) {
  return {{"hidden", h.hidden},
          {"l_actor", h.l_actor},
          {"l_critic", h.l_critic},
          {"beta", h.beta},
          {"gamma", h.gamma},
          {"buffer_capacity", h.buffer_capacity},
          {"batch_size", h.batch_size},
          {"noise_std0", h.noise_std0},
          {"noise_decay", h.noise_decay},
          {"warmup_steps", h.warmup_steps},
          {"reward_clip", h.reward_clip},
          {"raw_action_range", h.raw_action_range}};
}

}  // namespace detail

inline constexpr int kConfigSchemaVersion = 1;

/// Parses and fully validates an experiment configuration. Unknown keys are
/// rejected; errors carry the offending key path.
inline ExperimentConfig parse_config(const nlohmann::json& root) {
  detail::StrictObject o(root, "");
  const int schema = o.require<int>("schema");
  if (schema != kConfigSchemaVersion)
    throw ConfigError("schema: unsupported version " + std::to_string(schema));

  ExperimentConfig cfg;
  cfg.algorithm = detail::parse_algorithm(o.require<std::string>("algorithm"), "algorithm");
  cfg.num_clients = o.get_or<int>("num_clients", cfg.num_clients);
  cfg.t_max = o.get_or<int>("t_max", cfg.t_max);
  cfg.runs = o.get_or<int>("runs", cfg.runs);
  cfg.master_seed = o.get_or<std::uint64_t>("seed", cfg.master_seed);
  cfg.kappa_global = o.get_or<double>("kappa_global", cfg.kappa_global);
  cfg.kappa_local = o.get_or<double>("kappa_local", cfg.kappa_local);
  cfg.timing = o.get_or<bool>("timing", cfg.timing);

  if (const auto* j = o.find("data")) {
    detail::StrictObject d(*j, "data");
    const std::string type = d.get_or<std::string>("type", "synthetic");
    if (type == "synthetic") {
      cfg.data.kind = DataSpec::Kind::kSynthetic;
    } else if (type == "file") {
      cfg.data.kind = DataSpec::Kind::kFile;
    } else {
      throw ConfigError("data.type: must be synthetic or file");
    }
    cfg.data.synthetic.dims = d.get_or<int>("dims", cfg.data.synthetic.dims);
    cfg.data.synthetic.classes = d.get_or<int>("classes", cfg.data.synthetic.classes);
    cfg.data.synthetic.a = d.get_or<double>("a", cfg.data.synthetic.a);
    cfg.data.synthetic.b = d.get_or<double>("b", cfg.data.synthetic.b);
    cfg.data.synthetic.mean_train_per_client =
        d.get_or<int>("mean_train_per_client", cfg.data.synthetic.mean_train_per_client);
    cfg.data.synthetic.mean_test_per_client =
        d.get_or<int>("mean_test_per_client", cfg.data.synthetic.mean_test_per_client);
    cfg.data.synthetic.server_test_size =
        d.get_or<int>("server_test_size", cfg.data.synthetic.server_test_size);
    cfg.data.source_path = d.get_or<std::string>("source_path", "");
    cfg.data.server_test_path = d.get_or<std::string>("server_test_path", "");
    if (const auto* v = d.find("dirichlet_delta")) cfg.data.dirichlet_delta = v->get<double>();
    if (const auto* v = d.find("quantity_sigma")) cfg.data.quantity_sigma = v->get<double>();
    cfg.data.train_fraction = d.get_or<double>("train_fraction", cfg.data.train_fraction);
    d.finish();
  }

  if (const auto* j = o.find("model")) {
    detail::StrictObject m(*j, "model");
    cfg.model_hidden = m.get_or<std::vector<int>>("hidden", cfg.model_hidden);
    m.finish();
  }

  if (const auto* j = o.find("local")) {
    detail::StrictObject l(*j, "local");
    cfg.local.epochs = l.get_or<int>("alpha", cfg.local.epochs);
    cfg.local.learning_rate = l.get_or<double>("eta", cfg.local.learning_rate);
    cfg.local.minibatch_size = l.get_or<int>("batch_size", cfg.local.minibatch_size);
    cfg.local.prox_mu = l.get_or<double>(
        "prox_mu", cfg.algorithm == Algorithm::kFedProx ? 0.01 : 0.0);
    l.finish();
  } else {
    cfg.local.prox_mu = cfg.algorithm == Algorithm::kFedProx ? 0.01 : 0.0;
  }

  if (const auto* j = o.find("bounds")) {
    detail::StrictObject b(*j, "bounds");
    if (const auto* v = b.find("alpha")) {
      const auto range = v->get<std::vector<double>>();
      if (range.size() != 2 || range[0] > range[1] || range[0] < 1)
        throw ConfigError("bounds.alpha: expected [min, max] with 1 <= min <= max");
      cfg.bounds.alpha_min = static_cast<int>(range[0]);
      cfg.bounds.alpha_max = static_cast<int>(range[1]);
    }
    if (const auto* v = b.find("eta")) {
      const auto range = v->get<std::vector<double>>();
      if (range.size() != 2 || !(range[0] > 0.0) || range[0] > range[1])
        throw ConfigError("bounds.eta: expected [min, max] with 0 < min <= max");
      cfg.bounds.eta_min = range[0];
      cfg.bounds.eta_max = range[1];
    }
    b.finish();
  }

  if (const auto* j = o.find("server_agent")) cfg.server_agent = detail::parse_agent(*j, "server_agent");
  if (const auto* j = o.find("client_agent")) cfg.client_agent = detail::parse_agent(*j, "client_agent");

  if (const auto* j = o.find("stop")) {
    detail::StrictObject s(*j, "stop");
    cfg.stop.window = s.get_or<int>("window", cfg.stop.window);
    cfg.stop.epsilon = s.get_or<double>("epsilon", cfg.stop.epsilon);
    s.finish();
  }

  if (const auto* j = o.find("freeze")) {
    detail::StrictObject f(*j, "freeze");
    cfg.freeze.enabled = true;
    cfg.freeze.alpha = f.get_or<int>("alpha", cfg.freeze.alpha);
    cfg.freeze.eta = f.get_or<double>("eta", cfg.freeze.eta);
    f.finish();
  }

  if (const auto* j = o.find("fedavg_weighting")) {
    const std::string w = j->get<std::string>();
    if (w == "data_size")
      cfg.fedavg_weighting = FedAvgWeighting::kDataSize;
    else if (w == "uniform")
      cfg.fedavg_weighting = FedAvgWeighting::kUniform;
    else
      throw ConfigError("fedavg_weighting: must be data_size or uniform");
  }

  if (const auto* j = o.find("server_eval_subsample")) cfg.server_eval_subsample = j->get<int>();

  o.finish();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

/// Canonical JSON form; parse_config(config_to_json(cfg)) reproduces cfg.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json data{{"type", cfg.data.kind == DataSpec::Kind::kSynthetic ? "synthetic" : "file"},
                      {"dims", cfg.data.synthetic.dims},
                      {"classes", cfg.data.synthetic.classes},
                      {"a", cfg.data.synthetic.a},
                      {"b", cfg.data.synthetic.b},
                      {"mean_train_per_client", cfg.data.synthetic.mean_train_per_client},
                      {"mean_test_per_client", cfg.data.synthetic.mean_test_per_client},
                      {"server_test_size", cfg.data.synthetic.server_test_size},
                      {"train_fraction", cfg.data.train_fraction}};
  if (!cfg.data.source_path.empty()) data["source_path"] = cfg.data.source_path;
  if (!cfg.data.server_test_path.empty()) data["server_test_path"] = cfg.data.server_test_path;
  if (cfg.data.dirichlet_delta) data["dirichlet_delta"] = *cfg.data.dirichlet_delta;
  if (cfg.data.quantity_sigma) data["quantity_sigma"] = *cfg.data.quantity_sigma;

  nlohmann::json j{{"schema", kConfigSchemaVersion},
                   {"algorithm", detail::algorithm_name(cfg.algorithm)},
                   {"num_clients", cfg.num_clients},
                   {"t_max", cfg.t_max},
                   {"runs", cfg.runs},
                   {"seed", cfg.master_seed},
                   {"kappa_global", cfg.kappa_global},
                   {"kappa_local", cfg.kappa_local},
                   {"timing", cfg.timing},
                   {"data", data},
                   {"model", {{"hidden", cfg.model_hidden}}},
                   {"local",
                    {{"alpha", cfg.local.epochs},
                     {"eta", cfg.local.learning_rate},
                     {"batch_size", cfg.local.minibatch_size},
                     {"prox_mu", cfg.local.prox_mu}}},
                   {"bounds",
                    {{"alpha", {cfg.bounds.alpha_min, cfg.bounds.alpha_max}},
                     {"eta", {cfg.bounds.eta_min, cfg.bounds.eta_max}}}},
                   {"server_agent", detail::agent_to_json(cfg.server_agent)},
                   {"client_agent", detail::agent_to_json(cfg.client_agent)},
                   {"stop", {{"window", cfg.stop.window}, {"epsilon", cfg.stop.epsilon}}},
                   {"fedavg_weighting",
                    cfg.fedavg_weighting == FedAvgWeighting::kDataSize ? "data_size" : "uniform"}};
  if (cfg.freeze.enabled) j["freeze"] = {{"alpha", cfg.freeze.alpha}, {"eta", cfg.freeze.eta}};
  if (cfg.server_eval_subsample) j["server_eval_subsample"] = *cfg.server_eval_subsample;
  return j;
}

inline ExperimentConfig load_config_string(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(root);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return load_config_string(buf.str());
}

/// FNV-1a hash of the canonical config dump, as fixed-width hex.
inline std::string config_hash(const ExperimentConfig& cfg) {
  const std::string dump = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace page
