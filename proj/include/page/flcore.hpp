#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "page/data.hpp"
#include "page/numerics.hpp"
#include "page/rng.hpp"

namespace page {

/// One round's local-training strategy: (alpha, eta) plus fixed plumbing.
struct LocalTrainSpec {
  int epochs = 1;            // alpha
  double learning_rate = 0.05;  // eta
  int minibatch_size = 32;
  double prox_mu = 0.0;      // 0 disables the proximal term

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("LocalTrainSpec: epochs must be >= 1");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("LocalTrainSpec: learning rate must be >= 0");
    if (minibatch_size < 1) throw std::invalid_argument("LocalTrainSpec: minibatch size must be >= 1");
    if (prox_mu < 0.0) throw std::invalid_argument("LocalTrainSpec: prox_mu must be >= 0");
  }
};

/// Convex aggregation coefficients over clients.
struct AggregationWeights {
  std::vector<double> p;

  void validate() const {
    if (p.empty()) throw std::invalid_argument("AggregationWeights: empty");
    double sum = 0.0;
    for (double v : p) {
      if (!(v > 0.0 && v <= 1.0))
        throw std::invalid_argument("AggregationWeights: entries must lie in (0, 1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("AggregationWeights: entries must sum to 1");
  }

  static AggregationWeights uniform(std::size_t n) {
    AggregationWeights w;
    w.p.assign(n, 1.0 / static_cast<double>(n));
    return w;
  }
};

/**
 * Runs `epochs` full passes of shuffled mini-batch SGD on cross-entropy,
 * starting from `w`. When prox_mu > 0 the objective gains
 * prox_mu/2 * ||w - anchor||^2 (anchor is the round's global model).
 * Deterministic given the seed: the shuffle stream is the only randomness.
 */
inline ParamVector local_train(const MlpSpec& model, const ParamVector& w, const Dataset& train,
                               const LocalTrainSpec& spec, const ParamVector& anchor,
                               std::uint64_t seed) {
  spec.validate();
  if (train.size() == 0) throw std::invalid_argument("local_train: empty training set");
  if (w.size() != model.param_count()) throw std::invalid_argument("local_train: shape mismatch");
  if (spec.prox_mu > 0.0 && anchor.size() != w.size())
    throw std::invalid_argument("local_train: anchor shape mismatch");

  Rng rng(seed);
  ParamVector params = w;
  const auto d = static_cast<std::size_t>(train.dim);
  const auto batch = static_cast<std::size_t>(spec.minibatch_size);
  std::vector<double> feat;
  std::vector<std::int64_t> lab;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    const auto perm = rng.permutation(train.size());
    for (std::size_t start = 0; start < perm.size(); start += batch) {
      const std::size_t stop = std::min(start + batch, perm.size());
      feat.clear();
      lab.clear();
      for (std::size_t i = start; i < stop; ++i) {
        const auto row = train.row(perm[i]);
        feat.insert(feat.end(), row.begin(), row.end());
        lab.push_back(train.labels[perm[i]]);
      }
      LossGrad lg = ce_loss_and_grad(model, params, feat, lab);
      if (spec.prox_mu > 0.0)
        for (std::size_t j = 0; j < params.size(); ++j)
          lg.grad[j] += spec.prox_mu * (params[j] - anchor[j]);
      for (std::size_t j = 0; j < params.size(); ++j)
        params[j] -= spec.learning_rate * lg.grad[j];
    }
  }
  return params;
}

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;
};

/**
 * Accuracy (argmax, ties to the lowest class index) and mean cross-entropy
 * of a classifier on a dataset.
 */
inline EvalResult evaluate(const MlpSpec& model, const ParamVector& w, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (w.size() != model.param_count()) throw std::invalid_argument("evaluate: shape mismatch");
  EvalResult res;
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const Vector z = mlp_forward_prehead(model, w, data.row(s));
    std::size_t best = 0;
    for (std::size_t i = 1; i < z.size(); ++i)
      if (z[i] > z[best]) best = i;
    if (static_cast<std::int64_t>(best) == data.labels[s]) ++correct;
    const double m = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - m);
    loss += m + std::log(lse) - z[static_cast<std::size_t>(data.labels[s])];
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  res.loss = loss / static_cast<double>(data.size());
  return res;
}

/**
 * Weighted model aggregation, sum_i p_i * w_i. Summation runs left to right
 * in client-index order with Kahan compensation, so results are bitwise
 * reproducible and aggregating identical models under uniform dyadic weights
 * returns the model unchanged.
 */
inline ParamVector aggregate(const std::vector<ParamVector>& models,
                             const AggregationWeights& weights) {
  weights.validate();
  if (models.size() != weights.p.size())
    throw std::invalid_argument("aggregate: model/weight count mismatch");
  const std::size_t len = models.front().size();
  for (const auto& m : models)
    if (m.size() != len) throw std::invalid_argument("aggregate: model length mismatch");
  ParamVector out(len, 0.0);
  std::vector<double> comp(len, 0.0);
  for (std::size_t i = 0; i < models.size(); ++i) {
    const double p = weights.p[i];
    const ParamVector& m = models[i];
    for (std::size_t j = 0; j < len; ++j) {
      const double y = p * m[j] - comp[j];
      const double t = out[j] + y;
      comp[j] = (t - out[j]) - y;
      out[j] = t;
    }
  }
  return out;
}

/// Weighted global loss, sum_i p_i * f_i.
inline double global_loss(std::span<const double> losses, const AggregationWeights& weights) {
  weights.validate();
  if (losses.size() != weights.p.size())
    throw std::invalid_argument("global_loss: loss/weight count mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) acc += weights.p[i] * losses[i];
  return acc;
}

}  // namespace page
