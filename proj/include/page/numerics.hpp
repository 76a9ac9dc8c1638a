#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "page/rng.hpp"

namespace page {

/// Flat parameter vector of a model (FL model or actor/critic network).
using ParamVector = std::vector<double>;
/// Gradient with the same layout as the ParamVector it differentiates.
using Gradient = std::vector<double>;
using Vector = std::vector<double>;

enum class Activation { kTanh, kRelu };

enum class OutputHead {
  kSoftmaxLogits,   // raw logits, meant to feed a softmax cross-entropy loss
  kIdentity,        // raw outputs (regression / critic values)
  kBoundedTanh,     // elementwise tanh, outputs in [-1, 1]
  kSimplexSoftmax,  // softmax, outputs a probability vector
};

/**
 * Architecture of a fully connected network. Parameters are stored flat,
 * layer by layer: row-major weight matrix (out x in), then bias.
 */
struct MlpSpec {
  std::vector<int> layer_sizes;  // input, hidden..., output
  Activation hidden_activation = Activation::kTanh;
  OutputHead output_head = OutputHead::kIdentity;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
      n += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
    return n;
  }

  void validate() const {
    if (layer_sizes.size() < 2) throw std::invalid_argument("MlpSpec: need at least 2 layer sizes");
    for (int s : layer_sizes)
      if (s < 1) throw std::invalid_argument("MlpSpec: layer sizes must be >= 1");
  }
};

namespace detail {

inline void check_shapes(const MlpSpec& spec, const ParamVector& params, std::size_t input_len) {
  spec.validate();
  if (params.size() != spec.param_count())
    throw std::invalid_argument("parameter vector length does not match MlpSpec");
  if (input_len != static_cast<std::size_t>(spec.input_size()))
    throw std::invalid_argument("input length does not match MlpSpec");
}

inline double activate(Activation a, double z) {
  return a == Activation::kTanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

inline double activate_grad(Activation a, double z, double post) {
  return a == Activation::kTanh ? 1.0 - post * post : (z > 0.0 ? 1.0 : 0.0);
}

}  // namespace detail

/// Numerically stable softmax (max-subtracted). Output sums to 1.
inline Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vector out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

inline Vector apply_head(OutputHead head, const Vector& prehead) {
  switch (head) {
    case OutputHead::kSoftmaxLogits:
    case OutputHead::kIdentity:
      return prehead;
    case OutputHead::kBoundedTanh: {
      Vector out(prehead.size());
      for (std::size_t i = 0; i < prehead.size(); ++i) out[i] = std::tanh(prehead[i]);
      return out;
    }
    case OutputHead::kSimplexSoftmax:
      return softmax(prehead);
  }
  throw std::logic_error("unknown output head");
}

/// Forward activations kept around for backprop. pre[l] / post[l] are the
/// pre- and post-activation values of layer l (post.back() is pre-head).
struct MlpTrace {
  std::vector<Vector> pre;   // pre[l] = z_{l+1}
  std::vector<Vector> post;  // post[0] = input, post[l] = a_l
};

inline MlpTrace mlp_forward_trace(const MlpSpec& spec, const ParamVector& params,
                                  std::span<const double> input) {
  detail::check_shapes(spec, params, input.size());
  const std::size_t layers = spec.layer_sizes.size() - 1;
  MlpTrace trace;
  trace.pre.resize(layers);
  trace.post.resize(layers + 1);
  trace.post[0].assign(input.begin(), input.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const int n_in = spec.layer_sizes[l];
    const int n_out = spec.layer_sizes[l + 1];
    const double* w = params.data() + off;
    const double* b = params.data() + off + static_cast<std::size_t>(n_out) * n_in;
    const Vector& a = trace.post[l];
    Vector& z = trace.pre[l];
    z.assign(static_cast<std::size_t>(n_out), 0.0);
    for (int r = 0; r < n_out; ++r) {
      double acc = b[r];
      const double* wr = w + static_cast<std::size_t>(r) * n_in;
      for (int c = 0; c < n_in; ++c) acc += wr[c] * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = acc;
    }
    if (l + 1 < layers) {
      Vector& out = trace.post[l + 1];
      out.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = detail::activate(spec.hidden_activation, z[i]);
    } else {
      trace.post[l + 1] = z;  // pre-head output
    }
    off += static_cast<std::size_t>(n_out) * n_in + n_out;
  }
  return trace;
}

/// Pre-head output of the last layer (no output head applied).
inline Vector mlp_forward_prehead(const MlpSpec& spec, const ParamVector& params,
                                  std::span<const double> input) {
  return mlp_forward_trace(spec, params, input).post.back();
}

/// Full forward pass including the output head.
inline Vector mlp_forward(const MlpSpec& spec, const ParamVector& params,
                          std::span<const double> input) {
  return apply_head(spec.output_head, mlp_forward_prehead(spec, params, input));
}

/**
 * Backpropagates one sample. `seed` is dLoss/d(output); when
 * `seed_is_prehead` it is interpreted as dLoss/d(last-layer pre-head values)
 * and the head Jacobian is skipped. Parameter gradients are accumulated into
 * `grad_accum` when non-null. Returns dLoss/d(input).
 */
inline Vector mlp_backward(const MlpSpec& spec, const ParamVector& params, const MlpTrace& trace,
                           Vector seed, bool seed_is_prehead, Gradient* grad_accum) {
  const std::size_t layers = spec.layer_sizes.size() - 1;
  if (seed.size() != static_cast<std::size_t>(spec.output_size()))
    throw std::invalid_argument("mlp_backward: seed length mismatch");
  if (grad_accum && grad_accum->size() != params.size())
    throw std::invalid_argument("mlp_backward: gradient accumulator length mismatch");

  Vector delta;  // dLoss/dz for the current layer
  if (seed_is_prehead) {
    delta = std::move(seed);
  } else {
    const Vector& z = trace.pre.back();
    switch (spec.output_head) {
      case OutputHead::kSoftmaxLogits:
      case OutputHead::kIdentity:
        delta = std::move(seed);
        break;
      case OutputHead::kBoundedTanh: {
        delta.resize(seed.size());
        for (std::size_t i = 0; i < seed.size(); ++i) {
          const double t = std::tanh(z[i]);
          delta[i] = seed[i] * (1.0 - t * t);
        }
        break;
      }
      case OutputHead::kSimplexSoftmax: {
        const Vector p = softmax(z);
        double dot = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) dot += seed[i] * p[i];
        delta.resize(seed.size());
        for (std::size_t i = 0; i < p.size(); ++i) delta[i] = p[i] * (seed[i] - dot);
        break;
      }
    }
  }

  // offsets of each layer's parameter block
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = off;
    off += static_cast<std::size_t>(spec.layer_sizes[l]) * spec.layer_sizes[l + 1] +
           spec.layer_sizes[l + 1];
  }

  for (std::size_t l = layers; l-- > 0;) {
    const int n_in = spec.layer_sizes[l];
    const int n_out = spec.layer_sizes[l + 1];
    const double* w = params.data() + offsets[l];
    const Vector& a = trace.post[l];
    if (grad_accum) {
      double* gw = grad_accum->data() + offsets[l];
      double* gb = gw + static_cast<std::size_t>(n_out) * n_in;
      for (int r = 0; r < n_out; ++r) {
        const double d = delta[static_cast<std::size_t>(r)];
        double* gwr = gw + static_cast<std::size_t>(r) * n_in;
        for (int c = 0; c < n_in; ++c) gwr[c] += d * a[static_cast<std::size_t>(c)];
        gb[r] += d;
      }
    }
    Vector prev(static_cast<std::size_t>(n_in), 0.0);
    for (int c = 0; c < n_in; ++c) {
      double acc = 0.0;
      for (int r = 0; r < n_out; ++r)
        acc += w[static_cast<std::size_t>(r) * n_in + c] * delta[static_cast<std::size_t>(r)];
      prev[static_cast<std::size_t>(c)] = acc;
    }
    if (l > 0) {
      const Vector& z_prev = trace.pre[l - 1];
      for (int c = 0; c < n_in; ++c) {
        const auto i = static_cast<std::size_t>(c);
        prev[i] *= detail::activate_grad(spec.hidden_activation, z_prev[i], trace.post[l][i]);
      }
    }
    delta = std::move(prev);
  }
  return delta;
}

struct LossGrad {
  double loss = 0.0;
  Gradient grad;
};

/**
 * Mean cross-entropy over a batch plus its mean parameter gradient.
 * Features are row-major (n x input_size); labels index the true class.
 * The spec's output head must be kSoftmaxLogits or kSimplexSoftmax.
 */
inline LossGrad ce_loss_and_grad(const MlpSpec& spec, const ParamVector& params,
                                 std::span<const double> features,
                                 std::span<const std::int64_t> labels) {
  const std::size_t n = labels.size();
  if (n == 0) throw std::invalid_argument("ce_loss_and_grad: empty batch");
  const auto d = static_cast<std::size_t>(spec.input_size());
  if (features.size() != n * d)
    throw std::invalid_argument("ce_loss_and_grad: feature matrix shape mismatch");
  const int k = spec.output_size();

  LossGrad result;
  result.grad.assign(params.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::int64_t y = labels[s];
    if (y < 0 || y >= k) throw std::invalid_argument("ce_loss_and_grad: label out of range");
    MlpTrace trace = mlp_forward_trace(spec, params, features.subspan(s * d, d));
    const Vector& z = trace.post.back();
    // stable log-softmax
    const double m = *std::max_element(z.begin(), z.end());
    double lse = 0.0;
    for (double v : z) lse += std::exp(v - m);
    lse = m + std::log(lse);
    result.loss += (lse - z[static_cast<std::size_t>(y)]) * inv_n;
    Vector seed(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
      seed[i] = (std::exp(z[i] - lse) - (static_cast<std::int64_t>(i) == y ? 1.0 : 0.0)) * inv_n;
    mlp_backward(spec, params, trace, std::move(seed), /*seed_is_prehead=*/true, &result.grad);
  }
  return result;
}

/**
 * Mean squared error over a batch (summed over output coordinates, averaged
 * over samples) and its parameter gradient. Targets are row-major
 * (n x output_size).
 */
inline LossGrad mse_loss_and_grad(const MlpSpec& spec, const ParamVector& params,
                                  std::span<const double> features,
                                  std::span<const double> targets) {
  const auto d = static_cast<std::size_t>(spec.input_size());
  const auto k = static_cast<std::size_t>(spec.output_size());
  if (d == 0 || features.size() % d != 0)
    throw std::invalid_argument("mse_loss_and_grad: feature matrix shape mismatch");
  const std::size_t n = features.size() / d;
  if (n == 0) throw std::invalid_argument("mse_loss_and_grad: empty batch");
  if (targets.size() != n * k)
    throw std::invalid_argument("mse_loss_and_grad: target matrix shape mismatch");

  LossGrad result;
  result.grad.assign(params.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t s = 0; s < n; ++s) {
    MlpTrace trace = mlp_forward_trace(spec, params, features.subspan(s * d, d));
    const Vector out = apply_head(spec.output_head, trace.post.back());
    Vector seed(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double err = out[i] - targets[s * k + i];
      result.loss += err * err * inv_n;
      seed[i] = 2.0 * err * inv_n;
    }
    mlp_backward(spec, params, trace, std::move(seed), /*seed_is_prehead=*/false, &result.grad);
  }
  return result;
}

/// One plain SGD step: params - lr * grad.
inline ParamVector sgd_step(const ParamVector& params, const Gradient& grad, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: learning rate must be positive");
  if (params.size() != grad.size()) throw std::invalid_argument("sgd_step: shape mismatch");
  ParamVector out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out[i] = params[i] - lr * grad[i];
  return out;
}

inline void sgd_step_inplace(ParamVector& params, const Gradient& grad, double lr) {
  if (params.size() != grad.size()) throw std::invalid_argument("sgd_step: shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

/**
 * Compares an analytic gradient against central finite differences.
 * `loss_fn` must return the scalar loss and its analytic gradient at any
 * parameter vector. Returns the worst relative error
 * |analytic - fd| / max(1, |fd|) over all coordinates.
 */
inline double grad_check(const ParamVector& params,
                         const std::function<LossGrad(const ParamVector&)>& loss_fn,
                         double step = 1e-6) {
  const LossGrad at = loss_fn(params);
  if (at.grad.size() != params.size())
    throw std::invalid_argument("grad_check: gradient length mismatch");
  double worst = 0.0;
  ParamVector p = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double up = loss_fn(p).loss;
    p[i] = orig - step;
    const double down = loss_fn(p).loss;
    p[i] = orig;
    const double fd = (up - down) / (2.0 * step);
    const double err = std::abs(at.grad[i] - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

/// Glorot-uniform weight init, zero biases, drawn from the given stream.
inline ParamVector glorot_init(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamVector params(spec.param_count());
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
    const int n_in = spec.layer_sizes[l];
    const int n_out = spec.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / (n_in + n_out));
    for (int i = 0; i < n_in * n_out; ++i) params[off++] = rng.uniform(-bound, bound);
    for (int i = 0; i < n_out; ++i) params[off++] = 0.0;
  }
  return params;
}

/// Throws if any entry is NaN or infinite.
inline void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::runtime_error(std::string(what) + ": non-finite value");
}

}  // namespace page
