#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "page/numerics.hpp"
#include "page/rng.hpp"

using namespace page;

namespace {

MlpSpec make_spec(std::vector<int> sizes, OutputHead head) {
  MlpSpec spec;
  spec.layer_sizes = std::move(sizes);
  spec.hidden_activation = Activation::kTanh;
  spec.output_head = head;
  return spec;
}

}  // namespace

TEST_CASE("zero-weight net with identity head maps everything to zero") {
  const auto spec = make_spec({3, 4, 2}, OutputHead::kIdentity);
  const ParamVector params(spec.param_count(), 0.0);
  const auto out = mlp_forward(spec, params, std::vector<double>{1.0, -2.0, 3.5});
  for (double v : out) REQUIRE(v == 0.0);
}

TEST_CASE("single-layer identity net passes its input through") {
  const auto spec = make_spec({1, 1}, OutputHead::kIdentity);
  const ParamVector params{1.0, 0.0};  // w = 1, b = 0
  const auto out = mlp_forward(spec, params, std::vector<double>{2.5});
  REQUIRE(out.size() == 1);
  REQUIRE(out[0] == 2.5);
}

TEST_CASE("simplex head on equal logits is uniform") {
  const auto spec = make_spec({2, 3}, OutputHead::kSimplexSoftmax);
  const ParamVector params(spec.param_count(), 0.0);
  const auto out = mlp_forward(spec, params, std::vector<double>{0.3, -0.7});
  REQUIRE(out.size() == 3);
  for (double v : out) REQUIRE(std::abs(v - 1.0 / 3.0) < 1e-15);
}

TEST_CASE("softmax is a stable distribution and shift invariant") {
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> logits(5);
    for (auto& v : logits) v = rng.uniform(-15.0, 15.0);
    const auto p = softmax(logits);
    double sum = 0.0;
    for (double v : p) {
      REQUIRE(v > 0.0);
      REQUIRE(v < 1.0);
      sum += v;
    }
    REQUIRE(std::abs(sum - 1.0) < 1e-12);
    std::vector<double> shifted = logits;
    for (auto& v : shifted) v += 13.25;
    const auto q = softmax(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(std::abs(p[i] - q[i]) < 1e-12);
  }
  // huge logits must not overflow; saturation may pin the max at exactly 1
  const auto p = softmax(std::vector<double>{1000.0, 999.0, -1000.0});
  for (double v : p) {
    REQUIRE(std::isfinite(v));
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  REQUIRE(p[0] > p[1]);
}

TEST_CASE("cross-entropy of a uniform prediction is ln K") {
  const auto spec = make_spec({4, 5}, OutputHead::kSoftmaxLogits);
  const ParamVector params(spec.param_count(), 0.0);  // all logits equal
  std::vector<double> features{0.1, 0.2, 0.3, 0.4};
  std::vector<std::int64_t> labels{2};
  const auto lg = ce_loss_and_grad(spec, params, features, labels);
  REQUIRE(std::abs(lg.loss - std::log(5.0)) < 1e-12);
}

TEST_CASE("cross-entropy of a confident correct prediction is near zero") {
  const auto spec = make_spec({2, 3}, OutputHead::kSoftmaxLogits);
  ParamVector params(spec.param_count(), 0.0);
  params[6] = 50.0;  // bias of class 0
  std::vector<double> features{0.0, 0.0};
  std::vector<std::int64_t> labels{0};
  const auto lg = ce_loss_and_grad(spec, params, features, labels);
  REQUIRE(lg.loss >= 0.0);
  REQUIRE(lg.loss < 1e-12);
}

TEST_CASE("cross-entropy rejects bad batches") {
  const auto spec = make_spec({2, 3}, OutputHead::kSoftmaxLogits);
  const ParamVector params(spec.param_count(), 0.0);
  REQUIRE_THROWS_AS(ce_loss_and_grad(spec, params, std::vector<double>{}, std::vector<std::int64_t>{}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(
      ce_loss_and_grad(spec, params, std::vector<double>{1.0, 2.0}, std::vector<std::int64_t>{7}),
      std::invalid_argument);
}

TEST_CASE("cross-entropy gradient matches central differences") {
  Rng rng(17);
  const auto spec = make_spec({3, 6, 4}, OutputHead::kSoftmaxLogits);
  const ParamVector params = glorot_init(spec, rng);
  std::vector<double> features(9);
  for (auto& v : features) v = rng.normal();
  std::vector<std::int64_t> labels{1, 3, 0};
  const double err = grad_check(
      params, [&](const ParamVector& p) { return ce_loss_and_grad(spec, p, features, labels); });
  REQUIRE(err < 1e-5);
}

TEST_CASE("mse on matching targets is exactly zero") {
  const auto spec = make_spec({2, 3, 2}, OutputHead::kIdentity);
  Rng rng(23);
  const ParamVector params = glorot_init(spec, rng);
  std::vector<double> features{0.5, -0.25};
  const auto out = mlp_forward(spec, params, features);
  const auto lg = mse_loss_and_grad(spec, params, features, out);
  REQUIRE(lg.loss == 0.0);
  for (double g : lg.grad) REQUIRE(g == 0.0);
}

TEST_CASE("mse arithmetic on a constant net") {
  const auto spec = make_spec({1, 1}, OutputHead::kIdentity);
  const ParamVector params{0.0, 2.0};  // output is always 2
  const auto lg = mse_loss_and_grad(spec, params, std::vector<double>{0.0},
                                    std::vector<double>{3.0});
  REQUIRE(lg.loss == 1.0);
}

TEST_CASE("mse gradient matches central differences through a tanh head") {
  Rng rng(29);
  const auto spec = make_spec({2, 5, 3}, OutputHead::kBoundedTanh);
  const ParamVector params = glorot_init(spec, rng);
  std::vector<double> features(4), targets(6);
  for (auto& v : features) v = rng.normal();
  for (auto& v : targets) v = rng.uniform(-0.5, 0.5);
  const double err = grad_check(
      params, [&](const ParamVector& p) { return mse_loss_and_grad(spec, p, features, targets); });
  REQUIRE(err < 1e-5);
}

TEST_CASE("mse gradient matches central differences through a softmax head") {
  Rng rng(31);
  const auto spec = make_spec({2, 4, 3}, OutputHead::kSimplexSoftmax);
  const ParamVector params = glorot_init(spec, rng);
  std::vector<double> features{0.2, -0.8};
  std::vector<double> targets{0.5, 0.25, 0.25};
  const double err = grad_check(
      params, [&](const ParamVector& p) { return mse_loss_and_grad(spec, p, features, targets); });
  REQUIRE(err < 1e-5);
}

TEST_CASE("sgd_step arithmetic") {
  REQUIRE(sgd_step({1.0, 1.0}, {0.0, 0.0}, 0.1) == ParamVector{1.0, 1.0});
  REQUIRE(sgd_step({1.0, 1.0}, {1.0, -1.0}, 0.5) == ParamVector{0.5, 1.5});
  // two sequential steps with rates a then b on a constant gradient
  const ParamVector p{2.0, -3.0};
  const Gradient g{0.25, 0.5};
  const auto two = sgd_step(sgd_step(p, g, 0.125), g, 0.25);
  for (std::size_t i = 0; i < p.size(); ++i)
    REQUIRE(std::abs(two[i] - (p[i] - (0.125 + 0.25) * g[i])) < 1e-15);
  REQUIRE_THROWS_AS(sgd_step({1.0}, {1.0, 2.0}, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(sgd_step({1.0}, {1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("grad_check is tight for quadratics and catches corruption") {
  // linear model + mse: central differences are exact up to rounding
  const auto spec = make_spec({2, 1}, OutputHead::kIdentity);
  const ParamVector params{0.3, -0.2, 0.1};
  std::vector<double> features{1.0, 2.0, -0.5, 0.25};
  std::vector<double> targets{0.7, -0.1};
  const double tight = grad_check(
      params, [&](const ParamVector& p) { return mse_loss_and_grad(spec, p, features, targets); });
  REQUIRE(tight < 1e-8);

  Rng rng(37);
  const auto tanh_spec = make_spec({2, 8, 1}, OutputHead::kIdentity);
  const ParamVector tp = glorot_init(tanh_spec, rng);
  const double ok = grad_check(tp, [&](const ParamVector& p) {
    return mse_loss_and_grad(tanh_spec, p, features, targets);
  });
  REQUIRE(ok < 1e-5);

  const double corrupted = grad_check(tp, [&](const ParamVector& p) {
    auto lg = mse_loss_and_grad(tanh_spec, p, features, targets);
    lg.grad[3] += 0.1;
    return lg;
  });
  REQUIRE(corrupted > 1e-3);
}

TEST_CASE("glorot init respects its bound and zeroes biases") {
  Rng rng(41);
  const auto spec = make_spec({10, 7, 3}, OutputHead::kIdentity);
  const auto params = glorot_init(spec, rng);
  REQUIRE(params.size() == spec.param_count());
  const double bound1 = std::sqrt(6.0 / (10 + 7));
  for (int i = 0; i < 70; ++i) REQUIRE(std::abs(params[static_cast<std::size_t>(i)]) <= bound1);
  for (int i = 70; i < 77; ++i) REQUIRE(params[static_cast<std::size_t>(i)] == 0.0);
}

TEST_CASE("forward rejects shape mismatches") {
  const auto spec = make_spec({2, 2}, OutputHead::kIdentity);
  const ParamVector params(spec.param_count(), 0.0);
  REQUIRE_THROWS_AS(mlp_forward(spec, params, std::vector<double>{1.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(mlp_forward(spec, ParamVector(3, 0.0), std::vector<double>{1.0, 2.0}),
                    std::invalid_argument);
}
