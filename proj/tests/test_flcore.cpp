#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "page/flcore.hpp"
#include "page/rng.hpp"

using namespace page;

namespace {

MlpSpec logistic_spec(int d, int k) {
  MlpSpec spec;
  spec.layer_sizes = {d, k};
  spec.output_head = OutputHead::kSoftmaxLogits;
  return spec;
}

// two well-separated gaussian blobs
Dataset two_blobs(int per_class, std::uint64_t seed) {
  Dataset d;
  d.dim = 2;
  d.num_classes = 2;
  Rng rng(seed);
  for (int c = 0; c < 2; ++c) {
    const double cx = c == 0 ? -2.0 : 2.0;
    for (int i = 0; i < per_class; ++i)
      d.append_row(std::vector<double>{rng.normal(cx, 0.5), rng.normal(cx, 0.5)}, c);
  }
  return d;
}

}  // namespace

TEST_CASE("zero learning rate leaves the model untouched") {
  const auto spec = logistic_spec(2, 2);
  Rng rng(1);
  const ParamVector w = glorot_init(spec, rng);
  const Dataset data = two_blobs(20, 2);
  LocalTrainSpec ts;
  ts.epochs = 3;
  ts.learning_rate = 0.0;
  const ParamVector out = local_train(spec, w, data, ts, w, 7);
  REQUIRE(out == w);
}

TEST_CASE("a dominant proximal term pins the model to its anchor") {
  const auto spec = logistic_spec(2, 2);
  Rng rng(3);
  const ParamVector anchor = glorot_init(spec, rng);
  ParamVector w = anchor;
  for (auto& v : w) v += 0.1;
  LocalTrainSpec ts;
  ts.epochs = 3;
  ts.learning_rate = 1e-6;
  ts.prox_mu = 1e6;
  const ParamVector out = local_train(spec, w, two_blobs(20, 4), ts, anchor, 9);
  for (std::size_t i = 0; i < out.size(); ++i) REQUIRE(std::abs(out[i] - anchor[i]) < 1e-3);
}

TEST_CASE("a separable toy problem trains to high accuracy") {
  const auto spec = logistic_spec(2, 2);
  const ParamVector w(spec.param_count(), 0.0);
  const Dataset data = two_blobs(50, 6);  // 100 points
  LocalTrainSpec ts;
  ts.epochs = 20;
  ts.learning_rate = 0.1;
  const ParamVector out = local_train(spec, w, data, ts, w, 11);
  REQUIRE(evaluate(spec, out, data).accuracy >= 0.95);
}

TEST_CASE("local_train is deterministic in its seed and rejects empty data") {
  const auto spec = logistic_spec(2, 2);
  Rng rng(5);
  const ParamVector w = glorot_init(spec, rng);
  const Dataset data = two_blobs(17, 8);
  LocalTrainSpec ts;
  ts.epochs = 2;
  ts.learning_rate = 0.05;
  ts.minibatch_size = 8;
  REQUIRE(local_train(spec, w, data, ts, w, 42) == local_train(spec, w, data, ts, w, 42));
  REQUIRE(local_train(spec, w, data, ts, w, 42) != local_train(spec, w, data, ts, w, 43));
  Dataset empty;
  empty.dim = 2;
  empty.num_classes = 2;
  REQUIRE_THROWS_AS(local_train(spec, w, empty, ts, w, 1), std::invalid_argument);
}

TEST_CASE("evaluate matches the analytic uniform loss") {
  const auto spec = logistic_spec(3, 5);
  const ParamVector w(spec.param_count(), 0.0);  // uniform prediction
  Dataset d;
  d.dim = 3;
  d.num_classes = 5;
  d.append_row(std::vector<double>{1.0, 2.0, 3.0}, 4);
  d.append_row(std::vector<double>{0.0, 0.5, -1.0}, 0);
  const auto res = evaluate(spec, w, d);
  REQUIRE(std::abs(res.loss - std::log(5.0)) < 1e-12);
  // uniform logits tie on every class; ties break to class 0
  REQUIRE(res.accuracy == 0.5);
}

TEST_CASE("evaluate agrees with a brute-force recount") {
  const auto spec = logistic_spec(4, 3);
  Rng rng(13);
  const ParamVector w = glorot_init(spec, rng);
  Dataset d;
  d.dim = 4;
  d.num_classes = 3;
  std::vector<double> x(4);
  for (int i = 0; i < 50; ++i) {
    for (auto& v : x) v = rng.normal();
    d.append_row(x, rng.uniform_int(0, 2));
  }
  const auto res = evaluate(spec, w, d);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto out = mlp_forward(spec, w, d.row(i));
    std::size_t best = 0;
    for (std::size_t k = 1; k < out.size(); ++k)
      if (out[k] > out[best]) best = k;
    if (static_cast<std::int64_t>(best) == d.labels[i]) ++correct;
  }
  REQUIRE(res.accuracy == static_cast<double>(correct) / 50.0);
  Dataset empty;
  empty.dim = 4;
  empty.num_classes = 3;
  REQUIRE_THROWS_AS(evaluate(spec, w, empty), std::invalid_argument);
}

TEST_CASE("aggregating copies of one model with dyadic weights is exact") {
  Rng rng(17);
  const auto spec = logistic_spec(5, 4);
  const ParamVector m = glorot_init(spec, rng);
  for (std::size_t n : {2, 4, 8}) {
    const std::vector<ParamVector> models(n, m);
    const ParamVector out = aggregate(models, AggregationWeights::uniform(n));
    REQUIRE(out == m);
  }
}

TEST_CASE("aggregate arithmetic and mean oracle") {
  const std::vector<ParamVector> two{{1.0, 0.0}, {0.0, 1.0}};
  const ParamVector mid = aggregate(two, AggregationWeights::uniform(2));
  REQUIRE(mid == ParamVector{0.5, 0.5});

  Rng rng(19);
  std::vector<ParamVector> models;
  for (int i = 0; i < 5; ++i) {
    ParamVector m(7);
    for (auto& v : m) v = rng.normal();
    models.push_back(m);
  }
  const ParamVector avg = aggregate(models, AggregationWeights::uniform(5));
  for (std::size_t j = 0; j < 7; ++j) {
    double s = 0.0;
    for (const auto& m : models) s += m[j];
    REQUIRE(std::abs(avg[j] - s / 5.0) < 1e-12);
  }
}

TEST_CASE("aggregation is convex coordinatewise") {
  Rng rng(23);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<ParamVector> models;
    for (int i = 0; i < 4; ++i) {
      ParamVector m(6);
      for (auto& v : m) v = rng.normal();
      models.push_back(m);
    }
    AggregationWeights w;
    w.p = rng.uniform_simplex(4);
    const ParamVector out = aggregate(models, w);
    for (std::size_t j = 0; j < 6; ++j) {
      double lo = models[0][j], hi = models[0][j];
      for (const auto& m : models) {
        lo = std::min(lo, m[j]);
        hi = std::max(hi, m[j]);
      }
      REQUIRE(out[j] >= lo - 1e-12);
      REQUIRE(out[j] <= hi + 1e-12);
    }
  }
}

TEST_CASE("aggregate validates its inputs") {
  AggregationWeights bad;
  bad.p = {0.5, 0.6};
  REQUIRE_THROWS_AS(aggregate({{1.0}, {2.0}}, bad), std::invalid_argument);
  AggregationWeights negative;
  negative.p = {1.5, -0.5};
  REQUIRE_THROWS_AS(aggregate({{1.0}, {2.0}}, negative), std::invalid_argument);
  REQUIRE_THROWS_AS(aggregate({{1.0}, {2.0, 3.0}}, AggregationWeights::uniform(2)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(aggregate({{1.0}}, AggregationWeights::uniform(2)), std::invalid_argument);
}

TEST_CASE("global_loss arithmetic, oracle and monotonicity") {
  REQUIRE(global_loss(std::vector<double>{2.0, 2.0}, AggregationWeights::uniform(2)) == 2.0);

  // near-one-hot weights recover a single client's loss (exact one-hot is
  // outside the weight domain)
  AggregationWeights almost;
  almost.p = {1.0 - 1e-10, 1e-10};
  REQUIRE(std::abs(global_loss(std::vector<double>{3.0, 100.0}, almost) - 3.0) < 1e-7);

  Rng rng(29);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> f(6);
    for (auto& v : f) v = rng.uniform(0.0, 5.0);
    AggregationWeights w;
    w.p = rng.uniform_simplex(6);
    double dot = 0.0;
    for (std::size_t i = 0; i < 6; ++i) dot += w.p[i] * f[i];
    REQUIRE(std::abs(global_loss(f, w) - dot) < 1e-12);
    // raising one loss never lowers the total
    std::vector<double> g = f;
    g[rep % 6] += 1.0;
    REQUIRE(global_loss(g, w) >= global_loss(f, w));
  }
}
