#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "page/data.hpp"
#include "page/numerics.hpp"
#include "page/rng.hpp"

using namespace page;

namespace {

// order-independent fingerprint of a dataset's rows, for conservation checks
std::vector<std::uint64_t> row_fingerprints(const Dataset& d) {
  std::vector<std::uint64_t> out;
  out.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ static_cast<std::uint64_t>(d.labels[i]);
    for (double v : d.row(i)) {
      h ^= std::bit_cast<std::uint64_t>(v);
      h *= 0x100000001b3ULL;
    }
    out.push_back(h);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint64_t> merged_fingerprints(const std::vector<Dataset>& parts) {
  std::vector<std::uint64_t> all;
  for (const auto& p : parts) {
    auto f = row_fingerprints(p);
    all.insert(all.end(), f.begin(), f.end());
  }
  std::sort(all.begin(), all.end());
  return all;
}

Dataset balanced_source(int classes, int per_class, int dim, std::uint64_t seed) {
  Dataset d;
  d.dim = dim;
  d.num_classes = classes;
  Rng rng(seed);
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      for (auto& v : x) v = rng.normal();
      d.append_row(x, c);
    }
  return d;
}

}  // namespace

TEST_CASE("synthetic generator reproduces the configured shape") {
  SyntheticConfig cfg;
  cfg.num_clients = 100;
  cfg.dims = 30;
  cfg.classes = 30;
  cfg.mean_train_per_client = 210;
  cfg.mean_test_per_client = 90;
  cfg.server_test_size = 7500;
  cfg.seed = 1;
  const auto data = generate_synthetic(cfg);
  REQUIRE(data.clients.size() == 100);
  REQUIRE(data.server_test.size() == 7500);
  REQUIRE(data.server_test.dim == 30);
  REQUIRE(data.server_test.num_classes == 30);
  double total_train = 0.0, total_test = 0.0;
  for (const auto& c : data.clients) {
    REQUIRE(c.train.dim == 30);
    REQUIRE(c.train.size() >= 1);
    REQUIRE(c.test.size() >= 1);
    c.train.validate();
    c.test.validate();
    total_train += static_cast<double>(c.train.size());
    total_test += static_cast<double>(c.test.size());
  }
  // lognormal multiplier has sigma 0.25, so means land near the configured values
  REQUIRE(std::abs(total_train / 100.0 - 210.0) < 30.0);
  REQUIRE(std::abs(total_test / 100.0 - 90.0) < 15.0);
}

TEST_CASE("synthetic generator is deterministic in its seed") {
  SyntheticConfig cfg;
  cfg.num_clients = 5;
  cfg.dims = 4;
  cfg.classes = 3;
  cfg.mean_train_per_client = 20;
  cfg.mean_test_per_client = 10;
  cfg.server_test_size = 50;
  cfg.seed = 77;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  REQUIRE(a.server_test.features == b.server_test.features);
  REQUIRE(a.server_test.labels == b.server_test.labels);
  for (std::size_t i = 0; i < a.clients.size(); ++i) {
    REQUIRE(a.clients[i].train.features == b.clients[i].train.features);
    REQUIRE(a.clients[i].test.labels == b.clients[i].test.labels);
  }
  cfg.seed = 78;
  const auto c = generate_synthetic(cfg);
  REQUIRE(a.server_test.features != c.server_test.features);
}

TEST_CASE("homogeneous config is learnable by one pooled logistic model") {
  SyntheticConfig cfg;
  cfg.num_clients = 20;
  cfg.dims = 10;
  cfg.classes = 5;
  cfg.a = 0.0;
  cfg.b = 0.0;
  cfg.mean_train_per_client = 100;
  cfg.mean_test_per_client = 30;
  cfg.server_test_size = 1000;
  cfg.seed = 3;
  const auto data = generate_synthetic(cfg);

  // all clients share one ground truth, so their label rules agree; fit a
  // centralized logistic model as the oracle
  Dataset pooled;
  pooled.dim = cfg.dims;
  pooled.num_classes = cfg.classes;
  for (const auto& c : data.clients)
    for (std::size_t i = 0; i < c.train.size(); ++i)
      pooled.append_row(c.train.row(i), c.train.labels[i]);

  MlpSpec model;
  model.layer_sizes = {cfg.dims, cfg.classes};
  model.output_head = OutputHead::kSoftmaxLogits;
  ParamVector params(model.param_count(), 0.0);
  for (int it = 0; it < 2000; ++it) {
    const auto lg = ce_loss_and_grad(model, params, pooled.features, pooled.labels);
    for (std::size_t j = 0; j < params.size(); ++j) params[j] -= 5.0 * lg.grad[j];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.server_test.size(); ++i) {
    const auto z = mlp_forward_prehead(model, params, data.server_test.row(i));
    std::size_t best = 0;
    for (std::size_t k = 1; k < z.size(); ++k)
      if (z[k] > z[best]) best = k;
    if (static_cast<std::int64_t>(best) == data.server_test.labels[i]) ++correct;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(data.server_test.size());
  REQUIRE(acc >= 0.95);
}

TEST_CASE("dirichlet partition with huge delta is nearly uniform") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset source = balanced_source(10, 1000, 3, 100 + seed);
    const auto parts = partition_dirichlet(source, 10, 1000.0, seed);
    REQUIRE(parts.size() == 10);
    for (const auto& p : parts) {
      std::vector<double> class_counts(10, 0.0);
      for (auto y : p.labels) class_counts[static_cast<std::size_t>(y)] += 1.0;
      for (double c : class_counts)
        REQUIRE(std::abs(c / static_cast<double>(p.size()) - 0.1) < 0.05);
    }
  }
}

TEST_CASE("dirichlet partition conserves the source exactly") {
  const Dataset source = balanced_source(5, 100, 4, 9);
  const auto parts = partition_dirichlet(source, 7, 0.3, 42);
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  REQUIRE(total == source.size());
  REQUIRE(merged_fingerprints(parts) == row_fingerprints(source));
}

TEST_CASE("dirichlet partition with one client returns everything") {
  const Dataset source = balanced_source(3, 10, 2, 5);
  const auto parts = partition_dirichlet(source, 1, 0.3, 1);
  REQUIRE(parts.size() == 1);
  REQUIRE(parts[0].size() == source.size());
}

TEST_CASE("partition preconditions") {
  const Dataset source = balanced_source(3, 2, 2, 6);
  REQUIRE_THROWS_AS(partition_dirichlet(source, 100, 0.3, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(partition_dirichlet(source, 2, 0.0, 1), std::invalid_argument);
  Dataset holey = source;
  for (auto& y : holey.labels) y = std::min<std::int64_t>(y, 1);  // class 2 now empty
  REQUIRE_THROWS_AS(partition_dirichlet(holey, 2, 0.3, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(partition_quantity_lognormal(source, 100, 0.3, 1), std::invalid_argument);
}

TEST_CASE("degenerate lognormal partition is near-equal") {
  const Dataset source = balanced_source(4, 250, 2, 8);  // 1000 samples
  const auto parts = partition_quantity_lognormal(source, 10, 1e-6, 3);
  for (const auto& p : parts) {
    REQUIRE(p.size() >= 99);
    REQUIRE(p.size() <= 101);
  }
}

TEST_CASE("lognormal partition conserves sizes over random configs") {
  Rng rng(1234);
  for (int rep = 0; rep < 50; ++rep) {
    const int classes = 2 + static_cast<int>(rng.uniform_int(0, 3));
    const int per_class = 20 + static_cast<int>(rng.uniform_int(0, 80));
    const Dataset source = balanced_source(classes, per_class, 2, 500 + rep);
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 19));
    if (static_cast<std::size_t>(n) > source.size()) continue;
    const double sigma = rng.uniform(0.05, 0.6);
    const auto parts = partition_quantity_lognormal(source, n, sigma, rng.next_u64());
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    REQUIRE(total == source.size());
    REQUIRE(merged_fingerprints(parts) == row_fingerprints(source));
  }
}

TEST_CASE("uniform partition conserves and balances") {
  const Dataset source = balanced_source(3, 34, 2, 11);  // 102 samples
  const auto parts = partition_uniform(source, 4, 77);
  std::size_t total = 0;
  for (const auto& p : parts) {
    REQUIRE(p.size() >= 25);
    REQUIRE(p.size() <= 26);
    total += p.size();
  }
  REQUIRE(total == source.size());
  REQUIRE(merged_fingerprints(parts) == row_fingerprints(source));
}

TEST_CASE("train/test split ratio and conservation") {
  const Dataset source = balanced_source(4, 25, 3, 13);  // n = 100
  const auto split = split_train_test(source, 0.7, 5);
  REQUIRE(split.train.size() == 70);
  REQUIRE(split.test.size() == 30);
  REQUIRE(merged_fingerprints({split.train, split.test}) == row_fingerprints(source));

  Dataset one;
  one.dim = 1;
  one.num_classes = 2;
  one.append_row(std::vector<double>{1.0}, 1);
  const auto tiny = split_train_test(one, 0.7, 1);
  REQUIRE(tiny.train.size() == 1);
  REQUIRE(tiny.test.size() == 0);

  Dataset empty;
  empty.dim = 1;
  empty.num_classes = 2;
  REQUIRE_THROWS_AS(split_train_test(empty, 0.7, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(split_train_test(one, 1.0, 1), std::invalid_argument);
}

TEST_CASE("binary dataset round trip is bit exact") {
  SyntheticConfig cfg;
  cfg.num_clients = 2;
  cfg.dims = 3;
  cfg.classes = 4;
  cfg.mean_train_per_client = 10;
  cfg.mean_test_per_client = 5;
  cfg.server_test_size = 20;
  cfg.seed = 55;
  const auto data = generate_synthetic(cfg);
  std::stringstream buf;
  save_dataset(data.server_test, buf);
  const Dataset back = load_dataset(buf);
  REQUIRE(back.dim == data.server_test.dim);
  REQUIRE(back.num_classes == data.server_test.num_classes);
  REQUIRE(back.features == data.server_test.features);
  REQUIRE(back.labels == data.server_test.labels);
}
