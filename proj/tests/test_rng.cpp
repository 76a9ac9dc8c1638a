#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "page/rng.hpp"

using page::Rng;

TEST_CASE("identical seeds give identical streams") {
  Rng a(123), b(123);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
  Rng c(123), d(124);
  bool differs = false;
  for (int i = 0; i < 10 && !differs; ++i) differs = c.next_u64() != d.next_u64();
  REQUIRE(differs);
}

TEST_CASE("uniform stays in [0, 1) and has sane mean") {
  Rng rng(7);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  REQUIRE(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("uniform_int covers its range uniformly") {
  Rng rng(11);
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    const auto v = rng.uniform_int(2, 7);
    REQUIRE(v >= 2);
    REQUIRE(v <= 7);
    counts[static_cast<std::size_t>(v - 2)]++;
  }
  for (int c : counts) REQUIRE(std::abs(c - n / 6) < n / 60);
}

TEST_CASE("normal moments") {
  Rng rng(42);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  REQUIRE(std::abs(mean) < 0.01);
  REQUIRE(std::abs(sq / n - mean * mean - 1.0) < 0.02);
}

TEST_CASE("gamma mean matches its shape, including shape < 1") {
  for (double shape : {0.3, 1.0, 4.5}) {
    Rng rng(static_cast<std::uint64_t>(shape * 100));
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += rng.gamma(shape);
    REQUIRE(std::abs(sum / n - shape) < 0.05 * std::max(1.0, shape));
  }
}

TEST_CASE("dirichlet draws live on the simplex") {
  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    const auto v = rng.dirichlet(0.3, 10);
    const double sum = std::accumulate(v.begin(), v.end(), 0.0);
    REQUIRE(std::abs(sum - 1.0) < 1e-12);
    for (double x : v) REQUIRE(x >= 0.0);
  }
}

TEST_CASE("uniform_simplex sums to one") {
  Rng rng(6);
  for (int rep = 0; rep < 100; ++rep) {
    const auto v = rng.uniform_simplex(7);
    REQUIRE(std::abs(std::accumulate(v.begin(), v.end(), 0.0) - 1.0) < 1e-12);
    for (double x : v) REQUIRE(x > 0.0);
  }
}

TEST_CASE("permutation is a permutation") {
  Rng rng(9);
  auto p = rng.permutation(100);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) REQUIRE(p[i] == i);
}

TEST_CASE("derive_seed separates streams") {
  REQUIRE(page::derive_seed(1, 2, 3) != page::derive_seed(1, 2, 4));
  REQUIRE(page::derive_seed(1, 2, 3) != page::derive_seed(2, 2, 3));
  REQUIRE(page::derive_seed(1, 2, 3) == page::derive_seed(1, 2, 3));
}
