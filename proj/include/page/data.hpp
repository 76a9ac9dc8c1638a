#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "page/numerics.hpp"
#include "page/rng.hpp"
#include "page/serialize.hpp"

namespace page {

/// Labeled feature matrix. Rows are samples; labels index [0, num_classes).
struct Dataset {
  std::vector<double> features;  // n x dim, row-major
  std::vector<std::int64_t> labels;
  std::int64_t dim = 0;
  std::int64_t num_classes = 0;

  std::size_t size() const { return labels.size(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }

  void append_row(std::span<const double> x, std::int64_t y) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(y);
  }

  void validate() const {
    if (dim < 1 || num_classes < 2) throw std::invalid_argument("Dataset: bad dim/num_classes");
    if (features.size() != size() * static_cast<std::size_t>(dim))
      throw std::invalid_argument("Dataset: feature matrix shape mismatch");
    for (auto y : labels)
      if (y < 0 || y >= num_classes) throw std::invalid_argument("Dataset: label out of range");
    check_finite(features, "Dataset features");
  }
};

struct ClientData {
  Dataset train;
  Dataset test;
};

/// FedProx-style synthetic(a, b) generator configuration.
struct SyntheticConfig {
  int num_clients = 10;
  int dims = 10;
  int classes = 5;
  double a = 1.0;  // inter-client model variance
  double b = 1.0;  // inter-client feature-mean variance
  int mean_train_per_client = 210;
  int mean_test_per_client = 90;
  int server_test_size = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_clients < 1 || dims < 1 || classes < 2)
      throw std::invalid_argument("SyntheticConfig: need N >= 1, d >= 1, K >= 2");
    if (mean_train_per_client < 1 || mean_test_per_client < 1 || server_test_size < 1)
      throw std::invalid_argument("SyntheticConfig: sample sizes must be >= 1");
    if (a < 0.0 || b < 0.0) throw std::invalid_argument("SyntheticConfig: a, b must be >= 0");
  }
};

struct SyntheticData {
  std::vector<ClientData> clients;
  Dataset server_test;
};

namespace detail {

// Spread of each per-client sample count around its configured mean.
inline constexpr double kSyntheticSizeSigma = 0.25;

inline std::int64_t argmax_lowest_tie(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<std::int64_t>(best);
}

/// Largest-remainder apportionment of `total` into weighted integer counts.
/// Ties on the fractional part go to the lowest index.
inline std::vector<std::size_t> largest_remainder(const std::vector<double>& weights,
                                                  std::size_t total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(wsum > 0.0)) throw std::invalid_argument("largest_remainder: weights must sum > 0");
  const std::size_t n = weights.size();
  std::vector<std::size_t> counts(n);
  std::vector<std::pair<double, std::size_t>> fractional(n);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = static_cast<double>(total) * weights[i] / wsum;
    counts[i] = static_cast<std::size_t>(std::floor(target));
    assigned += counts[i];
    fractional[i] = {target - std::floor(target), i};
  }
  std::sort(fractional.begin(), fractional.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) counts[fractional[k % n].second]++;
  return counts;
}

}  // namespace detail

/**
 * Generates N non-IID client datasets plus a pooled server test set.
 *
 * Each client's ground-truth linear model is the shared base model plus
 * per-entry N(0, a) noise, and its feature-mean vector is the shared base
 * mean plus per-coordinate N(0, b) noise, so a = b = 0 collapses every
 * client onto one common distribution. Feature covariance is diagonal with
 * var_j = (j+1)^-1.2. Labels are the argmax of the client's true logits.
 * Per-client sample counts scatter around the configured means with a
 * lognormal multiplier; the server test set is drawn from the uniform
 * mixture over clients.
 */
inline SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int d = cfg.dims;
  const int k = cfg.classes;
  const int n = cfg.num_clients;
  const auto nc = static_cast<std::size_t>(n);

  std::vector<double> w_base(static_cast<std::size_t>(k) * d);
  std::vector<double> b_base(static_cast<std::size_t>(k));
  std::vector<double> mean_base(static_cast<std::size_t>(d));
  for (auto& v : w_base) v = rng.normal();
  for (auto& v : b_base) v = rng.normal();
  for (auto& v : mean_base) v = rng.normal();

  std::vector<double> feat_std(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j)
    feat_std[static_cast<std::size_t>(j)] = std::sqrt(std::pow(j + 1.0, -1.2));

  const double model_std = std::sqrt(cfg.a);
  const double mean_std = std::sqrt(cfg.b);
  // per-client ground truths, materialized up front in client order
  std::vector<std::vector<double>> w_client(nc), b_client(nc), mean_client(nc);
  std::vector<std::size_t> train_sizes(nc), test_sizes(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    w_client[i].resize(w_base.size());
    b_client[i].resize(b_base.size());
    mean_client[i].resize(mean_base.size());
    for (std::size_t e = 0; e < w_base.size(); ++e)
      w_client[i][e] = w_base[e] + rng.normal(0.0, model_std);
    for (std::size_t e = 0; e < b_base.size(); ++e)
      b_client[i][e] = b_base[e] + rng.normal(0.0, model_std);
    for (std::size_t e = 0; e < mean_base.size(); ++e)
      mean_client[i][e] = mean_base[e] + rng.normal(0.0, mean_std);
    const double mult = std::exp(rng.normal(0.0, detail::kSyntheticSizeSigma));
    train_sizes[i] = static_cast<std::size_t>(
        std::max<std::int64_t>(1, std::llround(cfg.mean_train_per_client * mult)));
    test_sizes[i] = static_cast<std::size_t>(
        std::max<std::int64_t>(1, std::llround(cfg.mean_test_per_client * mult)));
  }

  std::vector<double> x(static_cast<std::size_t>(d));
  std::vector<double> logits(static_cast<std::size_t>(k));
  auto draw_sample = [&](std::size_t client) -> std::int64_t {
    for (int j = 0; j < d; ++j) {
      const auto ji = static_cast<std::size_t>(j);
      x[ji] = rng.normal(mean_client[client][ji], feat_std[ji]);
    }
    for (int c = 0; c < k; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      double acc = b_client[client][ci];
      const double* wr = w_client[client].data() + ci * static_cast<std::size_t>(d);
      for (int j = 0; j < d; ++j) acc += wr[j] * x[static_cast<std::size_t>(j)];
      logits[ci] = acc;
    }
    return detail::argmax_lowest_tie(logits);
  };

  SyntheticData out;
  out.clients.resize(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    ClientData& cd = out.clients[i];
    for (Dataset* ds : {&cd.train, &cd.test}) {
      ds->dim = d;
      ds->num_classes = k;
    }
    for (std::size_t s = 0; s < train_sizes[i] + test_sizes[i]; ++s) {
      const std::int64_t y = draw_sample(i);
      (s < train_sizes[i] ? cd.train : cd.test).append_row(x, y);
    }
  }

  out.server_test.dim = d;
  out.server_test.num_classes = k;
  for (int s = 0; s < cfg.server_test_size; ++s) {
    const auto client = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
    const std::int64_t y = draw_sample(client);
    out.server_test.append_row(x, y);
  }
  return out;
}

namespace detail {

inline void check_partition_pre(const Dataset& source, int num_clients) {
  if (num_clients < 1) throw std::invalid_argument("partition: need at least one client");
  if (static_cast<std::size_t>(num_clients) > source.size())
    throw std::invalid_argument("partition: more clients than samples");
}

inline std::vector<Dataset> gather_clients(const Dataset& source,
                                           const std::vector<std::vector<std::size_t>>& assignment) {
  std::vector<Dataset> out(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    out[i].dim = source.dim;
    out[i].num_classes = source.num_classes;
    for (std::size_t idx : assignment[i]) out[i].append_row(source.row(idx), source.labels[idx]);
  }
  return out;
}

}  // namespace detail

/**
 * Label-skew partition: every client draws a class-proportion vector from a
 * symmetric Dirichlet(delta), and each class's samples are apportioned to
 * clients proportionally to those draws (largest-remainder rounding, exact
 * conservation). Requires every class of the source to be nonempty.
 */
inline std::vector<Dataset> partition_dirichlet(const Dataset& source, int num_clients,
                                                double delta, std::uint64_t seed) {
  detail::check_partition_pre(source, num_clients);
  if (!(delta > 0.0)) throw std::invalid_argument("partition_dirichlet: delta must be positive");
  const auto k = static_cast<std::size_t>(source.num_classes);

  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t idx = 0; idx < source.size(); ++idx)
    by_class[static_cast<std::size_t>(source.labels[idx])].push_back(idx);
  for (std::size_t c = 0; c < k; ++c)
    if (by_class[c].empty())
      throw std::invalid_argument("partition_dirichlet: source class " + std::to_string(c) +
                                  " is empty");

  Rng rng(seed);
  const auto nc = static_cast<std::size_t>(num_clients);
  std::vector<std::vector<double>> proportions(nc);
  for (auto& p : proportions) p = rng.dirichlet(delta, k);

  std::vector<std::vector<std::size_t>> assignment(nc);
  std::vector<double> class_weights(nc);
  for (std::size_t c = 0; c < k; ++c) {
    rng.shuffle(by_class[c]);
    for (std::size_t i = 0; i < nc; ++i) class_weights[i] = proportions[i][c];
    const auto counts = detail::largest_remainder(class_weights, by_class[c].size());
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t t = 0; t < counts[i]; ++t) assignment[i].push_back(by_class[c][cursor++]);
  }
  return detail::gather_clients(source, assignment);
}

/**
 * Quantity-skew partition: client sizes are proportional to exp(N(0, sigma^2))
 * draws (largest-remainder rounding); samples are assigned uniformly at
 * random by slicing a global shuffle.
 */
inline std::vector<Dataset> partition_quantity_lognormal(const Dataset& source, int num_clients,
                                                         double sigma, std::uint64_t seed) {
  detail::check_partition_pre(source, num_clients);
  if (!(sigma > 0.0)) throw std::invalid_argument("partition_quantity_lognormal: sigma must be positive");
  Rng rng(seed);
  const auto nc = static_cast<std::size_t>(num_clients);
  std::vector<double> sizes(nc);
  for (auto& s : sizes) s = std::exp(rng.normal(0.0, sigma));
  const auto counts = detail::largest_remainder(sizes, source.size());
  auto perm = rng.permutation(source.size());
  std::vector<std::vector<std::size_t>> assignment(nc);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t t = 0; t < counts[i]; ++t) assignment[i].push_back(perm[cursor++]);
  return detail::gather_clients(source, assignment);
}

/// Uniform partition: a global shuffle sliced into near-equal chunks.
inline std::vector<Dataset> partition_uniform(const Dataset& source, int num_clients,
                                              std::uint64_t seed) {
  detail::check_partition_pre(source, num_clients);
  Rng rng(seed);
  const auto nc = static_cast<std::size_t>(num_clients);
  std::vector<double> even(nc, 1.0);
  const auto counts = detail::largest_remainder(even, source.size());
  auto perm = rng.permutation(source.size());
  std::vector<std::vector<std::size_t>> assignment(nc);
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t t = 0; t < counts[i]; ++t) assignment[i].push_back(perm[cursor++]);
  return detail::gather_clients(source, assignment);
}

/// Shuffled split; |train| = round(fraction * n).
inline ClientData split_train_test(const Dataset& d, double fraction, std::uint64_t seed) {
  if (d.size() == 0) throw std::invalid_argument("split_train_test: empty dataset");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_train_test: fraction must be in (0, 1)");
  Rng rng(seed);
  const auto perm = rng.permutation(d.size());
  const auto n_train = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(d.size())));
  ClientData out;
  out.train.dim = out.test.dim = d.dim;
  out.train.num_classes = out.test.num_classes = d.num_classes;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    Dataset& dst = i < n_train ? out.train : out.test;
    dst.append_row(d.row(perm[i]), d.labels[perm[i]]);
  }
  return out;
}

// --- flat binary dataset format ---------------------------------------------
// [n i64][dim i64][num_classes i64][features n*dim f64][labels n i64], all LE.

inline void save_dataset(const Dataset& d, std::ostream& os) {
  write_i64(os, static_cast<std::int64_t>(d.size()));
  write_i64(os, d.dim);
  write_i64(os, d.num_classes);
  for (double v : d.features) write_f64(os, v);
  for (auto y : d.labels) write_i64(os, y);
}

inline Dataset load_dataset(std::istream& is) {
  Dataset d;
  const std::int64_t n = read_i64(is);
  d.dim = read_i64(is);
  d.num_classes = read_i64(is);
  if (n < 0 || d.dim < 1 || d.num_classes < 2)
    throw std::runtime_error("load_dataset: corrupt header");
  d.features.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(d.dim));
  for (auto& v : d.features) v = read_f64(is);
  d.labels.resize(static_cast<std::size_t>(n));
  for (auto& y : d.labels) y = read_i64(is);
  return d;
}

inline void save_dataset_file(const Dataset& d, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_dataset(d, os);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Dataset load_dataset_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return load_dataset(is);
}

}  // namespace page
