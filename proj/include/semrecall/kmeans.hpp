// Copyright 2026 The semrecall Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"
#include "semrecall/exact_search.hpp"

namespace semrecall {

struct KMeansResult {
  VectorSet centroids;
  std::vector<std::int32_t> assignment;   // doc -> centroid
  std::vector<double> objective;          // sum of squared distances, per iteration
};

/// Index of the nearest centroid (squared L2, ties to the lower index).
inline std::int32_t nearest_centroid(std::span<const float> v,
                                     const std::vector<float>& centroids,
                                     std::size_t dim, double* dist_out = nullptr) {
  std::size_t n = centroids.size() / dim;
  double best = std::numeric_limits<double>::infinity();
  std::int32_t arg = 0;
  for (std::size_t c = 0; c < n; ++c) {
    double d = squared_l2(v, {centroids.data() + c * dim, dim});
    if (d < best) {
      best = d;
      arg = std::int32_t(c);
    }
  }
  if (dist_out) *dist_out = best;
  return arg;
}

namespace detail {

inline std::vector<float> kmeanspp_init(const VectorSet& docs, std::size_t k,
                                        std::mt19937_64& rng) {
  const std::size_t n = docs.count(), dim = docs.dim();
  std::vector<float> centers;
  centers.reserve(k * dim);
  auto add = [&](std::size_t i) {
    auto r = docs.row(i);
    centers.insert(centers.end(), r.begin(), r.end());
  };
  add(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i)
    d2[i] = squared_l2(docs.row(i), {centers.data(), dim});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centers.size() < k * dim) {
    double total = 0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0) {
      double u = unit(rng) * total, acc = 0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > u && d2[i] > 0) { pick = i; break; }
      }
      while (d2[pick] == 0 && pick > 0) --pick;
    } else {
      // Fewer distinct points than centers.
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    add(pick);
    std::span<const float> c(centers.data() + centers.size() - dim, dim);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_l2(docs.row(i), c));
  }
  return centers;
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding. Empty clusters are reseeded from
/// the points farthest from their centroid. objective[i] is measured after
/// the i-th assignment step and never increases.
inline KMeansResult train_kmeans(const VectorSet& docs, std::size_t nlist,
                                 std::size_t iters, std::uint64_t seed,
                                 std::size_t threads = 0) {
  if (nlist == 0) throw InvalidArgument("train_kmeans: nlist must be positive");
  if (iters == 0) throw InvalidArgument("train_kmeans: iters must be positive");
  if (nlist > docs.count())
    throw InvalidArgument("train_kmeans: nlist=" + std::to_string(nlist) +
                          " exceeds doc count " + std::to_string(docs.count()));
  const std::size_t n = docs.count(), dim = docs.dim();
  std::mt19937_64 rng(seed);
  std::vector<float> centers = detail::kmeanspp_init(docs, nlist, rng);

  KMeansResult res;
  res.assignment.assign(n, -1);
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<std::int32_t> next(n);
    parallel_for(n, threads, [&](std::size_t i) {
      next[i] = nearest_centroid(docs.row(i), centers, dim, &dist[i]);
    });
    bool changed = next != res.assignment;
    res.assignment = std::move(next);
    double obj = 0;
    for (double d : dist) obj += d;
    res.objective.push_back(obj);
    if (!changed) break;

    std::vector<double> sums(nlist * dim, 0.0);
    std::vector<std::size_t> sizes(nlist, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = std::size_t(res.assignment[i]);
      ++sizes[c];
      auto r = docs.row(i);
      for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += r[j];
    }
    std::vector<float> means(nlist * dim);
    for (std::size_t c = 0; c < nlist; ++c) {
      if (sizes[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j)
        means[c * dim + j] = float(sums[c * dim + j] / double(sizes[c]));
    }
    // Float rounding of a mean can lose to the previous centroid once the
    // cluster has settled; keep whichever is cheaper.
    std::vector<double> cost_old(nlist, 0.0), cost_new(nlist, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = std::size_t(res.assignment[i]);
      cost_old[c] += dist[i];
      cost_new[c] += squared_l2(docs.row(i), {means.data() + c * dim, dim});
    }
    for (std::size_t c = 0; c < nlist; ++c) {
      if (sizes[c] == 0 || cost_new[c] > cost_old[c]) continue;
      std::copy_n(means.begin() + c * dim, dim, centers.begin() + c * dim);
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    std::size_t next_far = 0;
    for (std::size_t c = 0; c < nlist; ++c) {
      if (sizes[c] != 0) continue;
      auto p = order[next_far++];
      auto r = docs.row(p);
      std::copy(r.begin(), r.end(), centers.begin() + c * dim);
    }
  }
  res.centroids = VectorSet(dim, std::move(centers));
  return res;
}

}  // namespace semrecall
