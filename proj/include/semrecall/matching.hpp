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

// Bipartite matching between retrieved items and ground-truth items where a
// retrieved item t may stand in for a ground-truth item g when they are the
// same document or t.score >= g.score * (1 - x/100).
//
// Threshold edges alone give every retrieved item a neighbourhood that is a
// prefix of the ground truth ordered by g.score * factor, so a sorted sweep
// is already maximum. Identity edges can fall outside that prefix (negative
// scores, or scores that disagree with the ground truth), so the sweep is
// followed by an augmenting-path pass that certifies maximality.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"

namespace semrecall {

/// x is a percentage; factor = 1 - x/100.
inline bool tolerance_edge(const Neighbor& retrieved, const Neighbor& truth,
                           double factor) {
  return retrieved.id == truth.id ||
         double(retrieved.score) >= double(truth.score) * factor;
}

struct MatchingResult {
  std::size_t size = 0;
  std::vector<int> truth_of;  // retrieved index -> gt index, or -1
};

namespace detail {

inline void check_matching_inputs(std::span<const Neighbor> truth,
                                  std::span<const Neighbor> retrieved,
                                  double x_percent) {
  if (!std::isfinite(x_percent) || x_percent < 0)
    throw InvalidArgument("tolerance must be a finite non-negative percentage");
  for (const auto& n : truth)
    if (!std::isfinite(n.score)) throw InvalidArgument("non-finite ground-truth score");
  for (const auto& n : retrieved)
    if (!std::isfinite(n.score)) throw InvalidArgument("non-finite retrieved score");
}

}  // namespace detail

/// Sorted-threshold sweep over threshold edges only (identity edges are
/// used as a fallback for items whose prefix is exhausted). Maximum on pure
/// threshold structures; not guaranteed maximum once identity edges matter.
inline MatchingResult greedy_threshold_matching(std::span<const Neighbor> truth,
                                                std::span<const Neighbor> retrieved,
                                                double x_percent) {
  detail::check_matching_inputs(truth, retrieved, x_percent);
  const double factor = 1.0 - x_percent / 100.0;
  const std::size_t nt = retrieved.size(), ng = truth.size();

  std::vector<double> thr(ng);
  for (std::size_t g = 0; g < ng; ++g) thr[g] = double(truth[g].score) * factor;
  std::vector<std::size_t> g_order(ng), t_order(nt);
  std::iota(g_order.begin(), g_order.end(), 0);
  std::iota(t_order.begin(), t_order.end(), 0);
  std::stable_sort(g_order.begin(), g_order.end(),
                   [&](std::size_t a, std::size_t b) { return thr[a] < thr[b]; });
  std::stable_sort(t_order.begin(), t_order.end(), [&](std::size_t a, std::size_t b) {
    return retrieved[a].score < retrieved[b].score;
  });

  MatchingResult m;
  m.truth_of.assign(nt, -1);
  std::vector<char> used(ng, 0);
  std::size_t cursor = 0;  // first possibly-unmatched g in threshold order
  for (std::size_t t : t_order) {
    const double s = retrieved[t].score;
    while (cursor < ng && used[g_order[cursor]]) ++cursor;
    if (cursor < ng && thr[g_order[cursor]] <= s) {
      std::size_t g = g_order[cursor];
      used[g] = 1;
      m.truth_of[t] = int(g);
      ++m.size;
      continue;
    }
    for (std::size_t g = 0; g < ng; ++g) {
      if (!used[g] && truth[g].id == retrieved[t].id) {
        used[g] = 1;
        m.truth_of[t] = int(g);
        ++m.size;
        break;
      }
    }
  }
  return m;
}

/// Maximum matching under tolerance_edge: greedy sweep, then augmenting
/// paths (Kuhn) until none remain.
inline MatchingResult maximum_tolerant_matching(std::span<const Neighbor> truth,
                                                std::span<const Neighbor> retrieved,
                                                double x_percent) {
  MatchingResult m = greedy_threshold_matching(truth, retrieved, x_percent);
  const double factor = 1.0 - x_percent / 100.0;
  const std::size_t nt = retrieved.size(), ng = truth.size();
  if (m.size == std::min(nt, ng)) return m;

  std::vector<int> retrieved_of(ng, -1);
  for (std::size_t t = 0; t < nt; ++t)
    if (m.truth_of[t] >= 0) retrieved_of[std::size_t(m.truth_of[t])] = int(t);

  std::vector<char> visited(ng);
  // Iterative DFS would be needed for very large k; k here is a top-k depth.
  auto augment = [&](auto&& self, std::size_t t) -> bool {
    for (std::size_t g = 0; g < ng; ++g) {
      if (visited[g] || !tolerance_edge(retrieved[t], truth[g], factor)) continue;
      visited[g] = 1;
      if (retrieved_of[g] < 0 || self(self, std::size_t(retrieved_of[g]))) {
        retrieved_of[g] = int(t);
        m.truth_of[t] = int(g);
        return true;
      }
    }
    return false;
  };
  for (std::size_t t = 0; t < nt; ++t) {
    if (m.truth_of[t] >= 0) continue;
    std::fill(visited.begin(), visited.end(), 0);
    if (augment(augment, t)) ++m.size;
  }
  return m;
}

}  // namespace semrecall
