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

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"

namespace semrecall {

/// Similarity used for ranking. Euclidean is exposed as a negated distance so
/// every ranked list sorts "score descending".
enum class Metric { InnerProduct, Euclidean };

inline const char* to_string(Metric m) {
  return m == Metric::InnerProduct ? "ip" : "l2";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "ip" || s == "inner_product" || s == "InnerProduct")
    return Metric::InnerProduct;
  if (s == "l2" || s == "euclidean" || s == "Euclidean") return Metric::Euclidean;
  throw InvalidArgument("unknown metric \"" + s + "\" (expected ip or l2)");
}

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) s += double(a[j]) * double(b[j]);
  return s;
}

inline double squared_l2(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    double d = double(a[j]) - double(b[j]);
    s += d * d;
  }
  return s;
}

/// InnerProduct: sum q_j d_j. Euclidean: -||q - d||. 64-bit accumulation.
inline double score(std::span<const float> query, std::span<const float> doc,
                    Metric metric) {
  if (query.size() != doc.size())
    throw InvalidArgument("score: dim mismatch (" + std::to_string(query.size()) +
                          " vs " + std::to_string(doc.size()) + ")");
  if (metric == Metric::InnerProduct) return dot(query, doc);
  return -std::sqrt(squared_l2(query, doc));
}

/// Distance implied by a stored similarity: 1 - s for inner product on unit
/// vectors, -s for Euclidean (which stores negated distances).
inline double distance_from_score(double s, Metric metric) {
  return metric == Metric::InnerProduct ? 1.0 - s : -s;
}

/// Keeps the k best candidates under ranks_before; the final list is sorted.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  void push(Neighbor n) {
    if (k_ == 0) return;
    // Max-heap on "ranks worse" so heap_.front() is the current worst.
    auto worse = [](const Neighbor& a, const Neighbor& b) {
      return ranks_before(a, b);
    };
    if (heap_.size() < k_) {
      heap_.push_back(n);
      std::push_heap(heap_.begin(), heap_.end(), worse);
    } else if (ranks_before(n, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), worse);
      heap_.back() = n;
      std::push_heap(heap_.begin(), heap_.end(), worse);
    }
  }

  RankedList take() {
    std::sort(heap_.begin(), heap_.end(), ranks_before);
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  RankedList heap_;
};

/// Exact top-k for every query; parallel over queries only, so output does
/// not depend on `threads`.
inline GroundTruth brute_force_topk(const VectorSet& queries,
                                    const VectorSet& docs, std::size_t k,
                                    Metric metric, std::size_t threads = 0) {
  if (k == 0) throw InvalidArgument("brute_force_topk: k must be positive");
  if (queries.count() > 0 && queries.dim() != docs.dim())
    throw InvalidArgument("brute_force_topk: query dim " +
                          std::to_string(queries.dim()) + " != doc dim " +
                          std::to_string(docs.dim()));
  if (k > docs.count())
    throw InvalidArgument("brute_force_topk: k=" + std::to_string(k) +
                          " exceeds doc count " + std::to_string(docs.count()));
  GroundTruth gt;
  gt.rows.resize(queries.count());
  parallel_for(queries.count(), threads, [&](std::size_t q) {
    TopK top(k);
    auto qv = queries.row(q);
    for (std::size_t d = 0; d < docs.count(); ++d)
      top.push({doc_id_t(d), float(score(qv, docs.row(d), metric))});
    gt.rows[q] = top.take();
  });
  return gt;
}

/// Replaces each row's scores with exact scores against the raw vectors and
/// re-sorts. Used before tolerance-based metrics.
inline RankedList rescore_exact(const RankedList& row, std::span<const float> query,
                                const VectorSet& docs, Metric metric) {
  RankedList out;
  out.reserve(row.size());
  for (const auto& n : row)
    out.push_back({n.id, float(score(query, docs.row(std::size_t(n.id)), metric))});
  std::sort(out.begin(), out.end(), ranks_before);
  return out;
}

}  // namespace semrecall
