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

// Inverted-file (IVF) index with optional 8-bit scalar quantization, exact
// rescoring of the best quantized candidates, and byte-level cost accounting.

#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"
#include "semrecall/exact_search.hpp"
#include "semrecall/kmeans.hpp"

namespace semrecall {

/// Per-dimension affine 8-bit quantizer fitted over a whole collection.
/// Constant dimensions get step 0 and always encode to 0.
struct ScalarQuantizer {
  std::vector<double> min;
  std::vector<double> step;

  static constexpr int kLevels = 255;

  static ScalarQuantizer fit(const VectorSet& v) {
    ScalarQuantizer q;
    const std::size_t dim = v.dim();
    q.min.assign(dim, std::numeric_limits<double>::infinity());
    std::vector<double> max(dim, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < v.count(); ++i) {
      auto r = v.row(i);
      for (std::size_t j = 0; j < dim; ++j) {
        q.min[j] = std::min(q.min[j], double(r[j]));
        max[j] = std::max(max[j], double(r[j]));
      }
    }
    q.step.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      if (v.count() == 0) q.min[j] = max[j] = 0;
      q.step[j] = (max[j] - q.min[j]) / kLevels;
    }
    return q;
  }

  std::size_t dim() const { return min.size(); }

  std::uint8_t encode(std::size_t j, float x) const {
    if (step[j] == 0) return 0;
    double c = std::round((double(x) - min[j]) / step[j]);
    return std::uint8_t(std::clamp(c, 0.0, double(kLevels)));
  }

  double decode(std::size_t j, std::uint8_t code) const {
    return min[j] + double(code) * step[j];
  }

  friend bool operator==(const ScalarQuantizer&, const ScalarQuantizer&) = default;
};

struct SearchParams {
  std::size_t nprobe = 1;
  std::size_t reorder_k = 0;  // 0 disables exact rescoring
  friend bool operator==(const SearchParams&, const SearchParams&) = default;
  friend auto operator<=>(const SearchParams&, const SearchParams&) = default;
};

struct SearchResult {
  RankedList neighbors;
  CostReport cost;
};

class IvfIndex {
 public:
  IvfIndex() = default;

  Metric metric() const { return metric_; }
  std::size_t nlist() const { return centroids_.count(); }
  std::size_t dim() const { return centroids_.dim(); }
  std::size_t size() const { return raw_ ? raw_->count() : 0; }
  bool quantized() const { return quantized_; }
  const VectorSet& centroids() const { return centroids_; }
  const std::vector<std::vector<doc_id_t>>& lists() const { return lists_; }
  const ScalarQuantizer& quantizer() const { return sq_; }
  const VectorSet& raw() const { return *raw_; }

  std::span<const std::uint8_t> code(std::size_t doc) const {
    return {codes_.data() + doc * dim(), dim()};
  }

  double quantized_score(std::span<const float> query, std::size_t doc) const {
    auto c = code(doc);
    if (metric_ == Metric::InnerProduct) {
      double s = 0;
      for (std::size_t j = 0; j < c.size(); ++j) s += double(query[j]) * sq_.decode(j, c[j]);
      return s;
    }
    double s = 0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      double d = double(query[j]) - sq_.decode(j, c[j]);
      s += d * d;
    }
    return -std::sqrt(s);
  }

  /// Partitions ordered by centroid distance to the query (Euclidean, ties to
  /// the lower partition id). Probing nprobe partitions takes a prefix.
  std::vector<std::size_t> probe_order(std::span<const float> query) const {
    std::vector<double> d(nlist());
    for (std::size_t c = 0; c < nlist(); ++c) d[c] = squared_l2(query, centroids_.row(c));
    std::vector<std::size_t> order(nlist());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    return order;
  }

  void validate(const SearchParams& p, std::size_t k) const {
    if (p.nprobe == 0 || p.nprobe > nlist())
      throw InvalidArgument("nprobe must be in [1, " + std::to_string(nlist()) +
                            "], got " + std::to_string(p.nprobe));
    if (p.reorder_k > 0 && p.reorder_k < k)
      throw InvalidArgument("reorder_k (" + std::to_string(p.reorder_k) +
                            ") must be >= k (" + std::to_string(k) + ")");
    if (k == 0) throw InvalidArgument("k must be positive");
    if (k > size())
      throw InvalidArgument("k=" + std::to_string(k) + " exceeds index size " +
                            std::to_string(size()));
  }

  /// Probes the nprobe nearest partitions, scores candidates (on codes when
  /// quantized), optionally rescores the best reorder_k exactly, returns the
  /// top k. Rescoring is a no-op on unquantized indexes.
  ///
  /// bytes_read = nlist*dim*4 + scanned*dim*(1 or 4) + rescored*dim*4.
  /// inner_products counts centroid, candidate and rescoring evaluations.
  SearchResult search(std::span<const float> query, std::size_t k,
                      const SearchParams& params) const {
    validate(params, k);
    if (query.size() != dim())
      throw InvalidArgument("search: query dim " + std::to_string(query.size()) +
                            " != index dim " + std::to_string(dim()));
    const std::uint64_t d = dim();
    SearchResult out;
    out.cost.bytes_read += nlist() * d * 4;
    out.cost.inner_products += nlist();

    auto order = probe_order(query);
    bool rescore = quantized_ && params.reorder_k > 0;
    TopK top(rescore ? params.reorder_k : k);
    for (std::size_t p = 0; p < params.nprobe; ++p) {
      for (doc_id_t id : lists_[order[p]]) {
        double s = quantized_ ? quantized_score(query, std::size_t(id))
                              : score(query, raw_->row(std::size_t(id)), metric_);
        top.push({id, float(s)});
        out.cost.bytes_read += quantized_ ? d : d * 4;
        out.cost.inner_products += 1;
      }
    }
    auto cands = top.take();
    if (!rescore) {
      out.neighbors = std::move(cands);
      return out;
    }
    TopK exact(k);
    for (const auto& c : cands) {
      exact.push({c.id, float(score(query, raw_->row(std::size_t(c.id)), metric_))});
      out.cost.bytes_read += d * 4;
      out.cost.inner_products += 1;
    }
    out.neighbors = exact.take();
    return out;
  }

  RetrievedSet search_batch(const VectorSet& queries, std::size_t k,
                            const SearchParams& params, std::size_t threads = 0) const {
    validate(params, k);
    RetrievedSet rs;
    rs.rows.resize(queries.count());
    rs.costs.resize(queries.count());
    parallel_for(queries.count(), threads, [&](std::size_t q) {
      auto r = search(queries.row(q), k, params);
      rs.rows[q] = std::move(r.neighbors);
      rs.costs[q] = r.cost;
    });
    return rs;
  }

  friend IvfIndex build_index(std::shared_ptr<const VectorSet> docs,
                              const VectorSet& centroids, bool quantize,
                              Metric metric, std::size_t threads);
  friend IvfIndex load_index(const fs::path& dir, std::shared_ptr<const VectorSet> docs);

 private:
  Metric metric_ = Metric::InnerProduct;
  VectorSet centroids_;
  std::vector<std::vector<doc_id_t>> lists_;
  bool quantized_ = false;
  ScalarQuantizer sq_;
  std::vector<std::uint8_t> codes_;
  std::shared_ptr<const VectorSet> raw_;
};

/// Assigns every doc to its nearest centroid and, when `quantize`, fits the
/// global per-dimension quantizer and stores codes.
inline IvfIndex build_index(std::shared_ptr<const VectorSet> docs,
                            const VectorSet& centroids, bool quantize,
                            Metric metric = Metric::InnerProduct,
                            std::size_t threads = 0) {
  if (!docs) throw InvalidArgument("build_index: null doc set");
  if (centroids.count() == 0) throw InvalidArgument("build_index: no centroids");
  if (centroids.dim() != docs->dim())
    throw InvalidArgument("build_index: centroid dim " + std::to_string(centroids.dim()) +
                          " != doc dim " + std::to_string(docs->dim()));
  IvfIndex idx;
  idx.metric_ = metric;
  idx.centroids_ = centroids;
  idx.raw_ = docs;
  const std::size_t n = docs->count(), dim = docs->dim();
  std::vector<std::int32_t> assign(n);
  parallel_for(n, threads, [&](std::size_t i) {
    assign[i] = nearest_centroid(docs->row(i), centroids.data(), dim);
  });
  idx.lists_.assign(centroids.count(), {});
  for (std::size_t i = 0; i < n; ++i) idx.lists_[std::size_t(assign[i])].push_back(doc_id_t(i));
  idx.quantized_ = quantize;
  if (quantize) {
    idx.sq_ = ScalarQuantizer::fit(*docs);
    idx.codes_.resize(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
      auto r = docs->row(i);
      for (std::size_t j = 0; j < dim; ++j) idx.codes_[i * dim + j] = idx.sq_.encode(j, r[j]);
    }
  }
  return idx;
}

struct QuantErrorSample {
  std::vector<double> errors;  // |s_full - s_quant| / |s_full|
  std::vector<double> bounds;  // sum_j |q_j| step_j / 2 / |s_full|, same order
  std::size_t skipped = 0;     // pairs with |s_full| < 1e-9
};

/// Relative score error of `sample` random (query, doc) pairs.
inline QuantErrorSample quantized_score_error(const IvfIndex& index,
                                              const VectorSet& queries,
                                              std::size_t sample,
                                              std::uint64_t seed = 0) {
  if (!index.quantized())
    throw InvalidArgument("quantized_score_error: index is not quantized");
  if (sample == 0) throw InvalidArgument("quantized_score_error: sample must be positive");
  if (queries.count() == 0 || index.size() == 0)
    throw InvalidArgument("quantized_score_error: empty queries or index");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_q(0, queries.count() - 1);
  std::uniform_int_distribution<std::size_t> pick_d(0, index.size() - 1);
  const auto& sq = index.quantizer();
  QuantErrorSample out;
  for (std::size_t s = 0; s < sample; ++s) {
    auto q = queries.row(pick_q(rng));
    std::size_t d = pick_d(rng);
    double full = score(q, index.raw().row(d), index.metric());
    if (std::abs(full) < 1e-9) {
      ++out.skipped;
      continue;
    }
    double quant = index.quantized_score(q, d);
    double bound = 0;
    for (std::size_t j = 0; j < q.size(); ++j) bound += std::abs(double(q[j])) * sq.step[j] / 2;
    out.errors.push_back(std::abs(full - quant) / std::abs(full));
    out.bounds.push_back(bound / std::abs(full));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: centroids.fvecs, assignments.ivecs, codes.bvecs,
// quantizer.json, meta.json. Raw vectors are supplied at load time.
// ---------------------------------------------------------------------------

inline void save_index(const IvfIndex& idx, const fs::path& dir) {
  fs::create_directories(dir);
  save_vectors(idx.centroids(), dir / "centroids.fvecs");
  std::vector<std::vector<std::int32_t>> lists(idx.lists().begin(), idx.lists().end());
  write_vecs_records(dir / "assignments.ivecs", lists);
  nlohmann::json meta = {{"nlist", idx.nlist()},
                         {"dim", idx.dim()},
                         {"count", idx.size()},
                         {"metric", to_string(idx.metric())},
                         {"quantized", idx.quantized()}};
  detail::write_all(dir / "meta.json", meta.dump(2) + "\n");
  if (idx.quantized()) {
    std::vector<std::vector<std::uint8_t>> codes;
    codes.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto c = idx.code(i);
      codes.emplace_back(c.begin(), c.end());
    }
    write_vecs_records(dir / "codes.bvecs", codes);
    nlohmann::json q = {{"min", idx.quantizer().min}, {"step", idx.quantizer().step}};
    detail::write_all(dir / "quantizer.json", q.dump() + "\n");
  }
}

inline IvfIndex load_index(const fs::path& dir, std::shared_ptr<const VectorSet> docs) {
  if (!docs) throw InvalidArgument("load_index: null doc set");
  nlohmann::json meta;
  {
    std::ifstream in(dir / "meta.json");
    if (!in) throw IoError("cannot open " + (dir / "meta.json").string());
    in >> meta;
  }
  IvfIndex idx;
  idx.metric_ = parse_metric(meta.at("metric").get<std::string>());
  idx.quantized_ = meta.value("quantized", false);
  idx.raw_ = docs;
  idx.centroids_ = load_vectors(dir / "centroids.fvecs");
  auto dim = meta.at("dim").get<std::size_t>();
  auto count = meta.at("count").get<std::size_t>();
  if (idx.centroids_.dim() != dim || idx.centroids_.count() != meta.at("nlist").get<std::size_t>())
    throw FormatError(dir.string() + ": centroids disagree with meta.json");
  if (docs->dim() != dim || docs->count() != count)
    throw FormatError(dir.string() + ": raw vectors do not match index meta");
  auto lists = read_vecs_records<std::int32_t>(dir / "assignments.ivecs");
  if (lists.size() != idx.nlist())
    throw FormatError(dir.string() + ": expected one assignment record per partition");
  std::vector<int> seen(count, 0);
  for (auto& l : lists) {
    for (auto id : l) {
      if (id < 0 || std::size_t(id) >= count || seen[std::size_t(id)]++)
        throw FormatError(dir.string() + ": doc " + std::to_string(id) +
                          " missing, duplicated or out of range in assignments");
    }
    idx.lists_.emplace_back(l.begin(), l.end());
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw FormatError(dir.string() + ": some docs are not assigned to any partition");
  if (idx.quantized_) {
    auto codes = read_vecs_records<std::uint8_t>(dir / "codes.bvecs");
    if (codes.size() != count) throw FormatError(dir.string() + ": code count mismatch");
    idx.codes_.reserve(count * dim);
    for (auto& c : codes) {
      if (c.size() != dim) throw FormatError(dir.string() + ": code dim mismatch");
      idx.codes_.insert(idx.codes_.end(), c.begin(), c.end());
    }
    std::ifstream in(dir / "quantizer.json");
    if (!in) throw IoError("cannot open " + (dir / "quantizer.json").string());
    nlohmann::json q;
    in >> q;
    idx.sq_.min = q.at("min").get<std::vector<double>>();
    idx.sq_.step = q.at("step").get<std::vector<double>>();
    if (idx.sq_.dim() != dim || idx.sq_.step.size() != dim)
      throw FormatError(dir.string() + ": quantizer dim mismatch");
  }
  return idx;
}

}  // namespace semrecall
