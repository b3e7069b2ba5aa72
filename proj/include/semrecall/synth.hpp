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

// Synthetic corpora with planted relevance. Documents and queries are noisy
// copies of cluster centres on the unit sphere. Relevance is planted either
// geometrically (same cluster and within a radius of the query) or by
// placing m documents per query in a band of scores above the query's
// background neighbourhood, so relevant items tend to rank early but are
// interleaved with irrelevant near-duplicates at the tail.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"
#include "semrecall/exact_search.hpp"

namespace semrecall {

struct SameClusterWithinRadius {
  double radius = 0.5;
};

struct TopMPlanted {
  std::size_t m = 5;
};

using RelevanceRule = std::variant<SameClusterWithinRadius, TopMPlanted>;

struct SynthSpec {
  std::size_t n_docs = 10000;
  std::size_t dim = 64;
  std::size_t n_clusters = 50;
  double cluster_std = 0.1;
  std::size_t n_queries = 100;
  RelevanceRule rule = SameClusterWithinRadius{};
  std::uint64_t seed = 0;

  /// Per-query planted counts for TopMPlanted; overrides m when non-empty.
  std::vector<std::size_t> planted_counts;

  /// TopMPlanted score band: planted scores are drawn uniformly between the
  /// query's `band_rank`-th background score and `band_top` (in score units).
  std::size_t band_rank = 20;
  double band_top = 0.98;
};

/// Which (query, doc) pairs are relevant. Pairs not listed are irrelevant.
struct PlantedOracle {
  std::size_t n_docs = 0;
  std::vector<std::set<doc_id_t>> relevant;  // per query

  std::size_t n_queries() const { return relevant.size(); }

  std::size_t count(query_id_t q) const { return relevant.at(std::size_t(q)).size(); }

  /// Throws InvalidArgument for ids outside the generated corpus.
  bool is_relevant(query_id_t q, doc_id_t d) const {
    if (q < 0 || std::size_t(q) >= relevant.size())
      throw InvalidArgument("oracle does not cover query " + std::to_string(q));
    if (d < 0 || std::size_t(d) >= n_docs)
      throw InvalidArgument("oracle does not cover doc " + std::to_string(d));
    return relevant[std::size_t(q)].count(d) > 0;
  }

  friend bool operator==(const PlantedOracle&, const PlantedOracle&) = default;
};

struct SynthCorpus {
  VectorSet docs;
  QuerySet queries;
  PlantedOracle oracle;
  std::vector<std::int32_t> doc_cluster;    // -1 for planted docs
  std::vector<std::int32_t> query_cluster;
};

namespace detail {

inline void normalize(std::vector<float>& v, std::size_t off, std::size_t dim) {
  double s = 0;
  for (std::size_t j = 0; j < dim; ++j) s += double(v[off + j]) * double(v[off + j]);
  double n = std::sqrt(s);
  if (n == 0) {
    v[off] = 1.0f;
    return;
  }
  for (std::size_t j = 0; j < dim; ++j) v[off + j] = float(double(v[off + j]) / n);
}

}  // namespace detail

inline void validate(const SynthSpec& s) {
  if (s.dim == 0) throw InvalidArgument("synth: dim must be positive");
  if (s.n_clusters == 0) throw InvalidArgument("synth: n_clusters must be positive");
  if (s.n_clusters > s.n_docs)
    throw InvalidArgument("synth: n_clusters exceeds n_docs");
  if (!(s.cluster_std >= 0)) throw InvalidArgument("synth: cluster_std must be >= 0");
  if (auto* r = std::get_if<SameClusterWithinRadius>(&s.rule)) {
    if (!(r->radius > 0)) throw InvalidArgument("synth: radius must be positive");
  }
  if (auto* p = std::get_if<TopMPlanted>(&s.rule)) {
    if (!s.planted_counts.empty() && s.planted_counts.size() != s.n_queries)
      throw InvalidArgument("synth: planted_counts must have one entry per query");
    std::size_t total = 0;
    for (std::size_t q = 0; q < s.n_queries; ++q) {
      std::size_t m = s.planted_counts.empty() ? p->m : s.planted_counts[q];
      if (m > s.n_docs)
        throw InvalidArgument("synth: planted count " + std::to_string(m) +
                              " exceeds n_docs");
      total += m;
    }
    if (total + s.n_clusters > s.n_docs)
      throw InvalidArgument("synth: " + std::to_string(total) +
                            " planted docs leave too few background docs");
    if (s.band_rank == 0) throw InvalidArgument("synth: band_rank must be positive");
  }
}

/// Deterministic in spec.seed. All vectors are unit length.
inline SynthCorpus generate(const SynthSpec& spec) {
  validate(spec);
  const std::size_t dim = spec.dim;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<float> centers(spec.n_clusters * dim);
  for (std::size_t c = 0; c < spec.n_clusters; ++c) {
    for (std::size_t j = 0; j < dim; ++j) centers[c * dim + j] = float(gauss(rng));
    detail::normalize(centers, c * dim, dim);
  }
  auto noisy_copy = [&](std::vector<float>& out, std::size_t off, const float* base,
                        double sd) {
    for (std::size_t j = 0; j < dim; ++j) out[off + j] = float(double(base[j]) + sd * gauss(rng));
    detail::normalize(out, off, dim);
  };

  SynthCorpus out;
  std::uniform_int_distribution<std::int32_t> pick_cluster(0, std::int32_t(spec.n_clusters) - 1);
  std::vector<float> qdata(spec.n_queries * dim);
  out.query_cluster.resize(spec.n_queries);
  for (std::size_t q = 0; q < spec.n_queries; ++q) {
    auto c = pick_cluster(rng);
    out.query_cluster[q] = c;
    noisy_copy(qdata, q * dim, centers.data() + std::size_t(c) * dim, spec.cluster_std);
  }

  std::vector<std::size_t> planted(spec.n_queries, 0);
  if (auto* p = std::get_if<TopMPlanted>(&spec.rule)) {
    for (std::size_t q = 0; q < spec.n_queries; ++q)
      planted[q] = spec.planted_counts.empty() ? p->m : spec.planted_counts[q];
  }
  std::size_t n_planted = 0;
  for (auto m : planted) n_planted += m;
  const std::size_t n_background = spec.n_docs - n_planted;

  // Background docs; every cluster gets at least one member.
  std::vector<float> bg(n_background * dim);
  std::vector<std::int32_t> bg_cluster(n_background);
  for (std::size_t i = 0; i < n_background; ++i) {
    auto c = i < spec.n_clusters ? std::int32_t(i) : pick_cluster(rng);
    bg_cluster[i] = c;
    noisy_copy(bg, i * dim, centers.data() + std::size_t(c) * dim, spec.cluster_std);
  }

  // Final id layout: a seeded permutation so planted docs are not clustered
  // at the end of the id space.
  std::vector<std::size_t> slot(spec.n_docs);
  for (std::size_t i = 0; i < spec.n_docs; ++i) slot[i] = i;
  std::shuffle(slot.begin(), slot.end(), rng);

  std::vector<float> ddata(spec.n_docs * dim);
  out.doc_cluster.assign(spec.n_docs, -1);
  for (std::size_t i = 0; i < n_background; ++i) {
    std::copy_n(bg.begin() + i * dim, dim, ddata.begin() + slot[i] * dim);
    out.doc_cluster[slot[i]] = bg_cluster[i];
  }

  out.oracle.n_docs = spec.n_docs;
  out.oracle.relevant.assign(spec.n_queries, {});

  if (std::holds_alternative<TopMPlanted>(spec.rule)) {
    VectorSet bg_set(dim, bg);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t next = n_background;
    for (std::size_t q = 0; q < spec.n_queries; ++q) {
      if (planted[q] == 0) continue;
      std::span<const float> qv(qdata.data() + q * dim, dim);
      // Background score at band_rank bounds the band from below.
      std::size_t r = std::min(spec.band_rank, n_background);
      TopK top(r);
      for (std::size_t i = 0; i < n_background; ++i)
        top.push({doc_id_t(i), float(dot(qv, bg_set.row(i)))});
      auto best = top.take();
      double lo = std::clamp(double(best.back().score), -0.999, 0.999);
      double hi = std::max(lo, std::min(spec.band_top, 0.999));
      for (std::size_t m = 0; m < planted[q]; ++m) {
        double target = lo + unit(rng) * (hi - lo);
        // ||q + s g||^2 ~ 1 + dim s^2 for a unit q, so this noise level
        // puts the expected similarity near `target`.
        double sd = std::sqrt((1.0 / (target * target) - 1.0) / double(dim));
        if (target <= 0) sd = 10.0;
        std::size_t id = slot[next++];
        noisy_copy(ddata, id * dim, qdata.data() + q * dim, sd);
        out.oracle.relevant[q].insert(doc_id_t(id));
      }
    }
  } else {
    const double radius = std::get<SameClusterWithinRadius>(spec.rule).radius;
    VectorSet tmp(dim, ddata);
    for (std::size_t q = 0; q < spec.n_queries; ++q) {
      std::span<const float> qv(qdata.data() + q * dim, dim);
      for (std::size_t d = 0; d < spec.n_docs; ++d) {
        if (out.doc_cluster[d] != out.query_cluster[q]) continue;
        if (std::sqrt(squared_l2(qv, tmp.row(d))) <= radius)
          out.oracle.relevant[q].insert(doc_id_t(d));
      }
    }
  }

  out.docs = VectorSet(dim, std::move(ddata));
  out.queries = QuerySet(VectorSet(dim, std::move(qdata)));
  return out;
}

/// Per query: how many planted-relevant docs made it into the ground truth.
inline std::vector<std::size_t> realized_counts(const PlantedOracle& oracle,
                                                const GroundTruth& gt) {
  std::vector<std::size_t> out(gt.num_queries(), 0);
  for (std::size_t q = 0; q < gt.num_queries(); ++q)
    for (const auto& n : gt.rows[q]) out[q] += oracle.is_relevant(query_id_t(q), n.id);
  return out;
}

enum class SkewProfile { Bimodal, PowerLaw };

inline SkewProfile parse_profile(const std::string& s) {
  if (s == "bimodal") return SkewProfile::Bimodal;
  if (s == "powerlaw") return SkewProfile::PowerLaw;
  throw InvalidArgument("unknown skew profile \"" + s + "\"");
}

/// Low band [0, floor(0.15k)] and high band [k - ceil(0.1k), k] used by the
/// bimodal profile (0-15 and 90-100 at k = 100).
inline std::size_t bimodal_low_max(std::size_t k) { return (15 * k) / 100; }
inline std::size_t bimodal_high_min(std::size_t k) { return k - (k + 9) / 10; }

/// Rewrites planted counts so the per-query SN distribution follows the
/// profile at depth k. Bimodal: 45% of queries in the low band, 35% in the
/// high band, the rest in between. PowerLaw: 60% of queries with <= 4 SNs,
/// counts drawn with P(c) ~ (c+1)^-1.5 inside each part.
inline SynthSpec skew_profile(SynthSpec spec, SkewProfile profile, std::size_t k) {
  if (k == 0) throw InvalidArgument("skew_profile: k must be positive");
  const std::size_t n = spec.n_queries;
  std::mt19937_64 rng(spec.seed ^ 0x5eedf00dULL);
  auto uniform = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto powerlaw = [&](std::size_t lo, std::size_t hi) {
    std::vector<double> w;
    for (std::size_t c = lo; c <= hi; ++c) w.push_back(std::pow(double(c + 1), -1.5));
    std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
    return lo + dist(rng);
  };

  std::vector<std::size_t> counts(n);
  if (profile == SkewProfile::Bimodal) {
    std::size_t n_low = (45 * n + 99) / 100, n_high = (35 * n + 99) / 100;
    if (n_low + n_high > n) n_high = n - n_low;
    const std::size_t lo_max = bimodal_low_max(k), hi_min = bimodal_high_min(k);
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_low) counts[i] = uniform(0, lo_max);
      else if (i < n_low + n_high) counts[i] = uniform(hi_min, k);
      else counts[i] = lo_max + 1 <= hi_min - 1 ? uniform(lo_max + 1, hi_min - 1) : hi_min;
    }
  } else {
    std::size_t n_small = (60 * n + 50) / 100;
    for (std::size_t i = 0; i < n; ++i)
      counts[i] = i < n_small ? powerlaw(0, std::min<std::size_t>(4, k))
                              : (k > 4 ? powerlaw(5, k) : k);
  }
  std::shuffle(counts.begin(), counts.end(), rng);
  spec.planted_counts = std::move(counts);
  if (!std::holds_alternative<TopMPlanted>(spec.rule)) spec.rule = TopMPlanted{};
  return spec;
}

// Oracle JSONL: one {"query_id", "doc_id", "relevant": true} line per
// relevant pair; absent pairs are irrelevant.
inline void save_oracle(const PlantedOracle& o, const fs::path& path) {
  std::string buf;
  for (std::size_t q = 0; q < o.relevant.size(); ++q)
    for (auto d : o.relevant[q])
      buf += nlohmann::json({{"query_id", q}, {"doc_id", d}, {"relevant", true}}).dump() + "\n";
  detail::write_all(path, buf);
}

inline PlantedOracle load_oracle(const fs::path& path, std::size_t n_queries,
                                 std::size_t n_docs) {
  PlantedOracle o;
  o.n_docs = n_docs;
  o.relevant.assign(n_queries, {});
  detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t line) {
    auto q = j.at("query_id").get<std::int64_t>();
    auto d = j.at("doc_id").get<std::int64_t>();
    if (q < 0 || std::size_t(q) >= n_queries || d < 0 || std::size_t(d) >= n_docs)
      throw FormatError(path.string() + ": line " + std::to_string(line) +
                        ": id out of range");
    if (j.at("relevant").get<bool>()) o.relevant[std::size_t(q)].insert(doc_id_t(d));
  });
  return o;
}

}  // namespace semrecall
