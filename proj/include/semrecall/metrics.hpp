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

// Retrieval-quality metrics. Each per-query function takes one ground-truth
// row (exact top-k, sorted) and one retrieved row. Scores on the retrieved
// side must be exact similarities for the tolerance- and distance-based
// metrics; see rescore_exact().

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"
#include "semrecall/exact_search.hpp"
#include "semrecall/matching.hpp"

namespace semrecall {

/// A ground-truth item has no judgment; metrics refuse to guess.
class MissingJudgment : public InvalidArgument {
 public:
  MissingJudgment(query_id_t q, doc_id_t d)
      : InvalidArgument("missing judgment for query " + std::to_string(q) +
                        ", doc " + std::to_string(d)),
        query_id(q),
        doc_id(d) {}
  query_id_t query_id;
  doc_id_t doc_id;
};

// ---------------------------------------------------------------------------
// Per-query metrics
// ---------------------------------------------------------------------------

/// |gt ∩ retrieved| / k, with k = |gt|. A short retrieved list counts its
/// missing slots as misses.
inline double recall_at_k(const RankedList& gt, const RankedList& retrieved) {
  if (gt.empty()) throw InvalidArgument("recall_at_k: empty ground truth");
  if (retrieved.size() > gt.size())
    throw InvalidArgument("recall_at_k: size mismatch (" + std::to_string(gt.size()) +
                          " vs " + std::to_string(retrieved.size()) + ")");
  std::set<doc_id_t> truth;
  for (const auto& n : gt) truth.insert(n.id);
  std::size_t hit = 0;
  for (const auto& n : retrieved) hit += truth.count(n.id);
  return double(hit) / double(gt.size());
}

/// Ground-truth ids judged Relevant (the query's semantic neighbours).
inline std::set<doc_id_t> semantic_neighbors(const RankedList& gt,
                                             const JudgmentSet& judgments,
                                             query_id_t q) {
  std::set<doc_id_t> sn;
  for (const auto& n : gt) {
    auto l = judgments.label(q, n.id);
    if (!l) throw MissingJudgment(q, n.id);
    if (*l == Label::Relevant) sn.insert(n.id);
  }
  return sn;
}

/// |retrieved ∩ SN| / |SN|; nullopt when SN is empty.
inline std::optional<double> semantic_recall(const RankedList& gt,
                                             const JudgmentSet& judgments,
                                             query_id_t q,
                                             const RankedList& retrieved) {
  auto sn = semantic_neighbors(gt, judgments, q);
  if (sn.empty()) return std::nullopt;
  std::size_t hit = 0;
  for (const auto& n : retrieved) hit += sn.count(n.id);
  return double(hit) / double(sn.size());
}

/// |T| / k where T is a maximum matching of retrieved to ground-truth items
/// (same id, or retrieved score >= gt score * (1 - x/100)).
inline double tolerant_recall(const RankedList& gt, const RankedList& retrieved,
                              double x_percent) {
  if (gt.empty()) throw InvalidArgument("tolerant_recall: empty ground truth");
  if (retrieved.size() > gt.size())
    throw InvalidArgument("tolerant_recall: size mismatch");
  auto m = maximum_tolerant_matching(gt, retrieved, x_percent);
  return double(m.size) / double(gt.size());
}

/// Fraction of k slots filled by a retrieved item whose distance is within
/// (1 + eps) of the k-th ground-truth distance.
inline double recall_at_k_eps(const RankedList& gt, const RankedList& retrieved,
                              double eps, Metric metric) {
  if (!(eps >= 0)) throw InvalidArgument("recall_at_k_eps: eps must be >= 0");
  if (gt.empty()) throw InvalidArgument("recall_at_k_eps: empty ground truth");
  if (retrieved.size() > gt.size())
    throw InvalidArgument("recall_at_k_eps: size mismatch");
  const double dk = distance_from_score(gt.back().score, metric);
  const double limit = (1.0 + eps) * dk;
  std::size_t ok = 0;
  for (const auto& n : retrieved)
    if (distance_from_score(n.score, metric) <= limit) ++ok;
  return double(ok) / double(gt.size());
}

/// |top-R(retrieved) ∩ SN| / R with R = |SN|; nullopt when R = 0.
inline std::optional<double> r_precision(const RankedList& gt,
                                         const JudgmentSet& judgments, query_id_t q,
                                         const RankedList& retrieved) {
  auto sn = semantic_neighbors(gt, judgments, q);
  if (sn.empty()) return std::nullopt;
  std::size_t r = sn.size(), hit = 0;
  for (std::size_t i = 0; i < std::min(r, retrieved.size()); ++i)
    hit += sn.count(retrieved[i].id);
  return double(hit) / double(r);
}

struct RdeResult {
  double value = 0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // ranks with ground-truth distance < 1e-9
};

/// Mean over ranks of (d(retrieved_i) - d(gt_i)) / d(gt_i).
inline RdeResult relative_distance_error(const RankedList& gt,
                                         const RankedList& retrieved, Metric metric) {
  RdeResult r;
  double sum = 0;
  for (std::size_t i = 0; i < std::min(gt.size(), retrieved.size()); ++i) {
    double dg = distance_from_score(gt[i].score, metric);
    if (dg < 1e-9) {
      ++r.skipped;
      continue;
    }
    sum += (distance_from_score(retrieved[i].score, metric) - dg) / dg;
    ++r.used;
  }
  r.value = r.used ? sum / double(r.used) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Tolerance threshold selection
// ---------------------------------------------------------------------------

/// 1-based rank used as the "late neighbour" reference: ceil(2k/3).
inline std::size_t proxy_reference_rank(std::size_t k) { return (2 * k + 2) / 3; }

struct ToleranceProxy {
  double x = 0;               // percentage
  std::size_t used = 0;
  std::vector<query_id_t> skipped;  // top score <= 0
};

/// Mean over queries of (score[ceil(2k/3)] - score[k]) / score[1] * 100.
inline ToleranceProxy tolerance_proxy(const GroundTruth& gt, std::size_t k) {
  if (k == 0) throw InvalidArgument("tolerance_proxy: k must be positive");
  if (k > gt.k())
    throw InvalidArgument("tolerance_proxy: k=" + std::to_string(k) +
                          " exceeds ground-truth depth " + std::to_string(gt.k()));
  ToleranceProxy p;
  double sum = 0;
  const std::size_t ref = proxy_reference_rank(k);
  for (std::size_t q = 0; q < gt.num_queries(); ++q) {
    const auto& row = gt.rows[q];
    double top = row[0].score;
    if (!(top > 0)) {
      p.skipped.push_back(query_id_t(q));
      continue;
    }
    sum += (double(row[ref - 1].score) - double(row[k - 1].score)) / top * 100.0;
    ++p.used;
  }
  if (!p.skipped.empty())
    warn("tolerance_proxy: skipped " + std::to_string(p.skipped.size()) +
         " queries with non-positive top score");
  if (p.used == 0) throw InvalidArgument("tolerance_proxy: no usable queries");
  p.x = sum / double(p.used);
  return p;
}

struct ToleranceCalibration {
  std::vector<std::pair<double, double>> curve;  // (x, mean trecall)
  double mean_srecall = 0;
  std::size_t srecall_queries = 0;
  std::optional<double> first_grid_x;   // smallest grid x with trecall >= srecall
  std::optional<double> x_at_srecall;   // interpolated crossing
};

/// Mean trecall over all queries at each grid x, and where it first reaches
/// mean srecall (over queries with a defined srecall).
inline ToleranceCalibration calibrate_tolerance(const GroundTruth& gt,
                                                const JudgmentSet& judgments,
                                                const RetrievedSet& retrieved,
                                                const std::vector<double>& grid) {
  if (grid.empty()) throw InvalidArgument("calibrate_tolerance: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw InvalidArgument("calibrate_tolerance: grid must be sorted ascending");
  if (retrieved.num_queries() != gt.num_queries())
    throw InvalidArgument("calibrate_tolerance: query count mismatch");
  ToleranceCalibration c;
  double ssum = 0;
  for (std::size_t q = 0; q < gt.num_queries(); ++q) {
    auto s = semantic_recall(gt.rows[q], judgments, query_id_t(q), retrieved.rows[q]);
    if (s) {
      ssum += *s;
      ++c.srecall_queries;
    }
  }
  if (c.srecall_queries == 0)
    throw InvalidArgument("calibrate_tolerance: semantic recall undefined for all queries");
  c.mean_srecall = ssum / double(c.srecall_queries);
  for (double x : grid) {
    double t = 0;
    for (std::size_t q = 0; q < gt.num_queries(); ++q)
      t += tolerant_recall(gt.rows[q], retrieved.rows[q], x);
    c.curve.emplace_back(x, gt.num_queries() ? t / double(gt.num_queries()) : 0.0);
  }
  for (std::size_t i = 0; i < c.curve.size(); ++i) {
    if (c.curve[i].second < c.mean_srecall) continue;
    c.first_grid_x = c.curve[i].first;
    if (i == 0) {
      c.x_at_srecall = c.curve[0].first;
    } else {
      auto [x0, y0] = c.curve[i - 1];
      auto [x1, y1] = c.curve[i];
      c.x_at_srecall = y1 == y0 ? x1 : x0 + (c.mean_srecall - y0) / (y1 - y0) * (x1 - x0);
    }
    break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Batch evaluation and aggregation
// ---------------------------------------------------------------------------

struct QueryEvaluation {
  query_id_t query_id = 0;
  double recall = 0;
  std::optional<double> srecall;
  double trecall = 0;
  double recall_k_eps = 0;
  std::optional<double> r_precision;
  double rde = 0;
  std::optional<std::size_t> sn_count;  // absent when no judgments supplied
};

struct EvaluationOptions {
  double tolerance_percent = 1.0;
  double eps = 0.0;
  Metric metric = Metric::InnerProduct;
};

/// Every metric for every query. `retrieved` scores must be exact.
inline std::vector<QueryEvaluation> evaluate_queries(const GroundTruth& gt,
                                                     const RetrievedSet& retrieved,
                                                     const JudgmentSet* judgments,
                                                     const EvaluationOptions& opt,
                                                     std::size_t threads = 1) {
  if (retrieved.num_queries() != gt.num_queries())
    throw InvalidArgument("evaluate: " + std::to_string(gt.num_queries()) +
                          " ground-truth queries vs " +
                          std::to_string(retrieved.num_queries()) + " retrieved");
  bool nonpositive = false;
  for (const auto& row : gt.rows)
    for (const auto& n : row) nonpositive |= n.score <= 0;
  if (nonpositive)
    warn("ground truth contains scores <= 0; tolerance condition applied literally");
  std::vector<QueryEvaluation> out(gt.num_queries());
  parallel_for(gt.num_queries(), threads, [&](std::size_t q) {
    const auto& g = gt.rows[q];
    const auto& r = retrieved.rows[q];
    auto& e = out[q];
    e.query_id = query_id_t(q);
    e.recall = recall_at_k(g, r);
    e.trecall = tolerant_recall(g, r, opt.tolerance_percent);
    e.recall_k_eps = recall_at_k_eps(g, r, opt.eps, opt.metric);
    e.rde = relative_distance_error(g, r, opt.metric).value;
    if (judgments) {
      e.sn_count = semantic_neighbors(g, *judgments, e.query_id).size();
      e.srecall = semantic_recall(g, *judgments, e.query_id, r);
      e.r_precision = r_precision(g, *judgments, e.query_id, r);
    }
  });
  return out;
}

struct AggregateRow {
  std::string group;
  std::string metric;
  std::size_t n = 0;         // queries contributing
  std::size_t excluded = 0;  // queries in group with the metric undefined
  double mean = 0;
  double std = 0;            // population standard deviation
};

struct AggregateTable {
  std::vector<AggregateRow> rows;
  std::vector<std::pair<std::string, std::size_t>> groups;  // name, query count

  const AggregateRow* find(const std::string& group, const std::string& metric) const {
    for (const auto& r : rows)
      if (r.group == group && r.metric == metric) return &r;
    return nullptr;
  }
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"recall", "srecall", "trecall",
                                                 "recall_k_eps", "r_precision", "rde"};
  return names;
}

inline std::optional<double> metric_value(const QueryEvaluation& e, const std::string& m) {
  if (m == "recall") return e.recall;
  if (m == "srecall") return e.srecall;
  if (m == "trecall") return e.trecall;
  if (m == "recall_k_eps") return e.recall_k_eps;
  if (m == "r_precision") return e.r_precision;
  if (m == "rde") return e.rde;
  throw InvalidArgument("unknown metric name " + m);
}

/// Group labels for SN-count bins with edges e_1 < ... < e_n.
inline std::vector<std::string> sn_group_names(const std::vector<std::size_t>& edges) {
  std::vector<std::string> names;
  if (edges.empty()) return names;
  names.push_back("Queries with < " + std::to_string(edges.front()) + " SN");
  for (std::size_t i = 0; i + 1 < edges.size(); ++i)
    names.push_back("Queries with " + std::to_string(edges[i]) + " to " +
                    std::to_string(edges[i + 1]) + " SN");
  names.push_back("Queries with >= " + std::to_string(edges.back()) + " SN");
  return names;
}

/// Bin index for an SN count: 0 for < e_1, i for [e_i, e_{i+1}), n for >= e_n.
inline std::size_t sn_bin(std::size_t sn, const std::vector<std::size_t>& edges) {
  return std::size_t(std::upper_bound(edges.begin(), edges.end(), sn) - edges.begin());
}

struct MeanStd {
  double mean = 0, std = 0;
  std::size_t n = 0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  m.n = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= double(v.size());
  double ss = 0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / double(v.size()));
  return m;
}

/// Macro means and population stds per metric for "All queries" and for each
/// SN-count bin (bins need sn_count; queries without it only enter "All").
inline AggregateTable aggregate(const std::vector<QueryEvaluation>& evals,
                                const std::vector<std::size_t>& bin_edges) {
  if (evals.empty()) throw InvalidArgument("aggregate: no evaluations");
  if (!std::is_sorted(bin_edges.begin(), bin_edges.end()))
    throw InvalidArgument("aggregate: bin edges must be ascending");
  const auto names = sn_group_names(bin_edges);
  std::vector<std::pair<std::string, std::vector<const QueryEvaluation*>>> groups;
  groups.emplace_back("All queries", std::vector<const QueryEvaluation*>{});
  for (const auto& n : names) groups.emplace_back(n, std::vector<const QueryEvaluation*>{});
  for (const auto& e : evals) {
    groups[0].second.push_back(&e);
    if (e.sn_count && !names.empty())
      groups[1 + sn_bin(*e.sn_count, bin_edges)].second.push_back(&e);
  }
  AggregateTable t;
  for (const auto& [name, members] : groups) {
    t.groups.emplace_back(name, members.size());
    for (const auto& m : metric_names()) {
      std::vector<double> vals;
      std::size_t excluded = 0;
      for (const auto* e : members) {
        auto v = metric_value(*e, m);
        if (v) vals.push_back(*v);
        else ++excluded;
      }
      auto ms = mean_std(vals);
      t.rows.push_back({name, m, ms.n, excluded, ms.mean, ms.std});
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One row per query per metric; undefined values are written as "undefined".
inline std::string evaluations_csv(const std::vector<QueryEvaluation>& evals) {
  std::ostringstream os;
  os.precision(17);
  os << "query_id,metric,value\n";
  for (const auto& e : evals) {
    for (const auto& m : metric_names()) {
      auto v = metric_value(e, m);
      os << e.query_id << ',' << m << ',';
      if (v) os << *v;
      else os << "undefined";
      os << '\n';
    }
    if (e.sn_count) os << e.query_id << ",sn_count," << *e.sn_count << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const AggregateTable& t) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& [name, count] : t.groups) {
    nlohmann::json g = {{"group", name}, {"n_queries", count}};
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& r : t.rows) {
      if (r.group != name) continue;
      metrics[r.metric] = {{"mean", r.mean}, {"std", r.std}, {"n", r.n},
                           {"excluded", r.excluded}};
    }
    g["metrics"] = metrics;
    groups.push_back(g);
  }
  return {{"groups", groups},
          {"notes", "macro averages over queries; std is the population standard "
                    "deviation; undefined values are excluded and counted"}};
}

/// Fixed-width text table: traditional / semantic / tolerant recall per group.
inline std::string summary_table(const AggregateTable& t) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %8s %8s %8s %8s %8s %8s\n", "",
                "recall", "std", "srecall", "std", "trecall", "std");
  os << buf;
  for (const auto& [name, count] : t.groups) {
    auto r = t.find(name, "recall");
    auto s = t.find(name, "srecall");
    auto tr = t.find(name, "trecall");
    std::snprintf(buf, sizeof buf, "%-28s %8.3f %8.3f %8.3f %8.3f %8.3f %8.3f\n",
                  name.c_str(), r->mean, r->std, s->mean, s->std, tr->mean, tr->std);
    os << buf;
  }
  return os.str();
}

}  // namespace semrecall
