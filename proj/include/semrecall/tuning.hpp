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

// Grid search over IVF search parameters: evaluate every configuration,
// filter to the Pareto front, and pick the cheapest configuration meeting a
// target on a chosen metric.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"
#include "semrecall/ivf.hpp"
#include "semrecall/metrics.hpp"

namespace semrecall {

struct TuningMetric {
  enum class Kind { Recall, SRecall, TRecall, RecallKEps };
  Kind kind = Kind::Recall;
  double param = 0;  // x (percent) for trecall, eps for recall_k_eps

  static TuningMetric recall() { return {Kind::Recall, 0}; }
  static TuningMetric srecall() { return {Kind::SRecall, 0}; }
  static TuningMetric trecall(double x) { return {Kind::TRecall, x}; }
  static TuningMetric recall_k_eps(double eps) { return {Kind::RecallKEps, eps}; }

  bool needs_judgments() const { return kind == Kind::SRecall; }

  std::string name() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::Recall: return "recall";
      case Kind::SRecall: return "srecall";
      case Kind::TRecall: os << "trecall(" << param << ")"; return os.str();
      case Kind::RecallKEps: os << "recall_k_eps(" << param << ")"; return os.str();
    }
    return "";
  }

  friend bool operator==(const TuningMetric&, const TuningMetric&) = default;
};

/// Accepts "recall", "srecall", "trecall" / "trecall:X", "recall_k_eps:E".
inline TuningMetric parse_tuning_metric(const std::string& s, double default_x = 1.0) {
  auto colon = s.find(':');
  std::string head = s.substr(0, colon);
  std::optional<double> arg;
  if (colon != std::string::npos) {
    try {
      arg = std::stod(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw InvalidArgument("bad metric parameter in " + s);
    }
  }
  if (head == "recall") return TuningMetric::recall();
  if (head == "srecall") return TuningMetric::srecall();
  if (head == "trecall") return TuningMetric::trecall(arg.value_or(default_x));
  if (head == "recall_k_eps") return TuningMetric::recall_k_eps(arg.value_or(0.0));
  throw InvalidArgument("unknown tuning metric " + s);
}

/// Means of every tunable metric for one configuration.
struct GridPoint {
  SearchParams params;
  double recall = 0;
  double trecall = 0;
  double recall_k_eps = 0;
  std::optional<double> srecall;  // over queries with defined srecall
  double cost = 0;                // mean bytes_read per query
  double inner_products = 0;      // mean per query
  std::uint64_t total_bytes = 0;
};

struct TuningTrial {
  SearchParams params;
  std::string metric_name;
  double achieved = 0;
  double cost = 0;
  double inner_products = 0;

  friend bool operator==(const TuningTrial&, const TuningTrial&) = default;
};

struct GridOptions {
  double tolerance_percent = 1.0;
  double eps = 0.0;
  std::size_t threads = 0;
};

/// Searches every configuration over all queries. Metrics use exactly
/// rescored scores; that rescoring is not charged to the cost.
inline std::vector<GridPoint> evaluate_grid(const IvfIndex& index, const VectorSet& queries,
                                            const GroundTruth& gt,
                                            const JudgmentSet* judgments,
                                            const std::vector<SearchParams>& grid,
                                            const GridOptions& opt = {}) {
  if (grid.empty()) throw InvalidArgument("tuning: empty grid");
  if (queries.count() != gt.num_queries())
    throw InvalidArgument("tuning: query count does not match ground truth");
  const std::size_t k = gt.k();
  for (const auto& p : grid) index.validate(p, k);
  std::vector<GridPoint> out;
  out.reserve(grid.size());
  for (const auto& p : grid) {
    auto rs = index.search_batch(queries, k, p, opt.threads);
    GridPoint g;
    g.params = p;
    std::uint64_t ip = 0;
    for (const auto& c : rs.costs) {
      g.total_bytes += c.bytes_read;
      ip += c.inner_products;
    }
    const double nq = double(queries.count());
    g.cost = double(g.total_bytes) / nq;
    g.inner_products = double(ip) / nq;
    std::vector<double> rec(queries.count()), tr(queries.count()), eps(queries.count());
    std::vector<std::optional<double>> sr(queries.count());
    parallel_for(queries.count(), opt.threads, [&](std::size_t q) {
      auto row = rescore_exact(rs.rows[q], queries.row(q), index.raw(), index.metric());
      rec[q] = recall_at_k(gt.rows[q], row);
      tr[q] = tolerant_recall(gt.rows[q], row, opt.tolerance_percent);
      eps[q] = recall_at_k_eps(gt.rows[q], row, opt.eps, index.metric());
      if (judgments) sr[q] = semantic_recall(gt.rows[q], *judgments, query_id_t(q), row);
    });
    double ssum = 0;
    std::size_t sn = 0;
    for (std::size_t q = 0; q < queries.count(); ++q) {
      g.recall += rec[q];
      g.trecall += tr[q];
      g.recall_k_eps += eps[q];
      if (sr[q]) {
        ssum += *sr[q];
        ++sn;
      }
    }
    g.recall /= nq;
    g.trecall /= nq;
    g.recall_k_eps /= nq;
    if (sn) g.srecall = ssum / double(sn);
    out.push_back(g);
  }
  return out;
}

/// Projects grid points onto one metric. The metric's parameter must match
/// the options the grid was evaluated with.
inline std::vector<TuningTrial> trials_for(const std::vector<GridPoint>& points,
                                           const TuningMetric& metric) {
  std::vector<TuningTrial> out;
  for (const auto& g : points) {
    double v = 0;
    switch (metric.kind) {
      case TuningMetric::Kind::Recall: v = g.recall; break;
      case TuningMetric::Kind::TRecall: v = g.trecall; break;
      case TuningMetric::Kind::RecallKEps: v = g.recall_k_eps; break;
      case TuningMetric::Kind::SRecall:
        if (!g.srecall) throw InvalidArgument("tuning: srecall requires judgments");
        v = *g.srecall;
        break;
    }
    out.push_back({g.params, metric.name(), v, g.cost, g.inner_products});
  }
  return out;
}

inline std::vector<TuningTrial> sweep(const IvfIndex& index, const VectorSet& queries,
                                      const GroundTruth& gt, const JudgmentSet* judgments,
                                      const TuningMetric& metric,
                                      const std::vector<SearchParams>& grid,
                                      std::size_t threads = 0) {
  if (metric.needs_judgments() && !judgments)
    throw InvalidArgument("tuning: metric " + metric.name() + " requires judgments");
  GridOptions opt;
  opt.threads = threads;
  if (metric.kind == TuningMetric::Kind::TRecall) opt.tolerance_percent = metric.param;
  if (metric.kind == TuningMetric::Kind::RecallKEps) opt.eps = metric.param;
  return trials_for(evaluate_grid(index, queries, gt, judgments, grid, opt), metric);
}

// ---------------------------------------------------------------------------
// Pareto front and target selection
// ---------------------------------------------------------------------------

inline bool dominates(const TuningTrial& a, const TuningTrial& b) {
  return (a.achieved >= b.achieved && a.cost < b.cost) ||
         (a.achieved > b.achieved && a.cost <= b.cost);
}

/// Cost ascending, then achieved descending, then params.
inline bool trial_order(const TuningTrial& a, const TuningTrial& b) {
  if (a.cost != b.cost) return a.cost < b.cost;
  if (a.achieved != b.achieved) return a.achieved > b.achieved;
  return a.params < b.params;
}

/// Non-dominated trials (ties kept) in trial_order.
inline std::vector<TuningTrial> pareto(std::vector<TuningTrial> trials) {
  if (trials.empty()) throw InvalidArgument("pareto: no trials");
  std::sort(trials.begin(), trials.end(), trial_order);
  std::vector<TuningTrial> front;
  // After sorting, a trial is dominated iff some earlier trial with strictly
  // lower cost reaches at least its value, or an equal-cost trial beats it.
  double best_lower_cost = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < trials.size();) {
    std::size_t j = i;
    while (j < trials.size() && trials[j].cost == trials[i].cost) ++j;
    const double top = trials[i].achieved;  // best within this cost level
    for (std::size_t t = i; t < j; ++t)
      if (trials[t].achieved == top && !(best_lower_cost >= top)) front.push_back(trials[t]);
    best_lower_cost = std::max(best_lower_cost, top);
    i = j;
  }
  return front;
}

class TargetUnreachable : public Error {
 public:
  TargetUnreachable(const std::string& metric, double target, double best)
      : Error("target " + std::to_string(target) + " on " + metric +
              " unreachable on this grid; best achieved " + std::to_string(best)),
        best_achieved(best) {}
  double best_achieved;
};

/// Cheapest trial with achieved >= target (ties: higher achieved, then params).
inline TuningTrial tune_for_target(const std::vector<TuningTrial>& trials, double target) {
  if (trials.empty()) throw InvalidArgument("tune_for_target: no trials");
  std::optional<TuningTrial> best;
  double best_achieved = -1;
  for (const auto& t : trials) {
    best_achieved = std::max(best_achieved, t.achieved);
    if (t.achieved >= target && (!best || trial_order(t, *best))) best = t;
  }
  if (!best) throw TargetUnreachable(trials.front().metric_name, target, best_achieved);
  return *best;
}

// ---------------------------------------------------------------------------
// Cost-savings comparison
// ---------------------------------------------------------------------------

struct SavingsComparison {
  std::string label;
  double target = 0;
  TuningTrial chosen;
  double savings_percent = 0;  // relative to the recall-tuned baseline
};

struct CostSavingsReport {
  double target = 0;
  double tolerance_percent = 0;
  TuningTrial baseline;  // recall >= target
  GridPoint baseline_point;
  std::vector<SavingsComparison> comparisons;
  std::vector<GridPoint> points;
};

inline double savings_percent(double base_cost, double cost) {
  return base_cost > 0 ? (base_cost - cost) / base_cost * 100.0 : 0.0;
}

/// (a) recall >= target; (b) trecall >= trecall of (a); (c) srecall >= srecall
/// of (a); (d) trecall >= target. Savings are relative to (a).
inline CostSavingsReport cost_savings_experiment(const std::vector<GridPoint>& points,
                                                 double tolerance_percent, double target) {
  CostSavingsReport r;
  r.target = target;
  r.tolerance_percent = tolerance_percent;
  r.points = points;
  auto rec = trials_for(points, TuningMetric::recall());
  auto tr = trials_for(points, TuningMetric::trecall(tolerance_percent));
  auto sr = trials_for(points, TuningMetric::srecall());
  r.baseline = tune_for_target(rec, target);
  for (const auto& p : points)
    if (p.params == r.baseline.params) r.baseline_point = p;
  const auto& bp = r.baseline_point;
  auto add = [&](std::string label, const std::vector<TuningTrial>& trials, double t) {
    auto chosen = tune_for_target(trials, t);
    r.comparisons.push_back(
        {std::move(label), t, chosen, savings_percent(r.baseline.cost, chosen.cost)});
  };
  add("trecall >= baseline trecall", tr, bp.trecall);
  add("srecall >= baseline srecall", sr, *bp.srecall);
  add("trecall >= target", tr, target);
  return r;
}

inline CostSavingsReport cost_savings_experiment(const IvfIndex& index, const VectorSet& queries,
                                                 const GroundTruth& gt,
                                                 const JudgmentSet& judgments,
                                                 double tolerance_percent, double target,
                                                 const std::vector<SearchParams>& grid,
                                                 std::size_t threads = 0) {
  GridOptions opt;
  opt.tolerance_percent = tolerance_percent;
  opt.threads = threads;
  return cost_savings_experiment(evaluate_grid(index, queries, gt, &judgments, grid, opt),
                                 tolerance_percent, target);
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

/// nprobe over {1, 2, 4, ..., nlist} (nlist always included) crossed with
/// the given reorder_k values; reorder values are dropped for unquantized
/// indexes, where rescoring has no effect.
inline std::vector<SearchParams> make_grid(std::size_t nlist,
                                           const std::vector<std::size_t>& reorder_values,
                                           bool quantized = true) {
  if (nlist == 0) throw InvalidArgument("make_grid: nlist must be positive");
  std::set<std::size_t> np;
  for (std::size_t p = 1; p < nlist; p *= 2) np.insert(p);
  np.insert(nlist);
  std::set<std::size_t> ro(reorder_values.begin(), reorder_values.end());
  if (!quantized || ro.empty()) ro = {0};
  std::vector<SearchParams> grid;
  for (auto p : np)
    for (auto r : ro) grid.push_back({p, r});
  return grid;
}

/// Adds nprobe values geometrically spaced between the incumbent's
/// neighbours on the grid, keeping its reorder_k. `steps` points per side.
inline std::vector<SearchParams> refine_grid(const std::vector<SearchParams>& grid,
                                             const SearchParams& incumbent, std::size_t nlist,
                                             std::size_t steps = 3) {
  std::set<std::size_t> np;
  for (const auto& p : grid) np.insert(p.nprobe);
  auto it = np.find(incumbent.nprobe);
  std::size_t lo = (it == np.begin() || it == np.end()) ? incumbent.nprobe : *std::prev(it);
  std::size_t hi = incumbent.nprobe;
  if (it != np.end() && std::next(it) != np.end()) hi = *std::next(it);
  std::set<SearchParams> out(grid.begin(), grid.end());
  auto fill = [&](std::size_t a, std::size_t b) {
    if (b <= a + 1) return;
    for (std::size_t s = 1; s <= steps; ++s) {
      double v = double(a) * std::pow(double(b) / double(a), double(s) / double(steps + 1));
      auto p = std::clamp<std::size_t>(std::size_t(std::lround(v)), 1, nlist);
      out.insert({p, incumbent.reorder_k});
    }
  };
  fill(lo, incumbent.nprobe);
  fill(incumbent.nprobe, hi);
  return {out.begin(), out.end()};
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const SearchParams& p) {
  return {{"nprobe", p.nprobe}, {"reorder_k", p.reorder_k}};
}

inline nlohmann::json to_json(const TuningTrial& t) {
  return {{"params", to_json(t.params)}, {"metric", t.metric_name}, {"achieved", t.achieved},
          {"cost_bytes", t.cost}, {"inner_products", t.inner_products}};
}

inline nlohmann::json to_json(const std::vector<TuningTrial>& ts) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& t : ts) a.push_back(to_json(t));
  return a;
}

inline nlohmann::json to_json(const GridPoint& g) {
  return {{"params", to_json(g.params)},
          {"recall", g.recall},
          {"trecall", g.trecall},
          {"recall_k_eps", g.recall_k_eps},
          {"srecall", g.srecall ? nlohmann::json(*g.srecall) : nlohmann::json(nullptr)},
          {"cost_bytes", g.cost},
          {"inner_products", g.inner_products}};
}

inline nlohmann::json to_json(const CostSavingsReport& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points) pts.push_back(to_json(p));
  nlohmann::json cmp = nlohmann::json::array();
  for (const auto& c : r.comparisons)
    cmp.push_back({{"objective", c.label}, {"target", c.target}, {"chosen", to_json(c.chosen)},
                   {"savings_percent", c.savings_percent}});
  return {{"target", r.target},
          {"tolerance_percent", r.tolerance_percent},
          {"baseline", {{"objective", "recall >= target"}, {"chosen", to_json(r.baseline)},
                        {"point", to_json(r.baseline_point)}}},
          {"comparisons", cmp},
          {"grid", pts}};
}

/// CSV of (metric, cost) pairs per trial, for recall-vs-cost plots.
inline std::string trials_csv(const std::vector<TuningTrial>& ts) {
  std::ostringstream os;
  os.precision(17);
  os << "nprobe,reorder_k,metric,achieved,cost_bytes,inner_products\n";
  for (const auto& t : ts)
    os << t.params.nprobe << ',' << t.params.reorder_k << ',' << t.metric_name << ','
       << t.achieved << ',' << t.cost << ',' << t.inner_products << '\n';
  return os.str();
}

inline std::string savings_text(const CostSavingsReport& r) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "baseline (recall >= %.4f): nprobe=%zu reorder_k=%zu cost=%.1f\n",
                r.target, r.baseline.params.nprobe, r.baseline.params.reorder_k, r.baseline.cost);
  os << buf;
  for (const auto& c : r.comparisons) {
    std::snprintf(buf, sizeof buf,
                  "%s (%.4f): nprobe=%zu reorder_k=%zu cost=%.1f, reduces cost by %.1f%%\n",
                  c.label.c_str(), c.target, c.chosen.params.nprobe, c.chosen.params.reorder_k,
                  c.chosen.cost, c.savings_percent);
    os << buf;
  }
  return os.str();
}

}  // namespace semrecall
