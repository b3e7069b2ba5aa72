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

// Descriptive statistics over judged ground truth and quantization error.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"
#include "semrecall/metrics.hpp"

namespace semrecall {

/// Semantic-neighbour count per query. Throws MissingJudgment on gaps.
inline std::vector<std::size_t> sn_counts(const GroundTruth& gt, const JudgmentSet& judgments) {
  std::vector<std::size_t> out(gt.num_queries());
  for (std::size_t q = 0; q < gt.num_queries(); ++q)
    out[q] = semantic_neighbors(gt.rows[q], judgments, query_id_t(q)).size();
  return out;
}

// ---------------------------------------------------------------------------
// SN histogram
// ---------------------------------------------------------------------------

struct Histogram {
  double bin_width = 1;
  std::vector<double> bin_left;
  std::vector<std::size_t> count;

  std::size_t total() const {
    std::size_t t = 0;
    for (auto c : count) t += c;
    return t;
  }
};

/// Two-column CSV: bin_left,count.
inline std::string histogram_csv(const Histogram& h) {
  std::ostringstream os;
  os.precision(17);
  os << "bin_left,count\n";
  for (std::size_t i = 0; i < h.count.size(); ++i) os << h.bin_left[i] << ',' << h.count[i] << '\n';
  return os.str();
}

struct SnHistogram {
  Histogram hist;             // bins from 0 through the bin holding the max count
  std::size_t k = 0;
  double low_fraction = 0;    // queries with SN <= 15% of k
  double high_fraction = 0;   // queries with SN >= 90% of k
};

inline SnHistogram sn_histogram(const GroundTruth& gt, const JudgmentSet& judgments,
                                std::size_t bin_width) {
  if (bin_width == 0) throw InvalidArgument("sn_histogram: bin width must be positive");
  if (gt.num_queries() == 0) throw InvalidArgument("sn_histogram: no queries");
  auto counts = sn_counts(gt, judgments);
  SnHistogram out;
  out.k = gt.k();
  out.hist.bin_width = double(bin_width);
  std::size_t max_bin = *std::max_element(counts.begin(), counts.end()) / bin_width;
  out.hist.count.assign(max_bin + 1, 0);
  for (std::size_t b = 0; b <= max_bin; ++b) out.hist.bin_left.push_back(double(b * bin_width));
  const double low = 0.15 * double(out.k), high = 0.90 * double(out.k);
  for (auto c : counts) {
    ++out.hist.count[c / bin_width];
    out.low_fraction += double(c) <= low;
    out.high_fraction += double(c) >= high;
  }
  out.low_fraction /= double(counts.size());
  out.high_fraction /= double(counts.size());
  return out;
}

inline nlohmann::json to_json(const SnHistogram& h) {
  nlohmann::json bins = nlohmann::json::array();
  for (std::size_t i = 0; i < h.hist.count.size(); ++i)
    bins.push_back({{"bin_left", h.hist.bin_left[i]}, {"count", h.hist.count[i]}});
  return {{"k", h.k},
          {"bin_width", h.hist.bin_width},
          {"bins", bins},
          {"bimodality", {{"low_fraction", h.low_fraction},
                          {"high_fraction", h.high_fraction},
                          {"low_rule", "SN <= 0.15 k"},
                          {"high_rule", "SN >= 0.90 k"}}}};
}

// ---------------------------------------------------------------------------
// Score and score-delta statistics per SN group
// ---------------------------------------------------------------------------

struct ScoreDeltaStats {
  std::string group;
  std::size_t n_queries = 0;
  MeanStd avg_score_sn, avg_score_non_sn;  // n = queries with >= 1 item in class
  MeanStd avg_delta_sn, avg_delta_non_sn;  // n = queries with >= 2 items in class
};

/// Per-query split of a ground-truth row into SN and non-SN scores, each in
/// descending order.
struct ScoreSplit {
  std::vector<double> sn, non_sn;
};

inline ScoreSplit split_scores(const RankedList& row, const JudgmentSet& judgments,
                               query_id_t q) {
  ScoreSplit s;
  for (const auto& n : row) {
    auto l = judgments.label(q, n.id);
    if (!l) throw MissingJudgment(q, n.id);
    (*l == Label::Relevant ? s.sn : s.non_sn).push_back(n.score);
  }
  std::sort(s.sn.begin(), s.sn.end(), std::greater<>());
  std::sort(s.non_sn.begin(), s.non_sn.end(), std::greater<>());
  return s;
}

/// Mean of consecutive differences of a descending list; nullopt below two items.
inline std::optional<double> mean_consecutive_delta(const std::vector<double>& desc) {
  if (desc.size() < 2) return std::nullopt;
  double s = 0;
  for (std::size_t i = 0; i + 1 < desc.size(); ++i) s += desc[i] - desc[i + 1];
  return s / double(desc.size() - 1);
}

/// Groups are "All queries" followed by one group per SN-count bin.
inline std::vector<ScoreDeltaStats> score_delta_stats(const GroundTruth& gt,
                                                      const JudgmentSet& judgments,
                                                      const std::vector<std::size_t>& edges) {
  if (!std::is_sorted(edges.begin(), edges.end()))
    throw InvalidArgument("score_delta_stats: bin edges must be ascending");
  auto names = sn_group_names(edges);
  names.insert(names.begin(), "All queries");
  struct Acc {
    std::size_t n = 0;
    std::vector<double> score_sn, score_non, delta_sn, delta_non;
  };
  std::vector<Acc> acc(names.size());
  for (std::size_t q = 0; q < gt.num_queries(); ++q) {
    auto split = split_scores(gt.rows[q], judgments, query_id_t(q));
    auto mean = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x;
      return s / double(v.size());
    };
    std::vector<std::size_t> targets = {0};
    if (!edges.empty()) targets.push_back(1 + sn_bin(split.sn.size(), edges));
    for (auto g : targets) {
      auto& a = acc[g];
      ++a.n;
      if (!split.sn.empty()) a.score_sn.push_back(mean(split.sn));
      if (!split.non_sn.empty()) a.score_non.push_back(mean(split.non_sn));
      if (auto d = mean_consecutive_delta(split.sn)) a.delta_sn.push_back(*d);
      if (auto d = mean_consecutive_delta(split.non_sn)) a.delta_non.push_back(*d);
    }
  }
  std::vector<ScoreDeltaStats> out;
  for (std::size_t g = 0; g < names.size(); ++g) {
    out.push_back({names[g], acc[g].n, mean_std(acc[g].score_sn), mean_std(acc[g].score_non),
                   mean_std(acc[g].delta_sn), mean_std(acc[g].delta_non)});
  }
  return out;
}

inline nlohmann::json to_json(const std::vector<ScoreDeltaStats>& stats) {
  auto ms = [](const MeanStd& m) {
    return nlohmann::json{{"mean", m.mean}, {"std", m.std}, {"n", m.n}};
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : stats)
    rows.push_back({{"group", s.group},
                    {"n_queries", s.n_queries},
                    {"avg_score_sn", ms(s.avg_score_sn)},
                    {"avg_score_non_sn", ms(s.avg_score_non_sn)},
                    {"avg_delta_sn", ms(s.avg_delta_sn)},
                    {"avg_delta_non_sn", ms(s.avg_delta_non_sn)}});
  return {{"groups", rows},
          {"notes", "mean of per-query means; std across queries (population); deltas "
                    "are consecutive differences within each class, needing >= 2 items"}};
}

inline std::string score_delta_csv(const std::vector<ScoreDeltaStats>& stats) {
  std::ostringstream os;
  os.precision(17);
  os << "group,n_queries,avg_score_sn,std,avg_score_non_sn,std,avg_delta_sn,std,"
        "avg_delta_non_sn,std\n";
  for (const auto& s : stats)
    os << '"' << s.group << "\"," << s.n_queries << ',' << s.avg_score_sn.mean << ','
       << s.avg_score_sn.std << ',' << s.avg_score_non_sn.mean << ',' << s.avg_score_non_sn.std
       << ',' << s.avg_delta_sn.mean << ',' << s.avg_delta_sn.std << ','
       << s.avg_delta_non_sn.mean << ',' << s.avg_delta_non_sn.std << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Rank-biserial correlation between relevance and ground-truth rank
// ---------------------------------------------------------------------------

enum class BiserialMode { Pooled, PerQueryMean };

/// r = 2 U / (n1 n0) - 1 where U counts (Relevant, NotRelevant) pairs with the
/// Relevant item at the larger rank (ties 1/2). Relevant-first gives -1.
inline double rank_biserial_from(const std::vector<std::pair<double, bool>>& rank_rel) {
  std::vector<std::size_t> order(rank_rel.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rank_rel[a].first < rank_rel[b].first;
  });
  double r1 = 0;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && rank_rel[order[j]].first == rank_rel[order[i]].first) ++j;
    double midrank = (double(i + 1) + double(j)) / 2;
    for (std::size_t t = i; t < j; ++t)
      if (rank_rel[order[t]].second) {
        r1 += midrank;
        ++n1;
      }
    i = j;
  }
  std::size_t n0 = rank_rel.size() - n1;
  if (n1 == 0 || n0 == 0) throw InvalidArgument("rank_biserial: a label group is empty");
  double u1 = r1 - double(n1) * double(n1 + 1) / 2;
  return 2 * u1 / (double(n1) * double(n0)) - 1;
}

/// Ranks are 1-based ground-truth positions. Queries are kept when
/// `sn_filter(sn_count)` holds. PerQueryMean averages over filtered queries
/// whose two groups are both non-empty.
inline double rank_biserial(const GroundTruth& gt, const JudgmentSet& judgments,
                            const std::function<bool(std::size_t)>& sn_filter,
                            BiserialMode mode = BiserialMode::Pooled) {
  std::vector<std::pair<double, bool>> pooled;
  double sum = 0;
  std::size_t used = 0;
  for (std::size_t q = 0; q < gt.num_queries(); ++q) {
    std::vector<std::pair<double, bool>> items;
    std::size_t sn = 0;
    for (std::size_t i = 0; i < gt.rows[q].size(); ++i) {
      auto l = judgments.label(query_id_t(q), gt.rows[q][i].id);
      if (!l) throw MissingJudgment(query_id_t(q), gt.rows[q][i].id);
      items.emplace_back(double(i + 1), *l == Label::Relevant);
      sn += *l == Label::Relevant;
    }
    if (sn_filter && !sn_filter(sn)) continue;
    if (mode == BiserialMode::Pooled) {
      pooled.insert(pooled.end(), items.begin(), items.end());
    } else if (sn > 0 && sn < items.size()) {
      sum += rank_biserial_from(items);
      ++used;
    }
  }
  if (mode == BiserialMode::Pooled) return rank_biserial_from(pooled);
  if (used == 0) throw InvalidArgument("rank_biserial: no query has both label groups");
  return sum / double(used);
}

// ---------------------------------------------------------------------------
// Quantization error summary
// ---------------------------------------------------------------------------

/// Nearest-rank percentile of an ascending sample: element ceil(p/100 * n).
inline double nearest_rank_percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("percentile of empty sample");
  if (!(p >= 0 && p <= 100)) throw InvalidArgument("percentile must be in [0, 100]");
  auto rank = std::size_t(std::ceil(p / 100.0 * double(sorted.size())));
  return sorted[rank == 0 ? 0 : rank - 1];
}

struct QuantErrorReport {
  std::size_t n = 0;
  double p50 = 0, p90 = 0, p99 = 0, max = 0, mean = 0;
  Histogram hist;
};

/// Errors are relative (fractions); the histogram spans [0, max] in `bins` bins.
inline QuantErrorReport quant_error_report(const std::vector<double>& errors,
                                           std::size_t bins = 50) {
  if (errors.empty()) throw InvalidArgument("quant_error_report: empty input");
  if (bins == 0) throw InvalidArgument("quant_error_report: bins must be positive");
  std::vector<double> s(errors);
  std::sort(s.begin(), s.end());
  QuantErrorReport r;
  r.n = s.size();
  r.p50 = nearest_rank_percentile(s, 50);
  r.p90 = nearest_rank_percentile(s, 90);
  r.p99 = nearest_rank_percentile(s, 99);
  r.max = s.back();
  for (double e : s) r.mean += e;
  r.mean /= double(s.size());
  if (r.max <= 0) bins = 1;
  r.hist.bin_width = r.max > 0 ? r.max / double(bins) : 1.0;
  r.hist.count.assign(bins, 0);
  for (std::size_t b = 0; b < bins; ++b) r.hist.bin_left.push_back(double(b) * r.hist.bin_width);
  for (double e : s) {
    auto b = std::size_t(e / r.hist.bin_width);
    ++r.hist.count[std::min(b, bins - 1)];
  }
  return r;
}

inline nlohmann::json to_json(const QuantErrorReport& r) {
  return {{"n", r.n}, {"p50", r.p50}, {"p90", r.p90}, {"p99", r.p99},
          {"max", r.max}, {"mean", r.mean}, {"bin_width", r.hist.bin_width},
          {"percentile_rule", "nearest rank"}};
}

}  // namespace semrecall
