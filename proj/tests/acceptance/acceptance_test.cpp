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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "semrecall/semrecall.hpp"
#include "test_util.hpp"

namespace semrecall {
namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Accumulates the first few failure messages for a criterion.
struct Checker {
  Outcome out;
  std::size_t failures = 0;

  void expect(bool cond, const std::string& what) {
    if (cond) return;
    out.pass = false;
    if (++failures <= 3) out.detail += (out.detail.empty() ? "" : "; ") + what;
  }
  void note(const std::string& s) {
    if (out.pass) out.detail += (out.detail.empty() ? "" : "; ") + s;
  }
  Outcome done() {
    if (failures > 3) out.detail += "; " + std::to_string(failures - 3) + " more failures";
    return out;
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Criterion 1: matching equals brute force
// ---------------------------------------------------------------------------

// A retrieved item either shares an id (and score) with gt item j, or is a
// fresh doc whose score sits in gap `level` of the sorted thresholds
// (level 0: below every threshold, level k: above all of them).
struct Slot {
  int shared = -1;
  int level = 0;
};

// Visits every multiset of k slots: fresh levels repeat freely, each gt id
// is shared at most once.
void for_each_configuration(std::size_t k, const std::function<void(const std::vector<Slot>&)>& fn) {
  std::vector<Slot> types;
  for (int l = 0; l <= int(k); ++l) types.push_back({-1, l});
  for (int j = 0; j < int(k); ++j) types.push_back({j, 0});
  std::vector<Slot> cur;
  std::function<void(std::size_t)> rec = [&](std::size_t from) {
    if (cur.size() == k) {
      fn(cur);
      return;
    }
    for (std::size_t t = from; t < types.size(); ++t) {
      cur.push_back(types[t]);
      // Shared types are used at most once; fresh types may repeat.
      rec(types[t].shared >= 0 ? t + 1 : t);
      cur.pop_back();
    }
  };
  rec(0);
}

std::pair<RankedList, RankedList> realize(const std::vector<Slot>& slots, double x) {
  const std::size_t k = slots.size();
  const double factor = 1.0 - x / 100.0;
  RankedList g;
  for (std::size_t j = 0; j < k; ++j) g.push_back({doc_id_t(j), float(1.0 - 0.05 * double(j))});
  // Thresholds ascending: gt item k-1 has the lowest.
  std::vector<double> thr;
  for (std::size_t j = k; j-- > 0;) thr.push_back(double(g[j].score) * factor);
  RankedList t;
  doc_id_t fresh = 1000;
  for (const auto& s : slots) {
    if (s.shared >= 0) {
      t.push_back(g[std::size_t(s.shared)]);
      continue;
    }
    double lo = s.level == 0 ? thr[0] - 0.04 : thr[std::size_t(s.level) - 1];
    double hi = s.level == int(k) ? thr.back() + 0.04 : thr[std::size_t(s.level)];
    t.push_back({fresh++, float((lo + hi) / 2)});
  }
  std::sort(g.begin(), g.end(), ranks_before);
  std::sort(t.begin(), t.end(), ranks_before);
  return {g, t};
}

Outcome criterion1() {
  auto t0 = Clock::now();
  Checker c;
  std::size_t exhaustive = 0;
  for (std::size_t k = 1; k <= 7; ++k)
    for (double x : {0.0, 5.0})
      for_each_configuration(k, [&](const std::vector<Slot>& slots) {
        auto [g, t] = realize(slots, x);
        auto got = maximum_tolerant_matching(g, t, x).size;
        auto want = oracle::max_matching_bruteforce(g, t, x);
        ++exhaustive;
        c.expect(got == want, "k=" + std::to_string(k) + " x=" + fmt(x, 1) + ": " +
                                  std::to_string(got) + " vs " + std::to_string(want));
      });
  std::mt19937_64 rng(20260101);
  std::uniform_int_distribution<std::size_t> kd(1, 12);
  std::uniform_real_distribution<double> xd(0, 40);
  for (int i = 0; i < 1000; ++i) {
    auto [g, t] = oracle::random_instance(kd(rng), rng);
    double x = xd(rng);
    auto got = maximum_tolerant_matching(g, t, x).size;
    auto want = oracle::max_matching_bruteforce(g, t, x);
    c.expect(got == want, "random instance " + std::to_string(i));
  }
  double secs = seconds_since(t0);
  c.expect(secs < 60, "took " + fmt(secs, 1) + " s");
  c.note(std::to_string(exhaustive) + " exhaustive + 1000 random instances, " +
         fmt(secs, 1) + " s");
  return c.done();
}

// ---------------------------------------------------------------------------
// Criterion 2: metric properties on random instances
// ---------------------------------------------------------------------------

RankedList scaled(const RankedList& r, float s) {
  auto out = r;
  for (auto& n : out) n.score *= s;
  return out;
}

bool distinct_scores(const RankedList& g, const RankedList& t) {
  std::vector<float> s;
  for (const auto& n : g) s.push_back(n.score);
  for (const auto& n : t)
    if (n.id >= 1000) s.push_back(n.score);
  std::sort(s.begin(), s.end());
  return std::adjacent_find(s.begin(), s.end()) == s.end();
}

Outcome criterion2() {
  Checker c;
  std::mt19937_64 rng(424242);
  std::uniform_int_distribution<std::size_t> kd(1, 20);
  std::bernoulli_distribution rel(0.4), empty_sn(0.1);
  const std::vector<double> xs = {0, 0.5, 1, 2, 5, 10, 25, 50, 100};
  const std::vector<double> eps = {0, 0.01, 0.05, 0.1, 0.5, 1, 5};
  std::size_t distinct = 0, undefined = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::string tag = "instance " + std::to_string(i);
    auto [g, t] = oracle::topk_instance(kd(rng), rng);
    JudgmentSet js;
    bool none = empty_sn(rng);
    std::size_t sn = 0;
    for (const auto& n : g) {
      bool r = !none && rel(rng);
      sn += r;
      js.add({0, n.id, r ? Label::Relevant : Label::NotRelevant, "j"});
    }
    const double recall = recall_at_k(g, t);

    double prev = -1;
    for (double x : xs) {
      double tr = tolerant_recall(g, t, x);
      c.expect(tr >= prev, tag + ": trecall not monotone at x=" + fmt(x, 1));
      c.expect(tr >= recall, tag + ": trecall < recall at x=" + fmt(x, 1));
      prev = tr;
    }
    if (distinct_scores(g, t)) {
      ++distinct;
      c.expect(tolerant_recall(g, t, 0) == recall, tag + ": trecall(0) != recall");
    }
    prev = -1;
    for (double e : eps) {
      double r = recall_at_k_eps(g, t, e, Metric::InnerProduct);
      c.expect(r >= prev, tag + ": recall@k-eps not monotone at eps=" + fmt(e, 2));
      prev = r;
    }

    for (float s : {0.25f, 2.0f, 8.0f}) {
      auto gs = scaled(g, s), ts = scaled(t, s);
      c.expect(recall_at_k(gs, ts) == recall, tag + ": recall not scale invariant");
      c.expect(semantic_recall(gs, js, 0, ts) == semantic_recall(g, js, 0, t),
               tag + ": srecall not scale invariant");
      c.expect(r_precision(gs, js, 0, ts) == r_precision(g, js, 0, t),
               tag + ": r-precision not scale invariant");
      for (double x : {0.0, 1.0, 10.0})
        c.expect(tolerant_recall(gs, ts, x) == tolerant_recall(g, t, x),
                 tag + ": trecall not scale invariant");
    }

    auto sr = semantic_recall(g, js, 0, t);
    undefined += !sr;
    c.expect(sr.has_value() == (sn > 0), tag + ": srecall definedness != (SN nonempty)");
  }
  c.note("10000 instances, " + std::to_string(distinct) + " with distinct scores, " +
         std::to_string(undefined) + " with empty SN");
  return c.done();
}

// ---------------------------------------------------------------------------
// Criteria 3 and 4: IVF exactness and quantization on a 10k x 64 corpus
// ---------------------------------------------------------------------------

struct IvfFixture {
  SynthCorpus synth;
  std::shared_ptr<VectorSet> docs;
  GroundTruth gt;
  KMeansResult km;
};

IvfFixture& ivf_fixture() {
  static IvfFixture f = [] {
    IvfFixture out;
    SynthSpec s;
    s.n_docs = 10000;
    s.dim = 64;
    s.n_queries = 100;
    s.seed = 17;
    out.synth = generate(s);
    out.docs = std::make_shared<VectorSet>(out.synth.docs);
    out.gt = brute_force_topk(out.synth.queries, *out.docs, 20, Metric::InnerProduct);
    out.km = train_kmeans(*out.docs, 100, 10, 17);
    return out;
  }();
  return f;
}

std::vector<doc_id_t> ids(const RankedList& r) {
  std::vector<doc_id_t> out;
  for (const auto& n : r) out.push_back(n.id);
  return out;
}

Outcome criterion3() {
  auto t0 = Clock::now();
  auto& f = ivf_fixture();
  Checker c;
  auto idx = build_index(f.docs, f.km.centroids, false);
  auto rs = idx.search_batch(f.synth.queries, 20, {idx.nlist(), 0});
  for (std::size_t q = 0; q < rs.num_queries(); ++q)
    c.expect(ids(rs.rows[q]) == ids(f.gt.rows[q]), "query " + std::to_string(q) + " differs");
  double secs = seconds_since(t0);
  c.expect(secs < 30, "took " + fmt(secs, 1) + " s");
  c.note("100 queries id-for-id, " + fmt(secs, 1) + " s");
  return c.done();
}

Outcome criterion4() {
  auto t0 = Clock::now();
  auto& f = ivf_fixture();
  Checker c;
  auto idx = build_index(f.docs, f.km.centroids, true);
  auto sample = quantized_score_error(idx, f.synth.queries, 20000, 17);
  double worst = 0;
  for (std::size_t i = 0; i < sample.errors.size(); ++i) {
    worst = std::max(worst, sample.errors[i] / sample.bounds[i]);
    c.expect(sample.errors[i] <= sample.bounds[i] * (1 + 1e-12),
             "sample " + std::to_string(i) + " exceeds bound");
  }
  auto rs = idx.search_batch(f.synth.queries, 20, {idx.nlist(), 20});
  std::size_t exact = 0;
  for (std::size_t q = 0; q < rs.num_queries(); ++q) {
    bool same = ids(rs.rows[q]) == ids(f.gt.rows[q]);
    exact += same;
    c.expect(same, "query " + std::to_string(q) + " rescored ids differ");
  }
  double secs = seconds_since(t0);
  c.expect(secs < 60, "took " + fmt(secs, 1) + " s");
  std::string summary = std::to_string(sample.errors.size()) + " samples, max error/bound " +
                        fmt(worst, 3) + "; rescored exact on " + std::to_string(exact) +
                        "/100 queries, " + fmt(secs, 1) + " s";
  c.note(summary);
  if (!c.out.pass) c.out.detail += " (" + summary + ")";
  return c.done();
}

// ---------------------------------------------------------------------------
// Criteria 5, 6, 8, 9: bimodal planted corpus
// ---------------------------------------------------------------------------

struct PlantedFixture {
  SynthCorpus synth;
  std::shared_ptr<VectorSet> docs;
  GroundTruth gt;
  JudgmentSet js;
  IvfIndex index;
  double proxy_x = 0;
};

PlantedFixture& planted_fixture() {
  static PlantedFixture f = [] {
    PlantedFixture out;
    SynthSpec s;
    s.n_docs = 10000;
    s.dim = 64;
    s.n_clusters = 20;
    s.n_queries = 200;
    s.seed = 7;
    out.synth = generate(skew_profile(s, SkewProfile::Bimodal, 20));
    out.docs = std::make_shared<VectorSet>(out.synth.docs);
    out.gt = brute_force_topk(out.synth.queries, *out.docs, 20, Metric::InnerProduct);
    out.js = synthetic_oracle_judge(out.gt, out.synth.oracle);
    auto km = train_kmeans(*out.docs, 200, 10, 7);
    out.index = build_index(out.docs, km.centroids, true);
    out.proxy_x = tolerance_proxy(out.gt, 20).x;
    return out;
  }();
  return f;
}

RetrievedSet rescored(const PlantedFixture& f, RetrievedSet rs) {
  for (std::size_t q = 0; q < rs.num_queries(); ++q)
    rs.rows[q] = rescore_exact(rs.rows[q], f.synth.queries.row(q), *f.docs, Metric::InnerProduct);
  return rs;
}

Outcome criterion5() {
  auto t0 = Clock::now();
  auto& f = planted_fixture();
  Checker c;
  const std::vector<std::size_t> edges = {4, 16};
  const std::string low = sn_group_names(edges).front();
  EvaluationOptions opt;
  opt.tolerance_percent = f.proxy_x;
  std::optional<std::size_t> chosen;
  AggregateTable table;
  for (std::size_t nprobe = 1; nprobe <= f.index.nlist() && !chosen; ++nprobe) {
    auto rs = rescored(f, f.index.search_batch(f.synth.queries, 20, {nprobe, 0}));
    auto evals = evaluate_queries(f.gt, rs, &f.js, opt);
    table = aggregate(evals, edges);
    double r = table.find("All queries", "recall")->mean;
    if (r > 0.90) break;
    if (r >= 0.75) chosen = nprobe;
  }
  c.expect(chosen.has_value(), "no nprobe gives overall recall in [0.75, 0.90]");
  if (chosen) {
    const auto* rec = table.find(low, "recall");
    const auto* sr = table.find(low, "srecall");
    const auto* tr = table.find(low, "trecall");
    c.expect(sr->mean - rec->mean >= 0.03,
             "srecall " + fmt(sr->mean) + " - recall " + fmt(rec->mean) + " < 0.03");
    c.expect(std::abs(tr->mean - sr->mean) <= 0.05,
             "|trecall " + fmt(tr->mean) + " - srecall " + fmt(sr->mean) + "| > 0.05");
    std::string summary = "nprobe " + std::to_string(*chosen) + ", overall recall " +
                          fmt(table.find("All queries", "recall")->mean) + "; " + low +
                          " (n=" + std::to_string(rec->n) + "): recall " + fmt(rec->mean) +
                          ", srecall " + fmt(sr->mean) + ", trecall(" + fmt(f.proxy_x, 3) +
                          "%) " + fmt(tr->mean);
    c.note(summary);
    if (!c.out.pass) c.out.detail += " (" + summary + ")";
  }
  double secs = seconds_since(t0);
  c.expect(secs < 120, "took " + fmt(secs, 1) + " s");
  return c.done();
}

Outcome criterion6() {
  auto& f = planted_fixture();
  Checker c;
  auto stats = score_delta_stats(f.gt, f.js, {4, 16});
  const auto& all = stats.front();
  c.expect(all.avg_delta_sn.mean > all.avg_delta_non_sn.mean,
           "SN delta " + fmt(all.avg_delta_sn.mean, 6) + " <= non-SN delta " +
               fmt(all.avg_delta_non_sn.mean, 6));
  c.note("SN delta " + fmt(all.avg_delta_sn.mean, 6) + " (n=" +
         std::to_string(all.avg_delta_sn.n) + ") > non-SN delta " +
         fmt(all.avg_delta_non_sn.mean, 6) + " (n=" + std::to_string(all.avg_delta_non_sn.n) +
         ")");
  return c.done();
}

std::vector<GridPoint>& planted_grid() {
  static std::vector<GridPoint> pts = [] {
    auto& f = planted_fixture();
    std::vector<SearchParams> grid;
    std::vector<std::size_t> nprobes;
    for (std::size_t p = 1; p <= 32; ++p) nprobes.push_back(p);
    for (std::size_t p : {40, 48, 64, 80, 96, 128, 160, 200}) nprobes.push_back(p);
    for (auto p : nprobes)
      for (std::size_t r : {0, 40, 100}) grid.push_back({p, r});
    GridOptions opt;
    opt.tolerance_percent = f.proxy_x;
    return evaluate_grid(f.index, f.synth.queries, f.gt, &f.js, grid, opt);
  }();
  return pts;
}

Outcome criterion8() {
  auto t0 = Clock::now();
  auto& f = planted_fixture();
  auto& pts = planted_grid();
  Checker c;
  auto rec = trials_for(pts, TuningMetric::recall());
  auto tr = trials_for(pts, TuningMetric::trecall(f.proxy_x));
  std::string costs;
  for (double t : {0.90, 0.95, 0.98}) {
    try {
      auto a = tune_for_target(rec, t);
      auto b = tune_for_target(tr, t);
      c.expect(b.cost <= a.cost, "t=" + fmt(t, 2) + ": trecall cost " + fmt(b.cost, 0) +
                                     " > recall cost " + fmt(a.cost, 0));
      costs += " t=" + fmt(t, 2) + " " + fmt(b.cost, 0) + "<=" + fmt(a.cost, 0);
    } catch (const TargetUnreachable& e) {
      c.expect(false, e.what());
    }
  }
  for (double target : {0.90, 0.95}) {
    auto r = cost_savings_experiment(pts, f.proxy_x, target);
    for (const auto& cmp : r.comparisons)
      if (cmp.label.find("baseline") != std::string::npos)
        c.expect(cmp.savings_percent >= 0, "target " + fmt(target, 2) + " " + cmp.label +
                                               ": savings " + fmt(cmp.savings_percent, 2) +
                                               "%");
  }
  double secs = seconds_since(t0);
  c.expect(secs < 300, "took " + fmt(secs, 1) + " s");
  c.note(std::to_string(pts.size()) + " configurations; bytes/query" + costs + "; " +
         fmt(secs, 1) + " s");
  return c.done();
}

Outcome criterion9() {
  auto& pts = planted_grid();
  Checker c;
  auto front = pareto(trials_for(pts, TuningMetric::recall()));
  auto cost_at = [&](double level) -> std::optional<double> {
    for (const auto& t : front)
      if (t.achieved >= level) return t.cost;
    return std::nullopt;
  };
  auto c80 = cost_at(0.80), c90 = cost_at(0.90), c95 = cost_at(0.95), c99 = cost_at(0.99);
  c.expect(c80 && c90 && c95 && c99, "a recall level in {0.80, 0.90, 0.95, 0.99} is unreachable");
  if (c80 && c90 && c95 && c99) {
    double hi = *c99 - *c95, lo = *c90 - *c80;
    c.expect(hi > lo, "delta 0.95->0.99 " + fmt(hi, 0) + " <= delta 0.80->0.90 " + fmt(lo, 0));
    c.note("delta 0.95->0.99 = " + fmt(hi, 0) + " bytes > delta 0.80->0.90 = " + fmt(lo, 0) +
           " bytes");
  }
  return c.done();
}

// ---------------------------------------------------------------------------
// Criterion 7: agreement
// ---------------------------------------------------------------------------

Outcome criterion7() {
  Checker c;
  const std::size_t table[2][2] = {{4026, 445}, {445, 5084}};
  auto r = agreement_from_counts(table);
  c.expect(std::abs(r.observed - 0.911) < 5e-4, "p_o " + fmt(r.observed));
  c.expect(std::abs(r.expected - 0.5056) < 5e-4, "p_e " + fmt(r.expected));
  c.expect(r.kappa && std::abs(*r.kappa - 0.82) <= 0.005,
           "kappa " + (r.kappa ? fmt(*r.kappa) : std::string("undefined")));

  std::mt19937_64 rng(77);
  std::bernoulli_distribution coin(0.5), rel(0.3);
  JudgmentSet a, b, same;
  for (int i = 0; i < 10000; ++i) {
    auto q = query_id_t(i / 100);
    auto d = doc_id_t(i % 100);
    a.add({q, d, coin(rng) ? Label::Relevant : Label::NotRelevant, "a"});
    b.add({q, d, coin(rng) ? Label::Relevant : Label::NotRelevant, "b"});
    same.add({q, d, a.entries().back().label, "c"});
  }
  auto ident = cross_validate(a, same);
  c.expect(ident.kappa && *ident.kappa == 1.0, "identical labels kappa != 1");
  auto indep = cross_validate(a, b);
  c.expect(indep.kappa && std::abs(*indep.kappa) <= 0.05,
           "independent kappa " + (indep.kappa ? fmt(*indep.kappa) : std::string("undefined")));
  c.note("kappa " + fmt(*r.kappa) + " (p_o " + fmt(r.observed) + ", p_e " + fmt(r.expected) +
         "); identical 1; independent " + fmt(indep.kappa.value_or(-9)));
  return c.done();
}

// ---------------------------------------------------------------------------
// Criterion 10: round trips and pipeline determinism
// ---------------------------------------------------------------------------

struct RunResult {
  int code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  std::string cmd = std::string(SEMRECALL_CLI) + " " + args + " 2>&1";
  RunResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string manifest_without_run_fields(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  j.erase("started_at");
  j.erase("finished_at");
  if (j.contains("config")) j["config"].erase("out");
  return j.dump();
}

Outcome criterion10() {
  Checker c;
  testing::TempDir tmp;
  using testing::slurp;

  SynthSpec s;
  s.n_docs = 1500;
  s.dim = 16;
  s.n_clusters = 10;
  s.n_queries = 20;
  s.seed = 3;
  auto syn = generate(skew_profile(s, SkewProfile::Bimodal, 10));
  auto docs = std::make_shared<VectorSet>(syn.docs);
  auto gt = brute_force_topk(syn.queries, *docs, 10, Metric::InnerProduct);
  auto js = synthetic_oracle_judge(gt, syn.oracle);
  auto km = train_kmeans(*docs, 16, 10, 3);
  auto idx = build_index(docs, km.centroids, true);
  auto rs = idx.search_batch(syn.queries, 10, {2, 20});

  // Write, read back, write again: bytes and values must match.
  std::size_t files = 0;
  auto same_bytes = [&](const fs::path& a, const fs::path& b) {
    ++files;
    c.expect(slurp(a) == slurp(b), a.filename().string() + " differs after round trip");
  };

  save_vectors(*docs, tmp / "a.fvecs");
  auto v = load_vectors(tmp / "a.fvecs");
  c.expect(v == *docs, "fvecs values changed");
  save_vectors(v, tmp / "b.fvecs");
  same_bytes(tmp / "a.fvecs", tmp / "b.fvecs");

  save_vectors(*docs, tmp / "a.f32", VectorFormat::RawF32);
  auto raw = load_vectors(tmp / "a.f32", VectorFormat::RawF32);
  c.expect(raw == *docs, "raw f32 values changed");
  save_vectors(raw, tmp / "b.f32", VectorFormat::RawF32);
  same_bytes(tmp / "a.f32", tmp / "b.f32");
  same_bytes(tmp / "a.f32.json", tmp / "b.f32.json");

  save_ground_truth(gt, tmp / "a_ids.ivecs", tmp / "a_scores.fvecs");
  auto gt2 = load_ground_truth(tmp / "a_ids.ivecs", tmp / "a_scores.fvecs");
  c.expect(gt2 == gt, "ground truth values changed");
  save_ground_truth(gt2, tmp / "b_ids.ivecs", tmp / "b_scores.fvecs");
  same_bytes(tmp / "a_ids.ivecs", tmp / "b_ids.ivecs");
  same_bytes(tmp / "a_scores.fvecs", tmp / "b_scores.fvecs");

  save_judgments(js, tmp / "a_j.jsonl");
  auto js2 = load_judgments(tmp / "a_j.jsonl");
  c.expect(js2 == js, "judgments changed");
  save_judgments(js2, tmp / "b_j.jsonl");
  same_bytes(tmp / "a_j.jsonl", tmp / "b_j.jsonl");

  save_results(rs, tmp / "a_r.jsonl");
  auto rs2 = load_results(tmp / "a_r.jsonl");
  c.expect(rs2 == rs, "results changed");
  save_results(rs2, tmp / "b_r.jsonl");
  same_bytes(tmp / "a_r.jsonl", tmp / "b_r.jsonl");

  save_oracle(syn.oracle, tmp / "a_o.jsonl");
  auto o2 = load_oracle(tmp / "a_o.jsonl", s.n_queries, s.n_docs);
  c.expect(o2 == syn.oracle, "oracle changed");
  save_oracle(o2, tmp / "b_o.jsonl");
  same_bytes(tmp / "a_o.jsonl", tmp / "b_o.jsonl");

  save_index(idx, tmp / "ia");
  auto idx2 = load_index(tmp / "ia", docs);
  c.expect(idx2.search_batch(syn.queries, 10, {2, 20}) == rs, "reloaded index searches differ");
  save_index(idx2, tmp / "ib");
  for (const auto& e : fs::directory_iterator(tmp / "ia"))
    same_bytes(e.path(), tmp / "ib" / e.path().filename());

  // Full pipeline twice through the CLI.
  save_vectors(syn.docs, tmp / "docs.fvecs");
  save_vectors(syn.queries, tmp / "queries.fvecs");
  std::string base = "pipeline --docs " + (tmp / "docs.fvecs").string() + " --queries " +
                     (tmp / "queries.fvecs").string() + " --oracle " +
                     (tmp / "a_o.jsonl").string() +
                     " --k 10 --nlist 16 --quantize --nprobe 2 --tune --reorder 0,20"
                     " --savings-target 0.8 --out ";
  auto r1 = run_cli(base + (tmp / "p1").string());
  auto r2 = run_cli(base + (tmp / "p2").string());
  c.expect(r1.code == 0 && r2.code == 0, "pipeline run failed: " + r1.output + r2.output);
  std::size_t compared = 0;
  if (r1.code == 0 && r2.code == 0) {
    for (const auto& e : fs::recursive_directory_iterator(tmp / "p1")) {
      if (!e.is_regular_file()) continue;
      auto rel = fs::relative(e.path(), tmp / "p1");
      auto other = tmp / "p2" / rel.string();
      ++compared;
      if (!fs::exists(other)) {
        c.expect(false, rel.string() + " missing from second run");
        continue;
      }
      if (e.path().filename() == "manifest.json")
        c.expect(manifest_without_run_fields(slurp(e.path())) ==
                     manifest_without_run_fields(slurp(other)),
                 rel.string() + " differs beyond timestamps");
      else
        c.expect(slurp(e.path()) == slurp(other), rel.string() + " differs between runs");
    }
    c.expect(compared > 0, "pipeline produced no files");
  }
  c.note(std::to_string(files) + " files round-tripped; " + std::to_string(compared) +
         " pipeline outputs identical across reruns");
  return c.done();
}

}  // namespace
}  // namespace semrecall

int main() {
  using namespace semrecall;
  set_warning_handler([](const std::string&) {});
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},
      {5, criterion5}, {6, criterion6}, {7, criterion7}, {8, criterion8},
      {9, criterion9}, {10, criterion10},
  };
  int failed = 0;
  for (const auto& [n, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail
              << ")" << std::endl;
  }
  std::cout << (criteria.size() - std::size_t(failed)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
