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

// semrecall command-line tool.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semrecall/semrecall.hpp"

#ifndef SEMRECALL_PROMPT_DIR
#define SEMRECALL_PROMPT_DIR "prompts"
#endif

namespace sr = semrecall;
namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct StageFailure : std::runtime_error {
  StageFailure(const std::string& stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what) {}
};

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct Globals {
  std::size_t threads = 0;
};

struct JudgeOptions {
  std::string endpoint;
  std::string model = "judge";
  std::string prompt = std::string(SEMRECALL_PROMPT_DIR) + "/relevance_v1.txt";
  std::string judge_id = "llm";
  std::string adapter = "minimal";
  std::string api_key_env;
  std::size_t max_in_flight = 4;
  std::size_t max_attempts = 3;
  std::size_t backoff_ms = 500;
  std::size_t timeout_s = 60;
  std::string cache;
  std::string doc_text;
  std::string query_text;
  std::string oracle;
  std::string judgments;

  void add_to(CLI::App* app, bool allow_preloaded) {
    app->add_option("--endpoint", endpoint, "LLM judge endpoint URL");
    app->add_option("--model", model, "Judge model name")->capture_default_str();
    app->add_option("--prompt", prompt, "Prompt template file")->capture_default_str();
    app->add_option("--judge-id", judge_id, "Judge id recorded in judgments")
        ->capture_default_str();
    app->add_option("--adapter", adapter, "Request adapter")
        ->check(CLI::IsMember({"minimal", "openai-chat"}))
        ->capture_default_str();
    app->add_option("--api-key-env", api_key_env, "Environment variable holding the API key");
    app->add_option("--max-in-flight", max_in_flight, "Concurrent judge requests")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--max-attempts", max_attempts, "Attempts per pair")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--backoff-ms", backoff_ms, "Base retry backoff (ms)")->capture_default_str();
    app->add_option("--timeout", timeout_s, "HTTP timeout (s)")->capture_default_str();
    app->add_option("--cache", cache, "Judge cache JSONL");
    app->add_option("--doc-text", doc_text, "Document text JSONL {doc_id, text}")
        ->check(CLI::ExistingFile);
    app->add_option("--query-text", query_text, "Query text JSONL {query_id, text}")
        ->check(CLI::ExistingFile);
    app->add_option("--oracle", oracle, "Planted oracle JSONL (synthetic judge)")
        ->check(CLI::ExistingFile);
    if (allow_preloaded)
      app->add_option("--judgments", judgments, "Existing judgments JSONL")
          ->check(CLI::ExistingFile);
  }

  bool any() const { return !endpoint.empty() || !oracle.empty() || !judgments.empty(); }

  sr::JudgeConfig config() const {
    sr::JudgeConfig c;
    c.endpoint = endpoint;
    c.model = model;
    c.prompt_template = sr::load_prompt_template(prompt);
    c.judge_id = judge_id;
    c.adapter = adapter;
    c.api_key_env = api_key_env;
    c.max_in_flight = max_in_flight;
    c.max_attempts = max_attempts;
    c.backoff_base_ms = backoff_ms;
    c.timeout_s = timeout_s;
    c.cache_path = cache;
    return c;
  }
};

/// Effective option values (flags, config file, or defaults) as JSON.
nlohmann::json effective_config(const CLI::App* app) {
  nlohmann::json cfg = nlohmann::json::object();
  for (const CLI::Option* opt : app->get_options()) {
    auto name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "version") continue;
    auto res = opt->reduced_results();
    if (res.empty()) {
      auto d = opt->get_default_str();
      if (d.empty()) continue;
      cfg[name] = d;
    } else if (res.size() == 1) {
      cfg[name] = res.front();
    } else {
      cfg[name] = res;
    }
  }
  return cfg;
}

sr::RunManifest start_manifest(const CLI::App* app, const Globals& g) {
  sr::RunManifest m;
  m.command = app->get_name();
  m.config = effective_config(app);
  m.config["threads"] = g.threads;
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  sr::detail::write_all(path, text);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

sr::GroundTruth load_gt_dir(const fs::path& dir) {
  return sr::load_ground_truth(dir / "gt_ids.ivecs", dir / "gt_scores.fvecs");
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoul(tok));
    } catch (const std::exception&) {
      throw sr::InvalidArgument("bad list element \"" + tok + "\"");
    }
  }
  return out;
}

/// Default SN bins scale 20/80 at k = 100 to the given depth.
std::vector<std::size_t> parse_edges(const std::string& s, std::size_t k) {
  if (s.empty()) {
    std::size_t lo = std::max<std::size_t>(1, (k + 2) / 5);
    std::size_t hi = std::max<std::size_t>(lo + 1, (4 * k + 2) / 5);
    return {lo, hi};
  }
  auto out = parse_list(s);
  if (!std::is_sorted(out.begin(), out.end()))
    throw sr::InvalidArgument("SN bin edges must be ascending");
  return out;
}

/// "proxy" or a non-negative percentage.
double resolve_tolerance(const std::string& spec, const sr::GroundTruth& gt,
                         nlohmann::json& notes) {
  if (spec == "proxy") {
    auto p = sr::tolerance_proxy(gt, gt.k());
    notes["tolerance_proxy"] = {{"x", p.x}, {"used", p.used}, {"skipped", p.skipped.size()}};
    return p.x;
  }
  double x;
  try {
    x = std::stod(spec);
  } catch (const std::exception&) {
    throw sr::InvalidArgument("tolerance must be 'proxy' or a number, got " + spec);
  }
  if (!(x >= 0)) throw sr::InvalidArgument("tolerance must be >= 0");
  return x;
}

std::vector<double> calibration_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 40; ++i) g.push_back(0.25 * i);
  return g;
}

nlohmann::json to_json(const sr::ToleranceCalibration& c) {
  nlohmann::json curve = nlohmann::json::array();
  for (auto [x, t] : c.curve) curve.push_back({{"x", x}, {"trecall", t}});
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"mean_srecall", c.mean_srecall},
          {"srecall_queries", c.srecall_queries},
          {"first_grid_x", opt(c.first_grid_x)},
          {"x_at_srecall", opt(c.x_at_srecall)},
          {"curve", curve}};
}

/// Judges ground truth with whichever source the options name.
sr::JudgmentSet obtain_judgments(const JudgeOptions& jo, const sr::GroundTruth& gt,
                                 std::size_t n_docs, sr::RunManifest& m,
                                 nlohmann::json* stats_out) {
  if (!jo.judgments.empty()) {
    m.add_input(jo.judgments);
    auto js = sr::load_judgments(jo.judgments);
    js.validate_against(gt);
    return js;
  }
  if (!jo.oracle.empty()) {
    m.add_input(jo.oracle);
    auto oracle = sr::load_oracle(jo.oracle, gt.num_queries(), n_docs);
    return sr::synthetic_oracle_judge(gt, oracle, jo.judge_id == "llm" ? "oracle" : jo.judge_id);
  }
  if (jo.endpoint.empty())
    throw sr::InvalidArgument("judge: supply --endpoint, --oracle or --judgments");
  if (jo.doc_text.empty() || jo.query_text.empty())
    throw sr::InvalidArgument("judge: --doc-text and --query-text are required with --endpoint");
  m.add_input(jo.doc_text);
  m.add_input(jo.query_text);
  m.add_input(jo.prompt);
  auto store = sr::load_doc_store(jo.doc_text, fs::path(jo.query_text));
  auto out = sr::judge_ground_truth(gt, store, jo.config());
  if (stats_out) {
    nlohmann::json unjudged = nlohmann::json::array();
    for (auto [q, d] : out.unjudged) unjudged.push_back({{"query_id", q}, {"doc_id", d}});
    *stats_out = {{"pairs", out.stats.pairs},       {"cache_hits", out.stats.cache_hits},
                  {"requests", out.stats.requests}, {"retries", out.stats.retries},
                  {"unparseable", out.stats.unparseable}, {"unjudged", unjudged}};
  }
  if (!out.unjudged.empty())
    throw sr::Error("judge: " + std::to_string(out.unjudged.size()) +
                    " pairs unjudged; metrics need complete judgments");
  return std::move(out.judgments);
}

// ---------------------------------------------------------------------------
// Report writers shared by metrics / analyze / pipeline
// ---------------------------------------------------------------------------

struct MetricsInputs {
  std::string tolerance = "proxy";
  double eps = 0;
  std::string sn_bins;
};

void write_metrics_reports(const fs::path& out, const sr::GroundTruth& gt,
                           const sr::RetrievedSet& rs, const sr::JudgmentSet* js,
                           sr::Metric metric, const MetricsInputs& mi, std::size_t threads) {
  nlohmann::json notes = nlohmann::json::object();
  sr::EvaluationOptions opt;
  opt.tolerance_percent = resolve_tolerance(mi.tolerance, gt, notes);
  opt.eps = mi.eps;
  opt.metric = metric;
  auto evals = sr::evaluate_queries(gt, rs, js, opt, threads);
  auto edges = parse_edges(mi.sn_bins, gt.k());
  auto table = sr::aggregate(evals, js ? edges : std::vector<std::size_t>{});
  nlohmann::json summary = {{"k", gt.k()},
                            {"num_queries", gt.num_queries()},
                            {"metric", sr::to_string(metric)},
                            {"tolerance_percent", opt.tolerance_percent},
                            {"eps", opt.eps},
                            {"aggregate", sr::to_json(table)}};
  if (!notes.empty()) summary["tolerance_source"] = notes;
  if (js) {
    summary["sn_bin_edges"] = edges;
    summary["calibration"] = to_json(sr::calibrate_tolerance(gt, *js, rs, calibration_grid()));
  }
  std::uint64_t bytes = 0, ips = 0;
  for (const auto& c : rs.costs) {
    bytes += c.bytes_read;
    ips += c.inner_products;
  }
  if (!rs.costs.empty())
    summary["cost"] = {{"mean_bytes_read", double(bytes) / double(rs.costs.size())},
                       {"mean_inner_products", double(ips) / double(rs.costs.size())}};
  write_json(out / "summary.json", summary);
  write_text(out / "per_query.csv", sr::evaluations_csv(evals));
  write_text(out / "summary.txt", sr::summary_table(table));
}

struct AnalyzeInputs {
  std::size_t bin_width = 1;
  std::string sn_bins;
  std::size_t biserial_below = 0;  // 0 = all queries
  std::string biserial_mode = "pooled";
};

void write_analysis_reports(const fs::path& out, const sr::GroundTruth& gt,
                            const sr::JudgmentSet& js, const AnalyzeInputs& ai,
                            const sr::IvfIndex* index, const sr::VectorSet* queries,
                            std::size_t sample, std::uint64_t seed) {
  nlohmann::json report;
  auto hist = sr::sn_histogram(gt, js, ai.bin_width);
  report["sn_histogram"] = sr::to_json(hist);
  write_text(out / "sn_histogram.csv", sr::histogram_csv(hist.hist));

  auto edges = parse_edges(ai.sn_bins, gt.k());
  auto deltas = sr::score_delta_stats(gt, js, edges);
  report["score_deltas"] = sr::to_json(deltas);
  write_text(out / "score_deltas.csv", sr::score_delta_csv(deltas));

  auto mode = ai.biserial_mode == "per-query" ? sr::BiserialMode::PerQueryMean
                                              : sr::BiserialMode::Pooled;
  std::size_t below = ai.biserial_below;
  nlohmann::json rb = {{"mode", ai.biserial_mode},
                       {"filter", below ? "SN < " + std::to_string(below) : "all queries"}};
  try {
    rb["value"] = sr::rank_biserial(
        gt, js, [below](std::size_t sn) { return below == 0 || sn < below; }, mode);
  } catch (const sr::InvalidArgument& e) {
    rb["value"] = nullptr;
    rb["reason"] = e.what();
  }
  report["rank_biserial"] = rb;

  if (index && queries && index->quantized()) {
    auto s = sr::quantized_score_error(*index, *queries, sample, seed);
    auto qr = sr::quant_error_report(s.errors);
    std::size_t violations = 0;
    for (std::size_t i = 0; i < s.errors.size(); ++i) violations += s.errors[i] > s.bounds[i];
    auto j = sr::to_json(qr);
    j["skipped"] = s.skipped;
    j["bound_violations"] = violations;
    report["quant_error"] = j;
    write_text(out / "quant_error_hist.csv", sr::histogram_csv(qr.hist));
  }
  write_json(out / "analysis.json", report);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct SynthOptions {
  std::string out;
  sr::SynthSpec spec;
  std::string rule = "planted";
  std::size_t planted_m = 5;
  double radius = 0.5;
  std::string profile = "none";
  std::size_t k = 20;
  std::string format = "fvecs";

  void add_to(CLI::App* app) {
    app->add_option("--n-docs", spec.n_docs, "Documents")->capture_default_str();
    app->add_option("--dim", spec.dim, "Dimension")->capture_default_str();
    app->add_option("--clusters", spec.n_clusters, "Clusters")->capture_default_str();
    app->add_option("--cluster-std", spec.cluster_std, "Cluster spread")->capture_default_str();
    app->add_option("--n-queries", spec.n_queries, "Queries")->capture_default_str();
    app->add_option("--rule", rule, "Relevance rule")
        ->check(CLI::IsMember({"planted", "radius"}))
        ->capture_default_str();
    app->add_option("--planted-m", planted_m, "Planted docs per query")->capture_default_str();
    app->add_option("--radius", radius, "Same-cluster radius rule")->capture_default_str();
    app->add_option("--profile", profile, "SN skew profile")
        ->check(CLI::IsMember({"none", "bimodal", "powerlaw"}))
        ->capture_default_str();
    app->add_option("--profile-k", k, "Depth the skew profile targets")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--band-rank", spec.band_rank, "Planted score band lower rank")
        ->capture_default_str();
    app->add_option("--band-top", spec.band_top, "Planted score band upper score")
        ->capture_default_str();
    app->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
  }

  sr::SynthSpec resolved() const {
    auto s = spec;
    if (rule == "radius") s.rule = sr::SameClusterWithinRadius{radius};
    else s.rule = sr::TopMPlanted{planted_m};
    if (profile != "none") s = sr::skew_profile(s, sr::parse_profile(profile), k);
    return s;
  }
};

void write_synth(const sr::SynthCorpus& c, const fs::path& out, sr::VectorFormat fmt) {
  fs::create_directories(out);
  std::string ext = fmt == sr::VectorFormat::Fvecs ? ".fvecs" : ".f32";
  sr::save_vectors(c.docs, out / ("docs" + ext), fmt);
  sr::save_vectors(c.queries, out / ("queries" + ext), fmt);
  sr::save_oracle(c.oracle, out / "oracle.jsonl");
}

int cmd_synth(CLI::App* app, const SynthOptions& o, const Globals& g) {
  auto m = start_manifest(app, g);
  auto spec = o.resolved();
  m.seeds["seed"] = spec.seed;
  auto corpus = sr::generate(spec);
  auto fmt = o.format == "raw" ? sr::VectorFormat::RawF32 : sr::VectorFormat::Fvecs;
  write_synth(corpus, o.out, fmt);
  std::vector<std::size_t> planted(corpus.oracle.n_queries());
  for (std::size_t q = 0; q < planted.size(); ++q) planted[q] = corpus.oracle.count(sr::query_id_t(q));
  write_json(fs::path(o.out) / "synth.json",
             {{"n_docs", corpus.docs.count()},
              {"n_queries", corpus.queries.count()},
              {"dim", corpus.docs.dim()},
              {"planted_counts", planted}});
  m.write(o.out);
  return 0;
}

struct GtOptions {
  std::string docs, queries, out, metric = "ip";
  std::size_t k = 100;
};

int cmd_gt(CLI::App* app, const GtOptions& o, const Globals& g) {
  auto m = start_manifest(app, g);
  m.add_input(o.docs);
  m.add_input(o.queries);
  auto docs = sr::load_vectors(o.docs, sr::format_for_path(o.docs));
  auto queries = sr::load_vectors(o.queries, sr::format_for_path(o.queries));
  sr::check_normalized(docs, "docs");
  auto gt = sr::brute_force_topk(queries, docs, o.k, sr::parse_metric(o.metric), g.threads);
  fs::create_directories(o.out);
  sr::save_ground_truth(gt, fs::path(o.out) / "gt_ids.ivecs", fs::path(o.out) / "gt_scores.fvecs");
  m.write(o.out);
  return 0;
}

struct IndexOptions {
  std::string docs, out, metric = "ip";
  std::size_t nlist = 100, iters = 20;
  bool quantize = false;
  std::uint64_t seed = 0;
};

sr::IvfIndex build_ivf(const IndexOptions& o, std::shared_ptr<const sr::VectorSet> docs,
                       std::size_t threads) {
  auto km = sr::train_kmeans(*docs, o.nlist, o.iters, o.seed, threads);
  return sr::build_index(docs, km.centroids, o.quantize, sr::parse_metric(o.metric), threads);
}

int cmd_index(CLI::App* app, const IndexOptions& o, const Globals& g) {
  auto m = start_manifest(app, g);
  m.seeds["seed"] = o.seed;
  m.add_input(o.docs);
  auto docs = std::make_shared<const sr::VectorSet>(
      sr::load_vectors(o.docs, sr::format_for_path(o.docs)));
  auto idx = build_ivf(o, docs, g.threads);
  sr::save_index(idx, o.out);
  m.write(o.out);
  return 0;
}

struct SearchOptions {
  std::string index, docs, queries, out;
  std::size_t k = 100, nprobe = 1, reorder_k = 0;
  bool approx_scores = false;
};

/// Searches and, unless approx_scores, replaces scores by exact ones (not charged).
sr::RetrievedSet run_search(const sr::IvfIndex& idx, const sr::VectorSet& queries, std::size_t k,
                            sr::SearchParams p, bool approx_scores, std::size_t threads) {
  auto rs = idx.search_batch(queries, k, p, threads);
  if (!approx_scores)
    sr::parallel_for(rs.rows.size(), threads, [&](std::size_t q) {
      rs.rows[q] = sr::rescore_exact(rs.rows[q], queries.row(q), idx.raw(), idx.metric());
    });
  return rs;
}

int cmd_search(CLI::App* app, const SearchOptions& o, const Globals& g) {
  auto m = start_manifest(app, g);
  m.add_input(o.docs);
  m.add_input(o.queries);
  for (const auto& e : fs::directory_iterator(o.index))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") m.add_input(e.path());
  auto docs = std::make_shared<const sr::VectorSet>(
      sr::load_vectors(o.docs, sr::format_for_path(o.docs)));
  auto queries = sr::load_vectors(o.queries, sr::format_for_path(o.queries));
  auto idx = sr::load_index(o.index, docs);
  auto rs = run_search(idx, queries, o.k, {o.nprobe, o.reorder_k}, o.approx_scores, g.threads);
  fs::create_directories(o.out);
  sr::save_results(rs, fs::path(o.out) / "results.jsonl");
  m.write(o.out);
  return 0;
}

struct JudgeCmdOptions {
  std::string gt, out, compare;
  std::size_t n_docs = 0;
  double low_cutoff = 0.7;
  JudgeOptions judge;
};

int cmd_judge(CLI::App* app, const JudgeCmdOptions& o, const Globals& g) {
  auto m = start_manifest(app, g);
  m.add_input(fs::path(o.gt) / "gt_ids.ivecs");
  m.add_input(fs::path(o.gt) / "gt_scores.fvecs");
  auto gt = load_gt_dir(o.gt);
  std::size_t n_docs = o.n_docs;
  if (n_docs == 0)
    for (const auto& row : gt.rows)
      for (const auto& n : row) n_docs = std::max(n_docs, std::size_t(n.id) + 1);
  fs::create_directories(o.out);
  nlohmann::json stats;
  sr::JudgmentSet js;
  try {
    js = obtain_judgments(o.judge, gt, n_docs, m, &stats);
  } catch (...) {
    if (!stats.is_null()) write_json(fs::path(o.out) / "judge_stats.json", stats);
    throw;
  }
  sr::save_judgments(js, fs::path(o.out) / "judgments.jsonl");
  if (!stats.is_null()) write_json(fs::path(o.out) / "judge_stats.json", stats);
  if (!o.compare.empty()) {
    m.add_input(o.compare);
    auto other = sr::load_judgments(o.compare);
    write_json(fs::path(o.out) / "agreement.json",
               sr::to_json(sr::cross_validate(js, other, o.low_cutoff)));
  }
  m.write(o.out);
  return 0;
}

struct MetricsCmdOptions {
  std::string gt, results, judgments, out, metric = "ip";
  MetricsInputs in;
};

int cmd_metrics(CLI::App* app, const MetricsCmdOptions& o, const Globals& g) {
  auto m = start_manifest(app, g);
  m.add_input(fs::path(o.gt) / "gt_ids.ivecs");
  m.add_input(fs::path(o.gt) / "gt_scores.fvecs");
  m.add_input(o.results);
  auto gt = load_gt_dir(o.gt);
  auto rs = sr::load_results(o.results);
  std::optional<sr::JudgmentSet> js;
  if (!o.judgments.empty()) {
    m.add_input(o.judgments);
    js = sr::load_judgments(o.judgments);
    js->validate_against(gt);
  }
  fs::create_directories(o.out);
  write_metrics_reports(o.out, gt, rs, js ? &*js : nullptr, sr::parse_metric(o.metric), o.in,
                        g.threads);
  m.write(o.out);
  return 0;
}

struct AnalyzeCmdOptions {
  std::string gt, judgments, out, index, docs, queries;
  std::size_t sample = 10000;
  std::uint64_t seed = 0;
  AnalyzeInputs in;
};

int cmd_analyze(CLI::App* app, const AnalyzeCmdOptions& o, const Globals& g) {
  auto m = start_manifest(app, g);
  m.seeds["seed"] = o.seed;
  m.add_input(fs::path(o.gt) / "gt_ids.ivecs");
  m.add_input(fs::path(o.gt) / "gt_scores.fvecs");
  m.add_input(o.judgments);
  auto gt = load_gt_dir(o.gt);
  auto js = sr::load_judgments(o.judgments);
  js.validate_against(gt);
  std::optional<sr::IvfIndex> idx;
  std::optional<sr::VectorSet> queries;
  if (!o.index.empty()) {
    if (o.docs.empty() || o.queries.empty())
      throw sr::InvalidArgument("analyze: --index needs --docs and --queries");
    m.add_input(o.docs);
    m.add_input(o.queries);
    auto docs = std::make_shared<const sr::VectorSet>(
        sr::load_vectors(o.docs, sr::format_for_path(o.docs)));
    idx = sr::load_index(o.index, docs);
    queries = sr::load_vectors(o.queries, sr::format_for_path(o.queries));
  }
  fs::create_directories(o.out);
  write_analysis_reports(o.out, gt, js, o.in, idx ? &*idx : nullptr,
                         queries ? &*queries : nullptr, o.sample, o.seed);
  m.write(o.out);
  return 0;
}

struct TuneInputs {
  std::string metric = "recall";
  std::vector<double> targets;
  std::string tolerance = "proxy";
  std::string reorder = "";
  bool refine = false;
  std::optional<double> savings_target;
};

void write_tuning_reports(const fs::path& out, const sr::IvfIndex& idx,
                          const sr::VectorSet& queries, const sr::GroundTruth& gt,
                          const sr::JudgmentSet* js, const TuneInputs& ti, std::size_t threads) {
  nlohmann::json notes = nlohmann::json::object();
  double x = resolve_tolerance(ti.tolerance, gt, notes);
  auto metric = sr::parse_tuning_metric(ti.metric, x);
  if (metric.needs_judgments() && !js)
    throw sr::InvalidArgument("tune: metric " + metric.name() + " requires judgments");
  std::vector<std::size_t> reorder = parse_list(ti.reorder);
  if (reorder.empty()) reorder = {0, gt.k(), 2 * gt.k(), 4 * gt.k()};
  auto grid = sr::make_grid(idx.nlist(), reorder, idx.quantized());
  sr::GridOptions opt;
  opt.tolerance_percent = metric.kind == sr::TuningMetric::Kind::TRecall ? metric.param : x;
  if (metric.kind == sr::TuningMetric::Kind::RecallKEps) opt.eps = metric.param;
  opt.threads = threads;
  auto points = sr::evaluate_grid(idx, queries, gt, js, grid, opt);
  auto trials = sr::trials_for(points, metric);
  if (ti.refine && !ti.targets.empty()) {
    try {
      auto inc = sr::tune_for_target(trials, ti.targets.front());
      grid = sr::refine_grid(grid, inc.params, idx.nlist());
      points = sr::evaluate_grid(idx, queries, gt, js, grid, opt);
      trials = sr::trials_for(points, metric);
    } catch (const sr::TargetUnreachable&) {
    }
  }
  nlohmann::json report = {{"metric", metric.name()},
                           {"tolerance_percent", opt.tolerance_percent},
                           {"trials", sr::to_json(trials)},
                           {"front", sr::to_json(sr::pareto(trials))}};
  if (!notes.empty()) report["tolerance_source"] = notes;
  nlohmann::json chosen = nlohmann::json::array();
  for (double t : ti.targets) {
    try {
      chosen.push_back({{"target", t}, {"trial", sr::to_json(sr::tune_for_target(trials, t))}});
    } catch (const sr::TargetUnreachable& e) {
      chosen.push_back({{"target", t}, {"trial", nullptr}, {"best_achieved", e.best_achieved}});
    }
  }
  report["chosen"] = chosen;
  if (ti.savings_target) {
    if (!js) throw sr::InvalidArgument("tune: --savings-target requires judgments");
    auto sv = sr::cost_savings_experiment(points, opt.tolerance_percent, *ti.savings_target);
    report["savings"] = sr::to_json(sv);
    write_text(out / "savings.txt", sr::savings_text(sv));
  }
  write_json(out / "tuning.json", report);
  write_text(out / "trials.csv", sr::trials_csv(trials));
}

struct TuneCmdOptions {
  std::string index, docs, queries, gt, judgments, out;
  TuneInputs in;
  double savings = -1;
};

int cmd_tune(CLI::App* app, TuneCmdOptions o, const Globals& g) {
  auto m = start_manifest(app, g);
  m.add_input(o.docs);
  m.add_input(o.queries);
  m.add_input(fs::path(o.gt) / "gt_ids.ivecs");
  m.add_input(fs::path(o.gt) / "gt_scores.fvecs");
  auto docs = std::make_shared<const sr::VectorSet>(
      sr::load_vectors(o.docs, sr::format_for_path(o.docs)));
  auto queries = sr::load_vectors(o.queries, sr::format_for_path(o.queries));
  auto idx = sr::load_index(o.index, docs);
  auto gt = load_gt_dir(o.gt);
  std::optional<sr::JudgmentSet> js;
  if (!o.judgments.empty()) {
    m.add_input(o.judgments);
    js = sr::load_judgments(o.judgments);
    js->validate_against(gt);
  }
  if (o.savings >= 0) o.in.savings_target = o.savings;
  fs::create_directories(o.out);
  write_tuning_reports(o.out, idx, queries, gt, js ? &*js : nullptr, o.in, g.threads);
  m.write(o.out);
  return 0;
}

struct PipelineOptions {
  std::string docs, queries, out, metric = "ip";
  std::size_t k = 100;
  IndexOptions index;
  std::size_t nprobe = 1, reorder_k = 0;
  JudgeOptions judge;
  MetricsInputs metrics;
  AnalyzeInputs analyze;
  std::size_t quant_sample = 10000;
  bool tune = false;
  TuneInputs tuning;
  double savings = -1;
};

int cmd_pipeline(CLI::App* app, PipelineOptions o, const Globals& g) {
  auto m = start_manifest(app, g);
  m.seeds["seed"] = o.index.seed;
  fs::path out = o.out;
  auto stage = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      throw StageFailure(name, e.what());
    }
  };
  std::shared_ptr<const sr::VectorSet> docs;
  sr::VectorSet queries;
  sr::GroundTruth gt;
  sr::IvfIndex idx;
  sr::RetrievedSet rs;
  sr::JudgmentSet js;
  bool judged = o.judge.any();
  const auto metric = sr::parse_metric(o.metric);
  o.index.metric = o.metric;

  stage("load", [&] {
    m.add_input(o.docs);
    m.add_input(o.queries);
    docs = std::make_shared<const sr::VectorSet>(
        sr::load_vectors(o.docs, sr::format_for_path(o.docs)));
    queries = sr::load_vectors(o.queries, sr::format_for_path(o.queries));
    fs::create_directories(out);
  });
  stage("gt", [&] {
    gt = sr::brute_force_topk(queries, *docs, o.k, metric, g.threads);
    sr::save_ground_truth(gt, out / "gt_ids.ivecs", out / "gt_scores.fvecs");
  });
  stage("index", [&] {
    idx = build_ivf(o.index, docs, g.threads);
    sr::save_index(idx, out / "index");
  });
  stage("search", [&] {
    rs = run_search(idx, queries, o.k, {o.nprobe, o.reorder_k}, false, g.threads);
    sr::save_results(rs, out / "results.jsonl");
  });
  if (judged) {
    stage("judge", [&] {
      nlohmann::json stats;
      try {
        js = obtain_judgments(o.judge, gt, docs->count(), m, &stats);
      } catch (...) {
        if (!stats.is_null()) write_json(out / "judge_stats.json", stats);
        throw;
      }
      sr::save_judgments(js, out / "judgments.jsonl");
      if (!stats.is_null()) write_json(out / "judge_stats.json", stats);
    });
  }
  stage("metrics", [&] {
    write_metrics_reports(out, gt, rs, judged ? &js : nullptr, metric, o.metrics, g.threads);
  });
  if (judged) {
    stage("analysis", [&] {
      write_analysis_reports(out, gt, js, o.analyze, &idx, &queries, o.quant_sample,
                             o.index.seed);
    });
  }
  if (o.tune) {
    stage("tune", [&] {
      if (o.savings >= 0) o.tuning.savings_target = o.savings;
      write_tuning_reports(out, idx, queries, gt, judged ? &js : nullptr, o.tuning, g.threads);
    });
  }
  m.write(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evaluate approximate nearest-neighbour search with semantic and tolerant recall",
               "semrecall"};
  app.set_version_flag("--version", std::string(SEMRECALL_VERSION));
  app.set_config("--config", "", "TOML config file (flags override it)");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->capture_default_str();

  // synth
  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted relevance");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--format", synth.format, "Vector format")
      ->check(CLI::IsMember({"fvecs", "raw"}))
      ->capture_default_str();
  synth.add_to(c_synth);

  // gt
  GtOptions gto;
  auto* c_gt = app.add_subcommand("gt", "Exact top-k ground truth by brute force");
  c_gt->add_option("--docs", gto.docs, "Document vectors")->required()->check(CLI::ExistingFile);
  c_gt->add_option("--queries", gto.queries, "Query vectors")->required()->check(CLI::ExistingFile);
  c_gt->add_option("--k", gto.k, "Neighbours per query")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_gt->add_option("--metric", gto.metric, "Similarity")
      ->check(CLI::IsMember({"ip", "l2"}))
      ->capture_default_str();
  c_gt->add_option("--out", gto.out, "Output directory")->required();

  // index
  IndexOptions ixo;
  auto* c_index = app.add_subcommand("index", "Train and save an IVF index");
  c_index->add_option("--docs", ixo.docs, "Document vectors")->required()->check(CLI::ExistingFile);
  c_index->add_option("--nlist", ixo.nlist, "Partitions")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_index->add_option("--iters", ixo.iters, "k-means iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_index->add_flag("--quantize", ixo.quantize, "Store 8-bit scalar-quantized codes");
  c_index->add_option("--metric", ixo.metric, "Similarity")
      ->check(CLI::IsMember({"ip", "l2"}))
      ->capture_default_str();
  c_index->add_option("--seed", ixo.seed, "Random seed")->capture_default_str();
  c_index->add_option("--out", ixo.out, "Index directory")->required();

  // search
  SearchOptions so;
  auto* c_search = app.add_subcommand("search", "Search an IVF index");
  c_search->add_option("--index", so.index, "Index directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_search->add_option("--docs", so.docs, "Document vectors")->required()->check(CLI::ExistingFile);
  c_search->add_option("--queries", so.queries, "Query vectors")
      ->required()
      ->check(CLI::ExistingFile);
  c_search->add_option("--k", so.k, "Neighbours per query")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_search->add_option("--nprobe", so.nprobe, "Partitions probed")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_search->add_option("--reorder-k", so.reorder_k, "Exact rescoring depth (0 = off)")
      ->capture_default_str();
  c_search->add_flag("--approx-scores", so.approx_scores,
                     "Keep index scores instead of exact rescored scores");
  c_search->add_option("--out", so.out, "Output directory")->required();

  // judge
  JudgeCmdOptions jo;
  auto* c_judge = app.add_subcommand("judge", "Label ground-truth neighbours as relevant or not");
  c_judge->add_option("--gt", jo.gt, "Ground-truth directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_judge->add_option("--n-docs", jo.n_docs, "Corpus size for oracle id checks");
  c_judge->add_option("--compare", jo.compare, "Second judgments file for agreement")
      ->check(CLI::ExistingFile);
  c_judge->add_option("--low-cutoff", jo.low_cutoff, "Per-query agreement cutoff")
      ->capture_default_str();
  c_judge->add_option("--out", jo.out, "Output directory")->required();
  jo.judge.add_to(c_judge, false);

  // metrics
  MetricsCmdOptions mo;
  auto* c_metrics = app.add_subcommand("metrics", "Recall, semantic and tolerant recall reports");
  c_metrics->add_option("--gt", mo.gt, "Ground-truth directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_metrics->add_option("--results", mo.results, "Search results JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  c_metrics->add_option("--judgments", mo.judgments, "Judgments JSONL")->check(CLI::ExistingFile);
  c_metrics->add_option("--metric", mo.metric, "Similarity")
      ->check(CLI::IsMember({"ip", "l2"}))
      ->capture_default_str();
  c_metrics->add_option("--tolerance", mo.in.tolerance, "Tolerance percent or 'proxy'")
      ->capture_default_str();
  c_metrics->add_option("--eps", mo.in.eps, "recall@k-eps epsilon")->capture_default_str();
  c_metrics->add_option("--sn-bins", mo.in.sn_bins, "SN-count bin edges, e.g. 20,80");
  c_metrics->add_option("--out", mo.out, "Output directory")->required();

  // analyze
  AnalyzeCmdOptions ao;
  auto* c_analyze = app.add_subcommand("analyze", "SN distribution, score deltas, rank-biserial");
  c_analyze->add_option("--gt", ao.gt, "Ground-truth directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_analyze->add_option("--judgments", ao.judgments, "Judgments JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  c_analyze->add_option("--bin-width", ao.in.bin_width, "SN histogram bin width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_analyze->add_option("--sn-bins", ao.in.sn_bins, "SN-count bin edges");
  c_analyze->add_option("--biserial-below", ao.in.biserial_below,
                        "Only queries with fewer SNs (0 = all)")
      ->capture_default_str();
  c_analyze->add_option("--biserial-mode", ao.in.biserial_mode, "pooled or per-query")
      ->check(CLI::IsMember({"pooled", "per-query"}))
      ->capture_default_str();
  c_analyze->add_option("--index", ao.index, "Quantized index for score-error analysis")
      ->check(CLI::ExistingDirectory);
  c_analyze->add_option("--docs", ao.docs, "Document vectors")->check(CLI::ExistingFile);
  c_analyze->add_option("--queries", ao.queries, "Query vectors")->check(CLI::ExistingFile);
  c_analyze->add_option("--sample", ao.sample, "Score-error sample size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_analyze->add_option("--seed", ao.seed, "Random seed")->capture_default_str();
  c_analyze->add_option("--out", ao.out, "Output directory")->required();

  // tune
  TuneCmdOptions to;
  auto* c_tune = app.add_subcommand("tune", "Grid search for the cheapest configuration");
  c_tune->add_option("--index", to.index, "Index directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_tune->add_option("--docs", to.docs, "Document vectors")->required()->check(CLI::ExistingFile);
  c_tune->add_option("--queries", to.queries, "Query vectors")->required()->check(CLI::ExistingFile);
  c_tune->add_option("--gt", to.gt, "Ground-truth directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_tune->add_option("--judgments", to.judgments, "Judgments JSONL")->check(CLI::ExistingFile);
  c_tune->add_option("--metric", to.in.metric, "recall | srecall | trecall[:x] | recall_k_eps:e")
      ->capture_default_str();
  c_tune->add_option("--target", to.in.targets, "Target value(s)");
  c_tune->add_option("--tolerance", to.in.tolerance, "Tolerance percent or 'proxy'")
      ->capture_default_str();
  c_tune->add_option("--reorder", to.in.reorder, "reorder_k values, e.g. 0,100,200");
  c_tune->add_flag("--refine", to.in.refine, "Refine nprobe around the first target's choice");
  c_tune->add_option("--savings-target", to.savings, "Run the cost-savings comparison");
  c_tune->add_option("--out", to.out, "Output directory")->required();

  // pipeline
  PipelineOptions po;
  auto* c_pipe = app.add_subcommand("pipeline", "gt, index, search, judge, metrics, analysis");
  c_pipe->add_option("--docs", po.docs, "Document vectors")->required()->check(CLI::ExistingFile);
  c_pipe->add_option("--queries", po.queries, "Query vectors")->required()->check(CLI::ExistingFile);
  c_pipe->add_option("--k", po.k, "Neighbours per query")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_pipe->add_option("--metric", po.metric, "Similarity")
      ->check(CLI::IsMember({"ip", "l2"}))
      ->capture_default_str();
  c_pipe->add_option("--nlist", po.index.nlist, "Partitions")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_pipe->add_option("--iters", po.index.iters, "k-means iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_pipe->add_flag("--quantize", po.index.quantize, "8-bit scalar quantization");
  c_pipe->add_option("--seed", po.index.seed, "Random seed")->capture_default_str();
  c_pipe->add_option("--nprobe", po.nprobe, "Partitions probed")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_pipe->add_option("--reorder-k", po.reorder_k, "Exact rescoring depth")->capture_default_str();
  c_pipe->add_option("--tolerance", po.metrics.tolerance, "Tolerance percent or 'proxy'")
      ->capture_default_str();
  c_pipe->add_option("--eps", po.metrics.eps, "recall@k-eps epsilon")->capture_default_str();
  c_pipe->add_option("--sn-bins", po.metrics.sn_bins, "SN-count bin edges");
  c_pipe->add_option("--bin-width", po.analyze.bin_width, "SN histogram bin width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_pipe->add_option("--biserial-below", po.analyze.biserial_below,
                     "Rank-biserial over queries with fewer SNs (0 = all)")
      ->capture_default_str();
  c_pipe->add_option("--quant-sample", po.quant_sample, "Score-error sample size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_pipe->add_flag("--tune", po.tune, "Run the tuning grid");
  c_pipe->add_option("--tune-metric", po.tuning.metric, "Tuning metric")->capture_default_str();
  c_pipe->add_option("--tune-target", po.tuning.targets, "Tuning target(s)");
  c_pipe->add_option("--reorder", po.tuning.reorder, "Tuning reorder_k values");
  c_pipe->add_option("--savings-target", po.savings, "Run the cost-savings comparison");
  c_pipe->add_option("--out", po.out, "Output directory")->required();
  po.judge.add_to(c_pipe, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  po.tuning.tolerance = po.metrics.tolerance;

  try {
    if (c_synth->parsed()) return cmd_synth(c_synth, synth, g);
    if (c_gt->parsed()) return cmd_gt(c_gt, gto, g);
    if (c_index->parsed()) return cmd_index(c_index, ixo, g);
    if (c_search->parsed()) return cmd_search(c_search, so, g);
    if (c_judge->parsed()) return cmd_judge(c_judge, jo, g);
    if (c_metrics->parsed()) return cmd_metrics(c_metrics, mo, g);
    if (c_analyze->parsed()) return cmd_analyze(c_analyze, ao, g);
    if (c_tune->parsed()) return cmd_tune(c_tune, to, g);
    if (c_pipe->parsed()) return cmd_pipeline(c_pipe, po, g);
  } catch (const StageFailure& e) {
    std::cerr << "semrecall pipeline: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const sr::InvalidArgument& e) {
    std::cerr << "semrecall: error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const sr::FormatError& e) {
    std::cerr << "semrecall: error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "semrecall: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
