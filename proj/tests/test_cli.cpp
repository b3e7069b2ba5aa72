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

#include <sys/wait.h>

#include <cstdio>

#include <gtest/gtest.h>

#include "semrecall/corpus.hpp"
#include "semrecall/exact_search.hpp"
#include "test_util.hpp"

namespace semrecall {
namespace {

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run(const std::string& args) {
  std::string cmd = std::string(SEMRECALL_CLI) + " --threads 2 " + args + " 2>&1";
  RunResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) r.output.append(buf, n);
  int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    auto r = run("synth --out " + (*dir_ / "syn").string() +
                 " --n-docs 1500 --dim 16 --clusters 10 --n-queries 20 --profile bimodal"
                 " --profile-k 10 --seed 3");
    ASSERT_EQ(r.code, 0) << r.output;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string syn(const std::string& f) { return (*dir_ / "syn" / f).string(); }
  static std::string out(const std::string& f) { return (*dir_ / f).string(); }

  static testing::TempDir* dir_;
};

testing::TempDir* Cli::dir_ = nullptr;

TEST_F(Cli, VersionAndHelp) {
  auto v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.output.find(SEMRECALL_VERSION), std::string::npos);
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(Cli, MissingInputNamesPath) {
  auto r = run("gt --docs /nonexistent/docs.fvecs --queries " + syn("queries.fvecs") +
               " --k 5 --out " + out("gt_missing"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("/nonexistent/docs.fvecs"), std::string::npos) << r.output;
}

TEST_F(Cli, ZeroKIsUsageError) {
  auto r = run("gt --docs " + syn("docs.fvecs") + " --queries " + syn("queries.fvecs") +
               " --k 0 --out " + out("gt_zero"));
  EXPECT_EQ(r.code, 2) << r.output;
}

TEST_F(Cli, MalformedVectorsAreFormatErrors) {
  testing::spit(out("bad.fvecs"), "abc");
  auto r = run("gt --docs " + out("bad.fvecs") + " --queries " + syn("queries.fvecs") +
               " --k 5 --out " + out("gt_bad"));
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("bad.fvecs"), std::string::npos) << r.output;
}

TEST_F(Cli, GroundTruthReloadMatchesBruteForce) {
  auto r = run("gt --docs " + syn("docs.fvecs") + " --queries " + syn("queries.fvecs") +
               " --k 7 --out " + out("gt"));
  ASSERT_EQ(r.code, 0) << r.output;
  auto gt = load_ground_truth(out("gt/gt_ids.ivecs"), out("gt/gt_scores.fvecs"));
  auto docs = load_vectors(syn("docs.fvecs"));
  auto queries = load_vectors(syn("queries.fvecs"));
  EXPECT_EQ(gt, brute_force_topk(queries, docs, 7, Metric::InnerProduct));
  EXPECT_TRUE(fs::exists(out("gt/manifest.json")));
}

TEST_F(Cli, PipelineIsDeterministic) {
  std::string base = "pipeline --docs " + syn("docs.fvecs") + " --queries " +
                     syn("queries.fvecs") + " --oracle " + syn("oracle.jsonl") +
                     " --k 10 --nlist 16 --quantize --nprobe 2 --tune --reorder 0,20"
                     " --savings-target 0.8 --out ";
  auto a = run(base + out("p1"));
  ASSERT_EQ(a.code, 0) << a.output;
  auto b = run(base + out("p2"));
  ASSERT_EQ(b.code, 0) << b.output;
  std::size_t compared = 0;
  for (const auto& e : fs::recursive_directory_iterator(out("p1"))) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), out("p1"));
    auto other = fs::path(out("p2")) / rel;
    ASSERT_TRUE(fs::exists(other)) << rel;
    if (rel.filename() == "manifest.json") {
      auto ja = nlohmann::json::parse(testing::slurp(e.path()));
      auto jb = nlohmann::json::parse(testing::slurp(other));
      for (auto* j : {&ja, &jb}) {
        j->erase("started_at");
        j->erase("finished_at");
        (*j)["config"].erase("out");
      }
      EXPECT_EQ(ja, jb) << rel;
    } else {
      EXPECT_EQ(testing::slurp(e.path()), testing::slurp(other)) << rel;
    }
    ++compared;
  }
  EXPECT_GE(compared, 15u);
  for (const char* f : {"summary.json", "per_query.csv", "analysis.json", "tuning.json",
                        "trials.csv", "savings.txt"})
    EXPECT_TRUE(fs::exists(fs::path(out("p1")) / f)) << f;
}

TEST_F(Cli, PipelineJudgeFailureNamesStage) {
  std::string texts, qtexts;
  for (int d = 0; d < 1500; ++d)
    texts += nlohmann::json{{"doc_id", d}, {"text", "doc " + std::to_string(d)}}.dump() + "\n";
  for (int q = 0; q < 20; ++q)
    qtexts += nlohmann::json{{"query_id", q}, {"text", "q " + std::to_string(q)}}.dump() + "\n";
  testing::spit(out("docs.jsonl"), texts);
  testing::spit(out("queries.jsonl"), qtexts);
  auto r = run("pipeline --docs " + syn("docs.fvecs") + " --queries " + syn("queries.fvecs") +
               " --k 5 --nlist 8 --nprobe 2 --endpoint http://127.0.0.1:1/judge"
               " --doc-text " + out("docs.jsonl") + " --query-text " + out("queries.jsonl") +
               " --max-attempts 2 --backoff-ms 1 --out " + out("pfail"));
  EXPECT_EQ(r.code, 1) << r.output;
  EXPECT_NE(r.output.find("stage 'judge' failed"), std::string::npos) << r.output;
}

TEST_F(Cli, SearchThenMetricsRoundTrip) {
  ASSERT_EQ(run("index --docs " + syn("docs.fvecs") + " --nlist 8 --quantize --out " +
                out("ix")).code, 0);
  auto s = run("search --index " + out("ix") + " --docs " + syn("docs.fvecs") + " --queries " +
               syn("queries.fvecs") + " --k 7 --nprobe 8 --reorder-k 1500 --out " + out("sr"));
  ASSERT_EQ(s.code, 0) << s.output;
  if (!fs::exists(out("gt/gt_ids.ivecs")))
    ASSERT_EQ(run("gt --docs " + syn("docs.fvecs") + " --queries " + syn("queries.fvecs") +
                  " --k 7 --out " + out("gt")).code, 0);
  auto m = run("metrics --gt " + out("gt") + " --results " + out("sr/results.jsonl") +
               " --out " + out("mx"));
  ASSERT_EQ(m.code, 0) << m.output;
  auto summary = nlohmann::json::parse(testing::slurp(out("mx/summary.json")));
  EXPECT_NE(summary.dump().find("recall"), std::string::npos);
  EXPECT_TRUE(fs::exists(out("mx/per_query.csv")));
}

}  // namespace
}  // namespace semrecall
