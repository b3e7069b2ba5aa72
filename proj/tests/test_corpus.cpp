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

#include <cstring>
#include <numeric>
#include <random>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "semrecall/corpus.hpp"
#include "test_util.hpp"

namespace semrecall {
namespace {

using ::testing::HasSubstr;
using testing::TempDir;

// Independent little-endian record writer used as the format oracle.
template <typename T>
std::string record_bytes(const std::vector<std::vector<T>>& recs) {
  std::string out;
  for (const auto& r : recs) {
    std::int32_t d = std::int32_t(r.size());
    out.append(reinterpret_cast<const char*>(&d), 4);
    out.append(reinterpret_cast<const char*>(r.data()), r.size() * sizeof(T));
  }
  return out;
}

template <typename F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(VectorSet, RejectsNonFiniteAndRaggedData) {
  EXPECT_THROW(VectorSet(2, {1.0f, 2.0f, 3.0f}), FormatError);
  EXPECT_THROW(VectorSet(2, {1.0f, std::numeric_limits<float>::infinity()}), FormatError);
  EXPECT_THROW(VectorSet(1, {std::nanf("")}), FormatError);
  VectorSet ok(2, {1, 2, 3, 4});
  EXPECT_EQ(ok.count(), 2u);
  EXPECT_EQ(ok.row(1)[0], 3.0f);
}

TEST(LoadVectors, EmptyFileIsAnError) {
  TempDir tmp;
  testing::spit(tmp / "e.fvecs", "");
  EXPECT_THAT(error_of([&] { load_vectors(tmp / "e.fvecs"); }), HasSubstr("empty input"));
}

TEST(LoadVectors, ReadsThreeRecordsOfDimFour) {
  TempDir tmp;
  std::vector<std::vector<float>> recs = {{1, 2, 3, 4}, {5, 6, 7, 8}, {-1, 0.5f, 0.25f, 9}};
  testing::spit(tmp / "v.fvecs", record_bytes(recs));
  auto v = load_vectors(tmp / "v.fvecs");
  EXPECT_EQ(v.count(), 3u);
  EXPECT_EQ(v.dim(), 4u);
  EXPECT_EQ(v.row(2)[1], 0.5f);
  save_vectors(v, tmp / "w.fvecs");
  EXPECT_EQ(testing::slurp(tmp / "w.fvecs"), record_bytes(recs));
}

TEST(LoadVectors, DimensionMismatchNamesRecord) {
  TempDir tmp;
  std::vector<std::vector<float>> recs = {{1, 2, 3, 4}, {1, 2, 3, 4, 5}};
  testing::spit(tmp / "v.fvecs", record_bytes(recs));
  EXPECT_THAT(error_of([&] { load_vectors(tmp / "v.fvecs"); }),
              HasSubstr("dimension mismatch at record 1"));
}

TEST(LoadVectors, TruncatedRecordAndNonFinite) {
  TempDir tmp;
  auto bytes = record_bytes<float>({{1, 2, 3, 4}, {1, 2, 3, 4}});
  testing::spit(tmp / "t.fvecs", bytes.substr(0, bytes.size() - 2));
  EXPECT_THAT(error_of([&] { load_vectors(tmp / "t.fvecs"); }), HasSubstr("truncated"));
  testing::spit(tmp / "n.fvecs", record_bytes<float>({{1, std::nanf("")}}));
  EXPECT_THROW(load_vectors(tmp / "n.fvecs"), FormatError);
}

TEST(LoadVectors, RawBlobWithSidecarRoundTrips) {
  TempDir tmp;
  auto v = testing::random_unit_vectors(17, 5, 3);
  save_vectors(v, tmp / "v.f32", VectorFormat::RawF32);
  EXPECT_TRUE(fs::exists(raw_sidecar_path(tmp / "v.f32")));
  EXPECT_EQ(load_vectors(tmp / "v.f32", VectorFormat::RawF32), v);
  EXPECT_EQ(testing::slurp(tmp / "v.f32").size(), 17u * 5 * 4);
}

TEST(LoadVectors, RawBlobSizeMustMatchSidecar) {
  TempDir tmp;
  auto v = testing::random_unit_vectors(4, 3, 3);
  save_vectors(v, tmp / "v.f32", VectorFormat::RawF32);
  auto bytes = testing::slurp(tmp / "v.f32");
  testing::spit(tmp / "v.f32", bytes.substr(4));
  EXPECT_THROW(load_vectors(tmp / "v.f32", VectorFormat::RawF32), FormatError);
}

TEST(LoadVectors, ExternalBytesReproducedOnResave) {
  TempDir tmp;
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> u(-3, 3);
  std::vector<std::vector<float>> recs(25, std::vector<float>(7));
  for (auto& r : recs)
    for (auto& x : r) x = u(rng);
  auto bytes = record_bytes(recs);
  testing::spit(tmp / "x.fvecs", bytes);
  save_vectors(load_vectors(tmp / "x.fvecs"), tmp / "y.fvecs");
  EXPECT_EQ(testing::slurp(tmp / "y.fvecs"), bytes);

  std::vector<std::vector<std::int32_t>> irecs = {{3, 1, 4}, {1, 5, 9, 2}, {}};
  testing::spit(tmp / "x.ivecs", record_bytes(irecs));
  write_vecs_records(tmp / "y.ivecs", read_vecs_records<std::int32_t>(tmp / "x.ivecs"));
  EXPECT_EQ(testing::slurp(tmp / "y.ivecs"), testing::slurp(tmp / "x.ivecs"));
}

TEST(Normalization, WarnsButNeverRenormalizes) {
  std::vector<std::string> seen;
  auto old = set_warning_handler([&](const std::string& m) { seen.push_back(m); });
  VectorSet v(2, {3, 4, 0.6f, 0.8f});
  EXPECT_EQ(count_unnormalized(v), 1u);
  EXPECT_FALSE(check_normalized(v, "docs"));
  EXPECT_EQ(v.row(0)[0], 3.0f);
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_THAT(seen[0], HasSubstr("docs"));
  set_warning_handler(old);
}

TEST(GroundTruthIo, SingleQueryRoundTrip) {
  TempDir tmp;
  GroundTruth gt{{testing::ranked({{7, 0.9f}, {3, 0.8f}})}};
  save_ground_truth(gt, tmp / "ids.ivecs", tmp / "scores.fvecs");
  EXPECT_EQ(load_ground_truth(tmp / "ids.ivecs", tmp / "scores.fvecs"), gt);
  EXPECT_EQ(testing::slurp(tmp / "ids.ivecs"), record_bytes<std::int32_t>({{7, 3}}));
}

TEST(GroundTruthIo, ZeroQueries) {
  TempDir tmp;
  GroundTruth gt;
  save_ground_truth(gt, tmp / "ids.ivecs", tmp / "scores.fvecs");
  EXPECT_TRUE(fs::exists(tmp / "ids.ivecs"));
  EXPECT_EQ(fs::file_size(tmp / "ids.ivecs"), 0u);
  EXPECT_EQ(load_ground_truth(tmp / "ids.ivecs", tmp / "scores.fvecs").num_queries(), 0u);
}

TEST(GroundTruthIo, RandomHundredQueriesBitExact) {
  TempDir tmp;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-1, 1);
  GroundTruth gt;
  for (int q = 0; q < 100; ++q) {
    std::vector<doc_id_t> ids(1000);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    RankedList row;
    for (int i = 0; i < 10; ++i) row.push_back({ids[i], u(rng)});
    std::sort(row.begin(), row.end(), ranks_before);
    gt.rows.push_back(row);
  }
  save_ground_truth(gt, tmp / "ids.ivecs", tmp / "scores.fvecs");
  auto back = load_ground_truth(tmp / "ids.ivecs", tmp / "scores.fvecs");
  ASSERT_EQ(back, gt);
  for (std::size_t q = 0; q < 100; ++q)
    for (std::size_t i = 0; i < 10; ++i)
      EXPECT_EQ(std::memcmp(&back.rows[q][i].score, &gt.rows[q][i].score, 4), 0);
}

TEST(GroundTruthIo, RejectsUnsortedOrDuplicateRows) {
  GroundTruth unsorted{{testing::ranked({{1, 0.5f}, {2, 0.9f}})}};
  EXPECT_THROW(unsorted.validate(), FormatError);
  GroundTruth dup{{testing::ranked({{1, 0.9f}, {1, 0.5f}})}};
  EXPECT_THROW(dup.validate(), FormatError);
  GroundTruth out_of_range{{testing::ranked({{10, 0.9f}})}};
  EXPECT_THROW(out_of_range.validate(5), FormatError);
  GroundTruth tie_wrong{{testing::ranked({{4, 0.5f}, {2, 0.5f}})}};
  EXPECT_THROW(tie_wrong.validate(), FormatError);
}

TEST(Judgments, ParsesLabels) {
  TempDir tmp;
  testing::spit(tmp / "j.jsonl",
                R"({"query_id": 0, "doc_id": 4, "label": "Relevant", "judge_id": "a"})"
                "\n");
  auto js = load_judgments(tmp / "j.jsonl");
  ASSERT_EQ(js.size(), 1u);
  EXPECT_EQ(js.entries()[0].label, Label::Relevant);
  EXPECT_EQ(js.label(0, 4), Label::Relevant);
  EXPECT_EQ(js.label(0, 5), std::nullopt);
}

TEST(Judgments, DuplicateTripleNamesLine) {
  TempDir tmp;
  testing::spit(tmp / "j.jsonl",
                R"({"query_id": 0, "doc_id": 4, "label": "Relevant", "judge_id": "a"})"
                "\n"
                R"({"query_id": 0, "doc_id": 5, "label": "Relevant", "judge_id": "a"})"
                "\n"
                R"({"query_id": 0, "doc_id": 4, "label": "NotRelevant", "judge_id": "a"})"
                "\n");
  EXPECT_THAT(error_of([&] { load_judgments(tmp / "j.jsonl"); }),
              HasSubstr("duplicate judgment at line 3"));
}

TEST(Judgments, UnknownLabelAndMalformedLine) {
  TempDir tmp;
  testing::spit(tmp / "a.jsonl",
                R"({"query_id": 0, "doc_id": 4, "label": "relevant", "judge_id": "a"})"
                "\n");
  EXPECT_THAT(error_of([&] { load_judgments(tmp / "a.jsonl"); }), HasSubstr("unknown label"));
  testing::spit(tmp / "b.jsonl",
                R"({"query_id": 0, "doc_id": 4, "label": "Relevant", "judge_id": "a"})"
                "\n{not json\n");
  EXPECT_THAT(error_of([&] { load_judgments(tmp / "b.jsonl"); }),
              HasSubstr("malformed line 2"));
}

TEST(Judgments, TwoJudgesFilterable) {
  TempDir tmp;
  std::string text;
  for (int d = 0; d < 3; ++d)
    for (const char* judge : {"a", "b"})
      text += nlohmann::json({{"query_id", 1}, {"doc_id", d},
                              {"label", d == 0 ? "Relevant" : "NotRelevant"},
                              {"judge_id", judge}})
                  .dump() +
              "\n";
  testing::spit(tmp / "j.jsonl", text);
  auto js = load_judgments(tmp / "j.jsonl");
  EXPECT_EQ(js.size(), 6u);
  EXPECT_EQ(js.judge_ids().size(), 2u);
  EXPECT_EQ(js.for_judge("a").size(), 3u);
  EXPECT_EQ(js.for_judge("b").size(), 3u);
  EXPECT_THROW(js.label(1, 0), InvalidArgument);
  EXPECT_EQ(js.for_judge("b").label(1, 0), Label::Relevant);
}

TEST(Judgments, RoundTripAndCoverage) {
  TempDir tmp;
  JudgmentSet js;
  js.add({2, 9, Label::NotRelevant, "x"});
  js.add({0, 1, Label::Relevant, "x"});
  save_judgments(js, tmp / "j.jsonl");
  EXPECT_EQ(load_judgments(tmp / "j.jsonl"), js);
  auto first = testing::slurp(tmp / "j.jsonl");
  save_judgments(load_judgments(tmp / "j.jsonl"), tmp / "k.jsonl");
  EXPECT_EQ(testing::slurp(tmp / "k.jsonl"), first);

  GroundTruth gt{{testing::ranked({{1, 0.9f}})}};
  EXPECT_THROW(js.validate_against(gt), FormatError);
}

TEST(Results, RoundTripWithCosts) {
  TempDir tmp;
  RetrievedSet rs;
  rs.rows = {testing::ranked({{4, 0.75f}, {1, 0.125f}}), testing::ranked({{0, 0.3f}, {2, -0.1f}})};
  rs.costs = {{1024, 9}, {2048, 17}};
  save_results(rs, tmp / "r.jsonl");
  EXPECT_EQ(load_results(tmp / "r.jsonl"), rs);
}

TEST(DocStore, LookupsThrowWhenMissing) {
  TempDir tmp;
  testing::spit(tmp / "d.jsonl", R"({"doc_id": 3, "text": "hello"})" "\n");
  testing::spit(tmp / "q.jsonl", R"({"query_id": 0, "text": "greeting"})" "\n");
  auto store = load_doc_store(tmp / "d.jsonl", tmp / "q.jsonl");
  EXPECT_EQ(store.doc(3), "hello");
  EXPECT_EQ(store.query(0), "greeting");
  EXPECT_THROW(store.doc(4), InvalidArgument);
}

}  // namespace
}  // namespace semrecall
