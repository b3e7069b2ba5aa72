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

// Data model and file formats: dense vector sets (fvecs / ivecs / bvecs /
// raw f32 + JSON sidecar), ground truths, retrieval results, judgments and
// document texts.

#pragma once

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "semrecall/common.hpp"

namespace semrecall {

static_assert(std::endian::native == std::endian::little,
              "vecs formats are little-endian; big-endian hosts unsupported");

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Vector sets
// ---------------------------------------------------------------------------

/// Dense row-major matrix of embeddings; row i is document (or query) id i.
class VectorSet {
 public:
  VectorSet() = default;

  /// Throws FormatError unless data.size() is a multiple of dim and every
  /// component is finite.
  VectorSet(std::size_t dim, std::vector<float> data)
      : dim_(dim), data_(std::move(data)) {
    if (dim_ == 0) {
      if (!data_.empty()) throw FormatError("vector set with dim 0 but data");
      return;
    }
    if (data_.size() % dim_ != 0)
      throw FormatError("vector data size " + std::to_string(data_.size()) +
                        " is not a multiple of dim " + std::to_string(dim_));
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i]))
        throw FormatError("non-finite component at record " +
                          std::to_string(i / dim_) + ", index " +
                          std::to_string(i % dim_));
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const { return count() == 0; }

  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  const std::vector<float>& data() const { return data_; }

  friend bool operator==(const VectorSet&, const VectorSet&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

/// Query embeddings plus optional query texts (one per row when present).
class QuerySet : public VectorSet {
 public:
  QuerySet() = default;
  explicit QuerySet(VectorSet v, std::vector<std::string> texts = {})
      : VectorSet(std::move(v)), texts_(std::move(texts)) {
    if (!texts_.empty() && texts_.size() != count())
      throw FormatError("query texts: expected " + std::to_string(count()) +
                        " got " + std::to_string(texts_.size()));
  }
  const std::vector<std::string>& texts() const { return texts_; }

  friend bool operator==(const QuerySet&, const QuerySet&) = default;

 private:
  std::vector<std::string> texts_;
};

/// Number of rows whose L2 norm deviates from 1 by more than `tol`.
inline std::size_t count_unnormalized(const VectorSet& v, double tol = 1e-3) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i < v.count(); ++i) {
    double s = 0;
    for (float x : v.row(i)) s += double(x) * double(x);
    if (std::abs(std::sqrt(s) - 1.0) > tol) ++bad;
  }
  return bad;
}

/// Emits a warning (never renormalizes) when rows are not unit length.
inline bool check_normalized(const VectorSet& v, const std::string& what) {
  std::size_t bad = count_unnormalized(v);
  if (bad > 0) {
    warn(what + ": " + std::to_string(bad) + " of " +
         std::to_string(v.count()) +
         " rows deviate from unit L2 norm by more than 1e-3");
  }
  return bad == 0;
}

// ---------------------------------------------------------------------------
// Ranked lists
// ---------------------------------------------------------------------------

struct Neighbor {
  doc_id_t id = 0;
  float score = 0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Ranking order shared by every producer of ranked lists: score
/// descending, ties by ascending id.
inline bool ranks_before(const Neighbor& a, const Neighbor& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

using RankedList = std::vector<Neighbor>;

/// Throws FormatError if `row` breaks ordering or distinctness rules.
inline void validate_ranked(const RankedList& row, std::size_t doc_count,
                            const std::string& what) {
  std::set<doc_id_t> seen;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const auto& n = row[i];
    if (!std::isfinite(n.score))
      throw FormatError(what + ": non-finite score at rank " +
                        std::to_string(i));
    if (n.id < 0 || (doc_count > 0 && std::size_t(n.id) >= doc_count))
      throw FormatError(what + ": doc id " + std::to_string(n.id) +
                        " out of range");
    if (!seen.insert(n.id).second)
      throw FormatError(what + ": duplicate doc id " + std::to_string(n.id));
    if (i > 0 && row[i - 1].score < n.score)
      throw FormatError(what + ": scores increase at rank " +
                        std::to_string(i));
    if (i > 0 && row[i - 1].score == n.score && row[i - 1].id > n.id)
      throw FormatError(what + ": tied scores not in ascending id order at rank " +
                        std::to_string(i));
  }
}

/// Per-query exact top-k lists. All rows share the same length k.
struct GroundTruth {
  std::vector<RankedList> rows;

  std::size_t num_queries() const { return rows.size(); }
  std::size_t k() const { return rows.empty() ? 0 : rows.front().size(); }

  /// doc_count == 0 skips the id range check.
  void validate(std::size_t doc_count = 0) const {
    for (std::size_t q = 0; q < rows.size(); ++q) {
      if (rows[q].size() != k())
        throw FormatError("ground truth: query " + std::to_string(q) +
                          " has " + std::to_string(rows[q].size()) +
                          " entries, expected " + std::to_string(k()));
      validate_ranked(rows[q], doc_count,
                      "ground truth query " + std::to_string(q));
    }
  }

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// Work done by one search: bytes touched and score evaluations.
struct CostReport {
  std::uint64_t bytes_read = 0;
  std::uint64_t inner_products = 0;

  CostReport& operator+=(const CostReport& o) {
    bytes_read += o.bytes_read;
    inner_products += o.inner_products;
    return *this;
  }
  friend bool operator==(const CostReport&, const CostReport&) = default;
};

/// Output of an ANNS run: ranked ids/scores plus a cost record per query.
struct RetrievedSet {
  std::vector<RankedList> rows;
  std::vector<CostReport> costs;

  std::size_t num_queries() const { return rows.size(); }
  friend bool operator==(const RetrievedSet&, const RetrievedSet&) = default;
};

// ---------------------------------------------------------------------------
// Judgments and texts
// ---------------------------------------------------------------------------

enum class Label { NotRelevant = 0, Relevant = 1 };

inline const char* to_string(Label l) {
  return l == Label::Relevant ? "Relevant" : "NotRelevant";
}

inline std::optional<Label> parse_label_exact(const std::string& s) {
  if (s == "Relevant") return Label::Relevant;
  if (s == "NotRelevant") return Label::NotRelevant;
  return std::nullopt;
}

struct Judgment {
  query_id_t query_id = 0;
  doc_id_t doc_id = 0;
  Label label = Label::NotRelevant;
  std::string judge_id;
  friend bool operator==(const Judgment&, const Judgment&) = default;
};

/// Binary relevance labels keyed by (query, doc, judge).
class JudgmentSet {
 public:
  /// Throws FormatError on a duplicate (query, doc, judge) triple.
  void add(Judgment j) {
    auto key = std::make_tuple(j.query_id, j.doc_id, j.judge_id);
    if (!keys_.insert(key).second)
      throw FormatError("duplicate judgment for query " +
                        std::to_string(j.query_id) + ", doc " +
                        std::to_string(j.doc_id) + ", judge " + j.judge_id);
    judges_.insert(j.judge_id);
    pairs_[{j.query_id, j.doc_id}] = j.label;
    entries_.push_back(std::move(j));
  }

  const std::vector<Judgment>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::set<std::string>& judge_ids() const { return judges_; }

  JudgmentSet for_judge(const std::string& judge_id) const {
    JudgmentSet out;
    for (const auto& e : entries_)
      if (e.judge_id == judge_id) out.add(e);
    return out;
  }

  /// Label for (query, doc). Only meaningful for single-judge sets;
  /// throws InvalidArgument otherwise.
  std::optional<Label> label(query_id_t q, doc_id_t d) const {
    if (judges_.size() > 1)
      throw InvalidArgument(
          "judgment set mixes several judges; select one with for_judge()");
    auto it = pairs_.find({q, d});
    if (it == pairs_.end()) return std::nullopt;
    return it->second;
  }

  /// Every (query, doc) must appear in the ground truth.
  void validate_against(const GroundTruth& gt) const {
    for (const auto& e : entries_) {
      bool found = false;
      if (e.query_id >= 0 && std::size_t(e.query_id) < gt.num_queries()) {
        for (const auto& n : gt.rows[e.query_id])
          if (n.id == e.doc_id) { found = true; break; }
      }
      if (!found)
        throw FormatError("judgment (query " + std::to_string(e.query_id) +
                          ", doc " + std::to_string(e.doc_id) +
                          ") not present in ground truth");
    }
  }

  /// Entries sorted by (query, doc, judge); for reproducible output.
  std::vector<Judgment> sorted() const {
    auto out = entries_;
    std::sort(out.begin(), out.end(), [](const Judgment& a, const Judgment& b) {
      return std::tie(a.query_id, a.doc_id, a.judge_id) <
             std::tie(b.query_id, b.doc_id, b.judge_id);
    });
    return out;
  }

  friend bool operator==(const JudgmentSet& a, const JudgmentSet& b) {
    return a.sorted() == b.sorted();
  }

 private:
  std::vector<Judgment> entries_;
  std::set<std::tuple<query_id_t, doc_id_t, std::string>> keys_;
  std::set<std::string> judges_;
  std::map<std::pair<query_id_t, doc_id_t>, Label> pairs_;
};

/// doc_id -> text and query_id -> text.
struct DocStore {
  std::map<doc_id_t, std::string> docs;
  std::map<query_id_t, std::string> queries;

  const std::string& doc(doc_id_t id) const {
    auto it = docs.find(id);
    if (it == docs.end())
      throw InvalidArgument("doc store: no text for doc " + std::to_string(id));
    return it->second;
  }
  const std::string& query(query_id_t id) const {
    auto it = queries.find(id);
    if (it == queries.end())
      throw InvalidArgument("doc store: no text for query " +
                            std::to_string(id));
    return it->second;
  }
};

// ---------------------------------------------------------------------------
// Binary vecs I/O
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

inline void write_all(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

template <typename T>
void append_pod(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace detail

/// Parses a stream of [int32 d][d x T] records. Records may differ in length.
template <typename T>
std::vector<std::vector<T>> parse_vecs_records(std::span<const char> bytes,
                                               const std::string& what) {
  std::vector<std::vector<T>> records;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < sizeof(std::int32_t))
      throw FormatError(what + ": truncated header at record " +
                        std::to_string(records.size()));
    std::int32_t d;
    std::memcpy(&d, bytes.data() + pos, sizeof d);
    pos += sizeof d;
    if (d < 0)
      throw FormatError(what + ": negative dimension at record " +
                        std::to_string(records.size()));
    std::size_t need = std::size_t(d) * sizeof(T);
    if (bytes.size() - pos < need)
      throw FormatError(what + ": truncated record " +
                        std::to_string(records.size()));
    std::vector<T> rec(static_cast<std::size_t>(d));
    if (need) std::memcpy(rec.data(), bytes.data() + pos, need);
    pos += need;
    records.push_back(std::move(rec));
  }
  return records;
}

template <typename T>
std::vector<std::vector<T>> read_vecs_records(const fs::path& path) {
  auto bytes = detail::read_all(path);
  return parse_vecs_records<T>(bytes, path.string());
}

template <typename T>
std::string encode_vecs_records(const std::vector<std::vector<T>>& records) {
  std::string buf;
  for (const auto& r : records) {
    detail::append_pod(buf, std::int32_t(r.size()));
    buf.append(reinterpret_cast<const char*>(r.data()), r.size() * sizeof(T));
  }
  return buf;
}

template <typename T>
void write_vecs_records(const fs::path& path,
                        const std::vector<std::vector<T>>& records) {
  detail::write_all(path, encode_vecs_records(records));
}

enum class VectorFormat { Fvecs, RawF32 };

/// Decodes fvecs bytes; every record must share one dimension.
inline VectorSet parse_fvecs(std::span<const char> bytes,
                             const std::string& what) {
  if (bytes.empty()) throw FormatError(what + ": empty input");
  std::vector<float> data;
  std::size_t dim = 0, rec = 0, pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 4)
      throw FormatError(what + ": truncated header at record " +
                        std::to_string(rec));
    std::int32_t d;
    std::memcpy(&d, bytes.data() + pos, 4);
    pos += 4;
    if (d <= 0)
      throw FormatError(what + ": invalid dimension " + std::to_string(d) +
                        " at record " + std::to_string(rec));
    if (rec == 0) {
      dim = std::size_t(d);
    } else if (std::size_t(d) != dim) {
      throw FormatError(what + ": dimension mismatch at record " +
                        std::to_string(rec));
    }
    if (bytes.size() - pos < dim * 4)
      throw FormatError(what + ": truncated record " + std::to_string(rec));
    std::size_t off = data.size();
    data.resize(off + dim);
    std::memcpy(data.data() + off, bytes.data() + pos, dim * 4);
    pos += dim * 4;
    ++rec;
  }
  return VectorSet(dim, std::move(data));
}

inline fs::path raw_sidecar_path(const fs::path& blob) {
  return fs::path(blob.string() + ".json");
}

/// Loads vectors. RawF32 expects `<path>.json` = {"dim","count","dtype":"f32le"}.
inline VectorSet load_vectors(const fs::path& path,
                              VectorFormat format = VectorFormat::Fvecs) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  if (format == VectorFormat::Fvecs)
    return parse_fvecs(detail::read_all(path), path.string());

  auto side = raw_sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw IoError("cannot open sidecar " + side.string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(side.string() + ": " + e.what());
  }
  if (meta.value("dtype", "") != "f32le")
    throw FormatError(side.string() + ": dtype must be \"f32le\"");
  auto dim = meta.at("dim").get<std::int64_t>();
  auto count = meta.at("count").get<std::int64_t>();
  if (dim <= 0 || count < 0)
    throw FormatError(side.string() + ": invalid dim/count");
  auto bytes = detail::read_all(path);
  if (bytes.empty() && count == 0) throw FormatError(path.string() + ": empty input");
  if (bytes.size() != std::size_t(dim) * std::size_t(count) * 4)
    throw FormatError(path.string() + ": expected " +
                      std::to_string(dim * count * 4) + " bytes, got " +
                      std::to_string(bytes.size()));
  std::vector<float> data(std::size_t(dim) * std::size_t(count));
  std::memcpy(data.data(), bytes.data(), bytes.size());
  return VectorSet(std::size_t(dim), std::move(data));
}

inline VectorFormat format_for_path(const fs::path& p) {
  auto ext = p.extension().string();
  if (ext == ".fvecs") return VectorFormat::Fvecs;
  if (fs::exists(raw_sidecar_path(p))) return VectorFormat::RawF32;
  return VectorFormat::Fvecs;
}

inline std::string encode_fvecs(const VectorSet& v) {
  std::string buf;
  buf.reserve(v.count() * (4 + v.dim() * 4));
  for (std::size_t i = 0; i < v.count(); ++i) {
    detail::append_pod(buf, std::int32_t(v.dim()));
    auto r = v.row(i);
    buf.append(reinterpret_cast<const char*>(r.data()), r.size() * 4);
  }
  return buf;
}

inline void save_vectors(const VectorSet& v, const fs::path& path,
                         VectorFormat format = VectorFormat::Fvecs) {
  if (format == VectorFormat::Fvecs) {
    detail::write_all(path, encode_fvecs(v));
    return;
  }
  std::string blob(reinterpret_cast<const char*>(v.data().data()),
                   v.data().size() * 4);
  detail::write_all(path, blob);
  nlohmann::json meta = {{"dim", v.dim()}, {"count", v.count()},
                         {"dtype", "f32le"}};
  detail::write_all(raw_sidecar_path(path), meta.dump() + "\n");
}

// ---------------------------------------------------------------------------
// Ground truth I/O: ids as ivecs, scores as fvecs.
// ---------------------------------------------------------------------------

inline void save_ground_truth(const GroundTruth& gt, const fs::path& ids_path,
                              const fs::path& scores_path) {
  gt.validate();
  std::vector<std::vector<std::int32_t>> ids;
  std::vector<std::vector<float>> scores;
  for (const auto& row : gt.rows) {
    auto& i = ids.emplace_back();
    auto& s = scores.emplace_back();
    for (const auto& n : row) {
      i.push_back(n.id);
      s.push_back(n.score);
    }
  }
  write_vecs_records(ids_path, ids);
  write_vecs_records(scores_path, scores);
}

inline GroundTruth load_ground_truth(const fs::path& ids_path,
                                     const fs::path& scores_path) {
  auto ids = read_vecs_records<std::int32_t>(ids_path);
  auto scores = read_vecs_records<float>(scores_path);
  if (ids.size() != scores.size())
    throw FormatError("ground truth: " + std::to_string(ids.size()) +
                      " id records vs " + std::to_string(scores.size()) +
                      " score records");
  GroundTruth gt;
  for (std::size_t q = 0; q < ids.size(); ++q) {
    if (ids[q].size() != scores[q].size())
      throw FormatError("ground truth: length mismatch at query " +
                        std::to_string(q));
    auto& row = gt.rows.emplace_back();
    for (std::size_t i = 0; i < ids[q].size(); ++i)
      row.push_back({ids[q][i], scores[q][i]});
  }
  gt.validate();
  return gt;
}

// ---------------------------------------------------------------------------
// JSONL formats
// ---------------------------------------------------------------------------

namespace detail {

template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": malformed line " +
                        std::to_string(lineno) + ": " + e.what());
    }
    try {
      fn(obj, lineno);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": malformed line " +
                        std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace detail

inline nlohmann::json to_json(const Judgment& j) {
  return {{"query_id", j.query_id},
          {"doc_id", j.doc_id},
          {"label", to_string(j.label)},
          {"judge_id", j.judge_id}};
}

inline JudgmentSet load_judgments(const fs::path& path) {
  JudgmentSet out;
  detail::for_each_jsonl(path, [&](const nlohmann::json& o, std::size_t line) {
    Judgment j;
    j.query_id = o.at("query_id").get<query_id_t>();
    j.doc_id = o.at("doc_id").get<doc_id_t>();
    j.judge_id = o.at("judge_id").get<std::string>();
    auto label = o.at("label").get<std::string>();
    auto parsed = parse_label_exact(label);
    if (!parsed)
      throw FormatError(path.string() + ": unknown label \"" + label +
                        "\" at line " + std::to_string(line));
    j.label = *parsed;
    try {
      out.add(std::move(j));
    } catch (const FormatError&) {
      throw FormatError(path.string() + ": duplicate judgment at line " +
                        std::to_string(line));
    }
  });
  return out;
}

inline void save_judgments(const JudgmentSet& js, const fs::path& path) {
  std::string buf;
  for (const auto& j : js.sorted()) buf += to_json(j).dump() + "\n";
  detail::write_all(path, buf);
}

inline void save_results(const RetrievedSet& rs, const fs::path& path) {
  std::string buf;
  for (std::size_t q = 0; q < rs.rows.size(); ++q) {
    nlohmann::json ids = nlohmann::json::array(), scores = nlohmann::json::array();
    for (const auto& n : rs.rows[q]) {
      ids.push_back(n.id);
      scores.push_back(n.score);
    }
    nlohmann::json o = {{"query_id", q},
                        {"ids", ids},
                        {"scores", scores},
                        {"cost_bytes", q < rs.costs.size() ? rs.costs[q].bytes_read : 0}};
    if (q < rs.costs.size()) o["inner_products"] = rs.costs[q].inner_products;
    buf += o.dump() + "\n";
  }
  detail::write_all(path, buf);
}

inline RetrievedSet load_results(const fs::path& path) {
  RetrievedSet rs;
  detail::for_each_jsonl(path, [&](const nlohmann::json& o, std::size_t line) {
    auto q = o.at("query_id").get<std::int64_t>();
    if (q != std::int64_t(rs.rows.size()))
      throw FormatError(path.string() + ": line " + std::to_string(line) +
                        ": query ids must be dense and in order");
    auto ids = o.at("ids").get<std::vector<doc_id_t>>();
    auto scores = o.at("scores").get<std::vector<double>>();
    if (ids.size() != scores.size())
      throw FormatError(path.string() + ": line " + std::to_string(line) +
                        ": ids/scores length mismatch");
    RankedList row;
    for (std::size_t i = 0; i < ids.size(); ++i)
      row.push_back({ids[i], float(scores[i])});
    validate_ranked(row, 0, path.string() + " line " + std::to_string(line));
    rs.rows.push_back(std::move(row));
    CostReport c;
    c.bytes_read = o.at("cost_bytes").get<std::uint64_t>();
    c.inner_products = o.value("inner_products", std::uint64_t{0});
    rs.costs.push_back(c);
  });
  return rs;
}

/// Texts as JSONL: {"doc_id": int, "text": str} and {"query_id": int, "text": str}.
inline DocStore load_doc_store(const fs::path& docs_path,
                               const std::optional<fs::path>& queries_path) {
  DocStore store;
  detail::for_each_jsonl(docs_path, [&](const nlohmann::json& o, std::size_t) {
    store.docs[o.at("doc_id").get<doc_id_t>()] = o.at("text").get<std::string>();
  });
  if (queries_path) {
    detail::for_each_jsonl(*queries_path, [&](const nlohmann::json& o, std::size_t) {
      store.queries[o.at("query_id").get<query_id_t>()] =
          o.at("text").get<std::string>();
    });
  }
  return store;
}

}  // namespace semrecall
