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

// Relevance judging of ground-truth neighbours: an HTTP LLM judge with a
// persistent cache and retries, a planted-oracle judge for synthetic data,
// and agreement statistics between two judges.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"
#include "semrecall/digest.hpp"
#include "semrecall/synth.hpp"

namespace semrecall {

class JudgeError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Configuration and prompt handling
// ---------------------------------------------------------------------------

struct JudgeConfig {
  std::string endpoint;          // http(s)://host[:port]/path
  std::string model;
  std::string prompt_template;   // must contain {query} and {document}
  std::string judge_id = "llm";
  std::string adapter = "minimal";  // "minimal" or "openai-chat"
  std::string api_key_env;       // name of the env var holding the key
  std::size_t max_in_flight = 4;
  std::size_t max_attempts = 3;
  std::size_t backoff_base_ms = 500;
  std::size_t timeout_s = 60;
  fs::path cache_path;

  void validate() const {
    if (prompt_template.find("{query}") == std::string::npos ||
        prompt_template.find("{document}") == std::string::npos)
      throw InvalidArgument("judge: prompt template needs {query} and {document}");
    if (max_attempts == 0) throw InvalidArgument("judge: max_attempts must be >= 1");
    if (max_in_flight == 0) throw InvalidArgument("judge: max_in_flight must be >= 1");
    if (adapter != "minimal" && adapter != "openai-chat")
      throw InvalidArgument("judge: unknown adapter " + adapter);
  }
};

inline std::string load_prompt_template(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prompt template " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline std::string render_prompt(const std::string& tmpl, const std::string& query,
                                 const std::string& document) {
  std::string out;
  out.reserve(tmpl.size() + query.size() + document.size());
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 7, "{query}") == 0) {
      out += query;
      i += 7;
    } else if (tmpl.compare(i, 10, "{document}") == 0) {
      out += document;
      i += 10;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

/// Accepts exactly one token, "Relevant" or "NotRelevant", ignoring case and
/// surrounding whitespace. Anything else (explanations included) is rejected.
inline std::optional<Label> parse_judge_label(std::string_view text) {
  auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return std::nullopt;
  auto e = text.find_last_not_of(" \t\r\n");
  std::string tok(text.substr(b, e - b + 1));
  for (auto& c : tok) c = char(std::tolower(static_cast<unsigned char>(c)));
  if (tok == "relevant") return Label::Relevant;
  if (tok == "notrelevant") return Label::NotRelevant;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Provider adapters: map {"model", "prompt"} onto a concrete request body and
// pull the answer text back out.
// ---------------------------------------------------------------------------

inline nlohmann::json build_request(const std::string& adapter, const std::string& model,
                                    const std::string& prompt) {
  if (adapter == "openai-chat")
    return {{"model", model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
            {"temperature", 0}};
  return {{"model", model}, {"prompt", prompt}};
}

inline std::optional<std::string> extract_text(const std::string& adapter,
                                               const nlohmann::json& body) {
  try {
    if (adapter == "openai-chat")
      return body.at("choices").at(0).at("message").at("content").get<std::string>();
    return body.at("text").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

struct TransportResponse {
  int status = 0;       // 0 when the request never completed
  std::string body;
  std::string error;
};

using Transport = std::function<TransportResponse(const std::string& request_body)>;

/// POSTs JSON to cfg.endpoint. One client per call keeps workers independent.
inline Transport http_transport(const JudgeConfig& cfg) {
  auto scheme_end = cfg.endpoint.find("://");
  if (scheme_end == std::string::npos)
    throw InvalidArgument("judge: endpoint must start with http:// or https://");
  auto path_start = cfg.endpoint.find('/', scheme_end + 3);
  std::string host = cfg.endpoint.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : cfg.endpoint.substr(path_start);
  std::string key;
  if (!cfg.api_key_env.empty()) {
    if (const char* v = std::getenv(cfg.api_key_env.c_str())) key = v;
  }
  auto timeout = cfg.timeout_s;
  return [host, path, key, timeout](const std::string& body) {
    httplib::Client cli(host);
    cli.set_connection_timeout(std::time_t(timeout));
    cli.set_read_timeout(std::time_t(timeout));
    httplib::Headers headers;
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) return TransportResponse{0, {}, httplib::to_string(res.error())};
    return TransportResponse{res->status, res->body, {}};
  };
}

// ---------------------------------------------------------------------------
// Cache: judgments JSONL plus "prompt_hash"; append-only.
// ---------------------------------------------------------------------------

class JudgeCache {
 public:
  using Key = std::tuple<query_id_t, doc_id_t, std::string, std::string>;

  JudgeCache() = default;

  /// Loads existing entries; an unreadable trailing line (interrupted write)
  /// is skipped with a warning.
  explicit JudgeCache(fs::path path) : path_(std::move(path)) {
    if (path_.empty() || !fs::exists(path_)) return;
    std::ifstream in(path_);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto o = nlohmann::json::parse(line);
        auto label = parse_label_exact(o.at("label").get<std::string>());
        if (!label) throw FormatError("bad label");
        entries_[{o.at("query_id").get<query_id_t>(), o.at("doc_id").get<doc_id_t>(),
                  o.at("judge_id").get<std::string>(),
                  o.at("prompt_hash").get<std::string>()}] = *label;
      } catch (const std::exception&) {
        warn("judge cache " + path_.string() + ": skipping unreadable line " +
             std::to_string(lineno));
      }
    }
  }

  std::optional<Label> find(const Key& k) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = entries_.find(k);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void append(const Key& k, Label label) {
    std::lock_guard<std::mutex> lock(mu_);
    entries_[k] = label;
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to judge cache " + path_.string());
    nlohmann::json o = {{"query_id", std::get<0>(k)}, {"doc_id", std::get<1>(k)},
                        {"label", to_string(label)}, {"judge_id", std::get<2>(k)},
                        {"prompt_hash", std::get<3>(k)}};
    out << o.dump() << '\n';
    out.flush();
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
  }

 private:
  fs::path path_;
  mutable std::mutex mu_;
  std::map<Key, Label> entries_;
};

// ---------------------------------------------------------------------------
// LLM judge
// ---------------------------------------------------------------------------

struct JudgeStats {
  std::size_t pairs = 0;
  std::size_t cache_hits = 0;
  std::size_t requests = 0;       // HTTP attempts actually sent
  std::size_t retries = 0;
  std::size_t unparseable = 0;    // pairs left unjudged
  std::size_t transport_failures = 0;
};

struct JudgeOutcome {
  JudgmentSet judgments;
  std::vector<std::pair<query_id_t, doc_id_t>> unjudged;
  JudgeStats stats;
  std::map<std::pair<query_id_t, doc_id_t>, std::size_t> attempts;  // network attempts per pair
};

/// Labels every (query, ground-truth doc) pair. The cache is consulted first
/// and appended after each successful call, so an interrupted run resumes.
/// Transport failures that survive all retries raise JudgeError after the
/// remaining pairs are processed; unparseable answers become `unjudged`.
inline JudgeOutcome judge_ground_truth(const GroundTruth& gt, const DocStore& docs,
                                       const JudgeConfig& cfg,
                                       Transport transport = nullptr) {
  cfg.validate();
  if (!transport) transport = http_transport(cfg);

  struct Pair {
    query_id_t q;
    doc_id_t d;
    std::string prompt, hash;
  };
  std::vector<Pair> pairs;
  for (std::size_t q = 0; q < gt.num_queries(); ++q) {
    for (const auto& n : gt.rows[q]) {
      auto prompt = render_prompt(cfg.prompt_template, docs.query(query_id_t(q)), docs.doc(n.id));
      auto hash = sha256_hex(cfg.model + '\n' + prompt);
      pairs.push_back({query_id_t(q), n.id, std::move(prompt), std::move(hash)});
    }
  }

  JudgeCache cache(cfg.cache_path);
  std::vector<std::optional<Label>> labels(pairs.size());
  std::vector<std::size_t> attempts(pairs.size(), 0);
  std::vector<char> failed(pairs.size(), 0), transport_failed(pairs.size(), 0);
  std::atomic<std::size_t> hits{0};

  auto judge_one = [&](std::size_t i) {
    const auto& p = pairs[i];
    JudgeCache::Key key{p.q, p.d, cfg.judge_id, p.hash};
    if (auto hit = cache.find(key)) {
      labels[i] = hit;
      ++hits;
      return;
    }
    auto body = build_request(cfg.adapter, cfg.model, p.prompt).dump();
    bool last_was_transport = false;
    for (std::size_t a = 0; a < cfg.max_attempts; ++a) {
      if (a > 0) {
        auto delay = std::chrono::milliseconds(cfg.backoff_base_ms << (a - 1));
        std::this_thread::sleep_for(delay);
      }
      ++attempts[i];
      auto res = transport(body);
      if (res.status == 0 || res.status == 429 || res.status >= 500) {
        last_was_transport = true;
        continue;
      }
      if (res.status >= 400) {  // client error: retrying will not help
        last_was_transport = true;
        break;
      }
      last_was_transport = false;
      std::optional<Label> label;
      try {
        auto text = extract_text(cfg.adapter, nlohmann::json::parse(res.body));
        if (text) label = parse_judge_label(*text);
      } catch (const nlohmann::json::exception&) {
      }
      if (label) {
        labels[i] = label;
        cache.append(key, *label);
        return;
      }
    }
    if (last_was_transport) transport_failed[i] = 1;
    else failed[i] = 1;
  };
  parallel_for(pairs.size(), cfg.max_in_flight, judge_one);

  JudgeOutcome out;
  out.stats.pairs = pairs.size();
  out.stats.cache_hits = hits.load();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.stats.requests += attempts[i];
    if (attempts[i] > 1) out.stats.retries += attempts[i] - 1;
    if (attempts[i]) out.attempts[{pairs[i].q, pairs[i].d}] = attempts[i];
    if (labels[i]) {
      out.judgments.add({pairs[i].q, pairs[i].d, *labels[i], cfg.judge_id});
    } else {
      out.unjudged.emplace_back(pairs[i].q, pairs[i].d);
      out.stats.unparseable += failed[i];
      out.stats.transport_failures += transport_failed[i];
    }
  }
  if (out.stats.unparseable)
    warn("judge: " + std::to_string(out.stats.unparseable) +
         " pairs left unjudged after unparseable responses");
  if (out.stats.transport_failures)
    throw JudgeError("judge: transport failed for " +
                     std::to_string(out.stats.transport_failures) + " of " +
                     std::to_string(pairs.size()) + " pairs after " +
                     std::to_string(cfg.max_attempts) + " attempts (endpoint " +
                     cfg.endpoint + ")");
  return out;
}

/// Labels ground-truth pairs from a planted oracle.
inline JudgmentSet synthetic_oracle_judge(const GroundTruth& gt, const PlantedOracle& oracle,
                                          const std::string& judge_id = "oracle") {
  JudgmentSet js;
  for (std::size_t q = 0; q < gt.num_queries(); ++q)
    for (const auto& n : gt.rows[q])
      js.add({query_id_t(q), n.id,
              oracle.is_relevant(query_id_t(q), n.id) ? Label::Relevant : Label::NotRelevant,
              judge_id});
  return js;
}

// ---------------------------------------------------------------------------
// Agreement between two judges
// ---------------------------------------------------------------------------

struct AgreementReport {
  std::size_t n = 0;
  double observed = 0;               // p_o
  double expected = 0;               // p_e
  std::optional<double> kappa;       // undefined when p_e == 1
  std::map<std::string, double> per_label;  // both judges / at least one judge
  std::vector<std::pair<query_id_t, double>> low_agreement;  // below cutoff
  std::size_t counts[2][2] = {{0, 0}, {0, 0}};  // [a][b], 1 = Relevant
};

/// Cohen's kappa from a 2x2 contingency table [a_label][b_label].
inline AgreementReport agreement_from_counts(const std::size_t counts[2][2]) {
  AgreementReport r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      r.counts[i][j] = counts[i][j];
      r.n += counts[i][j];
    }
  if (r.n == 0) throw InvalidArgument("agreement: no pairs");
  const double n = double(r.n);
  r.observed = double(counts[0][0] + counts[1][1]) / n;
  double a_rel = double(counts[1][0] + counts[1][1]) / n;
  double b_rel = double(counts[0][1] + counts[1][1]) / n;
  r.expected = a_rel * b_rel + (1 - a_rel) * (1 - b_rel);
  if (r.expected < 1) r.kappa = (r.observed - r.expected) / (1 - r.expected);
  // Per-label agreement: among pairs where at least one judge used the
  // label, the fraction where both did.
  auto ratio = [](std::size_t both, std::size_t any) {
    return any == 0 ? 1.0 : double(both) / double(any);
  };
  r.per_label["Relevant"] =
      ratio(counts[1][1], counts[1][1] + counts[1][0] + counts[0][1]);
  r.per_label["NotRelevant"] =
      ratio(counts[0][0], counts[0][0] + counts[1][0] + counts[0][1]);
  return r;
}

inline AgreementReport cross_validate(const JudgmentSet& a, const JudgmentSet& b,
                                      double low_cutoff = 0.7) {
  if (a.judge_ids().size() > 1 || b.judge_ids().size() > 1)
    throw InvalidArgument("cross_validate: each input must hold a single judge");
  std::map<std::pair<query_id_t, doc_id_t>, Label> la, lb;
  for (const auto& e : a.entries()) la[{e.query_id, e.doc_id}] = e.label;
  for (const auto& e : b.entries()) lb[{e.query_id, e.doc_id}] = e.label;
  std::vector<std::string> mismatch;
  for (const auto& [k, _] : la)
    if (!lb.count(k))
      mismatch.push_back("(" + std::to_string(k.first) + "," + std::to_string(k.second) +
                         ") only in first");
  for (const auto& [k, _] : lb)
    if (!la.count(k))
      mismatch.push_back("(" + std::to_string(k.first) + "," + std::to_string(k.second) +
                         ") only in second");
  if (!mismatch.empty()) {
    std::string msg = "cross_validate: coverage mismatch on " +
                      std::to_string(mismatch.size()) + " pairs:";
    for (std::size_t i = 0; i < std::min<std::size_t>(mismatch.size(), 10); ++i)
      msg += " " + mismatch[i];
    throw InvalidArgument(msg);
  }
  std::size_t counts[2][2] = {{0, 0}, {0, 0}};
  std::map<query_id_t, std::pair<std::size_t, std::size_t>> per_query;  // agree, total
  for (const auto& [k, label_a] : la) {
    auto label_b = lb.at(k);
    ++counts[int(label_a)][int(label_b)];
    auto& pq = per_query[k.first];
    pq.first += label_a == label_b;
    ++pq.second;
  }
  auto r = agreement_from_counts(counts);
  for (const auto& [q, c] : per_query) {
    double agree = double(c.first) / double(c.second);
    if (agree < low_cutoff) r.low_agreement.emplace_back(q, agree);
  }
  return r;
}

inline nlohmann::json to_json(const AgreementReport& r) {
  nlohmann::json low = nlohmann::json::array();
  for (const auto& [q, v] : r.low_agreement) low.push_back({{"query_id", q}, {"agreement", v}});
  return {{"n", r.n},
          {"observed_agreement", r.observed},
          {"expected_agreement", r.expected},
          {"kappa", r.kappa ? nlohmann::json(*r.kappa) : nlohmann::json(nullptr)},
          {"per_label_agreement", r.per_label},
          {"per_label_definition",
           "pairs where both judges gave the label / pairs where at least one did"},
          {"contingency", {{"rel_rel", r.counts[1][1]}, {"rel_not", r.counts[1][0]},
                           {"not_rel", r.counts[0][1]}, {"not_not", r.counts[0][0]}}},
          {"low_agreement_queries", low}};
}

}  // namespace semrecall
