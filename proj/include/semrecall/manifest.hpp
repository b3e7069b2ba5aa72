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

#pragma once

#include <chrono>
#include <ctime>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "semrecall/common.hpp"
#include "semrecall/corpus.hpp"
#include "semrecall/digest.hpp"

#ifndef SEMRECALL_VERSION
#define SEMRECALL_VERSION "0.0.0"
#endif

namespace semrecall {

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Provenance record written as manifest.json next to a command's outputs.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::map<std::string, std::uint64_t> seeds;
  std::string version = SEMRECALL_VERSION;
  std::string started_at = utc_timestamp();
  std::string finished_at;

  /// Digests the file as it is read; a missing path is an IoError.
  void add_input(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("input not found: " + path.string());
    input_digests[path.string()] = sha256_file(path);
  }

  nlohmann::json to_json() const {
    return {{"command", command},
            {"version", version},
            {"config", config},
            {"inputs", input_digests},
            {"seeds", seeds},
            {"started_at", started_at},
            {"finished_at", finished_at}};
  }

  void write(const fs::path& dir) {
    finished_at = utc_timestamp();
    fs::create_directories(dir);
    detail::write_all(dir / "manifest.json", to_json().dump(2) + "\n");
  }
};

}  // namespace semrecall
