// Copyright 2026 The FairTwin Authors
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

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "fairtwin/dataset.hpp"
#include "fairtwin/instance.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace fairtwin {

// Maps to an HTTP 4xx response with body {error, detail}.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, const std::string& detail)
      : std::runtime_error(detail), status_(status), code_(std::move(code)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }

 private:
  int status_;
  std::string code_;
};

enum class Choice { kA, kB, kSkip };

Choice parse_choice(const std::string& s);
const char* to_string(Choice c);

struct SessionRequest {
  std::filesystem::path instance;  // relative paths resolve against the data dir
  std::filesystem::path pool;
  int n_pairs = 10;
  std::uint64_t seed = 0;
};

// Sessions live under <data_dir>/sessions/<id>/ with copies of their
// inputs and an append-only events.jsonl; restarting the service replays
// every log.
class ElicitationService {
 public:
  explicit ElicitationService(std::filesystem::path data_dir);
  ~ElicitationService();

  std::string create_session(const SessionRequest& request);
  nlohmann::json next_pair(const std::string& id);
  nlohmann::json submit_choice(const std::string& id, int pair_id, Choice choice);
  std::filesystem::path finalize(const std::string& id);
  nlohmann::json status(const std::string& id);

  std::vector<std::string> session_ids() const;
  const std::filesystem::path& data_dir() const { return data_dir_; }

 private:
  struct Session;
  Session& find(const std::string& id);
  void load_existing();

  std::filesystem::path data_dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
};

// Installs the /v1 routes on a server.
void register_routes(httplib::Server& server, ElicitationService& service);

}  // namespace fairtwin
