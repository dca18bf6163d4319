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


#include "fairtwin/elicitation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include "fairtwin/errors.hpp"
#include "fairtwin/preference.hpp"
#include "fairtwin/rng.hpp"
#include "fairtwin/scenario.hpp"
#include "httplib.h"

namespace fairtwin {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct QueuedPair {
  double x0 = 0.0;
  Allocation a, b;
};

struct Event {
  int pair_id = 0;
  Choice choice = Choice::kSkip;
};

json side_json(const Allocation& a, const Instance& inst) {
  const FeatureVector f = extract_features(a, inst);
  const Eigen::VectorXd loads = facility_loads(a);
  json fac = json::array();
  json opened = json::array();
  for (int k = 0; k < inst.num_facilities(); ++k) {
    const auto& F = inst.facilities()[k];
    const bool temporary = F.kind == FacilityKind::kTemporary;
    fac.push_back({{"id", F.id},
                   {"kind", temporary ? "temporary" : "existing"},
                   {"load", loads[k]},
                   {"capacity", F.capacity}});
    if (temporary && a.y[inst.temporary_slot(k)] > 0.5) opened.push_back(F.id);
  }
  return {{"j_orig", nominal_objective(a, inst)},
          {"features", std::vector<double>(f.f.begin(), f.f.end())},
          {"facility_loads", fac},
          {"opened_temporary", opened}};
}

std::string new_session_id() {
  std::random_device rd;
  std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Appends one line and forces it to disk before returning.
void append_durable(const fs::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw SolverError("cannot open " + path.string());
  const std::string data = line + "\n";
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      ::close(fd);
      throw SolverError("write failed for " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  json j;
  in >> j;
  return j;
}

}  // namespace

Choice parse_choice(const std::string& s) {
  if (s == "A" || s == "a") return Choice::kA;
  if (s == "B" || s == "b") return Choice::kB;
  if (s == "skip" || s == "S" || s == "s") return Choice::kSkip;
  throw ApiError(400, "bad_choice", "choice must be A, B or skip, got '" + s + "'");
}

const char* to_string(Choice c) {
  switch (c) {
    case Choice::kA:
      return "A";
    case Choice::kB:
      return "B";
    case Choice::kSkip:
      return "skip";
  }
  return "?";
}

struct ElicitationService::Session {
  std::string id;
  fs::path dir;
  SessionRequest request;
  std::optional<Instance> instance;
  std::vector<QueuedPair> queue;
  std::vector<Event> events;
  bool finalized = false;
  std::mutex mutex;

  int answered() const {
    return static_cast<int>(std::count_if(events.begin(), events.end(),
                                          [](const Event& e) { return e.choice != Choice::kSkip; }));
  }
  int skipped() const { return static_cast<int>(events.size()) - answered(); }
  int remaining() const { return static_cast<int>(queue.size() - events.size()); }

  void apply(const Event& e) { events.push_back(e); }
};

namespace {

// Queue: a seeded preference-pair subsample with seeded presentation
// order and side assignment. Depends only on the inputs and the seed.
std::vector<QueuedPair> build_queue(const Instance& inst, const SolutionPool& pool, int n_pairs,
                                    std::uint64_t seed) {
  const auto scored = score_pool(pool, inst);
  const std::size_t available = count_distinct_pairs(scored);
  if (n_pairs < 1 || static_cast<std::size_t>(n_pairs) > available) {
    throw ApiError(400, "bad_request",
                   "n_pairs must lie in [1, " + std::to_string(available) + "]");
  }
  const PreferenceDataset ds = build_pairs(scored, inst, n_pairs, 0.0, seed);
  std::vector<QueuedPair> queue;
  Rng side = Rng::substream(seed, 0xe1c, 1);
  for (const auto& p : ds.pairs) {
    QueuedPair q;
    q.x0 = p.x0;
    q.a = unflatten(DecisionVector{p.u_pref}, inst);
    q.b = unflatten(DecisionVector{p.u_other}, inst);
    if (side.uniform01() < 0.5) std::swap(q.a, q.b);
    queue.push_back(std::move(q));
  }
  Rng order = Rng::substream(seed, 0xe1c, 2);
  order.shuffle(queue);
  return queue;
}

}  // namespace

ElicitationService::ElicitationService(fs::path data_dir) : data_dir_(std::move(data_dir)) {
  fs::create_directories(data_dir_ / "sessions");
  load_existing();
}

ElicitationService::~ElicitationService() = default;

void ElicitationService::load_existing() {
  for (const auto& entry : fs::directory_iterator(data_dir_ / "sessions")) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "session.json")) continue;
    auto s = std::make_unique<Session>();
    s->id = entry.path().filename().string();
    s->dir = entry.path();
    const json meta = read_json_file(s->dir / "session.json");
    s->request.instance = s->dir / "instance.json";
    s->request.pool = s->dir / "pool.jsonl";
    s->request.n_pairs = meta.at("n_pairs").get<int>();
    s->request.seed = meta.at("seed").get<std::uint64_t>();
    s->instance = load_instance(s->request.instance);
    s->queue = build_queue(*s->instance, load_pool(s->request.pool, *s->instance), s->request.n_pairs,
                           s->request.seed);
    std::ifstream log(s->dir / "events.jsonl");
    std::string line;
    while (std::getline(log, line)) {
      if (line.empty()) continue;
      json e;
      try {
        e = json::parse(line);
      } catch (const json::parse_error&) {
        break;  // torn final line from a crash mid-write; it was never acknowledged
      }
      if (e.value("type", "") == "finalize") {
        s->finalized = true;
        continue;
      }
      s->apply({e.at("pair_id").get<int>(), parse_choice(e.at("choice").get<std::string>())});
    }
    sessions_[s->id] = std::move(s);
  }
}

std::string ElicitationService::create_session(const SessionRequest& request) {
  auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : data_dir_ / p; };
  const fs::path inst_path = resolve(request.instance);
  const fs::path pool_path = resolve(request.pool);
  std::optional<Instance> inst;
  SolutionPool pool;
  try {
    inst = load_instance(inst_path);
    pool = load_pool(pool_path, *inst);
  } catch (const ParseError& e) {
    throw ApiError(400, "bad_input", e.what());
  } catch (const ValidationError& e) {
    throw ApiError(400, "bad_input", e.what());
  }
  auto s = std::make_unique<Session>();
  s->queue = build_queue(*inst, pool, request.n_pairs, request.seed);
  s->instance = std::move(inst);
  s->request = request;

  std::unique_lock lock(map_mutex_);
  do {
    s->id = new_session_id();
  } while (sessions_.count(s->id));
  s->dir = data_dir_ / "sessions" / s->id;
  const fs::path tmp = data_dir_ / "sessions" / (s->id + ".tmp");
  fs::create_directories(tmp);
  fs::copy_file(inst_path, tmp / "instance.json");
  fs::copy_file(pool_path, tmp / "pool.jsonl");
  {
    std::ofstream meta(tmp / "session.json");
    meta << json{{"n_pairs", request.n_pairs},
                 {"seed", request.seed},
                 {"instance_source", inst_path.string()},
                 {"pool_source", pool_path.string()}}
                .dump()
         << "\n";
  }
  // The session becomes visible to a restarted service only once complete.
  fs::rename(tmp, s->dir);
  const std::string id = s->id;
  sessions_[id] = std::move(s);
  return id;
}

ElicitationService::Session& ElicitationService::find(const std::string& id) {
  std::shared_lock lock(map_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ApiError(404, "session_not_found", "no session '" + id + "'");
  return *it->second;
}

json ElicitationService::next_pair(const std::string& id) {
  Session& s = find(id);
  std::lock_guard lock(s.mutex);
  const auto cursor = s.events.size();
  if (cursor >= s.queue.size()) return {{"done", true}};
  const QueuedPair& q = s.queue[cursor];
  return {{"done", false},
          {"pair_id", static_cast<int>(cursor)},
          {"x0", q.x0},
          {"position", static_cast<int>(cursor) + 1},
          {"total", static_cast<int>(s.queue.size())},
          {"A", side_json(q.a, *s.instance)},
          {"B", side_json(q.b, *s.instance)}};
}

json ElicitationService::submit_choice(const std::string& id, int pair_id, Choice choice) {
  Session& s = find(id);
  std::lock_guard lock(s.mutex);
  const int cursor = static_cast<int>(s.events.size());
  if (pair_id < 0 || pair_id >= static_cast<int>(s.queue.size())) {
    throw ApiError(404, "unknown_pair", "pair " + std::to_string(pair_id) + " is not in this session");
  }
  if (pair_id < cursor) {
    throw ApiError(409, "already_answered", "pair " + std::to_string(pair_id) + " was already answered");
  }
  if (pair_id > cursor) {
    throw ApiError(409, "not_outstanding", "pair " + std::to_string(pair_id) +
                                               " has not been presented; the outstanding pair is " +
                                               std::to_string(cursor));
  }
  append_durable(s.dir / "events.jsonl",
                 json{{"type", "choice"}, {"pair_id", pair_id}, {"choice", to_string(choice)}}.dump());
  s.apply({pair_id, choice});
  return {{"accepted", true}, {"answered", s.answered()}, {"remaining", s.remaining()}};
}

fs::path ElicitationService::finalize(const std::string& id) {
  Session& s = find(id);
  std::lock_guard lock(s.mutex);
  if (s.answered() == 0) throw ApiError(409, "empty_session", "no answered pairs to finalize");
  PreferenceDataset ds;
  for (const Event& e : s.events) {
    if (e.choice == Choice::kSkip) continue;
    const QueuedPair& q = s.queue[e.pair_id];
    const Allocation& chosen = e.choice == Choice::kA ? q.a : q.b;
    const Allocation& other = e.choice == Choice::kA ? q.b : q.a;
    ds.pairs.push_back({q.x0, flatten(chosen, *s.instance).values, flatten(other, *s.instance).values, false});
  }
  ds.provenance.n_pairs = static_cast<int>(ds.pairs.size());
  ds.provenance.seed = s.request.seed;
  ds.provenance.source = "human";
  ds.provenance.pool_hash = hash_pool(load_pool(s.dir / "pool.jsonl", *s.instance));
  const fs::path out = s.dir / "dataset.jsonl";
  const fs::path tmp = s.dir / "dataset.jsonl.tmp";
  save_dataset(ds, tmp);
  fs::rename(tmp, out);
  if (!s.finalized) {
    append_durable(s.dir / "events.jsonl", json{{"type", "finalize"}}.dump());
    s.finalized = true;
  }
  return out;
}

json ElicitationService::status(const std::string& id) {
  Session& s = find(id);
  std::lock_guard lock(s.mutex);
  return {{"session_id", s.id},
          {"total", static_cast<int>(s.queue.size())},
          {"answered", s.answered()},
          {"skipped", s.skipped()},
          {"remaining", s.remaining()},
          {"finalized", s.finalized}};
}

std::vector<std::string> ElicitationService::session_ids() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

void register_routes(httplib::Server& server, ElicitationService& service) {
  using httplib::Request;
  using httplib::Response;
  auto send = [](Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  // Runs a handler and turns exceptions into {error, detail} responses.
  auto guard = [send](auto&& fn) {
    return [send, fn](const Request& req, Response& res) {
      try {
        fn(req, res);
      } catch (const ApiError& e) {
        send(res, e.status(), {{"error", e.code()}, {"detail", e.what()}});
      } catch (const json::exception& e) {
        send(res, 400, {{"error", "bad_request"}, {"detail", e.what()}});
      } catch (const ParseError& e) {
        send(res, 400, {{"error", "bad_input"}, {"detail", e.what()}});
      } catch (const ValidationError& e) {
        send(res, 400, {{"error", "bad_input"}, {"detail", e.what()}});
      } catch (const std::exception& e) {
        send(res, 500, {{"error", "internal"}, {"detail", e.what()}});
      }
    };
  };
  auto body_json = [](const Request& req) {
    try {
      return json::parse(req.body);
    } catch (const json::parse_error& e) {
      throw ApiError(400, "bad_json", e.what());
    }
  };

  server.Post("/v1/sessions", guard([&service, send, body_json](const Request& req, Response& res) {
                const json b = body_json(req);
                if (!b.is_object() || !b.contains("instance") || !b.contains("pool")) {
                  throw ApiError(400, "bad_request", "expected {instance, pool, n_pairs, seed}");
                }
                SessionRequest r;
                r.instance = b.at("instance").get<std::string>();
                r.pool = b.at("pool").get<std::string>();
                r.n_pairs = b.value("n_pairs", 10);
                r.seed = b.value("seed", std::uint64_t{0});
                send(res, 201, {{"session_id", service.create_session(r)}});
              }));
  server.Get(R"(/v1/sessions/([0-9a-f]+)/next)",
             guard([&service, send](const Request& req, Response& res) {
               send(res, 200, service.next_pair(req.matches[1]));
             }));
  server.Post(R"(/v1/sessions/([0-9a-f]+)/choice)",
              guard([&service, send, body_json](const Request& req, Response& res) {
                const json b = body_json(req);
                if (!b.is_object() || !b.contains("pair_id") || !b.contains("choice")) {
                  throw ApiError(400, "bad_request", "expected {pair_id, choice}");
                }
                send(res, 200,
                     service.submit_choice(req.matches[1], b.at("pair_id").get<int>(),
                                           parse_choice(b.at("choice").get<std::string>())));
              }));
  server.Post(R"(/v1/sessions/([0-9a-f]+)/finalize)",
              guard([&service, send](const Request& req, Response& res) {
                send(res, 200, {{"path", fs::absolute(service.finalize(req.matches[1])).string()}});
              }));
  server.Get(R"(/v1/sessions/([0-9a-f]+)/status)",
             guard([&service, send](const Request& req, Response& res) {
               send(res, 200, service.status(req.matches[1]));
             }));
  server.set_error_handler([send](const Request&, Response& res) {
    if (res.body.empty()) {
      send(res, res.status, {{"error", res.status == 404 ? "not_found" : "http_error"},
                             {"detail", "status " + std::to_string(res.status)}});
    }
  });
}

}  // namespace fairtwin
