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


#include "fairtwin/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"

#include "fairtwin/errors.hpp"
#include "fairtwin/hash.hpp"
#include "fairtwin/rng.hpp"

namespace fairtwin {

using nlohmann::json;

namespace {

struct ContextGroup {
  double x0 = 0.0;
  std::vector<std::pair<int, int>> pairs;  // canonical (preferred, other) indices
};

std::vector<ContextGroup> group_pairs(const std::vector<ScoredSolution>& scored) {
  std::map<double, std::vector<int>> by_context;
  for (int i = 0; i < static_cast<int>(scored.size()); ++i) by_context[scored[i].x0].push_back(i);
  std::vector<ContextGroup> groups;
  for (const auto& [x0, idx] : by_context) {
    ContextGroup g;
    g.x0 = x0;
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        const auto& sa = scored[idx[a]];
        const auto& sb = scored[idx[b]];
        if (is_tie(sa.phi, sb.phi)) continue;
        if (sa.phi < sb.phi) {
          g.pairs.emplace_back(idx[a], idx[b]);
        } else {
          g.pairs.emplace_back(idx[b], idx[a]);
        }
      }
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd vector_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_array()) throw ParseError(where + ": missing array '" + key + "'");
  const auto values = j[key].get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

std::vector<double> PreferenceDataset::contexts() const {
  std::vector<double> out;
  for (const auto& p : pairs) out.push_back(p.x0);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<ScoredSolution> score_pool(const SolutionPool& pool, const Instance& inst,
                                       const OracleConfig& oracle) {
  std::vector<ScoredSolution> out;
  out.reserve(pool.entries.size());
  for (const auto& e : pool.entries) out.push_back(make_scored(e.allocation, e.x0, inst, oracle));
  return out;
}

std::string hash_pool(const SolutionPool& pool) {
  Fnv1a h;
  for (const auto& e : pool.entries) {
    h.real(e.x0);
    h.mat(e.allocation.x);
    h.vec(e.allocation.y);
  }
  return h.hex();
}

std::size_t count_distinct_pairs(const std::vector<ScoredSolution>& scored) {
  std::size_t n = 0;
  for (const auto& g : group_pairs(scored)) n += g.pairs.size();
  return n;
}

PreferenceDataset build_pairs(const std::vector<ScoredSolution>& scored, const Instance& inst,
                              int n_pairs, double flip_fraction, std::uint64_t seed) {
  if (n_pairs < 1) throw ValidationError("build_pairs: n_pairs must be at least 1");
  if (!(flip_fraction >= 0.0 && flip_fraction <= 1.0)) {
    throw ValidationError("build_pairs: flip fraction must lie in [0, 1]");
  }
  const auto groups = group_pairs(scored);
  std::size_t available = 0;
  for (const auto& g : groups) available += g.pairs.size();
  if (static_cast<std::size_t>(n_pairs) > available) {
    throw ValidationError("build_pairs: requested " + std::to_string(n_pairs) +
                          " pairs but only " + std::to_string(available) + " are available");
  }

  // Proportional allocation; leftovers go to a seeded shuffle of contexts
  // that still have unused pairs.
  const int n_groups = static_cast<int>(groups.size());
  std::vector<int> quota(n_groups, 0);
  int assigned = 0;
  for (int g = 0; g < n_groups; ++g) {
    quota[g] = static_cast<int>(static_cast<double>(n_pairs) * groups[g].pairs.size() / available);
    assigned += quota[g];
  }
  Rng alloc_rng = Rng::substream(seed, 0);
  while (assigned < n_pairs) {
    std::vector<int> open;
    for (int g = 0; g < n_groups; ++g) {
      if (quota[g] < static_cast<int>(groups[g].pairs.size())) open.push_back(g);
    }
    alloc_rng.shuffle(open);
    for (int g : open) {
      if (assigned == n_pairs) break;
      ++quota[g];
      ++assigned;
    }
  }

  PreferenceDataset ds;
  for (int g = 0; g < n_groups; ++g) {
    if (quota[g] == 0) continue;
    std::vector<int> order(groups[g].pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::substream(seed, 1, g);
    // Partial Fisher-Yates: the first quota entries are a uniform draw.
    for (int i = 0; i < quota[g]; ++i) {
      const int j = i + static_cast<int>(rng.below(order.size() - i));
      std::swap(order[i], order[j]);
    }
    for (int i = 0; i < quota[g]; ++i) {
      const auto [a, b] = groups[g].pairs[order[i]];
      PreferencePair p;
      p.x0 = groups[g].x0;
      p.u_pref = flatten(scored[a].allocation, inst).values;
      p.u_other = flatten(scored[b].allocation, inst).values;
      ds.pairs.push_back(std::move(p));
    }
  }

  const int n_flip = static_cast<int>(std::lround(flip_fraction * n_pairs));
  std::vector<int> idx(ds.pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng flip_rng = Rng::substream(seed, 2);
  flip_rng.shuffle(idx);
  for (int i = 0; i < n_flip; ++i) {
    auto& p = ds.pairs[idx[i]];
    std::swap(p.u_pref, p.u_other);
    p.corrupted = true;
  }

  ds.provenance.n_pairs = n_pairs;
  ds.provenance.flip_fraction = flip_fraction;
  ds.provenance.seed = seed;
  ds.provenance.pairs_per_context = quota;
  Fnv1a h;
  for (const auto& s : scored) {
    h.real(s.x0);
    h.mat(s.allocation.x);
    h.vec(s.allocation.y);
  }
  ds.provenance.pool_hash = h.hex();
  return ds;
}

void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& p = ds.provenance;
  json header = {{"provenance",
                  {{"pool_hash", p.pool_hash},
                   {"n_pairs", p.n_pairs},
                   {"flip_fraction", p.flip_fraction},
                   {"seed", p.seed},
                   {"pairs_per_context", p.pairs_per_context},
                   {"source", p.source},
                   {"dim", ds.dim()}}}};
  out << header.dump() << "\n";
  for (const auto& pair : ds.pairs) {
    json line = {{"x0", pair.x0},
                 {"u_pref", to_std(pair.u_pref)},
                 {"u_other", to_std(pair.u_other)},
                 {"corrupted", pair.corrupted}};
    out << line.dump() << "\n";
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

PreferenceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file " + path.string());
  PreferenceDataset ds;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  Eigen::Index dim = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(where + ": expected an object");
    if (!have_header) {
      if (!j.contains("provenance") || !j["provenance"].is_object()) {
        throw ParseError(where + ": first line must be the provenance header");
      }
      const auto& p = j["provenance"];
      try {
        ds.provenance.pool_hash = p.value("pool_hash", std::string());
        ds.provenance.n_pairs = p.at("n_pairs").get<int>();
        ds.provenance.flip_fraction = p.at("flip_fraction").get<double>();
        ds.provenance.seed = p.at("seed").get<std::uint64_t>();
        ds.provenance.pairs_per_context = p.value("pairs_per_context", std::vector<int>{});
        ds.provenance.source = p.value("source", std::string("oracle"));
      } catch (const json::exception& e) {
        throw ParseError(where + ": bad provenance: " + e.what());
      }
      have_header = true;
      continue;
    }
    for (const char* key : {"x0", "u_pref", "u_other", "corrupted"}) {
      if (!j.contains(key)) throw ParseError(where + ": missing '" + key + "'");
    }
    if (j.size() != 4) throw ParseError(where + ": unexpected keys");
    PreferencePair pair;
    try {
      pair.x0 = j["x0"].get<double>();
      pair.corrupted = j["corrupted"].get<bool>();
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    pair.u_pref = vector_field(j, "u_pref", where);
    pair.u_other = vector_field(j, "u_other", where);
    if (pair.u_pref.size() != pair.u_other.size() || pair.u_pref.size() == 0) {
      throw ValidationError(where + ": u_pref and u_other differ in dimension");
    }
    if (dim < 0) dim = pair.u_pref.size();
    if (pair.u_pref.size() != dim) {
      throw ValidationError(where + ": dimension " + std::to_string(pair.u_pref.size()) +
                            " differs from " + std::to_string(dim));
    }
    ds.pairs.push_back(std::move(pair));
  }
  if (!have_header) throw ParseError(path.string() + ": empty dataset file");
  if (static_cast<int>(ds.pairs.size()) != ds.provenance.n_pairs) {
    throw ParseError(path.string() + ": header announces " + std::to_string(ds.provenance.n_pairs) +
                     " pairs, file holds " + std::to_string(ds.pairs.size()));
  }
  return ds;
}

}  // namespace fairtwin
