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

#include "fairtwin/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "fairtwin/errors.hpp"
#include "json.hpp"

namespace fairtwin {

using nlohmann::json;

void SolutionPool::add(const Instance& inst, PoolEntry entry) {
  if (!is_feasible(entry.allocation, inst)) {
    throw ValidationError("pool entry at x0=" + std::to_string(entry.x0) + " is infeasible");
  }
  const double j = nominal_objective(entry.allocation, inst);
  if (std::abs(j - entry.j_orig) > 1e-9 * std::max(1.0, std::abs(j))) {
    throw ValidationError("pool entry at x0=" + std::to_string(entry.x0) +
                          ": j_orig does not match the allocation");
  }
  entries.push_back(std::move(entry));
}

std::vector<double> SolutionPool::contexts() const {
  std::vector<double> out;
  for (const auto& e : entries) {
    if (out.empty() || out.back() != e.x0) out.push_back(e.x0);
  }
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> sample_bias(const Allocation& optimum, double width,
                                                        double width_y, Rng& rng) {
  Eigen::MatrixXd xb = optimum.x;
  for (Eigen::Index c = 0; c < xb.rows(); ++c) {
    for (Eigen::Index f = 0; f < xb.cols(); ++f) xb(c, f) += rng.uniform(-width, width);
  }
  Eigen::VectorXd yb = optimum.y;
  for (Eigen::Index t = 0; t < yb.size(); ++t) {
    yb[t] = std::clamp(yb[t] + rng.uniform(-width_y, width_y), 0.0, 1.0);
  }
  return {xb, yb};
}

std::vector<double> uniform_grid(int points) {
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
  return g;
}

double default_lambda(const Instance& inst, double nominal_objective) {
  return 1e-3 * std::abs(nominal_objective) / inst.decision_dim();
}

double default_width(const Instance& inst) { return 0.25 * inst.max_demand(); }

SolutionPool generate_pool(const Instance& inst, const std::vector<double>& contexts,
                           const PoolConfig& config, const SolverOptions& solver) {
  if (config.per_context < 1) throw ValidationError("per_context must be at least 1");
  for (double x0 : contexts) {
    if (!(x0 >= 0.0 && x0 <= 1.0)) throw ValidationError("contexts must lie in [0, 1]");
  }
  const SolveResult nominal = solve_milp(inst, solver);
  if (nominal.status != SolveStatus::kOptimal) {
    throw SolverError(std::string("nominal problem: ") + to_string(nominal.status));
  }
  const Allocation& optimum = *nominal.allocation;

  SolutionPool pool;
  pool.lambda = config.lambda.value_or(default_lambda(inst, nominal.objective));
  pool.width = config.width.value_or(default_width(inst));
  pool.width_y = config.width_y;
  pool.per_context = config.per_context;
  pool.seed = config.seed;
  if (!(pool.width > 0.0)) throw ValidationError("bias width must be positive");

  const double dup_scale = config.duplicate_tolerance * std::max(1.0, inst.max_demand());
  for (std::size_t ci = 0; ci < contexts.size(); ++ci) {
    const double x0 = contexts[ci];
    std::vector<Eigen::VectorXd> seen{flatten(optimum, inst).values};
    pool.add(inst, PoolEntry{x0, optimum, nominal_objective(optimum, inst), true});

    int accepted = 1;
    const int max_draws = config.per_context - 1 + config.retry_budget;
    for (int draw = 0; draw < max_draws && accepted < config.per_context; ++draw) {
      Rng rng = Rng::substream(config.seed, ci, static_cast<std::uint64_t>(draw));
      auto [xb, yb] = sample_bias(optimum, pool.width, pool.width_y, rng);
      const SolveResult r = solve_biased(inst, xb, yb, pool.lambda, solver);
      if (r.status != SolveStatus::kOptimal) {
        throw SolverError(std::string("biased problem at x0=") + std::to_string(x0) + ": " +
                          to_string(r.status));
      }
      const Eigen::VectorXd u = flatten(*r.allocation, inst).values;
      const bool duplicate = std::any_of(seen.begin(), seen.end(), [&](const Eigen::VectorXd& v) {
        return (v - u).cwiseAbs().maxCoeff() <= dup_scale;
      });
      if (duplicate) continue;
      seen.push_back(u);
      pool.add(inst, PoolEntry{x0, *r.allocation, nominal_objective(*r.allocation, inst), false});
      ++accepted;
    }
    if (accepted < config.per_context) ++pool.exhausted_contexts;
  }
  return pool;
}

void save_pool(const SolutionPool& pool, const Instance& inst, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& e : pool.entries) {
    const Eigen::VectorXd u = flatten(e.allocation, inst).values;
    json line = {{"x0", e.x0}, {"u", std::vector<double>(u.data(), u.data() + u.size())},
                 {"j_orig", e.j_orig}};
    out << line.dump() << "\n";
  }
}

SolutionPool load_pool(const std::filesystem::path& path, const Instance& inst) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open pool file " + path.string());
  SolutionPool pool;
  std::string line;
  int lineno = 0;
  std::vector<double> first_seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("x0") || !j.contains("u") || !j.contains("j_orig") ||
        j.size() != 3 || !j["u"].is_array()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": expected {x0, u, j_orig}");
    }
    const auto values = j["u"].get<std::vector<double>>();
    DecisionVector u{Eigen::Map<const Eigen::VectorXd>(values.data(), values.size())};
    PoolEntry e;
    e.x0 = j["x0"].get<double>();
    e.allocation = unflatten(u, inst);
    e.j_orig = j["j_orig"].get<double>();
    // The first entry of each context is the nominal optimum.
    e.nominal = pool.entries.empty() || pool.entries.back().x0 != e.x0;
    pool.add(inst, std::move(e));
  }
  pool.per_context = 0;
  return pool;
}

}  // namespace fairtwin
