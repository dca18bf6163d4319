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
#include <optional>
#include <utility>
#include <vector>

#include "fairtwin/instance.hpp"
#include "fairtwin/opt_engine.hpp"
#include "fairtwin/rng.hpp"

namespace fairtwin {

struct PoolConfig {
  // Unset λ and w fall back to instance-scaled defaults:
  // λ = 1e-3·J*/d and w = 0.25·max demand.
  std::optional<double> lambda;
  std::optional<double> width;
  double width_y = 0.5;
  int per_context = 20;
  std::uint64_t seed = 0;
  double duplicate_tolerance = 1e-6;
  int retry_budget = 40;  // extra draws per context beyond per_context − 1
};

struct PoolEntry {
  double x0 = 0.0;
  Allocation allocation;
  double j_orig = 0.0;
  bool nominal = false;
};

struct SolutionPool {
  std::vector<PoolEntry> entries;
  double lambda = 0.0;
  double width = 0.0;
  double width_y = 0.0;
  int per_context = 0;
  std::uint64_t seed = 0;
  int exhausted_contexts = 0;  // contexts that ran out of retries

  // Validates feasibility and the recorded nominal objective.
  void add(const Instance& inst, PoolEntry entry);
  std::vector<double> contexts() const;
};

// x_bias = x⋆ + U[−w, w] elementwise; y_bias = clip(y⋆ + U[−w_y, w_y], 0, 1).
std::pair<Eigen::MatrixXd, Eigen::VectorXd> sample_bias(const Allocation& optimum, double width,
                                                        double width_y, Rng& rng);

std::vector<double> uniform_grid(int points);

double default_lambda(const Instance& inst, double nominal_objective);
double default_width(const Instance& inst);

SolutionPool generate_pool(const Instance& inst, const std::vector<double>& contexts,
                           const PoolConfig& config, const SolverOptions& solver = {});

// JSON lines: {"x0", "u", "j_orig"} per entry.
void save_pool(const SolutionPool& pool, const Instance& inst, const std::filesystem::path& path);
SolutionPool load_pool(const std::filesystem::path& path, const Instance& inst);

}  // namespace fairtwin
