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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fairtwin/cost_net.hpp"
#include "fairtwin/dataset.hpp"
#include "fairtwin/instance.hpp"
#include "fairtwin/latent.hpp"
#include "fairtwin/opt_engine.hpp"
#include "fairtwin/preference.hpp"
#include "fairtwin/scenario.hpp"

namespace fairtwin {

struct ContextResult {
  double x0 = 0.0;
  double j_nom = 0.0, j_sur = 0.0;
  double r_nom = 0.0, r_sur = 0.0;
  double composite_nom = 0.0, composite_sur = 0.0;
  bool win = false;
  double max_violation = 0.0;  // surrogate solution vs. original constraints
  bool feasible = false;

  double delta_r() const { return r_nom - r_sur; }
  double delta_j() const { return j_sur - j_nom; }
};

// The nominal optimum does not depend on x0, so callers solve it once.
struct NominalBaseline {
  Allocation allocation;
  double objective = 0.0;
};

NominalBaseline solve_nominal(const Instance& inst, const SolverOptions& solver = {});

ContextResult evaluate_context(const Instance& inst, const QuadCost& cost, double x0,
                               const NominalBaseline& nominal, const OracleConfig& oracle = {},
                               const SolverOptions& solver = {});
ContextResult evaluate_context(const Instance& inst, const QuadCost& cost, double x0);

struct ExperimentConfig {
  // Instance: a file, or the generator.
  std::optional<std::filesystem::path> instance_path;
  std::uint64_t instance_seed = 7;
  int n_counties = 9;
  int n_existing = 14;
  int n_temporary = 9;
  GeneratorParams generator;

  // Pool.
  int train_contexts = 26;
  int per_context = 20;
  std::optional<double> lambda;        // absolute
  std::optional<double> width;         // absolute
  double lambda_scale = 1.0;           // multiplies the default λ when lambda is unset
  double width_scale = 1.0;            // multiplies the default w when width is unset
  double width_y = 0.5;

  std::vector<int> sizes = {448, 896, 1344};
  std::vector<double> flips = {0.0, 0.1, 0.2, 0.3};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7};
  int eval_grid = 52;
  int latent_dim = 30;

  TrainConfig train;
  ExportOptions export_options;
  OracleConfig oracle;
  int jobs = 1;
};

struct CellResult {
  int size = 0;
  double flip = 0.0;
  std::uint64_t seed = 0;
  std::vector<ContextResult> contexts;
  int wins = 0;
  TrainReport training;
  std::string error;  // nonempty when the cell aborted
};

struct TradeoffRow {
  double x0 = 0.0;
  double mean_dr = 0.0, std_dr = 0.0, mean_dj = 0.0, std_dj = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<CellResult> cells;
  double nominal_objective = 0.0;

  // Over seeds of the given cell; NaN when no seed completed.
  double mean_wins(int size, double flip) const;
  std::vector<TradeoffRow> tradeoff(int size, double flip) const;
  int feasibility_violations(double tolerance) const;
  // max |ΔR − ΔJ − (composite_nom − composite_sur)| over all contexts.
  double identity_max_error() const;
};

using ProgressFn = std::function<void(const std::string&)>;

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

// Sample standard deviation (n − 1); 0 for a single value.
double sample_std(const std::vector<double>& values);

void write_report_json(const ExperimentReport& report, const std::filesystem::path& path);
// Columns: size, flip, x0, mean_dR, std_dR, mean_dJ, std_dJ.
void write_tradeoff_csv(const ExperimentReport& report, const std::filesystem::path& path);
std::string format_table(const ExperimentReport& report);

Instance experiment_instance(const ExperimentConfig& config);

}  // namespace fairtwin
