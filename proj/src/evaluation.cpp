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


#include "fairtwin/evaluation.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "fairtwin/errors.hpp"
#include "json.hpp"

namespace fairtwin {

using nlohmann::json;

NominalBaseline solve_nominal(const Instance& inst, const SolverOptions& solver) {
  SolveResult res = solve_milp(inst, solver);
  if (res.status != SolveStatus::kOptimal || !res.allocation) {
    throw SolverError(std::string("nominal problem not solved: ") + to_string(res.status));
  }
  return {*res.allocation, nominal_objective(*res.allocation, inst)};
}

ContextResult evaluate_context(const Instance& inst, const QuadCost& cost, double x0,
                               const NominalBaseline& nominal, const OracleConfig& oracle,
                               const SolverOptions& solver) {
  if (cost.context != x0) throw ValidationError("evaluate_context: cost context differs from x0");
  SolveResult res = solve_miqp(inst, cost, solver);
  if (res.status != SolveStatus::kOptimal || !res.allocation) {
    throw SolverError(std::string("surrogate problem not solved at x0 = ") + std::to_string(x0) +
                      ": " + to_string(res.status));
  }
  const ScoredSolution nom = make_scored(nominal.allocation, x0, inst, oracle);
  const ScoredSolution sur = make_scored(*res.allocation, x0, inst, oracle);
  ContextResult out;
  out.x0 = x0;
  out.j_nom = nom.j_orig;
  out.j_sur = sur.j_orig;
  out.r_nom = nom.s;
  out.r_sur = sur.s;
  out.composite_nom = nom.phi;
  out.composite_sur = sur.phi;
  out.win = out.composite_sur < out.composite_nom;
  const FeasibilityReport f = check_feasibility(*res.allocation, inst);
  out.max_violation = std::max({f.max_demand_violation, f.max_capacity_violation,
                                -f.min_assignment, f.max_integrality_violation});
  out.feasible = f.ok(inst.feasibility_tolerance());
  return out;
}

ContextResult evaluate_context(const Instance& inst, const QuadCost& cost, double x0) {
  return evaluate_context(inst, cost, x0, solve_nominal(inst));
}

double sample_std(const std::vector<double>& values) {
  const auto n = values.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

double ExperimentReport::mean_wins(int size, double flip) const {
  double total = 0.0;
  int n = 0;
  for (const auto& c : cells) {
    if (c.size == size && c.flip == flip && c.error.empty()) {
      total += c.wins;
      ++n;
    }
  }
  return n ? total / n : std::numeric_limits<double>::quiet_NaN();
}

std::vector<TradeoffRow> ExperimentReport::tradeoff(int size, double flip) const {
  std::vector<const CellResult*> seeds;
  for (const auto& c : cells) {
    if (c.size == size && c.flip == flip && c.error.empty()) seeds.push_back(&c);
  }
  std::vector<TradeoffRow> rows;
  if (seeds.empty()) return rows;
  const auto n_ctx = seeds.front()->contexts.size();
  for (std::size_t k = 0; k < n_ctx; ++k) {
    std::vector<double> dr, dj;
    for (const auto* c : seeds) {
      dr.push_back(c->contexts[k].delta_r());
      dj.push_back(c->contexts[k].delta_j());
    }
    TradeoffRow row;
    row.x0 = seeds.front()->contexts[k].x0;
    for (double v : dr) row.mean_dr += v / dr.size();
    for (double v : dj) row.mean_dj += v / dj.size();
    row.std_dr = sample_std(dr);
    row.std_dj = sample_std(dj);
    rows.push_back(row);
  }
  return rows;
}

int ExperimentReport::feasibility_violations(double tolerance) const {
  int n = 0;
  for (const auto& c : cells) {
    for (const auto& r : c.contexts) n += !(r.feasible && r.max_violation <= tolerance);
  }
  return n;
}

double ExperimentReport::identity_max_error() const {
  double worst = 0.0;
  for (const auto& c : cells) {
    for (const auto& r : c.contexts) {
      // ΔJ is a loss (J_sur − J_nom), so it enters with a minus sign.
      const double lhs = r.delta_r() - r.delta_j();
      const double rhs = r.composite_nom - r.composite_sur;
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return worst;
}

Instance experiment_instance(const ExperimentConfig& config) {
  if (config.instance_path) return load_instance(*config.instance_path);
  return generate_instance(config.instance_seed, config.n_counties, config.n_existing,
                           config.n_temporary, config.generator);
}

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  if (config.sizes.empty() || config.flips.empty() || config.seeds.empty()) {
    throw ValidationError("run_experiment: sizes, flips and seeds must be nonempty");
  }
  if (config.eval_grid < 1 || config.train_contexts < 1) {
    throw ValidationError("run_experiment: grids need at least one point");
  }
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  const Instance inst = experiment_instance(config);
  const NominalBaseline nominal = solve_nominal(inst);
  const std::vector<double> train_grid = uniform_grid(config.train_contexts);
  const std::vector<double> eval_grid = uniform_grid(config.eval_grid);

  ExperimentReport report;
  report.config = config;
  report.nominal_objective = nominal.objective;

  struct SeedData {
    std::vector<ScoredSolution> scored;
    LatentMap map;
  };

  std::mutex mu;
  for (std::uint64_t seed : config.seeds) {
    PoolConfig pc;
    pc.lambda = config.lambda ? *config.lambda
                              : default_lambda(inst, nominal.objective) * config.lambda_scale;
    pc.width = config.width ? *config.width : default_width(inst) * config.width_scale;
    pc.width_y = config.width_y;
    pc.per_context = config.per_context;
    pc.seed = seed;
    const SolutionPool pool = generate_pool(inst, train_grid, pc);
    SeedData data;
    data.scored = score_pool(pool, inst, config.oracle);
    Eigen::MatrixXd U(static_cast<Eigen::Index>(pool.entries.size()), inst.decision_dim());
    for (std::size_t i = 0; i < pool.entries.size(); ++i) {
      U.row(static_cast<Eigen::Index>(i)) = flatten(pool.entries[i].allocation, inst).values.transpose();
    }
    data.map = fit_pca(U, config.latent_dim);
    say("seed " + std::to_string(seed) + ": pool of " + std::to_string(pool.entries.size()) +
        " solutions, " + std::to_string(count_distinct_pairs(data.scored)) + " distinct pairs");

    std::vector<CellResult> cells;
    for (int size : config.sizes) {
      for (double flip : config.flips) {
        CellResult c;
        c.size = size;
        c.flip = flip;
        c.seed = seed;
        cells.push_back(c);
      }
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        CellResult& c = cells[i];
        try {
          // One subsample per seed: cells differ only in size and flips.
          const PreferenceDataset ds = build_pairs(data.scored, inst, c.size, c.flip, splitmix64(seed));
          TrainConfig tc = config.train;
          tc.seed = seed;
          auto [net, rep] = train(ds, data.map, tc);
          c.training = rep;
          const CostTable table = export_costs(net, data.map, eval_grid, config.export_options);
          for (const auto& cost : table.entries) {
            c.contexts.push_back(
                evaluate_context(inst, cost, cost.context, nominal, config.oracle));
            c.wins += c.contexts.back().win;
          }
        } catch (const std::exception& e) {
          c.error = e.what();
        }
        std::lock_guard<std::mutex> lock(mu);
        std::ostringstream msg;
        msg << "seed " << seed << " size " << c.size << " flip " << c.flip << ": ";
        if (c.error.empty()) {
          msg << c.wins << "/" << eval_grid.size() << " wins (epochs " << c.training.epochs
              << ", train rank acc " << std::fixed << std::setprecision(3)
              << c.training.train_ranking_accuracy << ")";
        } else {
          msg << "failed: " << c.error;
        }
        say(msg.str());
      }
    };
    const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(cells.size())));
    std::vector<std::thread> pool_threads;
    for (int t = 1; t < jobs; ++t) pool_threads.emplace_back(worker);
    worker();
    for (auto& t : pool_threads) t.join();
    for (auto& c : cells) report.cells.push_back(std::move(c));
  }
  return report;
}

namespace {

json config_json(const ExperimentConfig& c) {
  json j = {{"instance_seed", c.instance_seed},
            {"n_counties", c.n_counties},
            {"n_existing", c.n_existing},
            {"n_temporary", c.n_temporary},
            {"generator",
             {{"demand_lo", c.generator.demand_lo},
              {"demand_hi", c.generator.demand_hi},
              {"capacity_lo", c.generator.capacity_lo},
              {"capacity_hi", c.generator.capacity_hi},
              {"area", c.generator.area},
              {"cost_per_distance", c.generator.cost_per_distance},
              {"fixed_cost_lo", c.generator.fixed_cost_lo},
              {"fixed_cost_hi", c.generator.fixed_cost_hi}}},
            {"train_contexts", c.train_contexts},
            {"per_context", c.per_context},
            {"lambda_scale", c.lambda_scale},
            {"width_scale", c.width_scale},
            {"width_y", c.width_y},
            {"sizes", c.sizes},
            {"flips", c.flips},
            {"seeds", c.seeds},
            {"eval_grid", c.eval_grid},
            {"latent_dim", c.latent_dim},
            {"train",
             {{"delta", c.train.delta},
              {"l2", c.train.l2},
              {"learning_rate", c.train.learning_rate},
              {"lr_decay", c.train.lr_decay},
              {"plateau", c.train.plateau},
              {"batch_size", c.train.batch_size},
              {"max_epochs", c.train.max_epochs},
              {"patience", c.train.patience},
              {"val_fraction", c.train.val_fraction},
              {"head_scale", c.train.head_scale}}},
            {"ridge_relative", c.export_options.ridge_relative},
            {"ridge_anchor", c.export_options.anchor == RidgeAnchor::kMean ? "mean" : "origin"},
            {"context_shift", c.oracle.context_shift}};
  if (c.instance_path) j["instance_path"] = c.instance_path->string();
  if (c.lambda) j["lambda"] = *c.lambda;
  if (c.width) j["width"] = *c.width;
  return j;
}

}  // namespace

void write_report_json(const ExperimentReport& report, const std::filesystem::path& path) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json ctx = json::array();
    for (const auto& r : c.contexts) {
      ctx.push_back({{"x0", r.x0},
                     {"j_nom", r.j_nom},
                     {"j_sur", r.j_sur},
                     {"r_nom", r.r_nom},
                     {"r_sur", r.r_sur},
                     {"composite_nom", r.composite_nom},
                     {"composite_sur", r.composite_sur},
                     {"win", r.win},
                     {"max_violation", r.max_violation}});
    }
    cells.push_back({{"size", c.size},
                     {"flip", c.flip},
                     {"seed", c.seed},
                     {"wins", c.wins},
                     {"error", c.error},
                     {"training",
                      {{"epochs", c.training.epochs},
                       {"best_epoch", c.training.best_epoch},
                       {"best_val_loss", c.training.best_val_loss},
                       {"train_ranking_accuracy", c.training.train_ranking_accuracy}}},
                     {"contexts", ctx}});
  }
  json table = json::array();
  for (int size : report.config.sizes) {
    for (double flip : report.config.flips) {
      const double m = report.mean_wins(size, flip);
      table.push_back({{"size", size}, {"flip", flip}, {"mean_wins", std::isnan(m) ? json() : json(m)}});
    }
  }
  json j = {{"config", config_json(report.config)},
            {"nominal_objective", report.nominal_objective},
            {"eval_grid", report.config.eval_grid},
            {"mean_wins", table},
            {"feasibility_violations", report.feasibility_violations(1e-6)},
            {"identity_max_error", report.identity_max_error()},
            {"cells", cells}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

void write_tradeoff_csv(const ExperimentReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "size,flip,x0,mean_dR,std_dR,mean_dJ,std_dJ\n";
  out << std::setprecision(17);
  for (int size : report.config.sizes) {
    for (double flip : report.config.flips) {
      for (const auto& row : report.tradeoff(size, flip)) {
        out << size << "," << flip << "," << row.x0 << "," << row.mean_dr << "," << row.std_dr
            << "," << row.mean_dj << "," << row.std_dj << "\n";
      }
    }
  }
}

std::string format_table(const ExperimentReport& report) {
  std::ostringstream out;
  out << "Mean wins (out of " << report.config.eval_grid << ") over "
      << report.config.seeds.size() << " seed(s)\n";
  out << std::setw(8) << "pairs";
  for (double f : report.config.flips) {
    std::ostringstream h;
    h << std::lround(100 * f) << "%";
    out << std::setw(10) << h.str();
  }
  out << "\n";
  for (int size : report.config.sizes) {
    out << std::setw(8) << size;
    for (double f : report.config.flips) {
      const double m = report.mean_wins(size, f);
      std::ostringstream cell;
      if (std::isnan(m)) {
        cell << "n/a";
      } else {
        cell << std::fixed << std::setprecision(3) << m;
      }
      out << std::setw(10) << cell.str();
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace fairtwin
