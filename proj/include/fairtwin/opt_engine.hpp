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
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "fairtwin/instance.hpp"
#include "fairtwin/qp_solver.hpp"

namespace fairtwin {

// H = diag(diagonal) + V Vᵀ. The solver works on this form so that a
// rank-r surrogate plus ridge costs O(r) extra rows rather than O(d).
struct HessianFactor {
  Eigen::VectorXd diagonal;
  Eigen::MatrixXd V;  // d × k, k may be 0

  Eigen::MatrixXd dense() const;
};

// Convex quadratic objective ½uᵀHu + qᵀu for one context.
struct QuadCost {
  Eigen::MatrixXd H;
  Eigen::VectorXd q;
  double context = 0.0;
  // Structured copy of H when the producer knows it; otherwise derived
  // from H by an eigendecomposition.
  std::optional<HessianFactor> factor;

  static QuadCost linear(Eigen::VectorXd q, double context = 0.0);

  double evaluate(const Eigen::VectorXd& u) const { return 0.5 * u.dot(H * u) + q.dot(u); }
  HessianFactor factorize() const;
};

inline constexpr double kSymmetryTolerance = 1e-10;  // τ_sym

// Throws ValidationError if H is not square d×d, not symmetric within
// τ_sym·max(1, ‖H‖), or has an eigenvalue below −1e-8·‖H‖.
void validate_quad_cost(const QuadCost& cost, Eigen::Index d);

enum class SolveStatus { kOptimal, kInfeasible, kNodeLimit };

const char* to_string(SolveStatus s);

struct NodeRecord {
  int id = 0;
  int parent = -1;
  double parent_bound = 0.0;
  double relaxation = 0.0;
  double incumbent = 0.0;  // after processing the node; +inf if none yet
};

struct SolveResult {
  SolveStatus status = SolveStatus::kInfeasible;
  std::optional<Allocation> allocation;  // present iff kOptimal
  double objective = 0.0;
  int nodes_explored = 0;
  int relaxation_solves = 0;
  std::vector<NodeRecord> nodes;  // filled when SolverOptions::record_nodes
};

struct SolverOptions {
  int node_limit = 1000000;
  double gap = 1e-6;  // τ_gap, relative
  double integrality_tolerance = kIntegralityTolerance;
  bool record_nodes = false;
  std::ostream* trace = nullptr;  // "node, bound, incumbent" lines
  IpmOptions ipm;
};

// Nominal facility-allocation MILP: transport plus opening cost.
SolveResult solve_milp(const Instance& inst, const SolverOptions& options = {});

// Nominal cost plus λ(‖x − x_bias‖²_F + ‖y − y_bias‖²) over the same
// feasible set. λ = 0 reduces to solve_milp.
SolveResult solve_biased(const Instance& inst, const Eigen::MatrixXd& x_bias,
                         const Eigen::VectorXd& y_bias, double lambda,
                         const SolverOptions& options = {});

// Learned convex quadratic over the original constraints.
SolveResult solve_miqp(const Instance& inst, const QuadCost& cost,
                       const SolverOptions& options = {});

// Objective data in decision space: ½uᵀHu + cᵀu + constant, H = factor.
struct MixedObjective {
  HessianFactor hessian;
  Eigen::VectorXd linear;
  double constant = 0.0;

  double evaluate(const Eigen::VectorXd& u) const;
};

MixedObjective nominal_objective_data(const Instance& inst);
MixedObjective biased_objective_data(const Instance& inst, const Eigen::MatrixXd& x_bias,
                                     const Eigen::VectorXd& y_bias, double lambda);
MixedObjective quad_objective_data(const Instance& inst, const QuadCost& cost);

// Branch-and-bound over the activations for any convex objective.
SolveResult solve_mixed(const Instance& inst, const MixedObjective& objective,
                        const SolverOptions& options = {});

// Exact optimum by enumerating every activation pattern and solving each
// continuous subproblem with the ADMM solver (independent of the
// interior-point relaxation path). Throws ValidationError if |F_T| > 12.
SolveResult enumerate_oracle(const Instance& inst, const MixedObjective& objective);
SolveResult enumerate_oracle(const Instance& inst);
SolveResult enumerate_oracle(const Instance& inst, const QuadCost& cost);

}  // namespace fairtwin
