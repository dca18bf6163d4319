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

#include <Eigen/Dense>

namespace fairtwin {

// Convex QP with a diagonal Hessian:
//
//   minimize   ½ Σ hdiag_i v_i² + cᵀv + constant
//   subject to A v = b,  lower ≤ v ≤ upper.
//
// Dense Hessians enter through a lifting w = Vᵀu with ½‖w‖² in the
// objective, which keeps this form closed under everything the
// allocation problems need. Bounds may be ±infinity; lower == upper fixes
// a variable, and it is eliminated before the solve.
struct DiagQp {
  Eigen::VectorXd hdiag;
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double constant = 0.0;

  Eigen::Index num_vars() const { return c.size(); }
  double objective(const Eigen::VectorXd& v) const {
    return 0.5 * v.dot(hdiag.cwiseProduct(v)) + c.dot(v) + constant;
  }
};

struct IpmOptions {
  double tolerance = 1e-10;
  int max_iterations = 150;
};

enum class QpStatus { kOptimal, kInfeasible, kFailed };

struct QpSolution {
  QpStatus status = QpStatus::kFailed;
  Eigen::VectorXd x;
  Eigen::VectorXd equality_multipliers;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
};

// Mehrotra predictor-corrector interior-point method on the normal
// equations. `start`, when non-empty, is clipped into the bound interior
// and used as the primal starting point.
QpSolution solve_diag_qp(const DiagQp& qp, const IpmOptions& options = {},
                         const Eigen::VectorXd& start = Eigen::VectorXd());

}  // namespace fairtwin
