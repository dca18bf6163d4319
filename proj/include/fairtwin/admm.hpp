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

// minimize ½xᵀPx + qᵀx  subject to  l ≤ Ax ≤ u  (P PSD, dense).
struct BoxQp {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;

  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(P * x) + q.dot(x); }
};

struct AdmmOptions {
  double eps_abs = 1e-10;
  double eps_rel = 1e-10;
  int max_iterations = 200000;
  double rho = 0.1;
  double sigma = 1e-6;
  double relaxation = 1.6;
  int adapt_interval = 50;
  bool polish = true;
};

struct AdmmResult {
  bool converged = false;
  bool polished = false;
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

// Operator-splitting solver in the style of OSQP: one cached factorization
// per penalty value, adaptive penalty, and an active-set polish that
// recovers vertex-exact solutions.
AdmmResult solve_admm(const BoxQp& qp, const AdmmOptions& options = {});

}  // namespace fairtwin
