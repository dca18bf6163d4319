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

#include "fairtwin/qp_solver.hpp"

#include <algorithm>
#include <cstdlib>
#include <cmath>
#include <limits>
#include <vector>

namespace fairtwin {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Reduced {
  DiagQp qp;
  std::vector<Eigen::Index> columns;  // reduced column -> original column
  std::vector<Eigen::Index> rows;     // reduced row -> original row
  Eigen::VectorXd fixed_values;       // original-size vector, fixed entries only
  bool infeasible = false;
};

// Eliminates fixed columns and rows that become empty.
Reduced presolve(const DiagQp& qp) {
  Reduced r;
  const Eigen::Index n = qp.num_vars();
  r.fixed_values = Eigen::VectorXd::Zero(n);
  double constant = qp.constant;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (qp.lower[j] > qp.upper[j]) {
      r.infeasible = true;
      return r;
    }
    if (qp.lower[j] == qp.upper[j]) {
      const double v = qp.lower[j];
      r.fixed_values[j] = v;
      constant += 0.5 * qp.hdiag[j] * v * v + qp.c[j] * v;
    } else {
      r.columns.push_back(j);
    }
  }
  const Eigen::VectorXd rhs = qp.b - qp.A * r.fixed_values;
  const double scale = 1.0 + (qp.b.size() ? qp.b.cwiseAbs().maxCoeff() : 0.0);
  for (Eigen::Index i = 0; i < qp.A.rows(); ++i) {
    bool empty = true;
    for (Eigen::Index j : r.columns) {
      if (qp.A(i, j) != 0.0) {
        empty = false;
        break;
      }
    }
    if (empty) {
      if (std::abs(rhs[i]) > 1e-12 * scale) {
        r.infeasible = true;
        return r;
      }
    } else {
      r.rows.push_back(i);
    }
  }
  const auto nr = static_cast<Eigen::Index>(r.columns.size());
  const auto mr = static_cast<Eigen::Index>(r.rows.size());
  r.qp.hdiag.resize(nr);
  r.qp.c.resize(nr);
  r.qp.lower.resize(nr);
  r.qp.upper.resize(nr);
  r.qp.A.resize(mr, nr);
  r.qp.b.resize(mr);
  r.qp.constant = constant;
  for (Eigen::Index k = 0; k < nr; ++k) {
    const Eigen::Index j = r.columns[k];
    r.qp.hdiag[k] = qp.hdiag[j];
    r.qp.c[k] = qp.c[j];
    r.qp.lower[k] = qp.lower[j];
    r.qp.upper[k] = qp.upper[j];
    for (Eigen::Index i = 0; i < mr; ++i) r.qp.A(i, k) = qp.A(r.rows[i], j);
  }
  for (Eigen::Index i = 0; i < mr; ++i) r.qp.b[i] = rhs[r.rows[i]];
  return r;
}

// Largest step in (0, 1] keeping v + α·dv strictly positive where mask is set.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv, const std::vector<char>& mask) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (mask[i] && dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  }
  return alpha;
}

struct Direction {
  Eigen::VectorXd dx, dlambda, dzl, dzu;
};

}  // namespace

QpSolution solve_diag_qp(const DiagQp& original, const IpmOptions& options,
                         const Eigen::VectorXd& start) {
  QpSolution out;
  Reduced red = presolve(original);
  if (red.infeasible) {
    out.status = QpStatus::kInfeasible;
    return out;
  }
  const DiagQp& qp = red.qp;
  const Eigen::Index n = qp.num_vars();
  const Eigen::Index m = qp.A.rows();

  auto expand = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd full = red.fixed_values;
    for (Eigen::Index k = 0; k < n; ++k) full[red.columns[k]] = x[k];
    return full;
  };
  auto expand_multipliers = [&](const Eigen::VectorXd& lam) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(original.A.rows());
    for (Eigen::Index i = 0; i < m; ++i) full[red.rows[i]] = lam[i];
    return full;
  };

  if (n == 0) {
    out.status = QpStatus::kOptimal;
    out.x = red.fixed_values;
    out.equality_multipliers = Eigen::VectorXd::Zero(original.A.rows());
    out.objective = original.objective(out.x);
    return out;
  }

  std::vector<char> has_lower(n), has_upper(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    has_lower[j] = qp.lower[j] > -kInf;
    has_upper[j] = qp.upper[j] < kInf;
  }

  // Starting point: caller's guess pushed into the interior.
  Eigen::VectorXd x(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double guess = start.size() == original.num_vars() ? start[red.columns[j]] : 0.0;
    if (has_lower[j] && has_upper[j]) {
      const double width = qp.upper[j] - qp.lower[j];
      const double margin = 0.1 * width;
      guess = std::clamp(guess, qp.lower[j] + margin, qp.upper[j] - margin);
    } else if (has_lower[j]) {
      guess = std::max(guess, qp.lower[j] + 1.0);
    } else if (has_upper[j]) {
      guess = std::min(guess, qp.upper[j] - 1.0);
    }
    x[j] = guess;
  }
  const double c_scale = 1.0 + qp.c.cwiseAbs().maxCoeff();
  const double b_scale = 1.0 + (m ? qp.b.cwiseAbs().maxCoeff() : 0.0);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd zl = Eigen::VectorXd::Zero(n), zu = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (has_lower[j]) zl[j] = c_scale;
    if (has_upper[j]) zu[j] = c_scale;
  }
  int n_bounds = 0;
  for (Eigen::Index j = 0; j < n; ++j) n_bounds += has_lower[j] + has_upper[j];

  Eigen::VectorXd sl(n), su(n);
  auto update_slacks = [&]() {
    for (Eigen::Index j = 0; j < n; ++j) {
      sl[j] = has_lower[j] ? x[j] - qp.lower[j] : 1.0;
      su[j] = has_upper[j] ? qp.upper[j] - x[j] : 1.0;
    }
  };
  auto complementarity = [&]() {
    double mu = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (has_lower[j]) mu += sl[j] * zl[j];
      if (has_upper[j]) mu += su[j] * zu[j];
    }
    return n_bounds ? mu / n_bounds : 0.0;
  };

  Eigen::VectorXd dinv(n);
  Eigen::LDLT<Eigen::MatrixXd> normal;
  Eigen::MatrixXd AD(m, n);

  // Solves the reduced Newton system for given complementarity targets.
  auto solve_direction = [&](const Eigen::VectorXd& rd, const Eigen::VectorXd& rp,
                             const Eigen::VectorXd& rl, const Eigen::VectorXd& ru) {
    Direction d;
    Eigen::VectorXd g = -rd;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (has_lower[j]) g[j] += rl[j] / sl[j];
      if (has_upper[j]) g[j] -= ru[j] / su[j];
    }
    const Eigen::VectorXd dg = dinv.cwiseProduct(g);
    d.dlambda = m ? Eigen::VectorXd(normal.solve(rp - qp.A * dg)) : Eigen::VectorXd();
    d.dx = m ? Eigen::VectorXd(dg + dinv.cwiseProduct(qp.A.transpose() * d.dlambda)) : dg;
    d.dzl = Eigen::VectorXd::Zero(n);
    d.dzu = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (has_lower[j]) d.dzl[j] = (rl[j] - zl[j] * d.dx[j]) / sl[j];
      if (has_upper[j]) d.dzu[j] = (ru[j] + zu[j] * d.dx[j]) / su[j];
    }
    return d;
  };

  auto step_length = [&](const Direction& d) {
    Eigen::VectorXd dsl(n), dsu(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      dsl[j] = d.dx[j];
      dsu[j] = -d.dx[j];
    }
    double a = max_step(sl, dsl, has_lower);
    a = std::min(a, max_step(su, dsu, has_upper));
    a = std::min(a, max_step(zl, d.dzl, has_lower));
    a = std::min(a, max_step(zu, d.dzu, has_upper));
    return a;
  };

  update_slacks();
  Eigen::VectorXd best_x = x, best_lambda = lambda;
  double best_merit = kInf, best_pr = kInf, best_du = kInf, best_comp = kInf;
  int stall = 0;
  double stall_mu = kInf;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd rd = qp.hdiag.cwiseProduct(x) + qp.c - qp.A.transpose() * lambda - zl + zu;
    const Eigen::VectorXd rp = qp.b - qp.A * x;
    const double mu = complementarity();
    const double obj = qp.objective(x);
    out.primal_residual = m ? rp.cwiseAbs().maxCoeff() / b_scale : 0.0;
    out.dual_residual = rd.cwiseAbs().maxCoeff() / c_scale;
    out.complementarity = mu / (1.0 + std::abs(obj));
    if (out.primal_residual < options.tolerance && out.dual_residual < options.tolerance &&
        out.complementarity < options.tolerance) {
      out.status = QpStatus::kOptimal;
      break;
    }
    const double merit = std::max({out.primal_residual, out.dual_residual, out.complementarity});
    if (mu < 0.5 * stall_mu) {
      stall_mu = mu;
      stall = 0;
    }
    if (merit < best_merit) {
      if (merit < 0.5 * best_merit) stall = 0;
      best_merit = merit;
      best_x = x;
      best_lambda = lambda;
      best_pr = out.primal_residual;
      best_du = out.dual_residual;
      best_comp = out.complementarity;
    }
    // Complementarity exhausted or no progress: further steps only add rounding noise.
    if (++stall > 8 || (out.complementarity < 1e-3 * options.tolerance &&
                        out.primal_residual < options.tolerance)) {
      break;
    }

    double reg = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      double dj = qp.hdiag[j];
      if (has_lower[j]) dj += zl[j] / sl[j];
      if (has_upper[j]) dj += zu[j] / su[j];
      reg = std::max(reg, dj);
    }
    reg = std::max(1e-300, reg * 1e-16);
    for (Eigen::Index j = 0; j < n; ++j) {
      double dj = qp.hdiag[j] + reg;
      if (has_lower[j]) dj += zl[j] / sl[j];
      if (has_upper[j]) dj += zu[j] / su[j];
      dinv[j] = 1.0 / dj;
    }
    if (m) {
      AD = qp.A * dinv.asDiagonal();
      Eigen::MatrixXd M = AD * qp.A.transpose();
      M.diagonal().array() += 1e-14 * (1.0 + M.diagonal().cwiseAbs().maxCoeff());
      normal.compute(M);
    }

    // Predictor.
    Eigen::VectorXd rl = Eigen::VectorXd::Zero(n), ru = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (has_lower[j]) rl[j] = -sl[j] * zl[j];
      if (has_upper[j]) ru[j] = -su[j] * zu[j];
    }
    Direction aff = solve_direction(rd, rp, rl, ru);
    const double a_aff = step_length(aff);
    double mu_aff = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (has_lower[j]) mu_aff += (sl[j] + a_aff * aff.dx[j]) * (zl[j] + a_aff * aff.dzl[j]);
      if (has_upper[j]) mu_aff += (su[j] - a_aff * aff.dx[j]) * (zu[j] + a_aff * aff.dzu[j]);
    }
    mu_aff = n_bounds ? mu_aff / n_bounds : 0.0;
    const double sigma = mu > 0.0 ? std::max(1e-6, std::pow(mu_aff / mu, 3.0)) : 0.0;

    // Corrector.
    for (Eigen::Index j = 0; j < n; ++j) {
      if (has_lower[j]) rl[j] = sigma * mu - sl[j] * zl[j] - aff.dx[j] * aff.dzl[j];
      if (has_upper[j]) ru[j] = sigma * mu - su[j] * zu[j] + aff.dx[j] * aff.dzu[j];
    }
    Direction d = solve_direction(rd, rp, rl, ru);
    const double alpha = std::min(1.0, 0.995 * step_length(d));
    if (!d.dx.allFinite() || alpha <= 1e-14) break;

    x += alpha * d.dx;
    lambda += alpha * d.dlambda;
    zl += alpha * d.dzl;
    zu += alpha * d.dzu;
    update_slacks();
    // Keep strictly interior despite rounding.
    for (Eigen::Index j = 0; j < n; ++j) {
      if (has_lower[j] && sl[j] <= 0.0) {
        x[j] = qp.lower[j] + 1e-14 * (1.0 + std::abs(qp.lower[j]));
      }
      if (has_upper[j] && su[j] <= 0.0) {
        x[j] = qp.upper[j] - 1e-14 * (1.0 + std::abs(qp.upper[j]));
      }
    }
    update_slacks();
  }
  out.iterations = iter;
  if (out.status != QpStatus::kOptimal && best_merit < kInf) {
    x = best_x;
    lambda = best_lambda;
    out.primal_residual = best_pr;
    out.dual_residual = best_du;
    out.complementarity = best_comp;
  }
  out.x = expand(x);
  out.equality_multipliers = expand_multipliers(lambda);
  out.objective = original.objective(out.x);
  if (out.status != QpStatus::kOptimal) {
    // Accept a slightly looser solution rather than failing outright.
    const double loose = std::sqrt(options.tolerance);
    if (out.primal_residual < loose && out.dual_residual < loose && out.complementarity < loose) {
      out.status = QpStatus::kOptimal;
    } else if (out.primal_residual > 1e-6) {
      out.status = QpStatus::kInfeasible;
    } else {
      out.status = QpStatus::kFailed;
    }
  }
  return out;
}

}  // namespace fairtwin
