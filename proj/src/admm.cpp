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

#include "fairtwin/admm.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fairtwin {

namespace {

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

Eigen::VectorXd project(const Eigen::VectorXd& v, const Eigen::VectorXd& l, const Eigen::VectorXd& u) {
  return v.cwiseMax(l).cwiseMin(u);
}

// Solves the equality-constrained problem on the guessed active set and
// accepts it only with a KKT certificate: primal feasibility plus
// multipliers of the right sign on every active inequality.
bool polish(const BoxQp& qp, const Eigen::VectorXd& z, const Eigen::VectorXd& y, double tol,
            Eigen::VectorXd& x_out) {
  const Eigen::Index n = qp.q.size();
  std::vector<Eigen::Index> rows;
  std::vector<double> rhs;
  std::vector<int> side;  // 0 equality, -1 lower, +1 upper
  for (Eigen::Index i = 0; i < qp.A.rows(); ++i) {
    if (qp.l[i] == qp.u[i]) {
      rows.push_back(i);
      rhs.push_back(qp.l[i]);
      side.push_back(0);
    } else if (z[i] - qp.l[i] < -y[i]) {
      rows.push_back(i);
      rhs.push_back(qp.l[i]);
      side.push_back(-1);
    } else if (qp.u[i] - z[i] < y[i]) {
      rows.push_back(i);
      rhs.push_back(qp.u[i]);
      side.push_back(1);
    }
  }
  const auto k = static_cast<Eigen::Index>(rows.size());
  const double delta = 1e-9;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
  K.topLeftCorner(n, n) = qp.P;
  for (Eigen::Index r = 0; r < k; ++r) {
    K.block(n + r, 0, 1, n) = qp.A.row(rows[r]);
    K.block(0, n + r, n, 1) = qp.A.row(rows[r]).transpose();
  }
  Eigen::MatrixXd Kreg = K;
  Kreg.topLeftCorner(n, n).diagonal().array() += delta;
  Kreg.bottomRightCorner(k, k).diagonal().array() -= delta;
  Eigen::VectorXd b(n + k);
  b.head(n) = -qp.q;
  for (Eigen::Index r = 0; r < k; ++r) b[n + r] = rhs[r];

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(Kreg);
  Eigen::VectorXd sol = lu.solve(b);
  for (int it = 0; it < 5; ++it) sol += lu.solve(b - K * sol);
  if (!sol.allFinite()) return false;
  x_out = sol.head(n);
  const Eigen::VectorXd ax = qp.A * x_out;
  const double viol = inf_norm(ax - project(ax, qp.l, qp.u));
  if (viol > tol) return false;
  const Eigen::VectorXd mult = sol.tail(k);
  const double dual_tol = 1e-7 * (1.0 + (mult.size() ? inf_norm(mult) : 0.0));
  for (Eigen::Index r = 0; r < k; ++r) {
    if (side[r] < 0 && mult[r] > dual_tol) return false;
    if (side[r] > 0 && mult[r] < -dual_tol) return false;
  }
  const Eigen::VectorXd stationarity = qp.P * x_out + qp.q +
      [&] {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
        for (Eigen::Index r = 0; r < k; ++r) g += mult[r] * qp.A.row(rows[r]).transpose();
        return g;
      }();
  return inf_norm(stationarity) <= 1e-7 * (1.0 + inf_norm(qp.q));
}

double feasibility_tol(const BoxQp& qp, const Eigen::VectorXd& ax) {
  double bound_scale = 0.0;
  for (Eigen::Index i = 0; i < qp.A.rows(); ++i) {
    if (std::isfinite(qp.l[i])) bound_scale = std::max(bound_scale, std::abs(qp.l[i]));
    if (std::isfinite(qp.u[i])) bound_scale = std::max(bound_scale, std::abs(qp.u[i]));
  }
  return 1e-9 * (1.0 + std::max(inf_norm(ax), bound_scale));
}

}  // namespace

namespace {

struct Scaling {
  Eigen::VectorXd D;  // variable scaling, x = D x̂
  Eigen::VectorXd E;  // constraint scaling
  double cost = 1.0;
};

// Ruiz equilibration of [P Aᵀ; A 0] followed by cost normalization.
Scaling equilibrate(const BoxQp& qp, BoxQp& scaled, int iterations = 15) {
  const Eigen::Index n = qp.q.size(), m = qp.A.rows();
  Scaling sc{Eigen::VectorXd::Ones(n), Eigen::VectorXd::Ones(m), 1.0};
  scaled = qp;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd dcol(n), erow(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      double norm = scaled.P.col(j).cwiseAbs().maxCoeff();
      if (m) norm = std::max(norm, scaled.A.col(j).cwiseAbs().maxCoeff());
      dcol[j] = norm > 1e-12 ? 1.0 / std::sqrt(norm) : 1.0;
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const double norm = scaled.A.row(i).cwiseAbs().maxCoeff();
      erow[i] = norm > 1e-12 ? 1.0 / std::sqrt(norm) : 1.0;
    }
    scaled.P = dcol.asDiagonal() * scaled.P * dcol.asDiagonal();
    scaled.A = erow.asDiagonal() * scaled.A * dcol.asDiagonal();
    sc.D = sc.D.cwiseProduct(dcol);
    sc.E = sc.E.cwiseProduct(erow);
  }
  scaled.q = sc.D.cwiseProduct(qp.q);
  double pnorm = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) pnorm += scaled.P.col(j).cwiseAbs().maxCoeff();
  pnorm = n ? pnorm / n : 0.0;
  const double scale = std::max(pnorm, inf_norm(scaled.q));
  sc.cost = scale > 1e-12 ? 1.0 / scale : 1.0;
  scaled.P *= sc.cost;
  scaled.q *= sc.cost;
  for (Eigen::Index i = 0; i < m; ++i) {
    scaled.l[i] = std::isfinite(qp.l[i]) ? qp.l[i] * sc.E[i] : qp.l[i];
    scaled.u[i] = std::isfinite(qp.u[i]) ? qp.u[i] * sc.E[i] : qp.u[i];
  }
  return sc;
}

}  // namespace

AdmmResult solve_admm(const BoxQp& original, const AdmmOptions& opt) {
  BoxQp qp;
  const Scaling sc = equilibrate(original, qp);
  // Unscaled views for polishing and reporting.
  auto unscale_x = [&](const Eigen::VectorXd& xs) -> Eigen::VectorXd { return sc.D.cwiseProduct(xs); };
  auto unscale_z = [&](const Eigen::VectorXd& zs) -> Eigen::VectorXd { return zs.cwiseQuotient(sc.E); };
  auto unscale_y = [&](const Eigen::VectorXd& ys) -> Eigen::VectorXd { return sc.E.cwiseProduct(ys) / sc.cost; };

  const Eigen::Index n = qp.q.size();
  const Eigen::Index m = qp.A.rows();
  AdmmResult res;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

  double rho = opt.rho;
  Eigen::VectorXd rho_vec(m);
  auto set_rho = [&](double r) {
    rho = std::clamp(r, 1e-6, 1e6);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (qp.l[i] == qp.u[i]) {
        rho_vec[i] = 1e3 * rho;
      } else if (std::isinf(qp.l[i]) && std::isinf(qp.u[i])) {
        rho_vec[i] = 1e-6;
      } else {
        rho_vec[i] = rho;
      }
    }
  };
  Eigen::LLT<Eigen::MatrixXd> kkt;
  auto factor = [&]() {
    Eigen::MatrixXd M = qp.P + qp.A.transpose() * rho_vec.asDiagonal() * qp.A;
    M.diagonal().array() += opt.sigma;
    kkt.compute(M);
  };
  set_rho(rho);
  factor();

  int iter = 0;
  for (; iter < opt.max_iterations; ++iter) {
    const Eigen::VectorXd rhs = opt.sigma * x - qp.q + qp.A.transpose() * (rho_vec.cwiseProduct(z) - y);
    const Eigen::VectorXd xt = kkt.solve(rhs);
    const Eigen::VectorXd zt = qp.A * xt;
    x = opt.relaxation * xt + (1.0 - opt.relaxation) * x;
    const Eigen::VectorXd zh = opt.relaxation * zt + (1.0 - opt.relaxation) * z;
    const Eigen::VectorXd z_new = project(zh + y.cwiseQuotient(rho_vec), qp.l, qp.u);
    y += rho_vec.cwiseProduct(zh - z_new);
    z = z_new;

    if ((iter + 1) % 10 == 0 || iter + 1 == opt.max_iterations) {
      const Eigen::VectorXd ax = qp.A * x;
      const Eigen::VectorXd px = qp.P * x;
      const Eigen::VectorXd aty = qp.A.transpose() * y;
      res.primal_residual = inf_norm(ax - z);
      res.dual_residual = inf_norm(px + qp.q + aty);
      const double prim_scale = std::max(inf_norm(ax), inf_norm(z));
      const double dual_scale = std::max({inf_norm(px), inf_norm(aty), inf_norm(qp.q)});
      const double eps_p = opt.eps_abs + opt.eps_rel * prim_scale;
      const double eps_d = opt.eps_abs + opt.eps_rel * dual_scale;
      if (res.primal_residual <= eps_p && res.dual_residual <= eps_d) {
        res.converged = true;
        ++iter;
        break;
      }
      const bool loosely_done = res.primal_residual <= 1e-5 * (1.0 + prim_scale) &&
                                res.dual_residual <= 1e-5 * (1.0 + dual_scale);
      // The polish verifies its own KKT point, so rarer attempts need no
      // residual gate; they rescue runs where ρ adaptation oscillates.
      if (opt.polish && (iter + 1) % 200 == 0 && (loosely_done || (iter + 1) % 1000 == 0)) {
        Eigen::VectorXd xp;
        const Eigen::VectorXd zo = unscale_z(z);
        if (polish(original, zo, unscale_y(y), feasibility_tol(original, zo), xp)) {
          res.iterations = iter + 1;
          res.x = xp;
          res.y = unscale_y(y);
          res.objective = original.objective(xp);
          res.polished = true;
          res.converged = true;
          return res;
        }
      }
      if ((iter + 1) % opt.adapt_interval == 0) {
        const double num = res.primal_residual / std::max(prim_scale, 1e-30);
        const double den = res.dual_residual / std::max(dual_scale, 1e-30);
        const double candidate = rho * std::sqrt(num / std::max(den, 1e-30));
        if (candidate > 5.0 * rho || candidate < 0.2 * rho) {
          set_rho(candidate);
          factor();
        }
      }
    }
  }
  res.iterations = iter;
  res.x = unscale_x(x);
  res.y = unscale_y(y);
  res.objective = original.objective(res.x);

  if (opt.polish) {
    Eigen::VectorXd xp;
    const Eigen::VectorXd zo = unscale_z(z);
    if (polish(original, zo, res.y, feasibility_tol(original, zo), xp)) {
      res.x = xp;
      res.objective = original.objective(xp);
      res.polished = true;
      res.converged = true;
    }
  }
  return res;
}

}  // namespace fairtwin
