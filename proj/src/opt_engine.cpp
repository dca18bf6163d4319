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

#include "fairtwin/opt_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>

#include "fairtwin/admm.hpp"
#include "fairtwin/errors.hpp"

namespace fairtwin {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

Eigen::MatrixXd HessianFactor::dense() const {
  Eigen::MatrixXd H = V * V.transpose();
  H.diagonal() += diagonal;
  return H;
}

QuadCost QuadCost::linear(Eigen::VectorXd q, double context) {
  const Eigen::Index d = q.size();
  QuadCost cost;
  cost.H = Eigen::MatrixXd::Zero(d, d);
  cost.q = std::move(q);
  cost.context = context;
  cost.factor = HessianFactor{Eigen::VectorXd::Zero(d), Eigen::MatrixXd(d, 0)};
  return cost;
}

HessianFactor QuadCost::factorize() const {
  if (factor) return *factor;
  const Eigen::Index d = H.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (H + H.transpose()));
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const double top = d ? std::max(std::abs(lam[0]), std::abs(lam[d - 1])) : 0.0;
  // A common floor becomes the diagonal; only the excess needs lifting.
  const double floor = d ? std::max(0.0, lam[0]) : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (lam[i] - floor > 1e-13 * std::max(1.0, top)) keep.push_back(i);
  }
  HessianFactor f{Eigen::VectorXd::Constant(d, floor), Eigen::MatrixXd(d, keep.size())};
  for (std::size_t k = 0; k < keep.size(); ++k) {
    f.V.col(static_cast<Eigen::Index>(k)) =
        eig.eigenvectors().col(keep[k]) * std::sqrt(lam[keep[k]] - floor);
  }
  return f;
}

void validate_quad_cost(const QuadCost& cost, Eigen::Index d) {
  if (cost.H.rows() != d || cost.H.cols() != d || cost.q.size() != d) {
    std::ostringstream os;
    os << "cost: expected H " << d << "x" << d << " and q of length " << d << ", got H "
       << cost.H.rows() << "x" << cost.H.cols() << " and q of length " << cost.q.size();
    throw ValidationError(os.str());
  }
  if (!cost.H.allFinite() || !cost.q.allFinite()) throw ValidationError("cost: non-finite entries");
  const double norm = cost.H.cwiseAbs().maxCoeff();
  const double asym = (cost.H - cost.H.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance * std::max(1.0, norm)) {
    throw ValidationError("cost.H: not symmetric (max asymmetry " + std::to_string(asym) + ")");
  }
  if (d == 0 || norm == 0.0) return;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cost.H, Eigen::EigenvaluesOnly);
  const double spectral = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double min_eig = eig.eigenvalues()[0];
  if (min_eig < -1e-8 * spectral) {
    throw ValidationError("cost.H: not positive semidefinite (min eigenvalue " +
                          std::to_string(min_eig) + ")");
  }
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kNodeLimit: return "node_limit";
  }
  return "unknown";
}

double MixedObjective::evaluate(const Eigen::VectorXd& u) const {
  const Eigen::VectorXd vu = hessian.V.transpose() * u;
  return 0.5 * (u.dot(hessian.diagonal.cwiseProduct(u)) + vu.squaredNorm()) + linear.dot(u) + constant;
}

MixedObjective nominal_objective_data(const Instance& inst) {
  const int d = inst.decision_dim();
  return {HessianFactor{Eigen::VectorXd::Zero(d), Eigen::MatrixXd(d, 0)}, nominal_linear_cost(inst), 0.0};
}

MixedObjective biased_objective_data(const Instance& inst, const Eigen::MatrixXd& x_bias,
                                     const Eigen::VectorXd& y_bias, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be a finite nonnegative number");
  const Eigen::VectorXd ub = flatten(Allocation{x_bias, y_bias}, inst).values;
  const int d = inst.decision_dim();
  // λ‖u − u_b‖² = ½uᵀ(2λI)u − 2λu_bᵀu + λ‖u_b‖².
  MixedObjective obj{HessianFactor{Eigen::VectorXd::Constant(d, 2.0 * lambda), Eigen::MatrixXd(d, 0)},
                     nominal_linear_cost(inst) - 2.0 * lambda * ub, lambda * ub.squaredNorm()};
  return obj;
}

MixedObjective quad_objective_data(const Instance& inst, const QuadCost& cost) {
  validate_quad_cost(cost, inst.decision_dim());
  return {cost.factorize(), cost.q, 0.0};
}

namespace {

// The continuous relaxation in the interior-point solver's standard form.
// Columns: u (d), lifted w (k), capacity slacks s (|F|).
class RelaxationModel {
 public:
  RelaxationModel(const Instance& inst, const MixedObjective& obj) : inst_(inst), obj_(obj) {
    const int nc = inst.num_counties(), nf = inst.num_facilities();
    d_ = inst.decision_dim();
    k_ = static_cast<int>(obj.hessian.V.cols());
    const int n = d_ + k_ + nf;
    const int m = nc + nf + k_;
    qp_.hdiag = Eigen::VectorXd::Zero(n);
    qp_.hdiag.head(d_) = obj.hessian.diagonal;
    qp_.hdiag.segment(d_, k_).setOnes();
    qp_.c = Eigen::VectorXd::Zero(n);
    qp_.c.head(d_) = obj.linear;
    qp_.constant = obj.constant;
    qp_.A = Eigen::MatrixXd::Zero(m, n);
    qp_.b = Eigen::VectorXd::Zero(m);
    qp_.lower = Eigen::VectorXd::Constant(n, -kInf);
    qp_.upper = Eigen::VectorXd::Constant(n, kInf);
    for (int c = 0; c < nc; ++c) {
      for (int f = 0; f < nf; ++f) {
        qp_.A(c, inst.x_index(c, f)) = 1.0;
        qp_.A(nc + f, inst.x_index(c, f)) = 1.0;
        qp_.lower[inst.x_index(c, f)] = 0.0;
      }
      qp_.b[c] = inst.counties()[c].demand;
    }
    for (int f = 0; f < nf; ++f) {
      const double cap = inst.facilities()[f].capacity;
      const int slot = inst.temporary_slot(f);
      qp_.A(nc + f, d_ + k_ + f) = 1.0;
      qp_.lower[d_ + k_ + f] = 0.0;
      if (slot >= 0) {
        qp_.A(nc + f, inst.y_index(slot)) = -cap;
        qp_.b[nc + f] = 0.0;
      } else {
        qp_.b[nc + f] = cap;
      }
    }
    for (int j = 0; j < k_; ++j) {
      qp_.A.block(nc + nf + j, 0, 1, d_) = obj.hessian.V.col(j).transpose();
      qp_.A(nc + nf + j, d_ + j) = -1.0;
    }
  }

  // Relaxation with activations restricted to [lo_t, hi_t].
  QpSolution solve(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const IpmOptions& ipm) const {
    DiagQp qp = qp_;
    const int nc = inst_.num_counties(), nf = inst_.num_facilities();
    Eigen::VectorXd start = Eigen::VectorXd::Zero(qp.num_vars());
    Eigen::VectorXd open(nf);
    for (int f = 0; f < nf; ++f) {
      const int slot = inst_.temporary_slot(f);
      open[f] = slot < 0 ? 1.0 : hi[slot];
    }
    const double n_open = std::max(1.0, open.sum());
    for (int t = 0; t < inst_.num_temporary(); ++t) {
      const int y = inst_.y_index(t);
      qp.lower[y] = lo[t];
      qp.upper[y] = hi[t];
      start[y] = 0.5 * (lo[t] + hi[t]);
      if (hi[t] == 0.0) {
        const int f = inst_.temporary()[t];
        for (int c = 0; c < nc; ++c) qp.lower[inst_.x_index(c, f)] = qp.upper[inst_.x_index(c, f)] = 0.0;
        qp.lower[d_ + k_ + f] = qp.upper[d_ + k_ + f] = 0.0;
      }
    }
    for (int c = 0; c < nc; ++c) {
      for (int f = 0; f < nf; ++f) {
        start[inst_.x_index(c, f)] = open[f] * inst_.counties()[c].demand / n_open;
      }
    }
    const Eigen::VectorXd loads = [&] {
      Eigen::VectorXd l = Eigen::VectorXd::Zero(nf);
      for (int c = 0; c < nc; ++c)
        for (int f = 0; f < nf; ++f) l[f] += start[inst_.x_index(c, f)];
      return l;
    }();
    for (int f = 0; f < nf; ++f) {
      const int slot = inst_.temporary_slot(f);
      const double cap = inst_.facilities()[f].capacity * (slot < 0 ? 1.0 : start[inst_.y_index(slot)]);
      start[d_ + k_ + f] = std::max(1.0, cap - loads[f]);
    }
    start.segment(d_, k_) = obj_.hessian.V.transpose() * start.head(d_);
    return solve_diag_qp(qp, ipm, start);
  }

  int decision_dim() const { return d_; }

 private:
  const Instance& inst_;
  const MixedObjective& obj_;
  DiagQp qp_;
  int d_ = 0;
  int k_ = 0;
};

bool capacity_suffices(const Instance& inst, const Eigen::VectorXd& hi) {
  double cap = 0.0;
  for (int f = 0; f < inst.num_facilities(); ++f) {
    const int slot = inst.temporary_slot(f);
    if (slot < 0 || hi[slot] > 0.0) cap += inst.facilities()[f].capacity;
  }
  return cap >= inst.total_demand() * (1.0 - 1e-12);
}

// Clips tiny negatives and pushes row-sum residuals onto the facility with
// the most spare capacity so demand holds to rounding.
Allocation repair(Eigen::VectorXd u, const Instance& inst, const Eigen::VectorXd& y) {
  const int nc = inst.num_counties(), nf = inst.num_facilities();
  Allocation a{Eigen::MatrixXd(nc, nf), y};
  for (int c = 0; c < nc; ++c) {
    for (int f = 0; f < nf; ++f) {
      const int slot = inst.temporary_slot(f);
      const bool open = slot < 0 || y[slot] > 0.5;
      a.x(c, f) = open ? std::max(0.0, u[inst.x_index(c, f)]) : 0.0;
    }
  }
  for (int c = 0; c < nc; ++c) {
    const double residual = inst.counties()[c].demand - a.x.row(c).sum();
    if (residual == 0.0) continue;
    Eigen::VectorXd loads = facility_loads(a);
    int best = -1;
    double best_score = -kInf;
    for (int f = 0; f < nf; ++f) {
      const int slot = inst.temporary_slot(f);
      if (slot >= 0 && y[slot] < 0.5) continue;
      const double score = residual > 0.0 ? inst.facilities()[f].capacity - loads[f] : a.x(c, f);
      if (score > best_score) {
        best_score = score;
        best = f;
      }
    }
    if (best >= 0) a.x(c, best) = std::max(0.0, a.x(c, best) + residual);
  }
  return a;
}

bool lexicographically_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

struct Node {
  Eigen::VectorXd lo, hi;
  double bound = -kInf;
  int id = 0;
  int parent = -1;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

}  // namespace

SolveResult solve_mixed(const Instance& inst, const MixedObjective& objective,
                        const SolverOptions& options) {
  SolveResult result;
  const int nt = inst.num_temporary();
  RelaxationModel model(inst, objective);

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  int next_id = 0;
  open.push(Node{Eigen::VectorXd::Zero(nt), Eigen::VectorXd::Ones(nt), -kInf, next_id++, -1});

  double incumbent = kInf;
  Eigen::VectorXd incumbent_u;
  std::optional<Allocation> incumbent_alloc;
  auto prune_level = [&]() {
    return incumbent - 0.5 * options.gap * (1.0 + std::abs(incumbent));
  };

  bool hit_limit = false;
  while (!open.empty()) {
    Node node = open.top();
    open.pop();
    if (node.bound >= prune_level()) break;  // best-first: nothing left can improve
    if (result.nodes_explored >= options.node_limit) {
      hit_limit = true;
      break;
    }
    ++result.nodes_explored;

    NodeRecord record{node.id, node.parent, node.bound, kInf, incumbent};
    auto finish_record = [&]() {
      record.incumbent = incumbent;
      if (options.record_nodes) result.nodes.push_back(record);
      if (options.trace) {
        *options.trace << node.id << ", " << record.relaxation << ", " << incumbent << "\n";
      }
    };

    if (!capacity_suffices(inst, node.hi)) {
      finish_record();
      continue;
    }
    QpSolution relax = model.solve(node.lo, node.hi, options.ipm);
    ++result.relaxation_solves;
    if (relax.status == QpStatus::kInfeasible) {
      finish_record();
      continue;
    }
    if (relax.status != QpStatus::kOptimal) {
      std::ostringstream os;
      os << "relaxation solver failed at node " << node.id << " (primal residual "
         << relax.primal_residual << ", dual residual " << relax.dual_residual << ")";
      throw SolverError(os.str());
    }
    record.relaxation = relax.objective;
    if (relax.objective >= prune_level()) {
      finish_record();
      continue;
    }

    const Eigen::VectorXd u = relax.x.head(model.decision_dim());
    int branch = -1;
    double most_fractional = options.integrality_tolerance;
    for (int t = 0; t < nt; ++t) {
      const double v = u[inst.y_index(t)];
      const double frac = std::min(v, 1.0 - v);
      if (frac > most_fractional) {
        most_fractional = frac;
        branch = t;
      }
    }

    if (branch < 0) {
      Eigen::VectorXd y(nt);
      for (int t = 0; t < nt; ++t) y[t] = u[inst.y_index(t)] > 0.5 ? 1.0 : 0.0;
      Eigen::VectorXd leaf_u = u;
      if ((node.lo.array() != node.hi.array()).any()) {
        QpSolution fixed = model.solve(y, y, options.ipm);
        ++result.relaxation_solves;
        if (fixed.status != QpStatus::kOptimal) {
          std::ostringstream os;
          os << "fixed-activation solve failed at node " << node.id << " (status "
             << static_cast<int>(fixed.status) << ", iterations " << fixed.iterations
             << ", residuals " << fixed.primal_residual << "/" << fixed.dual_residual << "/"
             << fixed.complementarity << ")";
          throw SolverError(os.str());
        }
        leaf_u = fixed.x.head(model.decision_dim());
      }
      Allocation alloc = repair(leaf_u, inst, y);
      const Eigen::VectorXd flat = flatten(alloc, inst).values;
      const double value = objective.evaluate(flat);
      bool take = !incumbent_alloc;
      if (!take) {
        const double tie = options.gap * (1.0 + std::abs(incumbent));
        take = value < incumbent - tie ||
               (std::abs(value - incumbent) <= tie && lexicographically_less(flat, incumbent_u));
      }
      if (take) {
        incumbent = value;
        incumbent_u = flat;
        incumbent_alloc = std::move(alloc);
      }
      finish_record();
      continue;
    }

    for (double side : {0.0, 1.0}) {
      Node child{node.lo, node.hi, relax.objective, next_id++, node.id};
      child.lo[branch] = side;
      child.hi[branch] = side;
      open.push(std::move(child));
    }
    finish_record();
  }

  if (hit_limit) {
    result.status = SolveStatus::kNodeLimit;
    result.objective = incumbent;
    return result;
  }
  if (!incumbent_alloc) {
    result.status = SolveStatus::kInfeasible;
    return result;
  }
  result.status = SolveStatus::kOptimal;
  result.objective = incumbent;
  result.allocation = std::move(incumbent_alloc);
  return result;
}

SolveResult solve_milp(const Instance& inst, const SolverOptions& options) {
  return solve_mixed(inst, nominal_objective_data(inst), options);
}

SolveResult solve_biased(const Instance& inst, const Eigen::MatrixXd& x_bias,
                         const Eigen::VectorXd& y_bias, double lambda, const SolverOptions& options) {
  return solve_mixed(inst, biased_objective_data(inst, x_bias, y_bias, lambda), options);
}

SolveResult solve_miqp(const Instance& inst, const QuadCost& cost, const SolverOptions& options) {
  return solve_mixed(inst, quad_objective_data(inst, cost), options);
}

namespace {

SolveResult enumerate_dense(const Instance& inst, const Eigen::MatrixXd& H,
                            const Eigen::VectorXd& linear, double constant) {
  const int nt = inst.num_temporary();
  if (nt > 12) {
    throw ValidationError("enumerate_oracle: " + std::to_string(nt) +
                          " temporary facilities exceed the 2^12 enumeration budget");
  }
  const int nc = inst.num_counties(), nf = inst.num_facilities();
  const int d = inst.decision_dim();
  auto evaluate = [&](const Eigen::VectorXd& u) { return 0.5 * u.dot(H * u) + linear.dot(u) + constant; };

  SolveResult best;
  best.status = SolveStatus::kInfeasible;
  best.objective = kInf;
  for (std::uint32_t pattern = 0; pattern < (1u << nt); ++pattern) {
    Eigen::VectorXd y(nt);
    for (int t = 0; t < nt; ++t) y[t] = (pattern >> t) & 1u ? 1.0 : 0.0;
    if (!capacity_suffices(inst, y)) continue;

    std::vector<int> cols;  // open facilities
    for (int f = 0; f < nf; ++f) {
      const int slot = inst.temporary_slot(f);
      if (slot < 0 || y[slot] > 0.5) cols.push_back(f);
    }
    const int no = static_cast<int>(cols.size());
    const int n = nc * no;
    std::vector<int> var_index(n);
    for (int c = 0; c < nc; ++c)
      for (int j = 0; j < no; ++j) var_index[c * no + j] = inst.x_index(c, cols[j]);

    Eigen::VectorXd u_fixed = Eigen::VectorXd::Zero(d);
    for (int t = 0; t < nt; ++t) u_fixed[inst.y_index(t)] = y[t];
    const Eigen::VectorXd Hy = H * u_fixed;

    BoxQp qp;
    qp.P.resize(n, n);
    qp.q.resize(n);
    for (int a = 0; a < n; ++a) {
      qp.q[a] = linear[var_index[a]] + Hy[var_index[a]];
      for (int b = 0; b < n; ++b) qp.P(a, b) = H(var_index[a], var_index[b]);
    }
    const int m = nc + no + n;
    qp.A = Eigen::MatrixXd::Zero(m, n);
    qp.l.resize(m);
    qp.u.resize(m);
    for (int c = 0; c < nc; ++c) {
      for (int j = 0; j < no; ++j) qp.A(c, c * no + j) = 1.0;
      qp.l[c] = qp.u[c] = inst.counties()[c].demand;
    }
    for (int j = 0; j < no; ++j) {
      for (int c = 0; c < nc; ++c) qp.A(nc + j, c * no + j) = 1.0;
      qp.l[nc + j] = -kInf;
      qp.u[nc + j] = inst.facilities()[cols[j]].capacity;
    }
    for (int a = 0; a < n; ++a) {
      qp.A(nc + no + a, a) = 1.0;
      qp.l[nc + no + a] = 0.0;
      qp.u[nc + no + a] = kInf;
    }
    const AdmmResult sol = solve_admm(qp);
    ++best.relaxation_solves;
    ++best.nodes_explored;
    if (!sol.converged) throw SolverError("enumerate_oracle: ADMM did not converge for pattern " + std::to_string(pattern));

    Eigen::VectorXd u = u_fixed;
    for (int a = 0; a < n; ++a) u[var_index[a]] = sol.x[a];
    Allocation alloc = repair(u, inst, y);
    const Eigen::VectorXd flat = flatten(alloc, inst).values;
    const double value = evaluate(flat);
    if (value < best.objective) {
      best.objective = value;
      best.allocation = std::move(alloc);
      best.status = SolveStatus::kOptimal;
    }
  }
  return best;
}

}  // namespace

SolveResult enumerate_oracle(const Instance& inst, const MixedObjective& objective) {
  return enumerate_dense(inst, objective.hessian.dense(), objective.linear, objective.constant);
}

SolveResult enumerate_oracle(const Instance& inst) {
  return enumerate_oracle(inst, nominal_objective_data(inst));
}

SolveResult enumerate_oracle(const Instance& inst, const QuadCost& cost) {
  validate_quad_cost(cost, inst.decision_dim());
  return enumerate_dense(inst, cost.H, cost.q, 0.0);
}

}  // namespace fairtwin
