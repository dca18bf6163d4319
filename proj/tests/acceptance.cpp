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


// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "fairtwin/cost_net.hpp"
#include "fairtwin/latent.hpp"
#include "fairtwin/opt_engine.hpp"
#include "fairtwin/preference.hpp"
#include "fairtwin/rng.hpp"
#include "fairtwin/scenario.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace fairtwin;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

double rel_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
  return M;
}

Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng) { return random_matrix(n, 1, rng); }

Eigen::MatrixXd random_orthogonal(int r, Rng& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(r, r, rng));
  return qr.householderQ();
}

// ----------------------------------------------------------------- Win study

json run_table1(Outcome& out) {
  const fs::path report = fs::current_path() / "acceptance_table1.json";
  const std::string cmd = std::string("'") + FAIRTWIN_CLI_PATH + "' --config '" + FAIRTWIN_SOURCE_DIR +
                          "/configs/paper.toml' reproduce-table1 --seeds 1 2 3 --quiet --out '" +
                          report.string() + "' > '" + report.string() + ".log' 2>&1";
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = std::system(cmd.c_str());
  const double elapsed = seconds_since(t0);
  if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0 || !fs::exists(report)) {
    out.require(false, "reproduce-table1 failed (see " + report.string() + ".log)");
    return json();
  }
  std::ifstream f(report);
  json doc = json::parse(f);
  doc["elapsed_seconds"] = elapsed;
  return doc;
}

double cell_mean(const json& doc, int size, double flip) {
  for (const auto& c : doc.at("mean_wins")) {
    if (c.at("size") == size && std::abs(c.at("flip").get<double>() - flip) < 1e-12 && !c.at("mean_wins").is_null()) {
      return c.at("mean_wins").get<double>();
    }
  }
  return std::nan("");
}

void table1_criterion(const json& doc, Outcome& out) {
  if (doc.is_null()) return;
  const int grid = doc.at("eval_grid");
  const double m1344 = cell_mean(doc, 1344, 0.0);
  const double m448 = cell_mean(doc, 448, 0.0);
  const double m448_30 = cell_mean(doc, 448, 0.3);
  out.require(grid == 52, "grid is not 52");
  out.require(doc.at("config").at("seeds").size() >= 3, "fewer than 3 seeds");
  for (const auto& c : doc.at("cells")) out.require(c.at("error").get<std::string>().empty(), "a cell aborted");
  out.require(m1344 >= 44.0, "1344/0% below 44");
  out.require(m448 >= 38.0, "448/0% below 38");
  out.require(m448_30 <= 0.75 * m448, "448/30% not degraded to 0.75x of 448/0%");
  if (out.pass) out.detail << "all bands met";
  out.detail << " [1344/0%=" << m1344 << ", 448/0%=" << m448 << ", 448/30%=" << m448_30
             << " (limit " << 0.75 * m448 << "), " << doc.at("elapsed_seconds").get<double>() << " s]";
}

// ------------------------------------------------------------ Solvers

void solver_criterion(Outcome& out) {
  GeneratorParams params = fairtwin::testing::experiment_generator();
  Rng rng(2024);
  double worst_gap = 0.0, worst_time = 0.0;
  int instances = 0;
  for (int k = 0; k < 50; ++k) {
    const int nt = 1 + k % 9;
    const Instance inst = generate_instance(5000 + k, 3 + k % 7, 2 + k % 6, nt, params);
    const int d = inst.decision_dim();
    auto timed = [&](const std::function<SolveResult()>& fn) {
      const auto t0 = std::chrono::steady_clock::now();
      SolveResult r = fn();
      worst_time = std::max(worst_time, seconds_since(t0));
      return r;
    };
    auto compare = [&](const char* name, const SolveResult& r, const SolveResult& o) {
      const std::string tag = std::string(name) + " on instance " + std::to_string(k);
      if (r.status != SolveStatus::kOptimal || o.status != SolveStatus::kOptimal) {
        out.require(false, tag + ": not optimal");
        return;
      }
      const double gap = rel_gap(r.objective, o.objective);
      worst_gap = std::max(worst_gap, gap);
      out.require(gap <= 1e-6, tag + ": gap " + std::to_string(gap));
    };

    const SolveResult milp = timed([&] { return solve_milp(inst); });
    compare("solve_milp", milp, enumerate_oracle(inst));
    if (milp.status != SolveStatus::kOptimal) continue;

    Eigen::MatrixXd xb = milp.allocation->x;
    const double w = default_width(inst);
    for (Eigen::Index i = 0; i < xb.size(); ++i) xb.data()[i] += rng.uniform(-w, w);
    Eigen::VectorXd yb(nt);
    for (int t = 0; t < nt; ++t) yb[t] = rng.uniform01();
    const double lambda = (k % 2 ? 1.0 : 10.0) * default_lambda(inst, milp.objective);
    compare("solve_biased", timed([&] { return solve_biased(inst, xb, yb, lambda); }),
            enumerate_oracle(inst, biased_objective_data(inst, xb, yb, lambda)));

    QuadCost cost;
    const Eigen::MatrixXd V = random_matrix(d, 4, rng);
    cost.H = 1e-3 * V * V.transpose() / 4.0;
    cost.q = nominal_linear_cost(inst);
    for (int i = 0; i < d; ++i) cost.q[i] += rng.uniform(-0.5, 0.5);
    compare("solve_miqp", timed([&] { return solve_miqp(inst, cost); }), enumerate_oracle(inst, cost));
    ++instances;
  }
  out.require(instances == 50, "only " + std::to_string(instances) + " instances feasible");
  out.require(worst_time < 5.0, "slowest solve " + std::to_string(worst_time) + " s");
  if (out.pass) out.detail << "50 instances x 3 solvers match the oracle";
  out.detail << " [max gap " << worst_gap << ", slowest solve " << worst_time << " s]";
}

// ------------------------------------------------------------- Oracle

void oracle_criterion(Outcome& out) {
  auto fv = [](double a, double b, double c, double d, double e) {
    FeatureVector f;
    f[0] = a, f[1] = b, f[2] = c, f[3] = d, f[4] = e;
    return f;
  };
  const double r1 = rosenbrock(fv(1, 1, 1, 1, 1));
  const double r0 = rosenbrock(fv(0, 0, 0, 0, 0));
  const double r2 = rosenbrock(fv(1, 1, 1, 1, 2));
  out.require(std::abs(r1 - 0.0) <= 1e-12, "rosenbrock(1,1,1,1,1) = " + std::to_string(r1));
  out.require(std::abs(r0 - 4.0) <= 1e-12, "rosenbrock(0,0,0,0,0) = " + std::to_string(r0));
  out.require(std::abs(r2 - 100.0) <= 1e-12, "rosenbrock(1,1,1,1,2) = " + std::to_string(r2));
  out.detail << "[" << r1 << ", " << r0 << ", " << r2 << "]";
}

// ---------------------------------------------------------------- PCA

void pca_criterion(Outcome& out) {
  Rng rng(31);
  const int n = 300, d = 24;
  const Eigen::MatrixXd U = random_matrix(n, d, rng) * random_matrix(d, d, rng) +
                            Eigen::VectorXd::Constant(n, 1.0) * random_vector(d, rng).transpose();
  double orth = 0.0, trip = 0.0, equiv = 0.0, eig_margin = 0.0;
  for (int r : {5, 12, d}) {
    const LatentMap map = fit_pca(U, r);
    orth = std::max(orth, (map.W.transpose() * map.W - Eigen::MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff());
  }
  const LatentMap full = fit_pca(U, d);
  for (int s = 0; s < 20; ++s) {
    const Eigen::VectorXd u = random_vector(d, rng) * 5.0;
    trip = std::max(trip, (lift(project(u, full), full) - u).norm());
  }

  const int r = 12;
  const LatentMap map = fit_pca(U, r);
  const Eigen::VectorXd m = map.W.transpose() * map.mu;
  for (int s = 0; s < 100; ++s) {
    const Eigen::MatrixXd A = random_matrix(r, r, rng);
    const Eigen::MatrixXd Hz = A * A.transpose();
    const Eigen::VectorXd qz = random_vector(r, rng);
    const Eigen::VectorXd z = random_vector(r, rng);
    const QuadCost c = reconstruct_cost(Hz, qz, map, 0.0);
    const Eigen::VectorXd u = map.mu + map.W * z;
    const double full_val = 0.5 * u.dot(c.H * u) + c.q.dot(u);
    const double latent_val = 0.5 * z.dot(Hz * z) + qz.dot(z);
    // Expanding u = μ + Wz gives full = latent + q_zᵀm − ½mᵀH_z m with m = Wᵀμ.
    const double constant = qz.dot(m) - 0.5 * m.dot(Hz * m);
    const double scale = std::max({1.0, std::abs(full_val), std::abs(latent_val)});
    equiv = std::max(equiv, std::abs(full_val - (latent_val + constant)) / scale);

    const double ridge = std::pow(10.0, -1.0 - s % 6);
    const QuadCost rc = reconstruct_cost(Hz, qz, map, ridge);
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(rc.H, Eigen::EigenvaluesOnly).eigenvalues()[0];
    eig_margin = std::min(eig_margin, lo - ridge);
  }
  out.require(orth <= 1e-10, "W^T W deviation " + std::to_string(orth));
  out.require(trip <= 1e-8, "round trip error " + std::to_string(trip));
  out.require(equiv <= 1e-8, "latent/full mismatch " + std::to_string(equiv));
  out.require(eig_margin >= -1e-10, "min eigenvalue below ridge by " + std::to_string(-eig_margin));
  out.detail << "[orth " << orth << ", round trip " << trip << ", equivalence " << equiv
             << ", eig-ridge " << eig_margin << "]";
}

// ------------------------------------------------------------ Learner

CostNet constant_net(const Eigen::MatrixXd& S, const Eigen::VectorXd& q) {
  const int r = static_cast<int>(q.size());
  CostNet net(r, 4, 1);
  auto& head = net.layers().back();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) head.b[i * r + j] = S(i, j);
  head.b.tail(r) = q;
  return net;
}

// S(x0) → S(x0)·Q through the output layer.
void rotate_gauge(CostNet& net, const Eigen::MatrixXd& Q) {
  const int r = net.latent_dim();
  auto& head = net.layers().back();
  const Eigen::MatrixXd W = head.W;
  const Eigen::VectorXd b = head.b;
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      head.W.row(i * r + j).setZero();
      head.b[i * r + j] = 0.0;
      for (int k = 0; k < r; ++k) {
        head.W.row(i * r + j) += Q(k, j) * W.row(i * r + k);
        head.b[i * r + j] += Q(k, j) * b[i * r + k];
      }
    }
  }
}

void learner_criterion(Outcome& out) {
  Rng rng(77);
  // Gradient check on smooth-region samples.
  double worst_grad = 0.0;
  int samples = 0;
  for (int attempt = 0; samples < 100 && attempt < 1000; ++attempt) {
    TrainConfig cfg;
    cfg.seed = 100 + attempt;
    cfg.hidden_units = 6;
    cfg.hidden_layers = 2;
    cfg.head_scale = 1.0;
    CostNet net = CostNet::initialized(4, cfg);
    for (auto& L : net.layers()) L.b = 0.3 * random_vector(L.b.size(), rng);
    const LatentPair p{rng.uniform01(), random_vector(4, rng), random_vector(4, rng)};
    const double delta = 0.5;
    const double margin = eval_latent_cost(net, p.z_pref, p.x0) - eval_latent_cost(net, p.z_other, p.x0) + delta;
    if (std::abs(margin) < 1e-3 || net.min_preactivation(p.x0) < 1e-4) continue;
    worst_grad = std::max(worst_grad, gradient_check(net, p, delta, 1e-3));
    ++samples;
  }
  out.require(samples == 100, "only " + std::to_string(samples) + " smooth samples");
  out.require(worst_grad <= 1e-4, "gradient check " + std::to_string(worst_grad));

  // Gauge invariance of every latent cost.
  double worst_gauge = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    TrainConfig cfg;
    cfg.seed = 500 + trial;
    cfg.head_scale = 1.0;
    CostNet net = CostNet::initialized(6, cfg);
    for (auto& L : net.layers()) L.b = random_vector(L.b.size(), rng);
    CostNet rotated = net;
    rotate_gauge(rotated, random_orthogonal(6, rng));
    for (int s = 0; s < 20; ++s) {
      const double x0 = rng.uniform01();
      const Eigen::VectorXd z = random_vector(6, rng);
      const double a = eval_latent_cost(net, z, x0), b = eval_latent_cost(rotated, z, x0);
      worst_gauge = std::max(worst_gauge, std::abs(a - b));
    }
  }
  out.require(worst_gauge <= 1e-8, "gauge deviation " + std::to_string(worst_gauge));

  // Hinge arithmetic with f(z) = z in one dimension.
  const CostNet lin = constant_net(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
  auto hinge = [&](double f_pref, double f_other, double delta) {
    return hinge_loss(lin, {LatentPair{0.0, Eigen::VectorXd::Constant(1, f_pref), Eigen::VectorXd::Constant(1, f_other)}},
                      delta);
  };
  const double h1 = hinge(0.0, 1.1, 1.0), h2 = hinge(0.7, 0.7, 1.0), h3 = hinge(1.0, 0.0, 1.0);
  out.require(h1 == 0.0, "hinge at -delta-0.1 is " + std::to_string(h1));
  out.require(h2 == 1.0, "hinge at equality is " + std::to_string(h2));
  out.require(h3 == 2.0, "hinge at +1 is " + std::to_string(h3));

  // One separable pair trains to zero loss.
  PreferenceDataset one;
  one.pairs.push_back({0.5, Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0), false});
  const LatentMap id3{Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3), 0};
  TrainConfig small;
  small.seed = 1;
  small.delta = 0.1;
  small.l2 = 0.0;
  const auto [net1, rep1] = train(one, id3, small);
  out.require(rep1.final_train_loss == 0.0, "one-pair loss " + std::to_string(rep1.final_train_loss));

  // Fixed-seed training is bit-reproducible.
  PreferenceDataset ds;
  for (int i = 0; i < 60; ++i) {
    ds.pairs.push_back({static_cast<double>(i % 5) / 4.0, random_vector(3, rng), random_vector(3, rng), false});
  }
  TrainConfig cfg;
  cfg.seed = 9;
  cfg.max_epochs = 40;
  const auto [a, ra] = train(ds, id3, cfg);
  const auto [b, rb] = train(ds, id3, cfg);
  out.require(a.parameters() == b.parameters(), "training not bit-reproducible");

  out.detail << "[grad " << worst_grad << " over " << samples << " samples, gauge " << worst_gauge
             << ", hinge " << h1 << "/" << h2 << "/" << h3 << ", one-pair loss " << rep1.final_train_loss << "]";
}

// --------------------------------------------- Feasibility and identity

void feasibility_criterion(const json& doc, Outcome& out) {
  if (doc.is_null()) {
    out.require(false, "no win-count report");
    return;
  }
  double worst = 0.0;
  long contexts = 0;
  for (const auto& c : doc.at("cells")) {
    for (const auto& r : c.at("contexts")) {
      worst = std::max(worst, r.at("max_violation").get<double>());
      ++contexts;
    }
  }
  out.require(doc.at("feasibility_violations") == 0, "reported violations");
  out.require(worst <= 1e-6, "max violation " + std::to_string(worst));
  out.require(contexts > 0, "no contexts evaluated");
  out.detail << "[" << contexts << " surrogate solutions, max violation " << worst << "]";
}

void identity_criterion(const json& doc, Outcome& out) {
  if (doc.is_null()) {
    out.require(false, "no win-count report");
    return;
  }
  // With ΔR = R_nom − R_sur, ΔJ = J_sur − J_nom and composite = R + J,
  // composite_nom − composite_sur = ΔR − ΔJ. The "+" form differs by 2ΔJ.
  double worst = 0.0, plus_form = 0.0;
  for (const auto& c : doc.at("cells")) {
    for (const auto& r : c.at("contexts")) {
      const double dr = r.at("r_nom").get<double>() - r.at("r_sur").get<double>();
      const double dj = r.at("j_sur").get<double>() - r.at("j_nom").get<double>();
      const double dc = r.at("composite_nom").get<double>() - r.at("composite_sur").get<double>();
      worst = std::max(worst, std::abs(dr - dj - dc));
      plus_form = std::max(plus_form, std::abs(dr + dj - dc));
    }
  }
  out.require(worst <= 1e-9, "identity residual " + std::to_string(worst));
  out.detail << "[max |dR - dJ - dComposite| = " << worst << "; the dR + dJ form is off by up to " << plus_form << "]";
}

// Runs one criterion; an escaping exception counts as a failure.
void guarded(Outcome& out, const std::function<void(Outcome&)>& fn) {
  try {
    fn(out);
  } catch (const std::exception& e) {
    out.require(false, std::string("exception: ") + e.what());
  }
}

void report(const char* name, const Outcome& o, bool& all) {
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << std::endl;
  all = all && o.pass;
}

}  // namespace

int main() {
  bool all = true;
  json doc;
  const std::pair<const char*, std::function<void(Outcome&)>> criteria[] = {
      {"oracle arithmetic", oracle_criterion},
      {"pca reconstruction suite", pca_criterion},
      {"learner suite", learner_criterion},
      {"solver correctness", solver_criterion},
      {"win-count study (reproduce-table1)",
       [&doc](Outcome& o) {
         doc = run_table1(o);
         table1_criterion(doc, o);
       }},
      {"feasibility guarantee", [&doc](Outcome& o) { feasibility_criterion(doc, o); }},
      {"identity audit", [&doc](Outcome& o) { identity_criterion(doc, o); }},
  };
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    guarded(o, fn);
    report(name, o, all);
  }
  return all ? 0 : 1;
}
