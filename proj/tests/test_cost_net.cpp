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


#include <cmath>

#include "doctest.h"
#include "fairtwin/cost_net.hpp"
#include "fairtwin/dataset.hpp"
#include "fairtwin/errors.hpp"
#include "fairtwin/rng.hpp"
#include "fairtwin/scenario.hpp"
#include "test_util.hpp"

using namespace fairtwin;
using fairtwin::testing::TempDir;

namespace {

Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

Eigen::MatrixXd random_orthogonal(int r, Rng& rng) {
  Eigen::MatrixXd M(r, r);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
  return Eigen::HouseholderQR<Eigen::MatrixXd>(M).householderQ();
}

// Net with zero weights whose output bias fixes S and q for every context.
CostNet constant_net(const Eigen::MatrixXd& S, const Eigen::VectorXd& q) {
  const int r = static_cast<int>(q.size());
  CostNet net(r, 4, 1);
  auto& out = net.layers().back();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) out.b[i * r + j] = S(i, j);
  out.b.tail(r) = q;
  return net;
}

LatentMap identity_map(int d) {
  return LatentMap{Eigen::MatrixXd::Identity(d, d), Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d), 0};
}

// Rotates the S block of the output layer: S(x0) -> S(x0)·Q for every x0.
void rotate_gauge(CostNet& net, const Eigen::MatrixXd& Q) {
  const int r = net.latent_dim();
  auto& out = net.layers().back();
  Eigen::MatrixXd W = out.W;
  Eigen::VectorXd b = out.b;
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(W.cols());
      double bias = 0.0;
      for (int k = 0; k < r; ++k) {
        row += Q(k, j) * out.W.row(i * r + k);
        bias += Q(k, j) * out.b[i * r + k];
      }
      W.row(i * r + j) = row;
      b[i * r + j] = bias;
    }
  }
  out.W = W;
  out.b = b;
}

struct Experiment {
  Instance inst = generate_instance(7, 9, 14, 9, fairtwin::testing::experiment_generator());
  std::vector<ScoredSolution> scored;
  LatentMap map;

  Experiment() {
    PoolConfig cfg;
    cfg.seed = 1;
    cfg.per_context = 10;
    const SolutionPool pool = generate_pool(inst, uniform_grid(6), cfg);
    scored = score_pool(pool, inst);
    Eigen::MatrixXd U(static_cast<Eigen::Index>(pool.entries.size()), inst.decision_dim());
    for (std::size_t i = 0; i < pool.entries.size(); ++i) {
      U.row(static_cast<Eigen::Index>(i)) = flatten(pool.entries[i].allocation, inst).values.transpose();
    }
    map = fit_pca(U, 10);
  }
};

const Experiment& experiment() {
  static const Experiment e;
  return e;
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.max_epochs = 150;
  cfg.hidden_units = 8;
  cfg.hidden_layers = 2;
  return cfg;
}

}  // namespace

TEST_CASE("network outputs") {
  SUBCASE("zero parameters give a zero cost") {
    const CostNet net(5, 20, 3);
    CHECK(net.num_parameters() == (1 * 20 + 20) + 2 * (20 * 20 + 20) + (20 * 30 + 30));
    const auto [S, q] = net.forward(0.3);
    CHECK(S.isZero(0.0));
    CHECK(q.isZero(0.0));
    CHECK(net.hessian(0.7).isZero(0.0));
  }
  SUBCASE("Gram Hessian is PSD") {
    TrainConfig cfg;
    cfg.head_scale = 1.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
      cfg.seed = s;
      const CostNet net = CostNet::initialized(6, cfg);
      for (double x0 : {0.0, 0.5, 1.0}) {
        const Eigen::MatrixXd H = net.hessian(x0);
        CHECK((H - H.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().minCoeff() >= -1e-10);
      }
    }
  }
  SUBCASE("parameter vector round trip") {
    TrainConfig cfg;
    cfg.seed = 3;
    const CostNet a = CostNet::initialized(4, cfg);
    CostNet b(4, cfg.hidden_units, cfg.hidden_layers);
    b.set_parameters(a.parameters());
    CHECK(b.output(0.4) == a.output(0.4));
    CHECK(b.hash() == a.hash());
  }
}

TEST_CASE("latent cost") {
  Rng rng(2);
  const Eigen::VectorXd z0 = Eigen::VectorXd::Zero(4);
  const Eigen::MatrixXd S = Eigen::MatrixXd::Random(4, 4);
  const Eigen::VectorXd q = random_vector(4, rng);
  CHECK(latent_cost(S, q, z0) == 0.0);
  CHECK(latent_cost(Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4), Eigen::VectorXd::Unit(4, 0)) == 0.5);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd z = random_vector(4, rng);
    const Eigen::MatrixXd H = S * S.transpose();
    const double dense = 0.5 * z.transpose() * H * z + q.dot(z);
    CHECK(latent_cost(S, q, z) == doctest::Approx(dense).epsilon(1e-12));
  }
}

TEST_CASE("hinge arithmetic") {
  // f(z) = z with S = 0, q = 1.
  const CostNet net = constant_net(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1));
  auto pair = [](double a, double b) {
    return LatentPair{0.5, Eigen::VectorXd::Constant(1, a), Eigen::VectorXd::Constant(1, b)};
  };
  const double delta = 1.0;
  CHECK(hinge_loss(net, {pair(0.0, delta + 0.1)}, delta) == 0.0);
  CHECK(hinge_loss(net, {pair(2.0, 2.0)}, delta) == delta);
  CHECK(hinge_loss(net, {pair(3.0, 2.0)}, 1.0) == 2.0);
}

TEST_CASE("gradients") {
  SUBCASE("finite differences in the smooth region") {
    Rng rng(11);
    TrainConfig cfg;
    cfg.head_scale = 1.0;
    cfg.hidden_units = 6;
    cfg.hidden_layers = 3;
    int checked = 0, attempts = 0;
    double worst = 0.0;
    while (checked < 100 && attempts < 2000) {
      ++attempts;
      cfg.seed = attempts;
      const CostNet net = CostNet::initialized(4, cfg);
      const LatentPair p{rng.uniform01(), random_vector(4, rng), random_vector(4, rng)};
      const auto [S, q] = net.forward(p.x0);
      const double margin = latent_cost(S, q, p.z_pref) - latent_cost(S, q, p.z_other) + 1.0;
      if (margin < 1e-2 || net.min_preactivation(p.x0) < 1e-3) continue;
      worst = std::max(worst, gradient_check(net, p, 1.0, 1e-3));
      ++checked;
    }
    CHECK(checked == 100);
    CHECK(worst <= 1e-4);
  }
  SUBCASE("zero net has no weight-decay gradient") {
    const CostNet net(3, 5, 2);
    Eigen::VectorXd g;
    objective_and_gradient(net, {}, 1.0, 0.5, &g);
    CHECK(g.size() == net.num_parameters());
    CHECK(g.isZero(0.0));
  }
  SUBCASE("satisfied margin has a zero hinge gradient") {
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.head_scale = 1.0;
    CostNet net = CostNet::initialized(2, cfg);
    const auto [S, q] = net.forward(0.2);
    // Pick the pair order so the preferred side is far cheaper.
    LatentPair p{0.2, Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)};
    if (latent_cost(S, q, p.z_pref) > latent_cost(S, q, p.z_other)) std::swap(p.z_pref, p.z_other);
    const double gap = latent_cost(S, q, p.z_other) - latent_cost(S, q, p.z_pref);
    REQUIRE(gap > 0.0);
    Eigen::VectorXd g;
    const double loss = objective_and_gradient(net, {p}, 0.5 * gap, 0.0, &g);
    CHECK(loss == 0.0);
    CHECK(g.isZero(0.0));
  }
}

TEST_CASE("orthogonal gauge invariance") {
  Rng rng(17);
  TrainConfig cfg;
  cfg.seed = 4;
  cfg.head_scale = 1.0;
  CostNet net = CostNet::initialized(6, cfg);
  for (auto& L : net.layers()) L.b = random_vector(static_cast<int>(L.b.size()), rng);
  CostNet rotated = net;
  rotate_gauge(rotated, random_orthogonal(6, rng));
  std::vector<LatentPair> pairs;
  for (int i = 0; i < 20; ++i) pairs.push_back({rng.uniform01(), random_vector(6, rng), random_vector(6, rng)});
  for (double x0 : {0.0, 0.37, 1.0}) {
    const auto [S, q] = net.forward(x0);
    const auto [SQ, qq] = rotated.forward(x0);
    CHECK((S - SQ).cwiseAbs().maxCoeff() > 1e-3);
    CHECK((net.hessian(x0) - rotated.hessian(x0)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((q - qq).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(std::abs(hinge_loss(net, pairs, 1.0) - hinge_loss(rotated, pairs, 1.0)) <= 1e-8);
}

TEST_CASE("training") {
  SUBCASE("one separable pair reaches zero loss") {
    PreferenceDataset ds;
    ds.pairs.push_back({0.5, Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0), false});
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.delta = 0.1;
    cfg.l2 = 0.0;
    const LatentMap map = identity_map(3);
    auto [net, rep] = train(ds, map, cfg);
    CHECK(rep.final_train_loss == 0.0);
    CHECK(hinge_loss(net, project_pairs(ds, map), cfg.delta) == 0.0);
    CHECK(rep.epochs < cfg.max_epochs);
  }
  SUBCASE("fixed seed is bit-reproducible") {
    const Experiment& e = experiment();
    const PreferenceDataset ds = build_pairs(e.scored, e.inst, 120, 0.1, 3);
    auto [a, ra] = train(ds, e.map, quick_config(7));
    auto [b, rb] = train(ds, e.map, quick_config(7));
    CHECK(a.parameters() == b.parameters());
    CHECK(ra.train_curve == rb.train_curve);
    auto [c, rc] = train(ds, e.map, quick_config(8));
    CHECK(a.parameters() != c.parameters());
  }
  SUBCASE("inverted labels invert the learned order") {
    const Experiment& e = experiment();
    const PreferenceDataset clean = build_pairs(e.scored, e.inst, 150, 0.0, 4);
    const PreferenceDataset flipped = build_pairs(e.scored, e.inst, 150, 1.0, 4);
    auto [good, rg] = train(clean, e.map, quick_config(2));
    auto [bad, rbad] = train(flipped, e.map, quick_config(2));
    CHECK(rg.best_val_loss != rbad.best_val_loss);
    const auto pairs = project_pairs(clean, e.map);
    auto accuracy = [&](const CostNet& net) {
      int right = 0;
      for (const auto& p : pairs) right += eval_latent_cost(net, p.z_pref, p.x0) < eval_latent_cost(net, p.z_other, p.x0);
      return static_cast<double>(right) / pairs.size();
    };
    CHECK(accuracy(good) > 0.7);
    CHECK(accuracy(bad) < 0.3);
  }
  SUBCASE("invalid configuration") {
    TrainConfig cfg;
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    PreferenceDataset ds;
    ds.pairs.push_back({0.5, Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0), false});
    CHECK_THROWS_AS(train(ds, identity_map(4), TrainConfig{}), ValidationError);
  }
}

TEST_CASE("export and files") {
  const LatentMap map = identity_map(5);
  SUBCASE("zero net exports the ridge") {
    CostNet net(5, 4, 2);
    net.latent_hash = map.hash();
    ExportOptions opt;
    const CostTable table = export_costs(net, map, uniform_grid(52), opt);
    REQUIRE(table.entries.size() == 52);
    for (const auto& c : table.entries) {
      CHECK((c.H - opt.ridge_floor * Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() == 0.0);
      CHECK(c.q.isZero(0.0));
      CHECK_NOTHROW(validate_quad_cost(c, 5));
    }
  }
  SUBCASE("exported Hessians are PSD") {
    TrainConfig cfg;
    cfg.seed = 6;
    cfg.head_scale = 1.0;
    CostNet net = CostNet::initialized(5, cfg);
    net.latent_hash = map.hash();
    const CostTable table = export_costs(net, map, uniform_grid(9));
    for (const auto& c : table.entries) CHECK_NOTHROW(validate_quad_cost(c, 5));

    TempDir dir("costs");
    save_cost_table(table, dir / "costs.jsonl");
    const CostTable back = load_cost_table(dir / "costs.jsonl");
    REQUIRE(back.entries.size() == 9);
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(back.entries[i].context == table.entries[i].context);
      CHECK(back.entries[i].H == table.entries[i].H);
      CHECK(back.entries[i].q == table.entries[i].q);
    }
  }
  SUBCASE("latent map mismatch") {
    CostNet net(5, 4, 2);
    net.latent_hash = "0000000000000000";
    CHECK_THROWS_AS(export_costs(net, map, uniform_grid(3)), ValidationError);
  }
  SUBCASE("model file round trip") {
    TrainConfig cfg;
    cfg.seed = 9;
    CostNet net = CostNet::initialized(5, cfg);
    net.latent_hash = map.hash();
    TempDir dir("model");
    save_model(net, cfg, dir / "model.json");
    const CostNet back = load_model(dir / "model.json");
    CHECK(back.parameters() == net.parameters());
    CHECK(back.latent_hash == net.latent_hash);
    CHECK(back.hash() == net.hash());
  }
}
