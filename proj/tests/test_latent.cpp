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
#include "fairtwin/errors.hpp"
#include "fairtwin/latent.hpp"
#include "fairtwin/rng.hpp"
#include "fairtwin/scenario.hpp"
#include "test_util.hpp"

using namespace fairtwin;
using fairtwin::testing::TempDir;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
  return M;
}

Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng) { return random_matrix(n, 1, rng).col(0); }

// Pool decision vectors from the experiment instance.
const Eigen::MatrixXd& pool_vectors() {
  static const Eigen::MatrixXd U = [] {
    const Instance inst = generate_instance(7, 9, 14, 9, fairtwin::testing::experiment_generator());
    PoolConfig cfg;
    cfg.seed = 1;
    cfg.per_context = 10;
    const SolutionPool pool = generate_pool(inst, uniform_grid(8), cfg);
    Eigen::MatrixXd M(static_cast<Eigen::Index>(pool.entries.size()), inst.decision_dim());
    for (std::size_t i = 0; i < pool.entries.size(); ++i) {
      M.row(static_cast<Eigen::Index>(i)) = flatten(pool.entries[i].allocation, inst).values.transpose();
    }
    return M;
  }();
  return U;
}

}  // namespace

TEST_CASE("principal directions") {
  SUBCASE("orthonormal columns on pool data") {
    const LatentMap map = fit_pca(pool_vectors(), 30);
    REQUIRE(map.r() == 30);
    REQUIRE(map.d() == 216);
    const double err = (map.W.transpose() * map.W - Eigen::MatrixXd::Identity(30, 30)).cwiseAbs().maxCoeff();
    CHECK(err <= 1e-10);
    for (Eigen::Index k = 1; k < map.explained_variance.size(); ++k) {
      CHECK(map.explained_variance[k] <= map.explained_variance[k - 1] + 1e-12);
    }
    CHECK(map.mu.isApprox(pool_vectors().colwise().mean().transpose()));
  }
  SUBCASE("data on a line") {
    Rng rng(4);
    const Eigen::Vector3d dir = Eigen::Vector3d(1.0, 2.0, -2.0) / 3.0;
    Eigen::MatrixXd U(40, 3);
    for (int i = 0; i < 40; ++i) U.row(i) = (Eigen::Vector3d(5, 1, 0) + rng.normal() * dir).transpose();
    const LatentMap map = fit_pca(U, 1);
    Eigen::MatrixXd C = U.rowwise() - U.colwise().mean();
    const double total = C.squaredNorm() / (U.rows() - 1);
    CHECK(map.explained_variance[0] == doctest::Approx(total).epsilon(1e-10));
    CHECK(std::abs(std::abs(map.W.col(0).dot(dir)) - 1.0) <= 1e-10);
  }
  SUBCASE("full rank round trip") {
    Rng rng(5);
    const Eigen::MatrixXd U = random_matrix(50, 10, rng);
    const LatentMap map = fit_pca(U, 10);
    for (int i = 0; i < 20; ++i) {
      const Eigen::VectorXd u = 10.0 * random_vector(10, rng);
      CHECK((lift(project(u, map), map) - u).norm() <= 1e-8);
    }
  }
  SUBCASE("rank-deficient data is completed") {
    Rng rng(6);
    const Eigen::MatrixXd U = random_matrix(12, 3, rng) * random_matrix(3, 10, rng);
    const LatentMap map = fit_pca(U, 8);
    CHECK(map.degenerate_directions == 5);
    CHECK((map.W.transpose() * map.W - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("deterministic with sign convention") {
    const LatentMap a = fit_pca(pool_vectors(), 30);
    const LatentMap b = fit_pca(pool_vectors(), 30);
    CHECK(a.W == b.W);
    CHECK(a.hash() == b.hash());
    for (Eigen::Index k = 0; k < a.W.cols(); ++k) {
      Eigen::Index i;
      a.W.col(k).cwiseAbs().maxCoeff(&i);
      CHECK(a.W(i, k) > 0.0);
    }
  }
  SUBCASE("invalid dimension") {
    CHECK_THROWS_AS(fit_pca(pool_vectors(), 0), ValidationError);
    CHECK_THROWS_AS(fit_pca(pool_vectors(), 217), ValidationError);
  }
}

TEST_CASE("projection") {
  const LatentMap map = fit_pca(pool_vectors(), 30);
  CHECK(project(map.mu, map).cwiseAbs().maxCoeff() <= 1e-9);
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(30, 0);
  CHECK((project(map.mu + map.W * e1, map) - e1).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("analytic reconstruction") {
  SUBCASE("identity map leaves the cost unchanged") {
    Rng rng(7);
    LatentMap map{Eigen::MatrixXd::Identity(5, 5), Eigen::VectorXd::Zero(5), Eigen::VectorXd::Ones(5), 0};
    const Eigen::MatrixXd V = random_matrix(5, 5, rng);
    const Eigen::MatrixXd Hz = V * V.transpose();
    const Eigen::VectorXd qz = random_vector(5, rng);
    const QuadCost c = reconstruct_cost(Hz, qz, map, 0.0);
    CHECK((c.H - Hz).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((c.q - qz).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("mean shift moves the linear term") {
    LatentMap map{Eigen::MatrixXd::Identity(4, 4), Eigen::Vector4d(1, -2, 3, 0.5), Eigen::VectorXd::Ones(4), 0};
    const QuadCost c = reconstruct_cost(Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4), map, 0.0);
    CHECK((c.q + map.mu).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("latent and full-space values differ by a constant") {
    Rng rng(8);
    const LatentMap map = fit_pca(pool_vectors(), 30);
    const Eigen::MatrixXd S = random_matrix(30, 30, rng) * 0.1;
    const Eigen::MatrixXd Hz = S * S.transpose();
    const Eigen::VectorXd qz = random_vector(30, rng);
    const QuadCost c = reconstruct_cost(Hz, qz, map, 0.0);
    auto latent = [&](const Eigen::VectorXd& z) { return 0.5 * z.dot(Hz * z) + qz.dot(z); };
    auto full = [&](const Eigen::VectorXd& u) { return 0.5 * u.dot(c.H * u) + c.q.dot(u); };

    // Fit the constant on one sample, then check it on 100 fresh ones.
    const Eigen::VectorXd z0 = 10.0 * random_vector(30, rng);
    const double offset = latent(z0) - full(lift(z0, map));
    CHECK(offset == doctest::Approx(reconstruction_offset(Hz, qz, map)).epsilon(1e-10));
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd z = 10.0 * random_vector(30, rng);
      const double a = latent(z), b = full(lift(z, map)) + offset;
      worst = std::max(worst, std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(offset)}));
    }
    CHECK(worst <= 1e-8);
  }
  SUBCASE("ridge bounds the spectrum") {
    Rng rng(9);
    const LatentMap map = fit_pca(pool_vectors(), 30);
    const Eigen::MatrixXd S = random_matrix(30, 5, rng);
    for (double ridge : {1e-9, 1e-6, 1e-3}) {
      const QuadCost c = reconstruct_cost(S * S.transpose(), random_vector(30, rng), map, ridge);
      const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c.H).eigenvalues().minCoeff();
      CHECK(min_eig >= ridge - 1e-10);
      REQUIRE(c.factor.has_value());
      CHECK((c.factor->dense() - c.H).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + c.H.cwiseAbs().maxCoeff()));
    }
  }
  SUBCASE("mean anchor") {
    Rng rng(10);
    const LatentMap map = fit_pca(pool_vectors(), 30);
    const Eigen::MatrixXd S = random_matrix(30, 5, rng);
    const Eigen::MatrixXd Hz = S * S.transpose();
    const Eigen::VectorXd qz = random_vector(30, rng);
    const QuadCost origin = reconstruct_cost(Hz, qz, map, 1e-3, RidgeAnchor::kOrigin);
    const QuadCost mean = reconstruct_cost(Hz, qz, map, 1e-3, RidgeAnchor::kMean);
    CHECK((mean.q - (origin.q - 1e-3 * map.mu)).cwiseAbs().maxCoeff() <= 1e-9);
  }
  SUBCASE("indefinite latent Hessian is rejected") {
    const LatentMap map = fit_pca(pool_vectors(), 30);
    CHECK_THROWS_AS(reconstruct_cost(-Eigen::MatrixXd::Identity(30, 30), Eigen::VectorXd::Zero(30), map, 0.0),
                    ValidationError);
  }
}

TEST_CASE("latent map files") {
  TempDir dir("latent");
  const LatentMap map = fit_pca(pool_vectors(), 30);
  save_latent(map, dir / "latent.json");
  const LatentMap back = load_latent(dir / "latent.json");
  CHECK(back.W == map.W);
  CHECK(back.mu == map.mu);
  CHECK(back.explained_variance == map.explained_variance);
  CHECK(back.hash() == map.hash());
}
