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
#include "fairtwin/opt_engine.hpp"
#include "fairtwin/preference.hpp"
#include "fairtwin/rng.hpp"
#include "test_util.hpp"

using namespace fairtwin;

namespace {

FeatureVector features(std::initializer_list<double> v) {
  FeatureVector f;
  int k = 0;
  for (double x : v) f[k++] = x;
  return f;
}

// Direct evaluation of the extended Rosenbrock sum.
double rosenbrock_reference(const std::vector<double>& f) {
  double r = 0.0;
  for (std::size_t k = 0; k + 1 < f.size(); ++k) {
    r += 100.0 * std::pow(f[k + 1] - f[k] * f[k], 2) + std::pow(1.0 - f[k], 2);
  }
  return r;
}

}  // namespace

TEST_CASE("rosenbrock values") {
  CHECK(std::abs(rosenbrock(features({1, 1, 1, 1, 1})) - 0.0) <= 1e-12);
  CHECK(std::abs(rosenbrock(features({0, 0, 0, 0, 0})) - 4.0) <= 1e-12);
  CHECK(std::abs(rosenbrock(features({1, 1, 1, 1, 2})) - 100.0) <= 1e-12);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> v(5);
    FeatureVector f;
    for (int k = 0; k < 5; ++k) f[k] = v[k] = rng.uniform(-2, 2);
    CHECK(rosenbrock(f) == doctest::Approx(rosenbrock_reference(v)).epsilon(1e-14));
  }
}

TEST_CASE("feature extraction") {
  SUBCASE("zero allocation") {
    const Instance inst = generate_instance(7, 9, 14, 9);
    Allocation a{Eigen::MatrixXd::Zero(9, 23), Eigen::VectorXd::Zero(9)};
    const FeatureVector f = extract_features(a, inst);
    for (int k = 0; k < kNumFeatures; ++k) CHECK(f[k] == 0.0);
  }
  SUBCASE("single county at full capacity") {
    const Instance inst = fairtwin::testing::single_county(10.0, 10.0, 1.0);
    Allocation a{Eigen::MatrixXd::Constant(1, 1, 10.0), Eigen::VectorXd(0)};
    const FeatureVector f = extract_features(a, inst);
    CHECK(f[0] == 1.0);
    CHECK(f[4] == 1.0);
  }
  SUBCASE("demand coverage is one for every solved allocation") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const Instance inst = generate_instance(seed, 9, 14, 9);
      const SolveResult r = solve_milp(inst);
      REQUIRE(r.status == SolveStatus::kOptimal);
      CHECK(extract_features(*r.allocation, inst)[4] == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("context-shifted score") {
  const Instance inst = generate_instance(7, 9, 14, 9);
  const SolveResult r = solve_milp(inst);
  REQUIRE(r.status == SolveStatus::kOptimal);
  CHECK(score(*r.allocation, 0.0, inst) == rosenbrock(extract_features(*r.allocation, inst)));

  SUBCASE("zero features at x0 = 1") {
    Allocation zero{Eigen::MatrixXd::Zero(9, 23), Eigen::VectorXd::Zero(9)};
    const double expected = rosenbrock_reference(std::vector<double>(5, -0.1));
    CHECK(std::abs(expected - 9.68) <= 1e-12);
    CHECK(std::abs(score(zero, 1.0, inst) - expected) <= 1e-12);
  }
  SUBCASE("shift cancels a uniformly offset optimum") {
    for (double x0 : {0.0, 0.25, 0.8, 1.0}) {
      const double v = 1.0 + 0.1 * x0;
      CHECK(std::abs(score_features(features({v, v, v, v, v}), x0)) <= 1e-12);
    }
  }
  SUBCASE("feature-level and allocation-level scores agree") {
    CHECK(score(*r.allocation, 0.6, inst) == score_features(extract_features(*r.allocation, inst), 0.6));
  }
}

TEST_CASE("preference relation") {
  const Instance inst = fairtwin::testing::single_county(5.0, 10.0, 2.0);
  Allocation a{Eigen::MatrixXd::Constant(1, 1, 5.0), Eigen::VectorXd(0)};
  ScoredSolution sa = make_scored(a, 0.5, inst), sb = sa;
  sa.phi = 1.0;
  sb.phi = 2.0;
  auto p = prefer(sa, sb);
  REQUIRE(p.has_value());
  CHECK(p->first == &sa);
  CHECK(p->second == &sb);
  auto q = prefer(sb, sa);
  REQUIRE(q.has_value());
  CHECK(q->first == &sa);
  CHECK(q->second == &sb);

  sb.phi = 1.0;
  CHECK_FALSE(prefer(sa, sb).has_value());
  sb.phi = 1.0 + 1e-12;
  CHECK_FALSE(prefer(sa, sb).has_value());

  sb.x0 = 0.7;
  CHECK_THROWS_AS(prefer(sa, sb), ValidationError);
}

TEST_CASE("composite score is s plus J") {
  const Instance inst = generate_instance(7, 9, 14, 9);
  const SolveResult r = solve_milp(inst);
  const ScoredSolution s = make_scored(*r.allocation, 0.4, inst);
  CHECK(s.s == score(*r.allocation, 0.4, inst));
  CHECK(s.j_orig == doctest::Approx(r.objective).epsilon(1e-9));
  CHECK(s.phi == s.s + s.j_orig);
}
