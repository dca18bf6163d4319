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

#include "fairtwin/preference.hpp"

#include <algorithm>
#include <cmath>

#include "fairtwin/errors.hpp"

namespace fairtwin {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

FeatureVector extract_features(const Allocation& a, const Instance& inst) {
  FeatureVector out;
  const Eigen::VectorXd loads = facility_loads(a);
  const auto& fac = inst.facilities();
  if (!inst.existing().empty()) {
    const int first = inst.existing().front();
    out[0] = ratio(loads[first], fac[first].capacity);
  }
  const int last = inst.num_facilities() - 1;
  out[1] = ratio(loads[last], fac[last].capacity);
  double temp_load = 0.0, temp_cap = 0.0;
  for (int f : inst.temporary()) {
    temp_load += loads[f];
    temp_cap += fac[f].capacity;
  }
  out[2] = ratio(temp_load, temp_cap);
  out[3] = ratio(a.x.maxCoeff(), inst.max_demand());
  out[4] = ratio(a.x.sum(), inst.total_demand());
  return out;
}

double rosenbrock(const FeatureVector& f) {
  double r = 0.0;
  for (int k = 0; k + 1 < kNumFeatures; ++k) {
    const double a = f[k + 1] - f[k] * f[k];
    const double b = 1.0 - f[k];
    r += 100.0 * a * a + b * b;
  }
  return r;
}

double score_features(FeatureVector f, double x0, const OracleConfig& cfg) {
  for (int k = 0; k < kNumFeatures; ++k) f[k] -= cfg.context_shift * x0;
  return rosenbrock(f);
}

double score(const Allocation& a, double x0, const Instance& inst, const OracleConfig& cfg) {
  return score_features(extract_features(a, inst), x0, cfg);
}

ScoredSolution make_scored(Allocation a, double x0, const Instance& inst, const OracleConfig& cfg) {
  ScoredSolution s;
  s.x0 = x0;
  s.s = score(a, x0, inst, cfg);
  s.j_orig = nominal_objective(a, inst);
  s.phi = s.s + cfg.cost_weight * s.j_orig;
  s.allocation = std::move(a);
  return s;
}

bool is_tie(double phi_a, double phi_b) {
  return std::abs(phi_a - phi_b) <= kTieTolerance * std::max({1.0, std::abs(phi_a), std::abs(phi_b)});
}

std::optional<std::pair<const ScoredSolution*, const ScoredSolution*>> prefer(
    const ScoredSolution& a, const ScoredSolution& b) {
  if (a.x0 != b.x0) throw ValidationError("prefer: solutions come from different contexts");
  if (is_tie(a.phi, b.phi)) return std::nullopt;
  if (a.phi < b.phi) return std::make_pair(&a, &b);
  return std::make_pair(&b, &a);
}

}  // namespace fairtwin
