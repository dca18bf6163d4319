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

#include <array>
#include <optional>
#include <utility>

#include "fairtwin/instance.hpp"

namespace fairtwin {

inline constexpr int kNumFeatures = 5;

// Normalized five-feature summary of an allocation:
//   [0] load on the first existing facility / its capacity
//   [1] load on the last facility / its capacity
//   [2] total temporary load / total temporary capacity
//   [3] largest single assignment x_cf / largest county demand
//   [4] total served / total demand
// A zero normalizer yields a zero feature.
struct FeatureVector {
  std::array<double, kNumFeatures> f{};

  double operator[](int k) const { return f[k]; }
  double& operator[](int k) { return f[k]; }
};

struct OracleConfig {
  double context_shift = 0.1;  // ū' = ū − shift·x0
  // Multiplies J_orig inside the composite score; 1 reproduces φ = s + J.
  double cost_weight = 1.0;
};

struct ScoredSolution {
  Allocation allocation;
  double x0 = 0.0;
  double s = 0.0;
  double j_orig = 0.0;
  double phi = 0.0;
};

FeatureVector extract_features(const Allocation& a, const Instance& inst);

// Σ_{k=1..4} 100(f_{k+1} − f_k²)² + (1 − f_k)².
double rosenbrock(const FeatureVector& f);

// Rosenbrock of the features shifted by −context_shift·x0.
double score_features(FeatureVector f, double x0, const OracleConfig& cfg = {});
double score(const Allocation& a, double x0, const Instance& inst, const OracleConfig& cfg = {});

ScoredSolution make_scored(Allocation a, double x0, const Instance& inst, const OracleConfig& cfg = {});

inline constexpr double kTieTolerance = 1e-9;  // relative

bool is_tie(double phi_a, double phi_b);

// Returns (preferred, other) by strictly lower φ, or nullopt on a tie.
// Throws ValidationError if the contexts differ.
std::optional<std::pair<const ScoredSolution*, const ScoredSolution*>> prefer(
    const ScoredSolution& a, const ScoredSolution& b);

}  // namespace fairtwin
