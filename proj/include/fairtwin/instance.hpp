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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace fairtwin {

enum class FacilityKind { kExisting, kTemporary };

struct County {
  std::string id;
  double demand = 0.0;
};

struct Facility {
  std::string id;
  FacilityKind kind = FacilityKind::kExisting;
  double capacity = 0.0;
  double fixed_cost = 0.0;  // only meaningful for temporary facilities
};

// Facility-allocation problem data. Facility order is the order given at
// construction ("facility-id order"); the decision-vector layout and the
// first/last facility features depend on it.
class Instance {
 public:
  // Validates every invariant and throws ValidationError naming the field.
  Instance(std::vector<County> counties, std::vector<Facility> facilities,
           Eigen::MatrixXd distance_cost);

  const std::vector<County>& counties() const { return counties_; }
  const std::vector<Facility>& facilities() const { return facilities_; }
  const Eigen::MatrixXd& distance_cost() const { return distance_cost_; }

  int num_counties() const { return static_cast<int>(counties_.size()); }
  int num_facilities() const { return static_cast<int>(facilities_.size()); }
  int num_temporary() const { return static_cast<int>(temporary_.size()); }

  // Facility indices of the temporary facilities, in facility order. The
  // t-th entry owns activation variable y_t.
  const std::vector<int>& temporary() const { return temporary_; }
  const std::vector<int>& existing() const { return existing_; }
  // Position of facility f among the temporaries, or -1.
  int temporary_slot(int f) const { return slot_[f]; }

  // d = |C|·|F| + |F_T|.
  int decision_dim() const { return num_counties() * num_facilities() + num_temporary(); }
  int x_index(int c, int f) const { return c * num_facilities() + f; }
  int y_index(int t) const { return num_counties() * num_facilities() + t; }

  Eigen::VectorXd demand() const;
  Eigen::VectorXd capacity() const;
  double total_demand() const;
  double max_demand() const;

  // τ_feas = 1e-6 · max(1, demand scale).
  double feasibility_tolerance() const;

 private:
  std::vector<County> counties_;
  std::vector<Facility> facilities_;
  Eigen::MatrixXd distance_cost_;
  std::vector<int> temporary_;
  std::vector<int> existing_;
  std::vector<int> slot_;
};

inline constexpr double kIntegralityTolerance = 1e-6;  // τ_int

// Assignment matrix x (county × facility) and activations y (one per
// temporary facility, in facility order).
struct Allocation {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;

  bool operator==(const Allocation& other) const {
    return x == other.x && y == other.y;
  }
};

// Flattened decision u: row-major x (county-major), then y.
struct DecisionVector {
  Eigen::VectorXd values;

  Eigen::Index size() const { return values.size(); }
  double operator[](Eigen::Index i) const { return values[i]; }
  bool operator==(const DecisionVector& other) const {
    return values.size() == other.values.size() && values == other.values;
  }
};

struct GeneratorParams {
  double demand_lo = 100.0;
  double demand_hi = 1000.0;
  double capacity_lo = 0.5;  // multiples of total demand / |F|
  double capacity_hi = 1.5;
  double area = 100.0;  // points are uniform in [0, area]^2
  double cost_per_distance = 1.0;
  double fixed_cost_lo = 500.0;
  double fixed_cost_hi = 2000.0;
};

Instance generate_instance(std::uint64_t seed, int n_counties, int n_existing,
                           int n_temporary, const GeneratorParams& params = {});

// Strict JSON loader: unknown keys are rejected.
Instance parse_instance(const nlohmann::json& doc);
Instance load_instance(const std::filesystem::path& path);
nlohmann::json instance_to_json(const Instance& inst);
void save_instance(const Instance& inst, const std::filesystem::path& path);

DecisionVector flatten(const Allocation& a, const Instance& inst);
// y entries within tol of 0 or 1 are snapped; anything else is rejected.
Allocation unflatten(const DecisionVector& u, const Instance& inst,
                     double integrality_tol = kIntegralityTolerance);

// Objective coefficients of the nominal cost: d_cf on x, K_f on y.
Eigen::VectorXd nominal_linear_cost(const Instance& inst);
// Transport plus fixed opening cost.
double nominal_objective(const Allocation& a, const Instance& inst);

struct FeasibilityReport {
  double max_demand_violation = 0.0;    // |row sum − D_c|
  double max_capacity_violation = 0.0;  // column sum − cap_f·(y_f or 1)
  double min_assignment = 0.0;          // most negative x entry (or 0)
  double max_integrality_violation = 0.0;

  bool ok(double tol) const {
    return max_demand_violation <= tol && max_capacity_violation <= tol &&
           min_assignment >= -tol && max_integrality_violation == 0.0;
  }
};

FeasibilityReport check_feasibility(const Allocation& a, const Instance& inst);
bool is_feasible(const Allocation& a, const Instance& inst);

// Per-facility load (column sums of x).
Eigen::VectorXd facility_loads(const Allocation& a);

}  // namespace fairtwin
