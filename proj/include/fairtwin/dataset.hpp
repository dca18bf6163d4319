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

#include "fairtwin/instance.hpp"
#include "fairtwin/preference.hpp"
#include "fairtwin/scenario.hpp"

namespace fairtwin {

// Canonical order: u_pref is the preferred side unless the pair was
// deliberately corrupted, in which case the sides are swapped.
struct PreferencePair {
  double x0 = 0.0;
  Eigen::VectorXd u_pref;
  Eigen::VectorXd u_other;
  bool corrupted = false;  // bookkeeping only; the learner never reads it
};

struct DatasetProvenance {
  std::string pool_hash;
  int n_pairs = 0;
  double flip_fraction = 0.0;
  std::uint64_t seed = 0;
  std::vector<int> pairs_per_context;
  std::string source = "oracle";
};

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  DatasetProvenance provenance;

  Eigen::Index dim() const { return pairs.empty() ? 0 : pairs.front().u_pref.size(); }
  std::vector<double> contexts() const;
};

std::vector<ScoredSolution> score_pool(const SolutionPool& pool, const Instance& inst,
                                       const OracleConfig& oracle = {});

std::string hash_pool(const SolutionPool& pool);

// Number of same-context pairs with distinct composite scores.
std::size_t count_distinct_pairs(const std::vector<ScoredSolution>& scored);

PreferenceDataset build_pairs(const std::vector<ScoredSolution>& scored, const Instance& inst,
                              int n_pairs, double flip_fraction, std::uint64_t seed);

// JSON lines: a provenance header, then {x0, u_pref, u_other, corrupted}.
void save_dataset(const PreferenceDataset& ds, const std::filesystem::path& path);
PreferenceDataset load_dataset(const std::filesystem::path& path);

}  // namespace fairtwin
