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

#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "fairtwin/opt_engine.hpp"

namespace fairtwin {

inline constexpr double kOrthonormalityTolerance = 1e-10;  // τ_orth

struct LatentMap {
  Eigen::MatrixXd W;  // d × r, orthonormal columns
  Eigen::VectorXd mu;
  Eigen::VectorXd explained_variance;
  int degenerate_directions = 0;  // columns filled by orthonormal completion

  int r() const { return static_cast<int>(W.cols()); }
  Eigen::Index d() const { return W.rows(); }
  std::string hash() const;
};

// Rows of U are decision vectors. Columns of W are sign-fixed so that the
// entry of largest magnitude is positive.
LatentMap fit_pca(const Eigen::MatrixXd& U, int r);

Eigen::VectorXd project(const Eigen::VectorXd& u, const LatentMap& map);
Eigen::VectorXd lift(const Eigen::VectorXd& z, const LatentMap& map);  // μ + W z

enum class RidgeAnchor {
  kOrigin,  // ridge·½‖u‖²
  kMean,    // ridge·½‖u − μ‖², keeps directions unseen by the map at the pool mean
};

// H = W H_z Wᵀ + ridge·I; q = W q_z − (W H_z Wᵀ)μ, minus ridge·μ when
// anchored at the mean.
QuadCost reconstruct_cost(const Eigen::MatrixXd& Hz, const Eigen::VectorXd& qz,
                          const LatentMap& map, double ridge,
                          RidgeAnchor anchor = RidgeAnchor::kOrigin, double context = 0.0);

// ½zᵀH_z z + q_zᵀz − (½uᵀHu + qᵀu) for u = μ + Wz and ridge = 0.
double reconstruction_offset(const Eigen::MatrixXd& Hz, const Eigen::VectorXd& qz,
                             const LatentMap& map);

void save_latent(const LatentMap& map, const std::filesystem::path& path);
LatentMap load_latent(const std::filesystem::path& path);

}  // namespace fairtwin
