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
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fairtwin/dataset.hpp"
#include "fairtwin/latent.hpp"
#include "fairtwin/opt_engine.hpp"

namespace fairtwin {

struct TrainConfig {
  double delta = 1.0;  // ranking margin
  double l2 = 1e-4;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr_decay = 0.5;  // applied after `plateau` stagnant epochs
  int plateau = 20;
  double min_learning_rate = 1e-7;
  int batch_size = 64;
  int max_epochs = 2000;
  int patience = 60;
  double val_fraction = 0.1;
  int hidden_units = 20;
  int hidden_layers = 3;
  double head_scale = 1e-2;
  std::uint64_t seed = 0;

  void validate() const;
};

// MLP x0 → [vec(S) row-major | q_z] with ReLU hidden layers.
class CostNet {
 public:
  struct Layer {
    Eigen::MatrixXd W;  // out × in
    Eigen::VectorXd b;
  };

  CostNet() = default;
  // Zero parameters.
  CostNet(int latent_dim, int hidden_units, int hidden_layers);
  // Fan-in-scaled uniform weights, zero biases, output head shrunk by
  // head_scale.
  static CostNet initialized(int latent_dim, const TrainConfig& cfg);

  int latent_dim() const { return r_; }
  int output_dim() const { return r_ * r_ + r_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  Eigen::VectorXd output(double x0) const;
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> forward(double x0) const;  // (S, q_z)
  Eigen::MatrixXd hessian(double x0) const;                              // S Sᵀ

  Eigen::Index num_parameters() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& theta);
  // Smallest |pre-activation| over all hidden units at x0; the network is
  // differentiable at x0 when this is positive.
  double min_preactivation(double x0) const;

  std::string hash() const;

  std::string latent_hash;

 private:
  int r_ = 0;
  std::vector<Layer> layers_;
};

struct LatentPair {
  double x0 = 0.0;
  Eigen::VectorXd z_pref;
  Eigen::VectorXd z_other;
};

std::vector<LatentPair> project_pairs(const PreferenceDataset& ds, const LatentMap& map);

double latent_cost(const Eigen::MatrixXd& S, const Eigen::VectorXd& qz, const Eigen::VectorXd& z);
double eval_latent_cost(const CostNet& net, const Eigen::VectorXd& z, double x0);

// Σ max(0, f(z_pref) − f(z_other) + δ).
double hinge_loss(const CostNet& net, const std::vector<LatentPair>& batch, double delta);

// Mean hinge over the batch plus l2·‖θ‖², and its gradient. The hinge
// subgradient at the kink is taken as 0.
double objective_and_gradient(const CostNet& net, const std::vector<LatentPair>& batch,
                              double delta, double l2, Eigen::VectorXd* gradient);

// Largest relative deviation between the analytic gradient and central
// differences with step h. Entries are compared relative to
// max(|analytic|, |numeric|, 1e-6·(1 + ‖analytic‖∞)).
double gradient_check(const CostNet& net, const LatentPair& pair, double delta, double l2 = 0.0,
                      double h = 1e-5);

struct TrainReport {
  int epochs = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double final_val_loss = 0.0;
  double final_train_loss = 0.0;
  double final_learning_rate = 0.0;
  int train_pairs = 0;
  int val_pairs = 0;
  double train_ranking_accuracy = 0.0;  // share with f(z_pref) < f(z_other)
  std::vector<double> train_curve;
  std::vector<double> val_curve;
};

// Returns the best-validation parameters. Deterministic for a fixed seed.
std::pair<CostNet, TrainReport> train(const PreferenceDataset& ds, const LatentMap& map,
                                      const TrainConfig& cfg);

void save_model(const CostNet& net, const TrainConfig& cfg, const std::filesystem::path& path);
CostNet load_model(const std::filesystem::path& path);

struct ExportOptions {
  double ridge_relative = 1e-6;  // ridge = max(floor, rel·trace(H_z)/d)
  double ridge_floor = 1e-9;
  RidgeAnchor anchor = RidgeAnchor::kOrigin;
};

struct CostTable {
  std::vector<QuadCost> entries;  // ordered by x0
  std::string model_hash;
  ExportOptions options;
};

CostTable export_costs(const CostNet& net, const LatentMap& map, const std::vector<double>& grid,
                       const ExportOptions& options = {});

// JSON lines {x0, H: row-major d², q}.
void save_cost_table(const CostTable& table, const std::filesystem::path& path);
CostTable load_cost_table(const std::filesystem::path& path);

}  // namespace fairtwin
