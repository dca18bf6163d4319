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


#include "fairtwin/latent.hpp"

#include <cmath>
#include <fstream>

#include "fairtwin/errors.hpp"
#include "fairtwin/hash.hpp"
#include "json.hpp"

namespace fairtwin {

using nlohmann::json;

namespace {

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index arg = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  }
  if (v[arg] < 0.0) v = -v;
}

// Completes columns [from, r) of W with unit vectors orthogonalized
// against everything already present (two Gram-Schmidt passes).
void complete_basis(Eigen::MatrixXd& W, int from) {
  const Eigen::Index d = W.rows();
  int col = from;
  for (Eigen::Index e = 0; e < d && col < W.cols(); ++e) {
    Eigen::VectorXd v = Eigen::VectorXd::Unit(d, e);
    for (int pass = 0; pass < 2; ++pass) {
      for (int k = 0; k < col; ++k) v -= W.col(k).dot(v) * W.col(k);
    }
    const double n = v.norm();
    if (n < 1e-6) continue;
    W.col(col++) = v / n;
  }
}

void check_dims(const LatentMap& map, Eigen::Index n, const char* what) {
  if (n != map.d()) {
    throw ValidationError(std::string(what) + ": dimension " + std::to_string(n) +
                          " does not match latent map dimension " + std::to_string(map.d()));
  }
}

}  // namespace

std::string LatentMap::hash() const {
  Fnv1a h;
  h.mat(W);
  h.vec(mu);
  return h.hex();
}

LatentMap fit_pca(const Eigen::MatrixXd& U, int r) {
  const Eigen::Index n = U.rows(), d = U.cols();
  if (n < 2) throw ValidationError("fit_pca: need at least two samples");
  if (r < 1 || r > std::min(n, d)) {
    throw ValidationError("fit_pca: latent dimension " + std::to_string(r) +
                          " outside [1, min(n, d)] = [1, " + std::to_string(std::min(n, d)) + "]");
  }
  LatentMap map;
  map.mu = U.colwise().mean().transpose();
  const Eigen::MatrixXd centered = U.rowwise() - map.mu.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  map.W = svd.matrixV().leftCols(r);
  map.explained_variance = sv.head(r).array().square() / static_cast<double>(n - 1);

  const double cutoff = (sv.size() ? sv[0] : 0.0) * 1e-12 * static_cast<double>(std::max(n, d));
  int informative = 0;
  while (informative < r && sv[informative] > cutoff && sv[informative] > 0.0) ++informative;
  if (informative < r) {
    map.degenerate_directions = r - informative;
    map.explained_variance.tail(r - informative).setZero();
    complete_basis(map.W, informative);
  }
  for (int k = 0; k < r; ++k) fix_sign(map.W.col(k));
  return map;
}

Eigen::VectorXd project(const Eigen::VectorXd& u, const LatentMap& map) {
  check_dims(map, u.size(), "project");
  return map.W.transpose() * (u - map.mu);
}

Eigen::VectorXd lift(const Eigen::VectorXd& z, const LatentMap& map) {
  if (z.size() != map.r()) throw ValidationError("lift: latent dimension mismatch");
  return map.mu + map.W * z;
}

QuadCost reconstruct_cost(const Eigen::MatrixXd& Hz, const Eigen::VectorXd& qz,
                          const LatentMap& map, double ridge, RidgeAnchor anchor, double context) {
  const int r = map.r();
  if (Hz.rows() != r || Hz.cols() != r || qz.size() != r) {
    throw ValidationError("reconstruct_cost: latent cost does not match map dimension");
  }
  if (!(ridge >= 0.0)) throw ValidationError("reconstruct_cost: ridge must be nonnegative");
  const Eigen::MatrixXd sym = 0.5 * (Hz + Hz.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if ((Hz - Hz.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance * scale ||
      eig.eigenvalues().minCoeff() < -1e-8 * scale) {
    throw ValidationError("reconstruct_cost: latent Hessian is not PSD");
  }
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);

  HessianFactor factor;
  factor.diagonal = Eigen::VectorXd::Constant(map.d(), ridge);
  factor.V = map.W * eig.eigenvectors() * lam.cwiseSqrt().asDiagonal();

  QuadCost cost;
  cost.context = context;
  const Eigen::MatrixXd WHz = map.W * sym;
  cost.H = WHz * map.W.transpose();
  const Eigen::VectorXd Hmu = WHz * (map.W.transpose() * map.mu);
  cost.q = map.W * qz - Hmu;
  if (anchor == RidgeAnchor::kMean) cost.q -= ridge * map.mu;
  cost.H.diagonal().array() += ridge;
  cost.factor = std::move(factor);
  return cost;
}

double reconstruction_offset(const Eigen::MatrixXd& Hz, const Eigen::VectorXd& qz,
                             const LatentMap& map) {
  // With u = μ + Wz: ½uᵀHu + qᵀu = ½zᵀH_z z + q_zᵀz + q_zᵀWᵀμ − ½μᵀHμ.
  const Eigen::VectorXd wmu = map.W.transpose() * map.mu;
  return 0.5 * wmu.dot(Hz * wmu) - qz.dot(wmu);
}

void save_latent(const LatentMap& map, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const int r = map.r();
  const auto d = map.d();
  std::vector<double> w(map.W.data(), map.W.data() + map.W.size());  // column-major
  json j = {{"format", "fairtwin-latent-map"},
            {"version", 1},
            {"d", d},
            {"r", r},
            {"mu", std::vector<double>(map.mu.data(), map.mu.data() + d)},
            {"W_column_major", w},
            {"explained_variance", std::vector<double>(map.explained_variance.data(),
                                                       map.explained_variance.data() + r)},
            {"degenerate_directions", map.degenerate_directions},
            {"hash", map.hash()}};
  out << j.dump() << "\n";
}

LatentMap load_latent(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open latent map " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  LatentMap map;
  try {
    if (j.at("format").get<std::string>() != "fairtwin-latent-map") {
      throw ParseError(path.string() + ": not a latent map file");
    }
    const auto d = j.at("d").get<Eigen::Index>();
    const auto r = j.at("r").get<Eigen::Index>();
    const auto mu = j.at("mu").get<std::vector<double>>();
    const auto w = j.at("W_column_major").get<std::vector<double>>();
    const auto ev = j.at("explained_variance").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(mu.size()) != d || static_cast<Eigen::Index>(w.size()) != d * r ||
        static_cast<Eigen::Index>(ev.size()) != r) {
      throw ValidationError(path.string() + ": latent map arrays do not match d and r");
    }
    map.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), d);
    map.W = Eigen::Map<const Eigen::MatrixXd>(w.data(), d, r);
    map.explained_variance = Eigen::Map<const Eigen::VectorXd>(ev.data(), r);
    map.degenerate_directions = j.value("degenerate_directions", 0);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return map;
}

}  // namespace fairtwin
