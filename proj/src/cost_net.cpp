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


#include "fairtwin/cost_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "fairtwin/errors.hpp"
#include "fairtwin/hash.hpp"
#include "fairtwin/rng.hpp"
#include "json.hpp"

namespace fairtwin {

using nlohmann::json;

namespace {

struct Activations {
  std::vector<Eigen::VectorXd> inputs;  // input to each layer
  std::vector<Eigen::VectorXd> pre;     // hidden pre-activations
  Eigen::VectorXd out;
};

Activations run(const std::vector<CostNet::Layer>& layers, double x0) {
  Activations act;
  Eigen::VectorXd a = Eigen::VectorXd::Constant(1, x0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    act.inputs.push_back(a);
    Eigen::VectorXd z = layers[l].W * a + layers[l].b;
    if (l + 1 < layers.size()) {
      act.pre.push_back(z);
      a = z.cwiseMax(0.0);
    } else {
      act.out = std::move(z);
    }
  }
  return act;
}

// Accumulates ∂/∂θ of gᵀ·output into grads (layer-ordered like the net).
void backprop(const std::vector<CostNet::Layer>& layers, const Activations& act,
              Eigen::VectorXd g, std::vector<CostNet::Layer>& grads) {
  for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l) {
    if (l + 1 < static_cast<int>(layers.size())) {
      g = g.cwiseProduct((act.pre[l].array() > 0.0).cast<double>().matrix());
    }
    grads[l].W.noalias() += g * act.inputs[l].transpose();
    grads[l].b += g;
    if (l > 0) g = layers[l].W.transpose() * g;
  }
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> split_output(const Eigen::VectorXd& o, int r) {
  Eigen::MatrixXd S(r, r);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) S(i, j) = o[i * r + j];
  }
  return {S, o.tail(r)};
}

std::vector<CostNet::Layer> zero_like(const std::vector<CostNet::Layer>& layers) {
  std::vector<CostNet::Layer> out;
  for (const auto& L : layers) {
    out.push_back({Eigen::MatrixXd::Zero(L.W.rows(), L.W.cols()), Eigen::VectorXd::Zero(L.b.size())});
  }
  return out;
}

Eigen::VectorXd flatten_layers(const std::vector<CostNet::Layer>& layers, Eigen::Index n) {
  Eigen::VectorXd theta(n);
  Eigen::Index k = 0;
  for (const auto& L : layers) {
    theta.segment(k, L.W.size()) = Eigen::Map<const Eigen::VectorXd>(L.W.data(), L.W.size());
    k += L.W.size();
    theta.segment(k, L.b.size()) = L.b;
    k += L.b.size();
  }
  return theta;
}

double mean_hinge(const CostNet& net, const std::vector<LatentPair>& pairs,
                  const std::vector<int>& idx, double delta) {
  if (idx.empty()) return 0.0;
  std::vector<LatentPair> batch;
  batch.reserve(idx.size());
  for (int i : idx) batch.push_back(pairs[i]);
  return hinge_loss(net, batch, delta) / static_cast<double>(idx.size());
}

json layer_json(const CostNet::Layer& L) {
  std::vector<double> w;
  for (Eigen::Index i = 0; i < L.W.rows(); ++i) {
    for (Eigen::Index j = 0; j < L.W.cols(); ++j) w.push_back(L.W(i, j));
  }
  return {{"rows", L.W.rows()},
          {"cols", L.W.cols()},
          {"W_row_major", w},
          {"b", std::vector<double>(L.b.data(), L.b.data() + L.b.size())}};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(delta > 0.0)) throw ValidationError("train config: delta must be positive");
  if (!(l2 >= 0.0)) throw ValidationError("train config: l2 must be nonnegative");
  if (!(learning_rate > 0.0)) throw ValidationError("train config: learning_rate must be positive");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ValidationError("train config: val_fraction must lie in (0, 1)");
  }
  if (batch_size < 1 || max_epochs < 1 || patience < 1 || plateau < 1) {
    throw ValidationError("train config: batch_size, max_epochs, patience, plateau must be >= 1");
  }
  if (hidden_units < 1 || hidden_layers < 1) {
    throw ValidationError("train config: network needs at least one hidden unit and layer");
  }
}

CostNet::CostNet(int latent_dim, int hidden_units, int hidden_layers) : r_(latent_dim) {
  if (latent_dim < 1) throw ValidationError("CostNet: latent dimension must be positive");
  int in = 1;
  for (int l = 0; l < hidden_layers; ++l) {
    layers_.push_back({Eigen::MatrixXd::Zero(hidden_units, in), Eigen::VectorXd::Zero(hidden_units)});
    in = hidden_units;
  }
  layers_.push_back({Eigen::MatrixXd::Zero(output_dim(), in), Eigen::VectorXd::Zero(output_dim())});
}

CostNet CostNet::initialized(int latent_dim, const TrainConfig& cfg) {
  CostNet net(latent_dim, cfg.hidden_units, cfg.hidden_layers);
  Rng rng = Rng::substream(cfg.seed, 0x1217);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    auto& L = net.layers_[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(L.W.cols()));
    const double scale = l + 1 == net.layers_.size() ? cfg.head_scale : 1.0;
    for (Eigen::Index j = 0; j < L.W.cols(); ++j) {
      for (Eigen::Index i = 0; i < L.W.rows(); ++i) L.W(i, j) = scale * rng.uniform(-limit, limit);
    }
  }
  return net;
}

Eigen::VectorXd CostNet::output(double x0) const { return run(layers_, x0).out; }

std::pair<Eigen::MatrixXd, Eigen::VectorXd> CostNet::forward(double x0) const {
  return split_output(output(x0), r_);
}

Eigen::MatrixXd CostNet::hessian(double x0) const {
  const auto [S, q] = forward(x0);
  return S * S.transpose();
}

Eigen::Index CostNet::num_parameters() const {
  Eigen::Index n = 0;
  for (const auto& L : layers_) n += L.W.size() + L.b.size();
  return n;
}

Eigen::VectorXd CostNet::parameters() const { return flatten_layers(layers_, num_parameters()); }

void CostNet::set_parameters(const Eigen::VectorXd& theta) {
  if (theta.size() != num_parameters()) throw ValidationError("CostNet: parameter count mismatch");
  Eigen::Index k = 0;
  for (auto& L : layers_) {
    L.W = Eigen::Map<const Eigen::MatrixXd>(theta.data() + k, L.W.rows(), L.W.cols());
    k += L.W.size();
    L.b = theta.segment(k, L.b.size());
    k += L.b.size();
  }
}

double CostNet::min_preactivation(double x0) const {
  const Activations act = run(layers_, x0);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& p : act.pre) m = std::min(m, p.cwiseAbs().minCoeff());
  return m;
}

std::string CostNet::hash() const {
  Fnv1a h;
  h.vec(parameters());
  h.str(latent_hash);
  return h.hex();
}

std::vector<LatentPair> project_pairs(const PreferenceDataset& ds, const LatentMap& map) {
  std::vector<LatentPair> out;
  out.reserve(ds.pairs.size());
  for (const auto& p : ds.pairs) out.push_back({p.x0, project(p.u_pref, map), project(p.u_other, map)});
  return out;
}

double latent_cost(const Eigen::MatrixXd& S, const Eigen::VectorXd& qz, const Eigen::VectorXd& z) {
  if (z.size() != S.rows()) throw ValidationError("latent cost: dimension mismatch");
  const Eigen::VectorXd t = S.transpose() * z;
  return 0.5 * t.squaredNorm() + qz.dot(z);
}

double eval_latent_cost(const CostNet& net, const Eigen::VectorXd& z, double x0) {
  if (z.size() != net.latent_dim()) throw ValidationError("eval_latent_cost: dimension mismatch");
  const auto [S, q] = net.forward(x0);
  return latent_cost(S, q, z);
}

double hinge_loss(const CostNet& net, const std::vector<LatentPair>& batch, double delta) {
  std::map<double, std::vector<const LatentPair*>> groups;
  for (const auto& p : batch) groups[p.x0].push_back(&p);
  double loss = 0.0;
  for (const auto& [x0, ps] : groups) {
    const auto [S, q] = net.forward(x0);
    for (const LatentPair* p : ps) {
      loss += std::max(0.0, latent_cost(S, q, p->z_pref) - latent_cost(S, q, p->z_other) + delta);
    }
  }
  return loss;
}

double objective_and_gradient(const CostNet& net, const std::vector<LatentPair>& batch,
                              double delta, double l2, Eigen::VectorXd* gradient) {
  const int r = net.latent_dim();
  std::map<double, std::vector<const LatentPair*>> groups;
  for (const auto& p : batch) groups[p.x0].push_back(&p);
  const double inv_n = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());

  std::vector<CostNet::Layer> grads;
  if (gradient) grads = zero_like(net.layers());
  double loss = 0.0;
  for (const auto& [x0, ps] : groups) {
    const Activations act = run(net.layers(), x0);
    const auto [S, q] = split_output(act.out, r);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(r, r);
    Eigen::VectorXd gq = Eigen::VectorXd::Zero(r);
    bool active = false;
    for (const LatentPair* p : ps) {
      const double m = latent_cost(S, q, p->z_pref) - latent_cost(S, q, p->z_other) + delta;
      if (m <= 0.0) continue;
      loss += m;
      active = true;
      if (gradient) {
        M.selfadjointView<Eigen::Lower>().rankUpdate(p->z_pref, 1.0);
        M.selfadjointView<Eigen::Lower>().rankUpdate(p->z_other, -1.0);
        gq += p->z_pref - p->z_other;
      }
    }
    if (!gradient || !active) continue;
    // ∂f/∂S = z zᵀ S, so the hinge gradient is M S.
    const Eigen::MatrixXd gS = M.selfadjointView<Eigen::Lower>() * S;
    Eigen::VectorXd g(net.output_dim());
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) g[i * r + j] = gS(i, j);
    }
    g.tail(r) = gq;
    backprop(net.layers(), act, g * inv_n, grads);
  }
  loss *= inv_n;
  const Eigen::VectorXd theta = net.parameters();
  loss += l2 * theta.squaredNorm();
  if (gradient) *gradient = flatten_layers(grads, theta.size()) + 2.0 * l2 * theta;
  return loss;
}

double gradient_check(const CostNet& net, const LatentPair& pair, double delta, double l2,
                      double h) {
  const std::vector<LatentPair> batch{pair};
  Eigen::VectorXd analytic;
  objective_and_gradient(net, batch, delta, l2, &analytic);
  CostNet probe = net;
  const Eigen::VectorXd theta = net.parameters();
  Eigen::VectorXd numeric(theta.size());
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd t = theta;
    t[k] = theta[k] + h;
    probe.set_parameters(t);
    const double up = objective_and_gradient(probe, batch, delta, l2, nullptr);
    t[k] = theta[k] - h;
    probe.set_parameters(t);
    const double down = objective_and_gradient(probe, batch, delta, l2, nullptr);
    numeric[k] = (up - down) / (2.0 * h);
  }
  const double floor = 1e-6 * (1.0 + analytic.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric[k]), floor});
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]) / denom);
  }
  return worst;
}

std::pair<CostNet, TrainReport> train(const PreferenceDataset& ds, const LatentMap& map,
                                      const TrainConfig& cfg) {
  cfg.validate();
  if (ds.pairs.empty()) throw ValidationError("train: dataset is empty");
  if (ds.dim() != map.d()) {
    throw ValidationError("train: dataset dimension " + std::to_string(ds.dim()) +
                          " does not match latent map dimension " + std::to_string(map.d()));
  }
  const std::vector<LatentPair> pairs = project_pairs(ds, map);

  // Validation split stratified by context.
  std::map<double, std::vector<int>> by_context;
  for (int i = 0; i < static_cast<int>(pairs.size()); ++i) by_context[pairs[i].x0].push_back(i);
  std::vector<int> train_idx, val_idx;
  std::uint64_t group = 0;
  for (auto& [x0, idx] : by_context) {
    Rng rng = Rng::substream(cfg.seed, 0x5e1, group++);
    rng.shuffle(idx);
    const auto n_val = static_cast<std::size_t>(std::lround(cfg.val_fraction * idx.size()));
    const std::size_t keep = std::min(n_val, idx.size() > 1 ? idx.size() - 1 : 0);
    val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + keep);
    train_idx.insert(train_idx.end(), idx.begin() + keep, idx.end());
  }

  CostNet net = CostNet::initialized(map.r(), cfg);
  net.latent_hash = map.hash();
  CostNet best = net;

  const Eigen::Index n_params = net.num_parameters();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n_params), v = Eigen::VectorXd::Zero(n_params);
  double lr = cfg.learning_rate;
  long step = 0;

  TrainReport report;
  report.train_pairs = static_cast<int>(train_idx.size());
  report.val_pairs = static_cast<int>(val_idx.size());
  const bool use_val = !val_idx.empty();
  double best_monitor = std::numeric_limits<double>::infinity();
  int since_best = 0, since_lr = 0;

  Rng order_rng = Rng::substream(cfg.seed, 0x0bd);
  std::vector<int> order = train_idx;
  std::vector<LatentPair> batch;
  Eigen::VectorXd grad;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(pairs[order[i]]);
      const double loss = objective_and_gradient(net, batch, cfg.delta, cfg.l2, &grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw SolverError("train: loss diverged at epoch " + std::to_string(epoch));
      }
      ++step;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      const Eigen::VectorXd update =
          (m / c1).array() / ((v / c2).cwiseSqrt().array() + cfg.epsilon);
      net.set_parameters(net.parameters() - lr * update);
    }
    const double train_loss = mean_hinge(net, pairs, train_idx, cfg.delta);
    const double val_loss = use_val ? mean_hinge(net, pairs, val_idx, cfg.delta) : train_loss;
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw SolverError("train: loss diverged at epoch " + std::to_string(epoch));
    }
    report.train_curve.push_back(train_loss);
    report.val_curve.push_back(val_loss);
    report.epochs = epoch;
    if (val_loss < best_monitor) {
      best_monitor = val_loss;
      best = net;
      report.best_epoch = epoch;
      since_best = 0;
      since_lr = 0;
    } else {
      ++since_best;
      if (++since_lr >= cfg.plateau) {
        lr = std::max(cfg.min_learning_rate, lr * cfg.lr_decay);
        since_lr = 0;
      }
    }
    if (since_best >= cfg.patience || (best_monitor == 0.0 && train_loss == 0.0)) break;
  }

  report.best_val_loss = best_monitor;
  report.final_val_loss = report.val_curve.back();
  report.final_train_loss = mean_hinge(best, pairs, train_idx, cfg.delta);
  report.final_learning_rate = lr;
  int ordered = 0;
  for (int i : train_idx) {
    const auto [S, q] = best.forward(pairs[i].x0);
    ordered += latent_cost(S, q, pairs[i].z_pref) < latent_cost(S, q, pairs[i].z_other);
  }
  report.train_ranking_accuracy =
      train_idx.empty() ? 0.0 : static_cast<double>(ordered) / static_cast<double>(train_idx.size());
  return {best, report};
}

void save_model(const CostNet& net, const TrainConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  json layers = json::array();
  for (const auto& L : net.layers()) layers.push_back(layer_json(L));
  json j = {{"format", "fairtwin-cost-net"},
            {"version", 1},
            {"architecture",
             {{"input", 1},
              {"hidden_units", cfg.hidden_units},
              {"hidden_layers", cfg.hidden_layers},
              {"activation", "relu"},
              {"latent_dim", net.latent_dim()},
              {"output", net.output_dim()}}},
            {"latent_hash", net.latent_hash},
            {"train_config",
             {{"delta", cfg.delta},
              {"l2", cfg.l2},
              {"learning_rate", cfg.learning_rate},
              {"lr_decay", cfg.lr_decay},
              {"plateau", cfg.plateau},
              {"batch_size", cfg.batch_size},
              {"max_epochs", cfg.max_epochs},
              {"patience", cfg.patience},
              {"val_fraction", cfg.val_fraction},
              {"head_scale", cfg.head_scale},
              {"seed", cfg.seed}}},
            {"layers", layers},
            {"hash", net.hash()}};
  out << j.dump() << "\n";
}

CostNet load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "fairtwin-cost-net") {
      throw ParseError(path.string() + ": not a cost-net model file");
    }
    const auto& arch = j.at("architecture");
    CostNet net(arch.at("latent_dim").get<int>(), arch.at("hidden_units").get<int>(),
                arch.at("hidden_layers").get<int>());
    net.latent_hash = j.at("latent_hash").get<std::string>();
    const auto& layers = j.at("layers");
    if (layers.size() != net.layers().size()) throw ValidationError(path.string() + ": layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& L = net.layers()[l];
      const auto w = layers[l].at("W_row_major").get<std::vector<double>>();
      const auto b = layers[l].at("b").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != L.W.size() ||
          static_cast<Eigen::Index>(b.size()) != L.b.size()) {
        throw ValidationError(path.string() + ": layer " + std::to_string(l) + " has wrong shape");
      }
      for (Eigen::Index r = 0; r < L.W.rows(); ++r) {
        for (Eigen::Index c = 0; c < L.W.cols(); ++c) L.W(r, c) = w[r * L.W.cols() + c];
      }
      L.b = Eigen::Map<const Eigen::VectorXd>(b.data(), L.b.size());
    }
    if (!net.parameters().allFinite()) throw ValidationError(path.string() + ": non-finite parameters");
    return net;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

CostTable export_costs(const CostNet& net, const LatentMap& map, const std::vector<double>& grid,
                       const ExportOptions& options) {
  if (!net.latent_hash.empty() && net.latent_hash != map.hash()) {
    throw ValidationError("export_costs: model was trained against a different latent map");
  }
  if (net.latent_dim() != map.r()) throw ValidationError("export_costs: latent dimension mismatch");
  std::vector<double> xs = grid;
  std::sort(xs.begin(), xs.end());
  CostTable table;
  table.model_hash = net.hash();
  table.options = options;
  for (double x0 : xs) {
    if (!(x0 >= 0.0 && x0 <= 1.0)) throw ValidationError("export_costs: context outside [0, 1]");
    const auto [S, qz] = net.forward(x0);
    const Eigen::MatrixXd Hz = S * S.transpose();
    const double ridge = std::max(options.ridge_floor,
                                  options.ridge_relative * Hz.trace() / static_cast<double>(map.d()));
    table.entries.push_back(reconstruct_cost(Hz, qz, map, ridge, options.anchor, x0));
  }
  return table;
}

void save_cost_table(const CostTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& c : table.entries) {
    std::vector<double> h;
    h.reserve(c.H.size());
    for (Eigen::Index i = 0; i < c.H.rows(); ++i) {
      for (Eigen::Index j = 0; j < c.H.cols(); ++j) h.push_back(c.H(i, j));
    }
    json line = {{"x0", c.context}, {"H", h}, {"q", std::vector<double>(c.q.data(), c.q.data() + c.q.size())}};
    out << line.dump() << "\n";
  }
}

CostTable load_cost_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cost table " + path.string());
  CostTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }
    QuadCost c;
    try {
      c.context = j.at("x0").get<double>();
      const auto h = j.at("H").get<std::vector<double>>();
      const auto q = j.at("q").get<std::vector<double>>();
      const auto d = static_cast<Eigen::Index>(q.size());
      if (static_cast<Eigen::Index>(h.size()) != d * d) {
        throw ValidationError(where + ": H has " + std::to_string(h.size()) + " entries, expected " +
                              std::to_string(d * d));
      }
      c.H = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          h.data(), d, d);
      c.q = Eigen::Map<const Eigen::VectorXd>(q.data(), d);
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    validate_quad_cost(c, c.q.size());
    table.entries.push_back(std::move(c));
  }
  std::sort(table.entries.begin(), table.entries.end(),
            [](const QuadCost& a, const QuadCost& b) { return a.context < b.context; });
  return table;
}

}  // namespace fairtwin
