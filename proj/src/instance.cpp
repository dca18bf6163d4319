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

#include "fairtwin/instance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fairtwin/errors.hpp"
#include "fairtwin/rng.hpp"

namespace fairtwin {

using nlohmann::json;

namespace {

void require_nonnegative(double v, const std::string& what) {
  if (!std::isfinite(v) || v < 0.0) {
    std::ostringstream os;
    os << what << " must be a finite nonnegative number, got " << v;
    throw ValidationError(os.str());
  }
}

const char* kind_name(FacilityKind k) {
  return k == FacilityKind::kExisting ? "existing" : "temporary";
}

}  // namespace

Instance::Instance(std::vector<County> counties, std::vector<Facility> facilities,
                   Eigen::MatrixXd distance_cost)
    : counties_(std::move(counties)),
      facilities_(std::move(facilities)),
      distance_cost_(std::move(distance_cost)) {
  if (counties_.empty()) throw ValidationError("counties: at least one county required");
  if (facilities_.empty()) throw ValidationError("facilities: at least one facility required");

  std::set<std::string> seen;
  for (const auto& c : counties_) {
    if (!seen.insert(c.id).second) throw ValidationError("counties: duplicate id '" + c.id + "'");
    require_nonnegative(c.demand, "counties[" + c.id + "].demand");
  }
  seen.clear();
  slot_.assign(facilities_.size(), -1);
  for (std::size_t f = 0; f < facilities_.size(); ++f) {
    const auto& fac = facilities_[f];
    if (!seen.insert(fac.id).second) {
      throw ValidationError("facilities: duplicate id '" + fac.id + "'");
    }
    require_nonnegative(fac.capacity, "facilities[" + fac.id + "].capacity");
    require_nonnegative(fac.fixed_cost, "facilities[" + fac.id + "].fixed_cost");
    if (fac.kind == FacilityKind::kTemporary) {
      slot_[f] = static_cast<int>(temporary_.size());
      temporary_.push_back(static_cast<int>(f));
    } else {
      existing_.push_back(static_cast<int>(f));
    }
  }
  if (distance_cost_.rows() != num_counties() || distance_cost_.cols() != num_facilities()) {
    std::ostringstream os;
    os << "distance_cost: expected " << num_counties() << "x" << num_facilities()
       << " matrix, got " << distance_cost_.rows() << "x" << distance_cost_.cols();
    throw ValidationError(os.str());
  }
  for (int c = 0; c < num_counties(); ++c) {
    for (int f = 0; f < num_facilities(); ++f) {
      require_nonnegative(distance_cost_(c, f), "distance_cost[" + std::to_string(c) + "][" +
                                                    std::to_string(f) + "]");
    }
  }
}

Eigen::VectorXd Instance::demand() const {
  Eigen::VectorXd d(num_counties());
  for (int c = 0; c < num_counties(); ++c) d[c] = counties_[c].demand;
  return d;
}

Eigen::VectorXd Instance::capacity() const {
  Eigen::VectorXd cap(num_facilities());
  for (int f = 0; f < num_facilities(); ++f) cap[f] = facilities_[f].capacity;
  return cap;
}

double Instance::total_demand() const { return demand().sum(); }

double Instance::max_demand() const { return demand().maxCoeff(); }

double Instance::feasibility_tolerance() const {
  return 1e-6 * std::max(1.0, max_demand());
}

Instance generate_instance(std::uint64_t seed, int n_counties, int n_existing, int n_temporary,
                           const GeneratorParams& p) {
  if (n_counties < 1 || n_existing < 0 || n_temporary < 0 || n_existing + n_temporary < 1) {
    throw ValidationError("generate_instance: need at least one county and one facility");
  }
  Rng rng(seed);
  const int n_fac = n_existing + n_temporary;

  std::vector<County> counties(n_counties);
  double total = 0.0;
  for (int c = 0; c < n_counties; ++c) {
    counties[c].id = "c" + std::to_string(c + 1);
    counties[c].demand = std::round(rng.uniform(p.demand_lo, p.demand_hi));
    total += counties[c].demand;
  }

  std::vector<Facility> facilities(n_fac);
  for (int f = 0; f < n_fac; ++f) {
    const bool existing = f < n_existing;
    facilities[f].kind = existing ? FacilityKind::kExisting : FacilityKind::kTemporary;
    facilities[f].id = existing ? "e" + std::to_string(f + 1)
                                : "t" + std::to_string(f - n_existing + 1);
  }
  // Redraw capacities until the fully opened network can serve everyone.
  const double mean_cap = total / n_fac;
  double cap_total = 0.0;
  for (int attempt = 0; attempt < 10000 && cap_total < total; ++attempt) {
    cap_total = 0.0;
    for (auto& fac : facilities) {
      fac.capacity = rng.uniform(p.capacity_lo, p.capacity_hi) * mean_cap;
      cap_total += fac.capacity;
    }
  }
  if (cap_total < total) {
    for (auto& fac : facilities) fac.capacity *= total / cap_total;
  }
  for (auto& fac : facilities) {
    if (fac.kind == FacilityKind::kTemporary) {
      fac.fixed_cost = rng.uniform(p.fixed_cost_lo, p.fixed_cost_hi);
    }
  }

  Eigen::MatrixXd county_xy(n_counties, 2), facility_xy(n_fac, 2);
  for (int c = 0; c < n_counties; ++c) {
    county_xy(c, 0) = rng.uniform(0.0, p.area);
    county_xy(c, 1) = rng.uniform(0.0, p.area);
  }
  for (int f = 0; f < n_fac; ++f) {
    facility_xy(f, 0) = rng.uniform(0.0, p.area);
    facility_xy(f, 1) = rng.uniform(0.0, p.area);
  }
  Eigen::MatrixXd dist(n_counties, n_fac);
  for (int c = 0; c < n_counties; ++c) {
    for (int f = 0; f < n_fac; ++f) {
      dist(c, f) = p.cost_per_distance * (county_xy.row(c) - facility_xy.row(f)).norm();
    }
  }
  return Instance(std::move(counties), std::move(facilities), std::move(dist));
}

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) throw ParseError(where + ": unknown key '" + it.key() + "'");
  }
}

double get_number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ParseError(where + ": missing key '" + key + "'");
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ParseError(where + "." + key + ": expected a number");
  return v.get<double>();
}

std::string get_id(const json& obj, const std::string& where) {
  if (!obj.contains("id")) throw ParseError(where + ": missing key 'id'");
  const auto& v = obj.at("id");
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw ParseError(where + ".id: expected a string or integer");
}

}  // namespace

Instance parse_instance(const json& doc) {
  if (!doc.is_object()) throw ParseError("instance: expected a JSON object");
  reject_unknown_keys(doc, {"counties", "facilities", "distance_cost"}, "instance");
  for (const char* key : {"counties", "facilities", "distance_cost"}) {
    if (!doc.contains(key) || !doc.at(key).is_array()) {
      throw ParseError(std::string("instance: '") + key + "' must be an array");
    }
  }

  std::vector<County> counties;
  for (std::size_t i = 0; i < doc["counties"].size(); ++i) {
    const auto& c = doc["counties"][i];
    const std::string where = "counties[" + std::to_string(i) + "]";
    if (!c.is_object()) throw ParseError(where + ": expected an object");
    reject_unknown_keys(c, {"id", "demand"}, where);
    counties.push_back({get_id(c, where), get_number(c, "demand", where)});
  }

  std::vector<Facility> facilities;
  for (std::size_t i = 0; i < doc["facilities"].size(); ++i) {
    const auto& f = doc["facilities"][i];
    const std::string where = "facilities[" + std::to_string(i) + "]";
    if (!f.is_object()) throw ParseError(where + ": expected an object");
    reject_unknown_keys(f, {"id", "kind", "capacity", "fixed_cost"}, where);
    Facility fac;
    fac.id = get_id(f, where);
    if (!f.contains("kind") || !f["kind"].is_string()) {
      throw ParseError(where + ": 'kind' must be \"existing\" or \"temporary\"");
    }
    const auto kind = f["kind"].get<std::string>();
    if (kind == "existing") {
      fac.kind = FacilityKind::kExisting;
      if (f.contains("fixed_cost")) {
        throw ValidationError("facilities[" + fac.id + "].fixed_cost: only temporary facilities carry a fixed cost");
      }
    } else if (kind == "temporary") {
      fac.kind = FacilityKind::kTemporary;
      fac.fixed_cost = get_number(f, "fixed_cost", where);
    } else {
      throw ParseError(where + ".kind: unknown facility kind '" + kind + "'");
    }
    fac.capacity = get_number(f, "capacity", where);
    facilities.push_back(std::move(fac));
  }

  const auto& rows = doc["distance_cost"];
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  Eigen::Index n_cols = n_rows > 0 && rows[0].is_array() ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Eigen::MatrixXd dist(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto& row = rows[r];
    if (!row.is_array()) throw ParseError("distance_cost[" + std::to_string(r) + "]: expected an array");
    if (static_cast<Eigen::Index>(row.size()) != n_cols) {
      throw ValidationError("distance_cost: ragged rows (row " + std::to_string(r) + " has " +
                            std::to_string(row.size()) + " entries, expected " +
                            std::to_string(n_cols) + ")");
    }
    for (Eigen::Index c = 0; c < n_cols; ++c) {
      if (!row[c].is_number()) {
        throw ParseError("distance_cost[" + std::to_string(r) + "][" + std::to_string(c) +
                         "]: expected a number");
      }
      dist(r, c) = row[c].get<double>();
    }
  }
  return Instance(std::move(counties), std::move(facilities), std::move(dist));
}

Instance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open instance file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("instance file " + path.string() + ": " + e.what());
  }
  return parse_instance(doc);
}

json instance_to_json(const Instance& inst) {
  json doc;
  doc["counties"] = json::array();
  for (const auto& c : inst.counties()) doc["counties"].push_back({{"id", c.id}, {"demand", c.demand}});
  doc["facilities"] = json::array();
  for (const auto& f : inst.facilities()) {
    json j = {{"id", f.id}, {"kind", kind_name(f.kind)}, {"capacity", f.capacity}};
    if (f.kind == FacilityKind::kTemporary) j["fixed_cost"] = f.fixed_cost;
    doc["facilities"].push_back(std::move(j));
  }
  doc["distance_cost"] = json::array();
  const auto& d = inst.distance_cost();
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < d.cols(); ++c) row.push_back(d(r, c));
    doc["distance_cost"].push_back(std::move(row));
  }
  return doc;
}

void save_instance(const Instance& inst, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << instance_to_json(inst).dump(2) << "\n";
}

DecisionVector flatten(const Allocation& a, const Instance& inst) {
  const int nc = inst.num_counties(), nf = inst.num_facilities();
  if (a.x.rows() != nc || a.x.cols() != nf || a.y.size() != inst.num_temporary()) {
    throw ValidationError("flatten: allocation dimensions do not match the instance");
  }
  DecisionVector u{Eigen::VectorXd(inst.decision_dim())};
  for (int c = 0; c < nc; ++c) {
    for (int f = 0; f < nf; ++f) u.values[inst.x_index(c, f)] = a.x(c, f);
  }
  for (int t = 0; t < inst.num_temporary(); ++t) u.values[inst.y_index(t)] = a.y[t];
  return u;
}

Allocation unflatten(const DecisionVector& u, const Instance& inst, double integrality_tol) {
  if (u.size() != inst.decision_dim()) {
    throw ValidationError("unflatten: expected length " + std::to_string(inst.decision_dim()) +
                          ", got " + std::to_string(u.size()));
  }
  const int nc = inst.num_counties(), nf = inst.num_facilities();
  Allocation a{Eigen::MatrixXd(nc, nf), Eigen::VectorXd(inst.num_temporary())};
  for (int c = 0; c < nc; ++c) {
    for (int f = 0; f < nf; ++f) a.x(c, f) = u[inst.x_index(c, f)];
  }
  for (int t = 0; t < inst.num_temporary(); ++t) {
    const double v = u[inst.y_index(t)];
    if (std::abs(v) <= integrality_tol) {
      a.y[t] = 0.0;
    } else if (std::abs(v - 1.0) <= integrality_tol) {
      a.y[t] = 1.0;
    } else {
      throw ValidationError("unflatten: activation of facility '" +
                            inst.facilities()[inst.temporary()[t]].id + "' is " +
                            std::to_string(v) + ", not binary");
    }
  }
  return a;
}

Eigen::VectorXd nominal_linear_cost(const Instance& inst) {
  Eigen::VectorXd c(inst.decision_dim());
  for (int i = 0; i < inst.num_counties(); ++i) {
    for (int f = 0; f < inst.num_facilities(); ++f) c[inst.x_index(i, f)] = inst.distance_cost()(i, f);
  }
  for (int t = 0; t < inst.num_temporary(); ++t) {
    c[inst.y_index(t)] = inst.facilities()[inst.temporary()[t]].fixed_cost;
  }
  return c;
}

double nominal_objective(const Allocation& a, const Instance& inst) {
  double j = inst.distance_cost().cwiseProduct(a.x).sum();
  for (int t = 0; t < inst.num_temporary(); ++t) {
    j += inst.facilities()[inst.temporary()[t]].fixed_cost * a.y[t];
  }
  return j;
}

Eigen::VectorXd facility_loads(const Allocation& a) { return a.x.colwise().sum().transpose(); }

FeasibilityReport check_feasibility(const Allocation& a, const Instance& inst) {
  FeasibilityReport r;
  const Eigen::VectorXd rows = a.x.rowwise().sum();
  r.max_demand_violation = (rows - inst.demand()).cwiseAbs().maxCoeff();
  const Eigen::VectorXd loads = facility_loads(a);
  for (int f = 0; f < inst.num_facilities(); ++f) {
    const int slot = inst.temporary_slot(f);
    const double open = slot < 0 ? 1.0 : a.y[slot];
    r.max_capacity_violation =
        std::max(r.max_capacity_violation, loads[f] - inst.facilities()[f].capacity * open);
  }
  r.min_assignment = std::min(0.0, a.x.minCoeff());
  for (Eigen::Index t = 0; t < a.y.size(); ++t) {
    r.max_integrality_violation =
        std::max(r.max_integrality_violation, std::min(std::abs(a.y[t]), std::abs(a.y[t] - 1.0)));
  }
  return r;
}

bool is_feasible(const Allocation& a, const Instance& inst) {
  if (a.x.rows() != inst.num_counties() || a.x.cols() != inst.num_facilities() ||
      a.y.size() != inst.num_temporary()) {
    return false;
  }
  return check_feasibility(a, inst).ok(inst.feasibility_tolerance());
}

}  // namespace fairtwin
