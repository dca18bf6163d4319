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


#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairtwin/cost_net.hpp"
#include "fairtwin/dataset.hpp"
#include "fairtwin/elicitation.hpp"
#include "fairtwin/errors.hpp"
#include "fairtwin/evaluation.hpp"
#include "fairtwin/hash.hpp"
#include "fairtwin/instance.hpp"
#include "fairtwin/latent.hpp"
#include "fairtwin/rng.hpp"
#include "fairtwin/scenario.hpp"
#include "httplib.h"
#include "json.hpp"

#ifndef FAIRTWIN_VERSION
#define FAIRTWIN_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fairtwin;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  fs::path out_dir = ".";
  int jobs = 1;
  std::vector<std::string> argv;
};

fs::path resolve_out(const Globals& g, const fs::path& p) {
  const fs::path out = p.is_absolute() ? p : g.out_dir / p;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  return out;
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "";
  std::ostringstream buf;
  buf << in.rdbuf();
  Fnv1a h;
  h.str(buf.str());
  return h.hex();
}

// Writes <output>.provenance.json next to an output file.
void write_provenance(const Globals& g, const CLI::App& sub, const fs::path& output,
                      const std::vector<fs::path>& inputs, const json& extra = json::object()) {
  const std::string resolved = sub.config_to_str(true, false);
  Fnv1a config_hash;
  config_hash.str(resolved);
  json in = json::object();
  for (const auto& p : inputs) in[fs::absolute(p).lexically_normal().string()] = file_hash(p);
  json doc = {{"tool", "fairtwin"},
              {"version", FAIRTWIN_VERSION},
              {"command", sub.get_name()},
              {"argv", g.argv},
              {"seed", g.seed},
              {"resolved_options", resolved},
              {"config_hash", config_hash.hex()},
              {"inputs", in},
              {"output", fs::absolute(output).lexically_normal().string()},
              {"output_hash", file_hash(output)}};
  for (auto& [k, v] : extra.items()) doc[k] = v;
  std::ofstream out(output.string() + ".provenance.json");
  if (!out) throw std::runtime_error("cannot write provenance for " + output.string());
  out << doc.dump(1) << "\n";
}

void add_generator_options(CLI::App* sub, GeneratorParams& p) {
  sub->add_option("--demand-lo", p.demand_lo, "County demand lower bound")->capture_default_str();
  sub->add_option("--demand-hi", p.demand_hi, "County demand upper bound")->capture_default_str();
  sub->add_option("--capacity-lo", p.capacity_lo, "Capacity lower bound, multiples of total demand / |F|")
      ->capture_default_str();
  sub->add_option("--capacity-hi", p.capacity_hi, "Capacity upper bound, multiples of total demand / |F|")
      ->capture_default_str();
  sub->add_option("--area", p.area, "Side of the square holding all sites")->capture_default_str();
  sub->add_option("--cost-per-distance", p.cost_per_distance, "Transport cost per unit per distance")
      ->capture_default_str();
  sub->add_option("--fixed-cost-lo", p.fixed_cost_lo, "Temporary facility fixed cost lower bound")
      ->capture_default_str();
  sub->add_option("--fixed-cost-hi", p.fixed_cost_hi, "Temporary facility fixed cost upper bound")
      ->capture_default_str();
}

void add_train_options(CLI::App* sub, TrainConfig& t) {
  sub->add_option("--delta", t.delta, "Ranking margin")->capture_default_str();
  sub->add_option("--l2", t.l2, "Weight decay")->capture_default_str();
  sub->add_option("--lr", t.learning_rate, "Adam learning rate")->capture_default_str();
  sub->add_option("--lr-decay", t.lr_decay, "Plateau learning-rate factor")->capture_default_str();
  sub->add_option("--plateau", t.plateau, "Stagnant epochs before decay")->capture_default_str();
  sub->add_option("--min-lr", t.min_learning_rate, "Learning-rate floor")->capture_default_str();
  sub->add_option("--batch", t.batch_size, "Minibatch size")->capture_default_str();
  sub->add_option("--epochs", t.max_epochs, "Maximum epochs")->capture_default_str();
  sub->add_option("--patience", t.patience, "Early-stopping patience")->capture_default_str();
  sub->add_option("--val-fraction", t.val_fraction, "Validation share per context")->capture_default_str();
  sub->add_option("--hidden", t.hidden_units, "Hidden units per layer")->capture_default_str();
  sub->add_option("--layers", t.hidden_layers, "Hidden layers")->capture_default_str();
  sub->add_option("--head-scale", t.head_scale, "Output layer init scale")->capture_default_str();
}

void add_export_options(CLI::App* sub, ExportOptions& e, std::string& anchor) {
  sub->add_option("--ridge-relative", e.ridge_relative, "Ridge as a share of trace(H_z)/d")
      ->capture_default_str();
  sub->add_option("--ridge-floor", e.ridge_floor, "Minimum ridge")->capture_default_str();
  sub->add_option("--anchor", anchor, "Ridge anchor: origin or mean")
      ->check(CLI::IsMember({"origin", "mean"}))
      ->capture_default_str();
}

RidgeAnchor parse_anchor(const std::string& s) {
  return s == "mean" ? RidgeAnchor::kMean : RidgeAnchor::kOrigin;
}

Eigen::MatrixXd pool_matrix(const SolutionPool& pool, const Instance& inst) {
  Eigen::MatrixXd U(static_cast<Eigen::Index>(pool.entries.size()), inst.decision_dim());
  for (std::size_t i = 0; i < pool.entries.size(); ++i) {
    U.row(static_cast<Eigen::Index>(i)) = flatten(pool.entries[i].allocation, inst).values.transpose();
  }
  return U;
}

Eigen::MatrixXd dataset_matrix(const PreferenceDataset& ds) {
  std::vector<Eigen::VectorXd> rows;
  std::set<std::vector<double>> seen;
  for (const auto& p : ds.pairs) {
    for (const Eigen::VectorXd* u : {&p.u_pref, &p.u_other}) {
      if (seen.insert(std::vector<double>(u->data(), u->data() + u->size())).second) rows.push_back(*u);
    }
  }
  Eigen::MatrixXd U(static_cast<Eigen::Index>(rows.size()), ds.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) U.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return U;
}

json context_json(const ContextResult& r) {
  return {{"x0", r.x0},
          {"j_nom", r.j_nom},
          {"j_sur", r.j_sur},
          {"r_nom", r.r_nom},
          {"r_sur", r.r_sur},
          {"delta_r", r.delta_r()},
          {"delta_j", r.delta_j()},
          {"composite_nom", r.composite_nom},
          {"composite_sur", r.composite_sur},
          {"win", r.win},
          {"max_violation", r.max_violation},
          {"feasible", r.feasible}};
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run(int argc, char** argv) {
  Globals g;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);

  CLI::App app{"fairtwin: preference-learned quadratic surrogates for facility allocation"};
  app.set_version_flag("--version", FAIRTWIN_VERSION);
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config; keys live under a [<subcommand>] section");
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for relative output paths")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  // gen-instance
  auto* gen = app.add_subcommand("gen-instance", "Generate a synthetic allocation instance");
  int gen_counties = 9, gen_existing = 14, gen_temporary = 9;
  GeneratorParams gen_params;
  fs::path gen_out = "instance.json";
  gen->add_option("--counties", gen_counties, "Number of counties")->capture_default_str();
  gen->add_option("--existing", gen_existing, "Number of existing facilities")->capture_default_str();
  gen->add_option("--temporary", gen_temporary, "Number of temporary facilities")->capture_default_str();
  add_generator_options(gen, gen_params);
  gen->add_option("--out", gen_out, "Output instance file")->capture_default_str();

  // sample
  auto* sample = app.add_subcommand("sample", "Generate the biased solution pool");
  fs::path sample_instance, sample_out = "pool.jsonl";
  int sample_contexts = 26;
  PoolConfig pool_cfg;
  double lambda = 0.0, width = 0.0;
  sample->add_option("--instance", sample_instance, "Instance file")->required()->check(CLI::ExistingFile);
  sample->add_option("--contexts", sample_contexts, "Training grid points")->capture_default_str();
  sample->add_option("--per-context", pool_cfg.per_context, "Solutions per context")->capture_default_str();
  auto* lambda_opt = sample->add_option("--lambda", lambda, "Bias weight (default 1e-3 J*/d)");
  auto* width_opt = sample->add_option("--width", width, "Bias width for x (default 0.25 max demand)");
  sample->add_option("--width-y", pool_cfg.width_y, "Bias width for y")->capture_default_str();
  sample->add_option("--out", sample_out, "Output pool file")->capture_default_str();

  // build-dataset
  auto* build = app.add_subcommand("build-dataset", "Label pool pairs with the synthetic oracle");
  fs::path build_instance, build_pool, build_out = "dataset.jsonl";
  int build_pairs_n = 1344;
  double build_flip = 0.0;
  OracleConfig oracle;
  build->add_option("--instance", build_instance, "Instance file")->required()->check(CLI::ExistingFile);
  build->add_option("--pool", build_pool, "Pool file")->required()->check(CLI::ExistingFile);
  build->add_option("--pairs", build_pairs_n, "Number of pairs")->capture_default_str();
  build->add_option("--flip", build_flip, "Share of labels to flip")->capture_default_str();
  build->add_option("--context-shift", oracle.context_shift, "Oracle context shift")->capture_default_str();
  build->add_option("--out", build_out, "Output dataset file")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Fit the latent cost network");
  fs::path train_dataset, train_latent = "latent.json", train_pool, train_instance, train_out = "model.json";
  int latent_dim = 30;
  TrainConfig train_cfg;
  train_cmd->add_option("--dataset", train_dataset, "Dataset file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--latent", train_latent, "Latent map; fitted and written here if missing")
      ->capture_default_str();
  train_cmd->add_option("--pool", train_pool, "Pool used to fit a missing latent map")->check(CLI::ExistingFile);
  train_cmd->add_option("--instance", train_instance, "Instance for --pool")->check(CLI::ExistingFile);
  train_cmd->add_option("--latent-dim", latent_dim, "PCA dimension when fitting")->capture_default_str();
  add_train_options(train_cmd, train_cfg);
  train_cmd->add_option("--out", train_out, "Output model file")->capture_default_str();

  // export
  auto* export_cmd = app.add_subcommand("export", "Reconstruct full-space costs on a context grid");
  fs::path export_model, export_latent, export_out = "costs.jsonl";
  int export_grid = 52;
  ExportOptions export_opts;
  std::string export_anchor = "origin";
  export_cmd->add_option("--model", export_model, "Model file")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--latent", export_latent, "Latent map (default: the one the model was trained with)");
  export_cmd->add_option("--grid", export_grid, "Evaluation grid points")->capture_default_str();
  add_export_options(export_cmd, export_opts, export_anchor);
  export_cmd->add_option("--out", export_out, "Output cost table")->capture_default_str();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Reintegrate a cost table and count wins");
  fs::path eval_instance, eval_costs, eval_out = "report.json";
  int eval_grid = 52;
  OracleConfig eval_oracle;
  eval_cmd->add_option("--instance", eval_instance, "Instance file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--costs", eval_costs, "Cost table")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--grid", eval_grid, "Evaluation grid points")->capture_default_str();
  eval_cmd->add_option("--context-shift", eval_oracle.context_shift, "Oracle context shift")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Output report")->capture_default_str();

  // reproduce-table1
  auto* table = app.add_subcommand("reproduce-table1", "Run the size x flip x seed win-count study");
  ExperimentConfig exp;
  fs::path exp_instance, exp_out = "table1_report.json";
  std::string exp_anchor = "origin";
  bool quiet = false;
  table->add_option("--instance", exp_instance, "Instance file (default: generated)")->check(CLI::ExistingFile);
  table->add_option("--instance-seed", exp.instance_seed, "Generator seed")->capture_default_str();
  table->add_option("--counties", exp.n_counties, "Number of counties")->capture_default_str();
  table->add_option("--existing", exp.n_existing, "Number of existing facilities")->capture_default_str();
  table->add_option("--temporary", exp.n_temporary, "Number of temporary facilities")->capture_default_str();
  add_generator_options(table, exp.generator);
  table->add_option("--train-contexts", exp.train_contexts, "Training grid points")->capture_default_str();
  table->add_option("--per-context", exp.per_context, "Solutions per context")->capture_default_str();
  table->add_option("--lambda-scale", exp.lambda_scale, "Multiplier on the default bias weight")
      ->capture_default_str();
  table->add_option("--width-scale", exp.width_scale, "Multiplier on the default bias width")
      ->capture_default_str();
  table->add_option("--width-y", exp.width_y, "Bias width for y")->capture_default_str();
  table->add_option("--sizes", exp.sizes, "Dataset sizes")->capture_default_str();
  table->add_option("--flips", exp.flips, "Flip fractions")->capture_default_str();
  table->add_option("--seeds", exp.seeds, "Seeds (overridden by an explicit --seed)")->capture_default_str();
  table->add_option("--grid", exp.eval_grid, "Evaluation grid points")->capture_default_str();
  table->add_option("--latent-dim", exp.latent_dim, "PCA dimension")->capture_default_str();
  add_train_options(table, exp.train);
  add_export_options(table, exp.export_options, exp_anchor);
  table->add_option("--context-shift", exp.oracle.context_shift, "Oracle context shift")->capture_default_str();
  table->add_option("--out", exp_out, "Output report (a .csv trade-off and .txt table sit beside it)")
      ->capture_default_str();
  table->add_flag("--quiet", quiet, "No progress on standard error");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the preference elicitation HTTP service");
  fs::path serve_dir = "elicitation";
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  serve->add_option("--data-dir", serve_dir, "Session storage")->capture_default_str();
  serve->add_option("--host", serve_host, "Bind address")->capture_default_str();
  serve->add_option("--port", serve_port, "Port (0 picks a free one)")->capture_default_str();

  for (auto* sub : app.get_subcommands([](const CLI::App*) { return true; })) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const Instance inst = generate_instance(g.seed, gen_counties, gen_existing, gen_temporary, gen_params);
      const fs::path out = resolve_out(g, gen_out);
      save_instance(inst, out);
      write_provenance(g, *gen, out, {});
      std::cout << "wrote " << out.string() << " (" << inst.num_counties() << " counties, "
                << inst.num_facilities() << " facilities, d = " << inst.decision_dim() << ")\n";
    } else if (*sample) {
      const Instance inst = load_instance(sample_instance);
      if (*lambda_opt) pool_cfg.lambda = lambda;
      if (*width_opt) pool_cfg.width = width;
      pool_cfg.seed = g.seed;
      const SolutionPool pool = generate_pool(inst, uniform_grid(sample_contexts), pool_cfg);
      const fs::path out = resolve_out(g, sample_out);
      save_pool(pool, inst, out);
      write_provenance(g, *sample, out, {sample_instance},
                       {{"lambda", pool.lambda}, {"width", pool.width}, {"exhausted_contexts", pool.exhausted_contexts}});
      std::cout << "wrote " << out.string() << " (" << pool.entries.size() << " solutions, lambda "
                << pool.lambda << ", width " << pool.width << ")\n";
    } else if (*build) {
      const Instance inst = load_instance(build_instance);
      const SolutionPool pool = load_pool(build_pool, inst);
      const auto scored = score_pool(pool, inst, oracle);
      const PreferenceDataset ds = build_pairs(scored, inst, build_pairs_n, build_flip, g.seed);
      const fs::path out = resolve_out(g, build_out);
      save_dataset(ds, out);
      write_provenance(g, *build, out, {build_instance, build_pool});
      std::cout << "wrote " << out.string() << " (" << ds.pairs.size() << " pairs from "
                << count_distinct_pairs(scored) << " distinct)\n";
    } else if (*train_cmd) {
      const PreferenceDataset ds = load_dataset(train_dataset);
      std::vector<fs::path> inputs = {train_dataset};
      LatentMap map;
      const fs::path latent_path = train_latent.is_absolute() || fs::exists(train_latent)
                                       ? train_latent
                                       : resolve_out(g, train_latent);
      if (fs::exists(latent_path)) {
        map = load_latent(latent_path);
      } else {
        Eigen::MatrixXd U;
        if (!train_pool.empty()) {
          if (train_instance.empty()) throw ValidationError("--pool needs --instance");
          const Instance inst = load_instance(train_instance);
          U = pool_matrix(load_pool(train_pool, inst), inst);
          inputs.push_back(train_pool);
          inputs.push_back(train_instance);
        } else {
          U = dataset_matrix(ds);
        }
        map = fit_pca(U, latent_dim);
        save_latent(map, latent_path);
        write_provenance(g, *train_cmd, latent_path, inputs);
        std::cout << "wrote " << latent_path.string() << " (r = " << map.r() << ", fitted on "
                  << U.rows() << " vectors)\n";
      }
      inputs.push_back(latent_path);
      train_cfg.seed = g.seed;
      auto [net, rep] = train(ds, map, train_cfg);
      const fs::path out = resolve_out(g, train_out);
      save_model(net, train_cfg, out);
      write_provenance(g, *train_cmd, out, inputs,
                       {{"latent", fs::absolute(latent_path).lexically_normal().string()},
                        {"epochs", rep.epochs},
                        {"best_epoch", rep.best_epoch},
                        {"best_val_loss", rep.best_val_loss},
                        {"train_ranking_accuracy", rep.train_ranking_accuracy}});
      std::cout << "wrote " << out.string() << " (" << rep.epochs << " epochs, best " << rep.best_epoch
                << ", train ranking accuracy " << rep.train_ranking_accuracy << ")\n";
    } else if (*export_cmd) {
      const CostNet net = load_model(export_model);
      fs::path latent_path = export_latent;
      if (latent_path.empty()) {
        const fs::path side = export_model.string() + ".provenance.json";
        std::ifstream in(side);
        if (!in) throw ValidationError("--latent not given and no " + side.string());
        latent_path = json::parse(in).at("latent").get<std::string>();
      }
      const LatentMap map = load_latent(latent_path);
      export_opts.anchor = parse_anchor(export_anchor);
      const CostTable table = export_costs(net, map, uniform_grid(export_grid), export_opts);
      const fs::path out = resolve_out(g, export_out);
      save_cost_table(table, out);
      write_provenance(g, *export_cmd, out, {export_model, latent_path});
      std::cout << "wrote " << out.string() << " (" << table.entries.size() << " contexts)\n";
    } else if (*eval_cmd) {
      const Instance inst = load_instance(eval_instance);
      const CostTable table = load_cost_table(eval_costs);
      const std::vector<double> grid = uniform_grid(eval_grid);
      if (table.entries.size() != grid.size()) {
        throw ValidationError("cost table has " + std::to_string(table.entries.size()) +
                              " contexts, grid expects " + std::to_string(grid.size()));
      }
      for (std::size_t i = 0; i < grid.size(); ++i) {
        if (std::abs(table.entries[i].context - grid[i]) > 1e-12) {
          throw ValidationError("cost table context " + std::to_string(table.entries[i].context) +
                                " is not on the " + std::to_string(eval_grid) + "-point grid");
        }
      }
      const NominalBaseline nominal = solve_nominal(inst);
      json contexts = json::array();
      int wins = 0, violations = 0;
      double identity = 0.0;
      std::ostringstream csv;
      csv << std::setprecision(17) << "x0,dR,dJ\n";
      for (const auto& cost : table.entries) {
        const ContextResult r = evaluate_context(inst, cost, cost.context, nominal, eval_oracle);
        wins += r.win;
        violations += r.feasible ? 0 : 1;
        identity = std::max(identity, std::abs(r.delta_r() - r.delta_j() - (r.composite_nom - r.composite_sur)));
        contexts.push_back(context_json(r));
        csv << r.x0 << "," << r.delta_r() << "," << r.delta_j() << "\n";
      }
      const fs::path out = resolve_out(g, eval_out);
      {
        std::ofstream f(out);
        f << json{{"nominal_objective", nominal.objective},
                  {"grid", eval_grid},
                  {"wins", wins},
                  {"feasibility_violations", violations},
                  {"identity_max_error", identity},
                  {"model_hash", table.model_hash},
                  {"contexts", contexts}}
                 .dump(1)
          << "\n";
      }
      fs::path csv_path = out;
      csv_path.replace_extension(".tradeoff.csv");
      std::ofstream(csv_path) << csv.str();
      write_provenance(g, *eval_cmd, out, {eval_instance, eval_costs});
      write_provenance(g, *eval_cmd, csv_path, {eval_instance, eval_costs});
      std::cout << "wins " << wins << "/" << grid.size() << ", feasibility violations " << violations
                << "\nwrote " << out.string() << " and " << csv_path.string() << "\n";
    } else if (*table) {
      if (!exp_instance.empty()) exp.instance_path = exp_instance;
      if (*seed_opt) exp.seeds = {g.seed};
      std::set<std::uint64_t> distinct(exp.seeds.begin(), exp.seeds.end());
      if (distinct.size() != exp.seeds.size()) throw ValidationError("--seeds must be distinct");
      exp.export_options.anchor = parse_anchor(exp_anchor);
      exp.jobs = g.jobs;
      exp.train.validate();
      const auto t0 = std::chrono::steady_clock::now();
      const ExperimentReport report = run_experiment(exp, [&](const std::string& msg) {
        if (quiet) return;
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cerr << "[" << std::fixed << std::setprecision(1) << s << "s] " << msg << std::endl;
      });
      const fs::path out = resolve_out(g, exp_out);
      fs::path csv_path = out, txt_path = out;
      csv_path.replace_extension(".csv");
      txt_path.replace_extension(".txt");
      write_report_json(report, out);
      write_tradeoff_csv(report, csv_path);
      const std::string text = format_table(report);
      std::ofstream(txt_path) << text;
      std::vector<fs::path> inputs;
      if (exp.instance_path) inputs.push_back(*exp.instance_path);
      for (const auto& p : {out, csv_path, txt_path}) write_provenance(g, *table, p, inputs);
      std::cout << text;
      std::cout << "feasibility violations " << report.feasibility_violations(1e-6)
                << ", identity max error " << report.identity_max_error() << "\n";
      for (const auto& c : report.cells) {
        if (!c.error.empty()) {
          std::cerr << "cell size " << c.size << " flip " << c.flip << " seed " << c.seed
                    << " failed: " << c.error << "\n";
          return 2;
        }
      }
    } else if (*serve) {
      ElicitationService service(serve_dir);
      httplib::Server server;
      register_routes(server, service);
      int port = serve_port;
      if (port == 0) {
        port = server.bind_to_any_port(serve_host);
      } else if (!server.bind_to_port(serve_host, port)) {
        port = -1;
      }
      if (port < 0) throw std::runtime_error("cannot bind " + serve_host + ":" + std::to_string(serve_port));
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::cout << "listening on http://" << serve_host << ":" << port << " (" << service.session_ids().size()
                << " sessions restored)" << std::endl;
      server.listen_after_bind();
      g_server = nullptr;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int main(int argc, char** argv) { return run(argc, argv); }
