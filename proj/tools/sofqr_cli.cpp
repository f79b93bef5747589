// sofqr: simulate, fit and summarize scalar-on-function quantile regressions.
//
// Exit codes: 0 success, 2 invalid input or configuration, 3 sampler divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "json.hpp"
#include "sofqr/basis.hpp"
#include "sofqr/io.hpp"
#include "sofqr/numerics.hpp"
#include "sofqr/sampler.hpp"
#include "sofqr/simlab.hpp"
#include "sofqr/summary.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sofqr;
using sofqr::cli::RunConfig;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

std::string header(const RunConfig& cfg) {
  return "# sofqr " SOFQR_VERSION "\n# config: " + cli::to_json(cfg).dump() + "\n";
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

std::string tau_tag(double tau) {
  std::ostringstream s;
  s << "tau" << tau;
  return s.str();
}

std::string covariate_label(const std::vector<std::string>& names, int c) {
  return c < static_cast<int>(names.size()) ? names[c] : "z_" + std::to_string(c + 1);
}

std::string draws_csv(const PosteriorDraws& d, const std::vector<std::string>& names) {
  std::ostringstream s;
  s << std::setprecision(17);
  s << "draw,beta0";
  for (int c = 0; c < d.beta_z.cols(); ++c) s << ",bz_" << covariate_label(names, c);
  for (int k = 0; k < d.phi.cols(); ++k) s << ",phi_" << k + 1;
  s << ",theta2";
  for (int k = 0; k < d.gal_weights.cols(); ++k) s << ",weight_" << k + 1;
  for (int k = 0; k < d.gal_gamma.cols(); ++k) s << ",gamma_" << k + 1;
  for (int k = 0; k < d.gal_sigma.cols(); ++k) s << ",sigma_" << k + 1;
  s << "\n";
  for (int i = 0; i < d.draws(); ++i) {
    s << i << ',' << d.beta0[i];
    for (int c = 0; c < d.beta_z.cols(); ++c) s << ',' << d.beta_z(i, c);
    for (int k = 0; k < d.phi.cols(); ++k) s << ',' << d.phi(i, k);
    s << ',' << d.theta2[i];
    for (int k = 0; k < d.gal_weights.cols(); ++k) s << ',' << d.gal_weights(i, k);
    for (int k = 0; k < d.gal_gamma.cols(); ++k) s << ',' << d.gal_gamma(i, k);
    for (int k = 0; k < d.gal_sigma.cols(); ++k) s << ',' << d.gal_sigma(i, k);
    s << "\n";
  }
  return s.str();
}

// One row per draw, one column per observation.
std::string loglik_csv(const PosteriorDraws& d) {
  std::ostringstream s;
  s << std::setprecision(17) << "draw";
  for (int i = 0; i < d.loglik.rows(); ++i) s << ",obs_" << i + 1;
  s << "\n";
  for (int j = 0; j < d.loglik.cols(); ++j) {
    s << j;
    for (int i = 0; i < d.loglik.rows(); ++i) s << ',' << d.loglik(i, j);
    s << "\n";
  }
  return s.str();
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int index(const std::string& name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == name) return static_cast<int>(c);
    return -1;
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

Table read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  Table t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line);
    if (t.columns.empty()) {
      t.columns = cells;
      continue;
    }
    if (cells.size() != t.columns.size()) throw ValidationError(path.string() + ": ragged row");
    std::vector<double> row;
    for (const auto& c : cells) {
      char* end = nullptr;
      row.push_back(std::strtod(c.c_str(), &end));
      if (end == c.c_str()) throw ValidationError(path.string() + ": bad number '" + c + "'");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

PosteriorDraws draws_from_table(const Table& t) {
  std::vector<int> bz, phi;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (t.columns[c].rfind("bz_", 0) == 0) bz.push_back(static_cast<int>(c));
    if (t.columns[c].rfind("phi_", 0) == 0) phi.push_back(static_cast<int>(c));
  }
  const int b0 = t.index("beta0"), th = t.index("theta2");
  if (b0 < 0 || th < 0 || phi.empty()) throw ValidationError("draws file lacks beta0, phi or theta2 columns");
  const int n = static_cast<int>(t.rows.size());
  PosteriorDraws d;
  d.beta0.resize(n);
  d.theta2.resize(n);
  d.beta_z.resize(n, static_cast<int>(bz.size()));
  d.phi.resize(n, static_cast<int>(phi.size()));
  for (int i = 0; i < n; ++i) {
    d.beta0[i] = t.rows[i][b0];
    d.theta2[i] = t.rows[i][th];
    for (std::size_t c = 0; c < bz.size(); ++c) d.beta_z(i, c) = t.rows[i][bz[c]];
    for (std::size_t c = 0; c < phi.size(); ++c) d.phi(i, c) = t.rows[i][phi[c]];
  }
  return d;
}

Eigen::VectorXd eval_grid(const Eigen::VectorXd& grid, int points) {
  if (points == 0) return grid;
  return Eigen::VectorXd::LinSpaced(points, grid[0], grid[grid.size() - 1]);
}

struct Summaries {
  std::vector<ScalarSummary> scalars;
  std::vector<BandPoint> bands;
  std::vector<std::pair<double, double>> waic;
};

void write_summaries(const fs::path& dir, const RunConfig& cfg, const Summaries& s) {
  write_file(dir / "scalar_summary.csv", header(cfg) + scalar_table_csv(s.scalars));
  write_file(dir / "band_summary.csv", header(cfg) + band_table_csv(s.bands));
  std::ostringstream w;
  w << std::setprecision(10) << "tau,waic\n";
  for (const auto& [tau, value] : s.waic) w << tau << ',' << value << "\n";
  write_file(dir / "waic.csv", header(cfg) + w.str());
}

void add(Summaries& all, const SummaryTables& t, double tau) {
  all.scalars.insert(all.scalars.end(), t.scalars.begin(), t.scalars.end());
  all.bands.insert(all.bands.end(), t.bands.begin(), t.bands.end());
  if (t.has_waic) all.waic.emplace_back(tau, t.waic);
}

json report_json(const PreprocessReport& r) {
  json hist = json::object();
  for (const auto& [days, count] : r.valid_day_histogram) hist[std::to_string(days)] = count;
  return {{"cap", r.cap},
          {"capped_values", r.capped_values},
          {"dropped_days", r.dropped_days},
          {"dropped_subjects", r.dropped_subjects},
          {"replicates", r.replicates},
          {"valid_day_histogram", hist}};
}

int run_fit(const RunConfig& cfg) {
  FunctionalDataset data = ingest_long_csv(cfg.functional_path, cfg.scalar_path);
  json log;
  log["version"] = SOFQR_VERSION;
  log["config"] = cli::to_json(cfg);
  // Invalid-minute flags live on the raw grid, so filtering precedes downsampling.
  if (cfg.preprocess) {
    PreprocessReport report;
    data = preprocess_activity(data, cfg.preprocess_options, &report);
    log["preprocess"] = report_json(report);
  }
  if (cfg.downsample > 1) data = downsample(data, cfg.downsample);
  data.validate();
  const int k = cfg.num_basis > 0 ? cfg.num_basis : default_num_basis(data.T(), cfg.degree);
  const BasisSystem basis(data.grid, k, cfg.degree);
  log["data"] = {{"n", data.n()}, {"J", data.J()}, {"T", data.T()}, {"p", data.p()}, {"num_basis", k},
                 {"covariates", data.covariate_names}};

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  {
    std::ostringstream g;
    g << std::setprecision(17) << "t\n";
    for (Eigen::Index j = 0; j < data.grid.size(); ++j) g << data.grid[j] << "\n";
    write_file(out / "grid.csv", header(cfg) + g.str());
  }

  const Eigen::VectorXd grid_out = eval_grid(data.grid, cfg.eval_points);
  Summaries all;
  json fits = json::array();
  int status = 0;
  for (std::size_t q = 0; q < cfg.tau0.size(); ++q) {
    const double tau = cfg.tau0[q];
    McmcConfig mcmc = cfg.mcmc;
    mcmc.seed = derive_seed(cfg.mcmc.seed, q);
    json entry = {{"tau", tau}, {"seed", mcmc.seed}};
    try {
      const PosteriorDraws d = fit(data, basis, cfg.priors, tau, cfg.estimator, mcmc);
      const std::string tag = tau_tag(tau);
      write_file(out / ("draws_" + tag + ".csv"), header(cfg) + draws_csv(d, data.covariate_names));
      entry["draws_file"] = "draws_" + tag + ".csv";
      if (d.loglik.size() > 0) {
        write_file(out / ("loglik_" + tag + ".csv"), header(cfg) + loglik_csv(d));
        entry["loglik_file"] = "loglik_" + tag + ".csv";
      }
      entry["draws"] = d.draws();
      entry["mh_acceptance"] = d.mh_acceptance;
      entry["status"] = "ok";
      add(all, summarize(d, basis, grid_out, cfg.level, data.covariate_names), tau);
    } catch (const DivergenceError& e) {
      entry["status"] = "diverged";
      entry["error"] = e.what();
      std::cerr << "sofqr: tau " << tau << ": " << e.what() << "\n";
      status = kExitDivergence;
    }
    fits.push_back(entry);
  }
  log["fits"] = fits;
  log["exit_code"] = status;
  write_summaries(out, cfg, all);
  write_file(out / "run_log.json", log.dump(2) + "\n");
  return status;
}

int run_summarize(const RunConfig& cfg) {
  const fs::path run(cfg.run_dir.empty() ? cfg.out_dir : cfg.run_dir);
  std::ifstream in(run / "run_log.json");
  if (!in) throw ValidationError("no run_log.json in " + run.string());
  json log;
  try {
    log = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("run_log.json: ") + e.what());
  }
  const Table grid_table = read_table(run / "grid.csv");
  Eigen::VectorXd grid(static_cast<Eigen::Index>(grid_table.rows.size()));
  for (std::size_t j = 0; j < grid_table.rows.size(); ++j) grid[j] = grid_table.rows[j][0];
  const int k = log.at("data").at("num_basis").get<int>();
  const int degree = log.at("config").at("model").at("degree").get<int>();
  const auto names = log.at("data").at("covariates").get<std::vector<std::string>>();
  const BasisSystem basis(grid, k, degree);
  const Eigen::VectorXd grid_out = eval_grid(grid, cfg.eval_points);

  Summaries all;
  for (const auto& entry : log.at("fits")) {
    if (entry.value("status", "") != "ok") continue;
    const double tau = entry.at("tau").get<double>();
    PosteriorDraws d = draws_from_table(read_table(run / entry.at("draws_file").get<std::string>()));
    d.tau0 = tau;
    if (entry.contains("loglik_file")) {
      const Table ll = read_table(run / entry.at("loglik_file").get<std::string>());
      const int draws = static_cast<int>(ll.rows.size());
      const int n = static_cast<int>(ll.columns.size()) - 1;
      d.loglik.resize(n, draws);
      for (int j = 0; j < draws; ++j)
        for (int i = 0; i < n; ++i) d.loglik(i, j) = ll.rows[j][i + 1];
    }
    add(all, summarize(d, basis, grid_out, cfg.level, names), tau);
  }
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  write_summaries(out, cfg, all);
  return 0;
}

int run_simulate(const RunConfig& cfg) {
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  json log;
  log["version"] = SOFQR_VERSION;
  log["config"] = cli::to_json(cfg);

  if (cfg.dataset_only) {
    // An explicit scenario value applies the case design; otherwise the simulate block is used as is.
    const SimConfig sc =
        cfg.scenario_values.empty() ? cfg.sim : case_config(cfg.sim_case, cfg.scenario_values.front(), cfg.sim);
    sc.validate();
    Rng rng(derive_seed(cfg.mcmc.seed, static_cast<std::uint64_t>(cfg.sim_case)));
    const FunctionalDataset d = generate_case(sc, rng);
    export_long_csv(d, (out / "functional.csv").string(), (out / "scalar.csv").string());
    std::ostringstream truth;
    truth << std::setprecision(17) << "t,beta\n";
    const Eigen::VectorXd beta = sc.beta_true.evaluate(d.grid);
    for (Eigen::Index j = 0; j < d.grid.size(); ++j) truth << d.grid[j] << ',' << beta[j] << "\n";
    write_file(out / "truth_beta.csv", header(cfg) + truth.str());
    std::ostringstream scalars;
    scalars << std::setprecision(17) << "term,value\n";
    for (Eigen::Index c = 0; c < sc.beta_z_true.size(); ++c)
      scalars << "z_" << c + 1 << ',' << sc.beta_z_true[c] << "\n";
    write_file(out / "truth_scalar.csv", header(cfg) + scalars.str());
    log["dataset"] = {{"n", d.n()}, {"J", d.J()}, {"T", d.T()}};
    log["exit_code"] = 0;
    write_file(out / "run_log.json", log.dump(2) + "\n");
    return 0;
  }

  CaseOverrides ov;
  ov.n_r = cfg.n_r;
  ov.tau0 = cfg.tau0;
  ov.estimators = cfg.estimators;
  if (!cfg.scenario_values.empty()) ov.scenario_values = cfg.scenario_values;
  if (cfg.num_basis > 0) ov.num_basis = cfg.num_basis;
  ov.mcmc = cfg.mcmc;
  ov.priors = cfg.priors;
  ov.base = cfg.sim;
  const CaseResult result = run_case(cfg.sim_case, ov, cfg.threads, cfg.mcmc.seed);
  const std::string stem = "case" + std::to_string(cfg.sim_case);
  write_file(out / (stem + ".csv"), header(cfg) + case_csv(result.rows));
  write_file(out / (stem + ".json"), case_json(cfg.sim_case, ov, cfg.mcmc.seed, result) + "\n");
  const int status = result.complete() ? 0 : kExitDivergence;
  for (const auto& f : result.failures) std::cerr << "sofqr: " << f << "\n";
  log["failures"] = result.failures;
  log["exit_code"] = status;
  write_file(out / "run_log.json", log.dump(2) + "\n");
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian scalar-on-function quantile regression with measurement-error correction"};
  app.set_version_flag("--version", std::string(SOFQR_VERSION));
  app.require_subcommand(1);

  std::string config_path, estimator, out_dir;
  std::vector<double> taus;
  int chains = 0, iters = 0, burnin = -1;
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "YAML configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out-dir", out_dir, "Output directory");
  };
  auto sampling = [&](CLI::App* sub) {
    sub->add_option("--estimator", estimator, "fbq, fast or naive");
    sub->add_option("--tau", taus, "Quantile levels (repeatable)");
    sub->add_option("--chains", chains, "Number of chains")->check(CLI::PositiveNumber);
    sub->add_option("--iters", iters, "Iterations per chain")->check(CLI::PositiveNumber);
    sub->add_option("--burnin", burnin, "Burn-in iterations")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", seed, "Master seed");
  };

  auto* fit_cmd = app.add_subcommand("fit", "Fit quantile regressions to long-format CSV data");
  std::string functional, scalar;
  fit_cmd->add_option("--functional", functional, "Long-format functional CSV");
  fit_cmd->add_option("--scalar", scalar, "Scalar CSV (subject_id, y, z_1..z_p)");
  common(fit_cmd);
  sampling(fit_cmd);

  auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation case or write one simulated dataset");
  int sim_case = 0, replicates = 0, threads = 0;
  bool dataset_only = false;
  sim_cmd->add_option("--case", sim_case, "Simulation case 1..4");
  sim_cmd->add_option("--replicates", replicates, "Monte Carlo replicates per scenario")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  sim_cmd->add_flag("--dataset-only", dataset_only, "Write one dataset as CSV instead of running the study");
  common(sim_cmd);
  sampling(sim_cmd);

  auto* sum_cmd = app.add_subcommand("summarize", "Recompute summary tables from a fit directory");
  std::string run_dir;
  double level = 0.0;
  int eval_points = -1;
  sum_cmd->add_option("--run-dir", run_dir, "Directory written by 'fit'");
  sum_cmd->add_option("--level", level, "Credible level");
  sum_cmd->add_option("--eval-points", eval_points, "Equispaced evaluation points for bands (0: data grid)");
  common(sum_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  RunConfig cfg;
  try {
    cfg.command = app.get_subcommands().front()->get_name();
    if (!config_path.empty()) cli::apply_yaml_file(cfg, config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!estimator.empty()) {
      cfg.estimator = estimator_from_string(estimator);
      cfg.estimators = {cfg.estimator};
    }
    if (!taus.empty()) cfg.tau0 = taus;
    if (chains > 0) cfg.mcmc.chains = chains;
    if (iters > 0) cfg.mcmc.iters = iters;
    if (burnin >= 0) cfg.mcmc.burnin = burnin;
    if (const auto* opt = app.get_subcommands().front()->get_option_no_throw("--seed"); opt && opt->count() > 0)
      cfg.mcmc.seed = seed;
    if (!functional.empty()) cfg.functional_path = functional;
    if (!scalar.empty()) cfg.scalar_path = scalar;
    if (sim_case > 0) cfg.sim_case = sim_case;
    if (replicates > 0) cfg.n_r = replicates;
    if (threads > 0) cfg.threads = threads;
    if (dataset_only) cfg.dataset_only = true;
    if (!run_dir.empty()) {
      cfg.run_dir = run_dir;
      if (out_dir.empty()) cfg.out_dir = run_dir;
    }
    if (level > 0.0) cfg.level = level;
    if (eval_points >= 0) cfg.eval_points = eval_points;
    if (cfg.tau0.empty()) {
      if (cfg.command == "simulate") cfg.tau0 = cfg.sim.tau0;
      else cfg.tau0 = {0.1, 0.5, 0.9};
    }
    cfg.validate();

    if (cfg.command == "fit") return run_fit(cfg);
    if (cfg.command == "simulate") return run_simulate(cfg);
    return run_summarize(cfg);
  } catch (const ValidationError& e) {
    std::cerr << "sofqr: " << e.what() << "\n";
    return kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "sofqr: malformed run log: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DivergenceError& e) {
    std::cerr << "sofqr: " << e.what() << "\n";
    return kExitDivergence;
  }
}
