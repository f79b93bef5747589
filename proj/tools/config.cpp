#include "config.hpp"

#include <yaml-cpp/yaml.h>

#include <set>
#include <sstream>

#include "sofqr/numerics.hpp"

namespace sofqr::cli {

namespace {

void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ValidationError("config: section '" + section + "' must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ValidationError("config: unknown key '" + section + "." + key + "'");
  }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (!node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError(std::string("config: bad value for '") + key + "'");
  }
}

template <class T>
void read_optional(const YAML::Node& node, const char* key, std::optional<T>& out) {
  if (!node[key]) return;
  if (node[key].IsNull()) {
    out.reset();
    return;
  }
  T value{};
  read(node, key, value);
  out = value;
}

std::vector<Estimator> read_estimators(const YAML::Node& node) {
  std::vector<Estimator> out;
  for (const auto& item : node) out.push_back(estimator_from_string(item.as<std::string>()));
  return out;
}

void apply(RunConfig& c, const YAML::Node& root) {
  if (!root || root.IsNull()) return;
  check_keys(root, "", {"data", "model", "mcmc", "priors", "preprocess", "summary", "simulate"});

  if (const auto n = root["data"]) {
    check_keys(n, "data", {"functional", "scalar", "out_dir", "run_dir"});
    read(n, "functional", c.functional_path);
    read(n, "scalar", c.scalar_path);
    read(n, "out_dir", c.out_dir);
    read(n, "run_dir", c.run_dir);
  }
  if (const auto n = root["model"]) {
    check_keys(n, "model", {"estimator", "tau0", "num_basis", "degree"});
    if (n["estimator"]) c.estimator = estimator_from_string(n["estimator"].as<std::string>());
    read(n, "tau0", c.tau0);
    read(n, "num_basis", c.num_basis);
    read(n, "degree", c.degree);
  }
  if (const auto n = root["mcmc"]) {
    check_keys(n, "mcmc", {"iters", "burnin", "thin", "chains", "seed", "store_loglik", "target_accept"});
    read(n, "iters", c.mcmc.iters);
    read(n, "burnin", c.mcmc.burnin);
    read(n, "thin", c.mcmc.thin);
    read(n, "chains", c.mcmc.chains);
    read(n, "seed", c.mcmc.seed);
    read(n, "store_loglik", c.mcmc.store_loglik);
    read(n, "target_accept", c.mcmc.target_accept);
  }
  if (const auto n = root["priors"]) {
    check_keys(n, "priors",
               {"coef_prior_var", "penalty_ridge", "theta_prior", "theta_rate", "theta_ig_shape", "theta_ig_rate",
                "K_eps", "alpha_eps", "sigma_shape", "sigma_rate", "fixed_gamma", "K_u", "alpha_u", "nu_u0", "K_x",
                "alpha_x", "nu_x0"});
    auto& p = c.priors;
    read(n, "coef_prior_var", p.coef_prior_var);
    read(n, "penalty_ridge", p.penalty_ridge);
    if (n["theta_prior"]) {
      const auto name = n["theta_prior"].as<std::string>();
      if (name == "exponential") p.theta_prior = ThetaPrior::ScaleDependent;
      else if (name == "inverse_gamma") p.theta_prior = ThetaPrior::InverseGamma;
      else throw ValidationError("config: theta_prior must be 'exponential' or 'inverse_gamma'");
    }
    read(n, "theta_rate", p.theta_rate);
    read(n, "theta_ig_shape", p.theta_ig_shape);
    read(n, "theta_ig_rate", p.theta_ig_rate);
    read(n, "K_eps", p.K_eps);
    read(n, "alpha_eps", p.alpha_eps);
    read(n, "sigma_shape", p.sigma_shape);
    read(n, "sigma_rate", p.sigma_rate);
    read_optional(n, "fixed_gamma", p.fixed_gamma);
    read(n, "K_u", p.K_u);
    read(n, "alpha_u", p.alpha_u);
    read(n, "nu_u0", p.nu_u0);
    read(n, "K_x", p.K_x);
    read(n, "alpha_x", p.alpha_x);
    read(n, "nu_x0", p.nu_x0);
  }
  if (const auto n = root["preprocess"]) {
    check_keys(n, "preprocess", {"enabled", "winsorize_pct", "min_valid_days", "max_invalid_minutes", "downsample"});
    read(n, "enabled", c.preprocess);
    read(n, "winsorize_pct", c.preprocess_options.winsorize_pct);
    read(n, "min_valid_days", c.preprocess_options.min_valid_days);
    read(n, "max_invalid_minutes", c.preprocess_options.max_invalid_minutes);
    read(n, "downsample", c.downsample);
  }
  if (const auto n = root["summary"]) {
    check_keys(n, "summary", {"level", "eval_points"});
    read(n, "level", c.level);
    read(n, "eval_points", c.eval_points);
  }
  if (const auto n = root["simulate"]) {
    check_keys(n, "simulate",
               {"case", "replicates", "threads", "dataset_only", "scenario_values", "estimators", "n", "J", "T",
                "sigma_x", "rho_x", "sigma_u", "rho_u", "error", "beta", "beta_z"});
    read(n, "case", c.sim_case);
    read(n, "replicates", c.n_r);
    read(n, "threads", c.threads);
    read(n, "dataset_only", c.dataset_only);
    read(n, "scenario_values", c.scenario_values);
    if (n["estimators"]) c.estimators = read_estimators(n["estimators"]);
    auto& s = c.sim;
    read(n, "n", s.n);
    read(n, "J", s.J);
    read(n, "T", s.T);
    read(n, "sigma_x", s.sigma_x);
    read(n, "rho_x", s.rho_x);
    read(n, "sigma_u", s.sigma_u);
    read(n, "rho_u", s.rho_u);
    if (const auto e = n["error"]) {
      check_keys(e, "simulate.error", {"dist", "sigma_e", "xi", "dof", "slant"});
      if (e["dist"]) {
        const auto name = e["dist"].as<std::string>();
        if (name == "normal") s.error.dist = ErrorDist::Normal;
        else if (name == "skew_t") s.error.dist = ErrorDist::SkewT;
        else throw ValidationError("config: simulate.error.dist must be 'normal' or 'skew_t'");
      }
      read(e, "sigma_e", s.error.sigma_e);
      read(e, "xi", s.error.xi);
      read(e, "dof", s.error.dof);
      read(e, "slant", s.error.slant);
    }
    if (const auto b = n["beta"]) {
      check_keys(b, "simulate.beta", {"form", "coefs"});
      read(b, "form", s.beta_true.form);
      read(b, "coefs", s.beta_true.coefs);
    }
    if (n["beta_z"]) {
      std::vector<double> bz;
      read(n, "beta_z", bz);
      s.beta_z_true = Eigen::Map<const Eigen::VectorXd>(bz.data(), static_cast<Eigen::Index>(bz.size()));
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  std::ostringstream err;
  if (tau0.empty()) err << "at least one tau0 is required; ";
  for (double t : tau0)
    if (!(t > 0.0 && t < 1.0)) err << "tau0 " << t << " is outside (0, 1); ";
  if (!(mcmc.iters > mcmc.burnin && mcmc.burnin >= 0)) err << "need iters > burnin >= 0; ";
  if (mcmc.thin < 1) err << "thin must be >= 1; ";
  if (mcmc.chains < 1) err << "chains must be >= 1; ";
  if (num_basis < 0) err << "num_basis must be >= 0; ";
  if (degree < 1) err << "degree must be >= 1; ";
  if (!(level > 0.0 && level < 1.0)) err << "summary level must lie in (0, 1); ";
  if (eval_points < 0 || eval_points == 1) err << "eval_points must be 0 or >= 2; ";
  if (downsample < 1) err << "downsample must be >= 1; ";
  if (!(preprocess_options.winsorize_pct > 0.0 && preprocess_options.winsorize_pct <= 1.0))
    err << "winsorize_pct must lie in (0, 1]; ";
  if (preprocess_options.min_valid_days < 1) err << "min_valid_days must be >= 1; ";
  if (preprocess_options.max_invalid_minutes < 0) err << "max_invalid_minutes must be >= 0; ";
  if (command == "fit" && (functional_path.empty() || scalar_path.empty()))
    err << "fit needs both the functional and the scalar file; ";
  if (command == "simulate") {
    if (sim_case < 1 || sim_case > 4) err << "simulate case must be 1..4; ";
    if (n_r < 1) err << "replicates must be >= 1; ";
    if (threads < 1) err << "threads must be >= 1; ";
    if (estimators.empty()) err << "at least one estimator is required; ";
  }
  const std::string msg = err.str();
  if (!msg.empty()) throw ValidationError("config: " + msg.substr(0, msg.size() - 2));
}

void apply_yaml_file(RunConfig& config, const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw ValidationError("config: cannot read " + path + ": " + e.what());
  }
  apply(config, root);
}

void apply_yaml_text(RunConfig& config, const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  apply(config, root);
}

nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json out;
  out["command"] = c.command;
  out["data"] = {{"functional", c.functional_path}, {"scalar", c.scalar_path}, {"out_dir", c.out_dir},
                 {"run_dir", c.run_dir}};
  out["model"] = {{"estimator", to_string(c.estimator)},
                  {"tau0", c.tau0},
                  {"num_basis", c.num_basis},
                  {"degree", c.degree}};
  out["mcmc"] = {{"iters", c.mcmc.iters},     {"burnin", c.mcmc.burnin},
                 {"thin", c.mcmc.thin},       {"chains", c.mcmc.chains},
                 {"seed", c.mcmc.seed},       {"store_loglik", c.mcmc.store_loglik},
                 {"target_accept", c.mcmc.target_accept}};
  const auto& p = c.priors;
  out["priors"] = {{"coef_prior_var", p.coef_prior_var},
                   {"penalty_ridge", p.penalty_ridge},
                   {"theta_prior", p.theta_prior == ThetaPrior::ScaleDependent ? "exponential" : "inverse_gamma"},
                   {"theta_rate", p.theta_rate},
                   {"theta_ig_shape", p.theta_ig_shape},
                   {"theta_ig_rate", p.theta_ig_rate},
                   {"K_eps", p.K_eps},
                   {"alpha_eps", p.alpha_eps},
                   {"sigma_shape", p.sigma_shape},
                   {"sigma_rate", p.sigma_rate},
                   {"fixed_gamma", p.fixed_gamma ? json(*p.fixed_gamma) : json(nullptr)},
                   {"K_u", p.K_u},
                   {"alpha_u", p.alpha_u},
                   {"nu_u0", p.nu_u0},
                   {"K_x", p.K_x},
                   {"alpha_x", p.alpha_x},
                   {"nu_x0", p.nu_x0}};
  out["preprocess"] = {{"enabled", c.preprocess},
                       {"winsorize_pct", c.preprocess_options.winsorize_pct},
                       {"min_valid_days", c.preprocess_options.min_valid_days},
                       {"max_invalid_minutes", c.preprocess_options.max_invalid_minutes},
                       {"downsample", c.downsample}};
  out["summary"] = {{"level", c.level}, {"eval_points", c.eval_points}};
  if (c.command == "simulate") {
    json est = json::array();
    for (auto e : c.estimators) est.push_back(to_string(e));
    const auto& s = c.sim;
    out["simulate"] = {
        {"case", c.sim_case},
        {"replicates", c.n_r},
        {"threads", c.threads},
        {"dataset_only", c.dataset_only},
        {"scenario_values", c.scenario_values},
        {"estimators", est},
        {"n", s.n},
        {"J", s.J},
        {"T", s.T},
        {"sigma_x", s.sigma_x},
        {"rho_x", s.rho_x},
        {"sigma_u", s.sigma_u},
        {"rho_u", s.rho_u},
        {"error",
         {{"dist", s.error.dist == ErrorDist::Normal ? "normal" : "skew_t"},
          {"sigma_e", s.error.sigma_e},
          {"xi", s.error.xi},
          {"dof", s.error.dof},
          {"slant", s.error.slant}}},
        {"beta", {{"form", s.beta_true.form}, {"coefs", s.beta_true.coefs}}},
        {"beta_z", std::vector<double>(s.beta_z_true.data(), s.beta_z_true.data() + s.beta_z_true.size())}};
  }
  return out;
}

}  // namespace sofqr::cli
