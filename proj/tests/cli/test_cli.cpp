#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "sofqr_cli_tests";

int run(const std::string& args) {
  const std::string cmd = std::string(SOFQR_CLI_PATH) + " " + args + " > " + (kRoot / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string body(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line))
    if (line.empty() || line[0] != '#') out += line + "\n";
  return out;
}

// Small simulated dataset shared by the fit tests.
const fs::path& dataset() {
  static const fs::path dir = [] {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    const fs::path d = kRoot / "data";
    const std::string cfg = (kRoot / "sim.yaml").string();
    std::ofstream(cfg) << "simulate:\n  n: 80\n  J: 3\n  T: 30\n  sigma_u: 1.0\n";
    REQUIRE(run("simulate --dataset-only --case 1 --config " + cfg + " --out-dir " + d.string()) == 0);
    return d;
  }();
  return dir;
}

std::string fit_args(const fs::path& out) {
  const fs::path& d = dataset();
  return "fit --functional " + (d / "functional.csv").string() + " --scalar " + (d / "scalar.csv").string() +
         " --iters 400 --burnin 100 --tau 0.5 --seed 3 --out-dir " + out.string();
}

}  // namespace

TEST_CASE("simulated dataset files") {
  const fs::path& d = dataset();
  CHECK(fs::exists(d / "functional.csv"));
  CHECK(fs::exists(d / "scalar.csv"));
  CHECK(slurp(d / "truth_beta.csv").rfind("# sofqr ", 0) == 0);
  const auto log = nlohmann::json::parse(slurp(d / "run_log.json"));
  CHECK(log["dataset"]["n"] == 80);
  CHECK(log["dataset"]["J"] == 3);
}

TEST_CASE("fit writes every output with a config header") {
  const fs::path out = kRoot / "fit_a";
  REQUIRE(run(fit_args(out) + " --estimator fast") == 0);
  for (const char* name : {"scalar_summary.csv", "band_summary.csv", "waic.csv", "draws_tau0.5.csv",
                           "loglik_tau0.5.csv", "grid.csv"}) {
    INFO(name);
    const std::string text = slurp(out / name);
    CHECK(text.rfind("# sofqr ", 0) == 0);
    CHECK(text.find("\n# config: {") != std::string::npos);
    CHECK(text.find("\"estimator\":\"fast\"") != std::string::npos);
  }
  const auto log = nlohmann::json::parse(slurp(out / "run_log.json"));
  CHECK(log["fits"][0]["status"] == "ok");
  CHECK(log["fits"][0]["draws"] == 300);
  CHECK(log["config"]["mcmc"]["iters"] == 400);
  CHECK(body(out / "scalar_summary.csv").rfind("term,tau,mean,lower,upper\nintercept,0.5,", 0) == 0);
  CHECK(body(out / "waic.csv").rfind("tau,waic\n0.5,", 0) == 0);
}

TEST_CASE("re-running a fit reproduces every file byte for byte") {
  const fs::path a = kRoot / "rep_a", b = kRoot / "rep_b";
  REQUIRE(run(fit_args(a) + " --estimator naive --chains 2") == 0);
  REQUIRE(run(fit_args(b) + " --estimator naive --chains 2") == 0);
  for (const auto& entry : fs::directory_iterator(a)) {
    const std::string name = entry.path().filename().string();
    INFO(name);
    std::string left = slurp(entry.path()), right = slurp(b / name);
    // The output directory is part of the echoed config.
    for (auto* s : {&left, &right}) {
      for (const auto& dir : {a.string(), b.string()}) {
        for (auto pos = s->find(dir); pos != std::string::npos; pos = s->find(dir)) s->replace(pos, dir.size(), "DIR");
      }
    }
    CHECK(left == right);
  }
}

TEST_CASE("summarize reproduces the fit tables from the run directory") {
  const fs::path fitdir = kRoot / "fit_a";
  const fs::path out = kRoot / "resummary";
  REQUIRE(run("summarize --run-dir " + fitdir.string() + " --out-dir " + out.string()) == 0);
  CHECK(body(out / "scalar_summary.csv") == body(fitdir / "scalar_summary.csv"));
  CHECK(body(out / "band_summary.csv") == body(fitdir / "band_summary.csv"));
  CHECK(body(out / "waic.csv") == body(fitdir / "waic.csv"));
  REQUIRE(run("summarize --run-dir " + fitdir.string() + " --out-dir " + out.string() + " --eval-points 11") == 0);
  // 11 points for one tau plus the column header.
  const std::string bands = body(out / "band_summary.csv");
  CHECK(std::count(bands.begin(), bands.end(), '\n') == 12);
}

TEST_CASE("flags override the configuration file") {
  const std::string cfg = (kRoot / "fit.yaml").string();
  std::ofstream(cfg) << "model:\n  estimator: naive\n  tau0: [0.25]\nmcmc:\n  iters: 900\n  burnin: 100\n";
  const fs::path out = kRoot / "override";
  REQUIRE(run(fit_args(out) + " --config " + cfg) == 0);
  const auto log = nlohmann::json::parse(slurp(out / "run_log.json"));
  CHECK(log["config"]["mcmc"]["iters"] == 400);
  CHECK(log["config"]["model"]["estimator"] == "naive");
  CHECK(log["config"]["model"]["tau0"] == nlohmann::json::array({0.5}));
}

TEST_CASE("validation problems exit with code 2") {
  const fs::path& d = dataset();
  CHECK(run(fit_args(kRoot / "bad") + " --tau 1.5") == 2);
  CHECK(run("fit --functional " + (kRoot / "missing.csv").string() + " --scalar " + (d / "scalar.csv").string()) == 2);
  const std::string cfg = (kRoot / "typo.yaml").string();
  std::ofstream(cfg) << "mcmc:\n  iterations: 10\n";
  CHECK(run(fit_args(kRoot / "bad") + " --config " + cfg) == 2);
  CHECK(slurp(kRoot / "last.log").find("mcmc.iterations") != std::string::npos);
  CHECK(run(fit_args(kRoot / "bad") + " --estimator fbq --iters 50 --burnin 60") == 2);
  CHECK(run("simulate --case 7 --out-dir " + (kRoot / "bad").string()) == 2);
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("divergence exits with code 3 and keeps partial output") {
  const fs::path& d = dataset();
  const fs::path bad = kRoot / "overflow";
  fs::create_directories(bad);
  fs::copy_file(d / "functional.csv", bad / "functional.csv", fs::copy_options::overwrite_existing);
  std::istringstream in(slurp(d / "scalar.csv"));
  std::ofstream out(bad / "scalar.csv");
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (row > 0 && row % 2 == 0) {
      const auto comma = line.find(',');
      const auto next = line.find(',', comma + 1);
      line = line.substr(0, comma + 1) + "1.7976931348623157e308" + line.substr(next);
    }
    ++row;
    out << line << "\n";
  }
  out.close();
  const fs::path res = kRoot / "overflow_out";
  const int code = run("fit --functional " + (bad / "functional.csv").string() + " --scalar " +
                       (bad / "scalar.csv").string() + " --iters 200 --burnin 50 --tau 0.5 --out-dir " + res.string());
  CHECK(code == 3);
  const auto log = nlohmann::json::parse(slurp(res / "run_log.json"));
  CHECK(log["fits"][0]["status"] == "diverged");
  CHECK(log["exit_code"] == 3);
  CHECK(fs::exists(res / "scalar_summary.csv"));
}

TEST_CASE("preprocessing filters invalid days before downsampling") {
  const fs::path& d = dataset();
  const fs::path dir = kRoot / "flagged";
  fs::create_directories(dir);
  std::istringstream in(slurp(d / "functional.csv"));
  std::ofstream out(dir / "functional.csv");
  std::string line;
  std::getline(in, line);
  out << line << ",invalid\n";
  // Subject 1 loses its first replicate.
  while (std::getline(in, line)) out << line << (line.rfind("1,1,", 0) == 0 ? ",1\n" : ",0\n");
  out.close();
  const std::string cfg = (kRoot / "pre.yaml").string();
  std::ofstream(cfg) << "preprocess:\n  enabled: true\n  min_valid_days: 2\n  max_invalid_minutes: 5\n"
                        "  downsample: 2\n";
  const fs::path res = kRoot / "flagged_out";
  REQUIRE(run("fit --functional " + (dir / "functional.csv").string() + " --scalar " + (d / "scalar.csv").string() +
              " --iters 300 --burnin 100 --tau 0.5 --config " + cfg + " --out-dir " + res.string()) == 0);
  const auto log = nlohmann::json::parse(slurp(res / "run_log.json"));
  CHECK(log["preprocess"]["dropped_days"] == 1);
  CHECK(log["data"]["n"] == 80);
  CHECK(log["data"]["J"] == 2);
  CHECK(log["data"]["T"] == 15);
}

TEST_CASE("simulate runs a reduced study") {
  const std::string cfg = (kRoot / "study.yaml").string();
  std::ofstream(cfg) << "simulate:\n  T: 24\n  scenario_values: [2]\n  estimators: [fast, naive]\n"
                        "model:\n  num_basis: 6\n  tau0: [0.5]\n";
  const fs::path out = kRoot / "study";
  REQUIRE(run("simulate --case 4 --replicates 2 --iters 60 --burnin 20 --config " + cfg + " --out-dir " +
              out.string()) == 0);
  const std::string table = body(out / "case4.csv");
  CHECK(table.rfind("case,estimator,tau,n,J,sigma_u,abias2,avar,mise\n", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
  CHECK(fs::exists(out / "case4.json"));
}
