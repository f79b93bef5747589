#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sofqr/basis.hpp"
#include "sofqr/calibration.hpp"
#include "sofqr/gal.hpp"
#include "sofqr/io.hpp"
#include "sofqr/numerics.hpp"
#include "sofqr/simlab.hpp"
#include "sofqr/summary.hpp"

namespace py = pybind11;
using namespace sofqr;

namespace {

Eigen::VectorXd gal_draws(double tau0, double gamma, double sigma, int size, std::uint64_t seed) {
  const GalParams g(tau0, gamma, sigma);
  Rng rng(seed);
  Eigen::VectorXd out(size);
  for (int i = 0; i < size; ++i) out[i] = gal_sample(g, rng);
  return out;
}

FunctionalDataset simulate_dataset(const SimConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  return generate_case(config, rng);
}

}  // namespace

PYBIND11_MODULE(_sofqr, m) {
  m.doc() = "Bayesian scalar-on-function quantile regression with measurement-error correction";
  m.attr("__version__") = SOFQR_VERSION;

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  py::class_<GammaBounds>(m, "GammaBounds")
      .def_readonly("lower", &GammaBounds::lower)
      .def_readonly("upper", &GammaBounds::upper);
  m.def("gamma_bounds", &gamma_bounds, py::arg("tau0"));
  m.def("gal_logpdf",
        [](const Eigen::VectorXd& x, double tau0, double gamma, double sigma) {
          const GalParams g(tau0, gamma, sigma);
          return Eigen::VectorXd(x.unaryExpr([&](double v) { return gal_logpdf(v, g); }));
        },
        py::arg("x"), py::arg("tau0"), py::arg("gamma") = 0.0, py::arg("sigma") = 1.0);
  m.def("gal_sample", &gal_draws, py::arg("tau0"), py::arg("gamma") = 0.0, py::arg("sigma") = 1.0,
        py::arg("size") = 1, py::arg("seed") = 1);

  py::class_<BasisSystem>(m, "BasisSystem")
      .def(py::init<Eigen::VectorXd, int, int>(), py::arg("grid"), py::arg("num_basis"), py::arg("degree") = 3)
      .def_property_readonly("grid", &BasisSystem::grid)
      .def_property_readonly("size", &BasisSystem::size)
      .def_property_readonly("basis_matrix", &BasisSystem::basis_matrix)
      .def_property_readonly("penalty", &BasisSystem::penalty)
      .def("evaluate", &BasisSystem::evaluate, py::arg("t"));
  m.def("default_num_basis", &default_num_basis, py::arg("grid_size"), py::arg("degree") = 3);

  py::class_<FunctionalDataset>(m, "FunctionalDataset")
      .def(py::init<>())
      .def_readwrite("grid", &FunctionalDataset::grid)
      .def_readwrite("W", &FunctionalDataset::W)
      .def_readwrite("Z", &FunctionalDataset::Z)
      .def_readwrite("Y", &FunctionalDataset::Y)
      .def_readwrite("X_true", &FunctionalDataset::X_true)
      .def_readwrite("subject_ids", &FunctionalDataset::subject_ids)
      .def_readwrite("covariate_names", &FunctionalDataset::covariate_names)
      .def_property_readonly("n", &FunctionalDataset::n)
      .def_property_readonly("J", &FunctionalDataset::J)
      .def_property_readonly("T", &FunctionalDataset::T)
      .def_property_readonly("p", &FunctionalDataset::p)
      .def("validate", &FunctionalDataset::validate)
      .def("replicate_means", &FunctionalDataset::replicate_means);

  m.def("ingest_long_csv", &ingest_long_csv, py::arg("functional_path"), py::arg("scalar_path"));
  m.def("export_long_csv", &export_long_csv, py::arg("data"), py::arg("functional_path"), py::arg("scalar_path"));
  m.def("downsample", &downsample, py::arg("data"), py::arg("factor"));

  m.def("blup_scores", &blup_scores, py::arg("wbar"), py::arg("mu_x"), py::arg("sigma_x"), py::arg("sigma_u"),
        py::arg("J"));

  py::enum_<Estimator>(m, "Estimator")
      .value("FBQ", Estimator::FBQ)
      .value("Fast", Estimator::Fast)
      .value("Naive", Estimator::Naive);

  py::class_<McmcConfig>(m, "McmcConfig")
      .def(py::init<>())
      .def_readwrite("iters", &McmcConfig::iters)
      .def_readwrite("burnin", &McmcConfig::burnin)
      .def_readwrite("thin", &McmcConfig::thin)
      .def_readwrite("chains", &McmcConfig::chains)
      .def_readwrite("seed", &McmcConfig::seed)
      .def_readwrite("store_loglik", &McmcConfig::store_loglik)
      .def_readwrite("target_accept", &McmcConfig::target_accept);

  py::class_<PriorConfig>(m, "PriorConfig")
      .def(py::init<>())
      .def_readwrite("coef_prior_var", &PriorConfig::coef_prior_var)
      .def_readwrite("penalty_ridge", &PriorConfig::penalty_ridge)
      .def_readwrite("theta_rate", &PriorConfig::theta_rate)
      .def_readwrite("K_eps", &PriorConfig::K_eps)
      .def_readwrite("alpha_eps", &PriorConfig::alpha_eps)
      .def_readwrite("sigma_shape", &PriorConfig::sigma_shape)
      .def_readwrite("sigma_rate", &PriorConfig::sigma_rate)
      .def_readwrite("fixed_gamma", &PriorConfig::fixed_gamma)
      .def_readwrite("K_u", &PriorConfig::K_u)
      .def_readwrite("K_x", &PriorConfig::K_x);

  py::class_<PosteriorDraws>(m, "PosteriorDraws")
      .def_readonly("tau0", &PosteriorDraws::tau0)
      .def_readonly("estimator", &PosteriorDraws::estimator)
      .def_readonly("beta0", &PosteriorDraws::beta0)
      .def_readonly("beta_z", &PosteriorDraws::beta_z)
      .def_readonly("phi", &PosteriorDraws::phi)
      .def_readonly("theta2", &PosteriorDraws::theta2)
      .def_readonly("gal_weights", &PosteriorDraws::gal_weights)
      .def_readonly("gal_gamma", &PosteriorDraws::gal_gamma)
      .def_readonly("gal_sigma", &PosteriorDraws::gal_sigma)
      .def_readonly("loglik", &PosteriorDraws::loglik)
      .def_readonly("mh_acceptance", &PosteriorDraws::mh_acceptance)
      .def_property_readonly("draws", &PosteriorDraws::draws);

  m.def("fit", &fit, py::arg("data"), py::arg("basis"), py::arg("priors") = PriorConfig{}, py::arg("tau0") = 0.5,
        py::arg("estimator") = Estimator::Fast, py::arg("mcmc") = McmcConfig{},
        py::call_guard<py::gil_scoped_release>());
  m.def("waic", py::overload_cast<const PosteriorDraws&>(&waic), py::arg("draws"));
  m.def("posterior_mean_phi", &posterior_mean_phi, py::arg("draws"));

  py::class_<ScalarSummary>(m, "ScalarSummary")
      .def_readonly("term", &ScalarSummary::term)
      .def_readonly("tau", &ScalarSummary::tau)
      .def_readonly("mean", &ScalarSummary::mean)
      .def_readonly("lower", &ScalarSummary::lower)
      .def_readonly("upper", &ScalarSummary::upper);
  py::class_<BandPoint>(m, "BandPoint")
      .def_readonly("tau", &BandPoint::tau)
      .def_readonly("t", &BandPoint::t)
      .def_readonly("mean", &BandPoint::mean)
      .def_readonly("lower", &BandPoint::lower)
      .def_readonly("upper", &BandPoint::upper);
  py::class_<SummaryTables>(m, "SummaryTables")
      .def_readonly("scalars", &SummaryTables::scalars)
      .def_readonly("bands", &SummaryTables::bands)
      .def_readonly("waic", &SummaryTables::waic)
      .def_readonly("has_waic", &SummaryTables::has_waic)
      .def("scalar_csv", [](const SummaryTables& s) { return scalar_table_csv(s.scalars); })
      .def("band_csv", [](const SummaryTables& s) { return band_table_csv(s.bands); });
  m.def("summarize", &summarize, py::arg("draws"), py::arg("basis"), py::arg("eval_grid"), py::arg("level") = 0.95,
        py::arg("covariate_names") = std::vector<std::string>{});

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("n", &SimConfig::n)
      .def_readwrite("J", &SimConfig::J)
      .def_readwrite("T", &SimConfig::T)
      .def_readwrite("sigma_x", &SimConfig::sigma_x)
      .def_readwrite("rho_x", &SimConfig::rho_x)
      .def_readwrite("sigma_u", &SimConfig::sigma_u)
      .def_readwrite("rho_u", &SimConfig::rho_u)
      .def_readwrite("beta_z_true", &SimConfig::beta_z_true)
      .def("validate", &SimConfig::validate);
  m.def("case_config", &case_config, py::arg("case_id"), py::arg("scenario_value"), py::arg("base") = SimConfig{});
  m.def("simulate_dataset", &simulate_dataset, py::arg("config"), py::arg("seed") = 1);
  m.def("skew_t_sample",
        [](double xi, double dof, double slant, int size, std::uint64_t seed) {
          Rng rng(seed);
          Eigen::VectorXd out(size);
          for (int i = 0; i < size; ++i) out[i] = skew_t_sample(xi, dof, slant, rng);
          return out;
        },
        py::arg("xi"), py::arg("dof"), py::arg("slant"), py::arg("size") = 1, py::arg("seed") = 1);
}
