#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "semfx/cli.hpp"
#include "semfx/effects.hpp"
#include "semfx/fit.hpp"
#include "semfx/inference.hpp"
#include "semfx/sim.hpp"

namespace py = pybind11;
using namespace semfx;

namespace {

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::degenerate_input: return "degenerate_input";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::non_convergence: return "non_convergence";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::singular_information: return "singular_information";
    case ErrorKind::ill_conditioned_quantile: return "ill_conditioned_quantile";
    case ErrorKind::config: return "config";
    case ErrorKind::parse: return "parse";
  }
  return "unknown";
}

struct Options {
  std::optional<std::pair<double, double>> support;
  bool discrete = false;
  int knots = -1;
  int quad_nodes = -1;
  double tol = 1e-6;
  int max_iter = 200;
};

Dataset make_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Options& o,
                     std::vector<std::string> names) {
  if (x.rows() != y.size()) throw Error(ErrorKind::config, "x and y have different numbers of rows");
  const int quad = o.quad_nodes > 0 ? o.quad_nodes : 201;
  Support s;
  if (o.discrete) {
    if (o.support) throw Error(ErrorKind::config, "support and discrete are exclusive");
    std::set<double> lv(y.data(), y.data() + y.size());
    if (lv.size() < 2) throw Error(ErrorKind::degenerate_input, "discrete response has a single level");
    s = Support::discrete(std::vector<double>(lv.begin(), lv.end()));
  } else if (o.support) {
    s = Support::continuous(o.support->first, o.support->second, quad);
  } else {
    s = padded_support(y, 0.05, quad);
  }
  if (names.empty())
    for (long k = 0; k < x.cols(); ++k) names.push_back("x" + std::to_string(k + 1));
  return Dataset::make(x, y, s, std::move(names));
}

FitConfig make_config(const Options& o) {
  FitConfig f;
  f.tol = o.tol;
  f.max_iter = o.max_iter;
  f.interior_knots = o.knots;
  f.quad_nodes = o.quad_nodes;
  return f;
}

py::dict estimate_dict(const EffectEstimate& e) {
  py::dict d;
  d["names"] = e.names;
  d["estimate"] = e.point;
  d["se"] = e.se;
  d["ci_lo"] = e.ci_lo;
  d["ci_hi"] = e.ci_hi;
  d["p_value"] = e.p_value;
  if (e.kind == EffectEstimate::Kind::quantile) d["tau"] = e.tau;
  return d;
}

py::dict py_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names,
                const Options& o) {
  const Dataset d = make_dataset(x, y, o, names);
  const FittedModel m = fit(d, make_config(o));
  const SigmaBlocks b = sigma_blocks(m, d);
  const InfoCriteria ic = aic_bic(m);
  py::dict out;
  out["coefficients"] = estimate_dict(estimate_beta(m, d, b));
  out["gamma"] = m.gamma;
  out["loglik"] = m.loglik;
  out["iterations"] = m.iterations;
  out["grad_norm"] = m.grad_norm;
  out["df"] = ic.df;
  out["aic"] = ic.aic;
  out["bic"] = ic.bic;
  if (d.support.is_discrete()) out["levels"] = d.support.levels;
  else out["support"] = py::make_tuple(d.support.lo, d.support.hi);
  out["warnings"] = m.warnings;
  return out;
}

py::dict py_effects(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& names,
                    const Options& o, std::optional<std::vector<double>> tau) {
  const Dataset d = make_dataset(x, y, o, names);
  const FittedModel m = fit(d, make_config(o));
  const SigmaBlocks b = sigma_blocks(m, d);
  if (tau && d.support.is_discrete())
    throw Error(ErrorKind::unsupported, "quantile effects need a continuous response");
  if (!tau && !d.support.is_discrete()) tau = default_tau_grid();
  py::dict out;
  out["xi"] = estimate_dict(estimate_xi(m, d, b));
  py::list eta;
  if (tau)
    for (double t : *tau) eta.append(estimate_dict(estimate_eta(m, d, b, t)));
  out["eta"] = eta;
  return out;
}

std::string py_simulate(const std::string& scenario, std::optional<int> replicates, std::optional<long> n,
                        std::optional<std::uint64_t> seed, std::optional<std::vector<double>> tau,
                        std::vector<std::string> methods, int workers, bool keep_estimates) {
  SimulateConfig c;
  c.scenario = scenario;
  c.replicates = replicates;
  c.n = n;
  c.seed = seed;
  c.tau = std::move(tau);
  c.methods = std::move(methods);
  c.workers = workers;
  c.keep_estimates = keep_estimates;
  c.format = OutputFormat::json;
  py::gil_scoped_release release;
  return cmd_simulate(c);
}

py::tuple py_run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"semfx"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Semiparametric GLM fits with marginal and quantile effects";

  m.add_object("SemfxError",
                py::reinterpret_steal<py::object>(
                    PyErr_NewException("semfx._core.SemfxError", PyExc_RuntimeError, nullptr)));
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object type = py::module_::import("semfx._core").attr("SemfxError");
      py::object err = type(e.what());
      err.attr("kind") = kind_name(e.kind());
      PyErr_SetObject(type.ptr(), err.ptr());
    }
  });

  py::class_<Options>(m, "Options")
      .def(py::init<>())
      .def_readwrite("support", &Options::support)
      .def_readwrite("discrete", &Options::discrete)
      .def_readwrite("knots", &Options::knots)
      .def_readwrite("quad_nodes", &Options::quad_nodes)
      .def_readwrite("tol", &Options::tol)
      .def_readwrite("max_iter", &Options::max_iter);

  m.def("fit", &py_fit, py::arg("x"), py::arg("y"), py::arg("names"), py::arg("options"));
  m.def("effects", &py_effects, py::arg("x"), py::arg("y"), py::arg("names"), py::arg("options"),
        py::arg("tau") = py::none());
  m.def("simulate", &py_simulate, py::arg("scenario"), py::arg("replicates") = py::none(),
        py::arg("n") = py::none(), py::arg("seed") = py::none(), py::arg("tau") = py::none(),
        py::arg("methods") = std::vector<std::string>{"aMLE", "MLE"}, py::arg("workers") = 0,
        py::arg("keep_estimates") = false);
  m.def("run_cli", &py_run_cli, py::arg("args"));
  m.def("preset_names", &preset_names);
  m.def("default_tau_grid", &default_tau_grid);
}
