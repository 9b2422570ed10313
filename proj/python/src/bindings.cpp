#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>

#include "kmf/config.hpp"
#include "kmf/csv.hpp"
#include "kmf/error.hpp"
#include "kmf/experiments.hpp"
#include "kmf/parallel.hpp"
#include "kmf/rates.hpp"
#include "kmf/transport.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array table_array(const kmf::Table& t) {
  Array out({t.rows.size(), t.columns.size()});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.columns.size(); ++j) m(i, j) = t.rows[i][j];
  }
  return out;
}

Array coordinates(const std::vector<double>& flat, std::size_t n, int dim) {
  Array out({n, static_cast<std::size_t>(dim)});
  std::copy(flat.begin(), flat.end(), out.mutable_data());
  return out;
}

// Accepts (n,) or (n, dim).
std::vector<double> flatten(const Array& a, std::size_t& n, int& dim) {
  if (a.ndim() == 1) {
    n = static_cast<std::size_t>(a.shape(0));
    dim = 1;
  } else if (a.ndim() == 2) {
    n = static_cast<std::size_t>(a.shape(0));
    dim = static_cast<int>(a.shape(1));
  } else {
    throw std::invalid_argument("expected an array of shape (n,) or (n, dim)");
  }
  return std::vector<double>(a.data(), a.data() + a.size());
}

kmf::PointCloud cloud(const Array& x, const Array& v) {
  kmf::PointCloud c;
  std::size_t nv = 0;
  int dv = 0;
  c.x = flatten(x, c.n, c.dim);
  c.v = flatten(v, nv, dv);
  if (nv != c.n || dv != c.dim) throw std::invalid_argument("x and v differ in shape");
  return c;
}

std::string value_text(const py::handle& value) {
  if (py::isinstance<py::bool_>(value)) return value.cast<bool>() ? "true" : "false";
  if (py::isinstance<py::str>(value)) return value.cast<std::string>();
  if (py::isinstance<py::float_>(value)) return kmf::format_double(value.cast<double>());
  if (py::isinstance<py::list>(value) || py::isinstance<py::tuple>(value)) {
    std::string s;
    for (const py::handle item : value) s += (s.empty() ? "" : ",") + value_text(item);
    return s;
  }
  return py::str(value).cast<std::string>();
}

kmf::RunConfig resolve(const std::string& experiment, const py::dict& overrides) {
  kmf::KeyValues flags;
  for (const auto& [key, value] : overrides) {
    flags.emplace_back(py::str(key).cast<std::string>(), value_text(value));
  }
  return kmf::resolve_config(experiment, {}, flags);
}

py::dict rate_dict(const kmf::RateReport& r) {
  py::dict d;
  d["eta"] = r.eta;
  d["eta0"] = r.eta0;
  d["b_interval"] = py::make_tuple(r.b_interval.lo, r.b_interval.hi);
  d["b"] = r.b_star;
  d["eps"] = r.eps_star;
  d["c1"] = r.c1;
  d["c2"] = r.c2;
  d["rate"] = r.rate_C;
  d["lambda_min"] = r.lambda_min;
  d["lambda_max"] = r.lambda_max;
  d["cprime"] = r.equivalence_Cprime;
  d["variant"] = std::string(kmf::to_string(r.variant));
  d["mode"] = std::string(kmf::to_string(r.mode));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the kmf package";

  auto base = py::register_exception<kmf::Error>(m, "KmfError", PyExc_RuntimeError);
  py::register_exception<kmf::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<kmf::InadmissibleError>(m, "InadmissibleError", base.ptr());
  py::register_exception<kmf::BlowUpError>(m, "BlowUpError", base.ptr());

  m.def(
      "eta0",
      [](double alpha, double alpha_prime, double beta, const std::string& variant) {
        kmf::Coefficients c;
        c.alpha = alpha;
        c.alpha_prime = alpha_prime;
        c.beta = beta;
        return kmf::eta0(c, kmf::rate_variant_from_string(variant));
      },
      py::arg("alpha") = 1.0, py::arg("alpha_prime") = 1.0, py::arg("beta") = 1.0,
      py::arg("variant") = "contraction");

  m.def(
      "contraction_rate",
      [](double eta, double alpha, double alpha_prime, double beta, const std::string& variant,
         const std::string& mode) {
        kmf::Coefficients c;
        c.alpha = alpha;
        c.alpha_prime = alpha_prime;
        c.beta = beta;
        return rate_dict(kmf::contraction_rate(c, eta, kmf::rate_variant_from_string(variant),
                                               kmf::search_mode_from_string(mode)));
      },
      py::arg("eta") = 0.0, py::arg("alpha") = 1.0, py::arg("alpha_prime") = 1.0,
      py::arg("beta") = 1.0, py::arg("variant") = "contraction", py::arg("mode") = "paper");

  m.def(
      "w2",
      [](const Array& xa, const Array& va, const Array& xb, const Array& vb, const std::string& metric,
         double b, double beta, bool entropic, double eps, std::size_t max_iter, double tol) {
        const kmf::PointCloud a = cloud(xa, va);
        const kmf::PointCloud c = cloud(xb, vb);
        kmf::GroundMetric g = kmf::GroundMetric::euclidean();
        if (metric == "qform") {
          g = kmf::GroundMetric::qform(kmf::QForm(b, beta));
        } else if (metric != "euclidean") {
          throw std::invalid_argument("metric must be 'euclidean' or 'qform'");
        }
        py::dict d;
        if (entropic) {
          const kmf::EntropicResult r = kmf::w2_entropic(a, c, g, eps, max_iter, tol);
          d["distance"] = r.distance;
          d["converged"] = r.converged;
          d["iterations"] = r.iterations;
          d["marginal_error"] = r.marginal_error;
          Array plan({a.n, a.n});
          std::copy(r.plan.coupling.begin(), r.plan.coupling.end(), plan.mutable_data());
          d["plan"] = plan;
        } else {
          const kmf::TransportResult r = kmf::w2_exact(a, c, g);
          d["distance"] = r.distance;
          d["permutation"] = r.plan.permutation;
        }
        return d;
      },
      py::arg("xa"), py::arg("va"), py::arg("xb"), py::arg("vb"), py::arg("metric") = "euclidean",
      py::arg("b") = 2.0, py::arg("beta") = 1.0, py::arg("entropic") = false, py::arg("eps") = 0.01,
      py::arg("max_iter") = 10000, py::arg("tol") = 1e-9);

  m.def("experiment_names", &kmf::experiment_names);

  m.def(
      "config_text",
      [](const std::string& experiment, const py::dict& overrides) {
        return kmf::resolved_config_text(resolve(experiment, overrides));
      },
      py::arg("experiment"), py::arg("overrides") = py::dict());

  m.def(
      "run",
      [](const std::string& experiment, const py::dict& overrides) {
        const kmf::RunConfig cfg = resolve(experiment, overrides);
        kmf::ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = kmf::run_experiment(experiment, cfg.exp);
        }
        py::list verdict;
        for (const kmf::VerdictRow& row : r.verdict) {
          py::dict v;
          v["experiment"] = row.experiment;
          v["theory_value"] = row.theory_value;
          v["measured"] = row.measured;
          v["threshold"] = row.threshold;
          v["pass"] = row.pass;
          verdict.append(v);
        }
        py::dict d;
        d["name"] = r.name;
        d["status"] = r.status;
        d["passed"] = r.passed();
        d["columns"] = r.series.columns;
        d["series"] = table_array(r.series);
        d["verdict"] = verdict;
        d["notes"] = r.notes;
        return d;
      },
      py::arg("experiment"), py::arg("overrides") = py::dict());

  m.def(
      "simulate",
      [](const py::dict& overrides) {
        const kmf::RunConfig cfg = resolve("simulate", overrides);
        kmf::SimulationResult s;
        {
          py::gil_scoped_release release;
          s = kmf::run_simulation(cfg.exp);
        }
        py::dict d;
        d["columns"] = s.series.columns;
        d["series"] = table_array(s.series);
        d["t"] = s.final_state.t;
        d["x"] = coordinates(s.final_state.x, s.final_state.n, s.final_state.dim);
        d["v"] = coordinates(s.final_state.v, s.final_state.n, s.final_state.dim);
        return d;
      },
      py::arg("overrides") = py::dict());

  m.def("set_threads", &kmf::set_thread_count, py::arg("threads"),
        "Worker threads for particle loops; 0 restores the default. Results do not depend on it.");
  m.def("thread_count", &kmf::thread_count);
}
