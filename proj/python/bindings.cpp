#include "ncbridge/bridge.hpp"
#include "ncbridge/errors.hpp"
#include "ncbridge/estimators.hpp"
#include "ncbridge/gmm.hpp"
#include "ncbridge/report.hpp"
#include "ncbridge/simulation.hpp"
#include "ncbridge/summary.hpp"
#include "ncbridge/timeseries.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <random>
#include <sstream>
#include <string>

namespace py = pybind11;
using namespace ncbridge;

namespace {

py::object as_dict(const std::string& json_text) {
  return py::module_::import("json").attr("loads")(json_text);
}

std::optional<HacConfig> hac_option(const std::optional<Index>& bandwidth) {
  if (!bandwidth) return std::nullopt;
  return HacConfig::fixed(*bandwidth);
}

MomentSpec resolve_bridge(const std::string& bridge, Index covariates) {
  if (bridge.find('=') != std::string::npos) return parse_moment_spec(bridge, covariates);
  BridgePair pair = builtin_bridges(bridge, covariates);
  std::optional<Contrast> contrast;
  if (parse_builtin_bridge(bridge) == BuiltinBridge::binary_interaction) contrast = Contrast{};
  return MomentSpec(std::move(pair.bridge), std::move(pair.instruments), contrast);
}

NCDataset make_dataset(Vector x, Vector y, Vector z, Vector w, std::optional<RowMatrix> v) {
  if (v) return NCDataset(std::move(x), std::move(y), std::move(z), std::move(w), std::move(*v));
  return NCDataset(std::move(x), std::move(y), std::move(z), std::move(w));
}

std::string exact(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  return out.str();
}

RiskDifferenceSummary summary_from(const py::object& source) {
  if (py::isinstance<py::str>(source)) return parse_summary(source.cast<std::string>());
  std::string text;
  for (auto item : source.cast<py::dict>()) {
    text += item.first.cast<std::string>() + " = ";
    if (py::isinstance<py::sequence>(item.second)) {
      const auto values = item.second.cast<std::vector<double>>();
      for (std::size_t j = 0; j < values.size(); ++j) text += (j ? ", " : "") + exact(values[j]);
    } else {
      text += exact(item.second.cast<double>());
    }
    text += "\n";
  }
  return parse_summary(text);
}

}  // namespace

PYBIND11_MODULE(_ncbridge, m) {
  m.doc() = "Negative control estimation under unmeasured confounding";
  m.attr("__version__") = "0.1.0";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", error);
  auto statistical = py::register_exception<StatisticalError>(m, "StatisticalError", error);
  py::register_exception<RankDeficientError>(m, "RankDeficientError", statistical);
  auto identification = py::register_exception<IdentificationError>(m, "IdentificationError", statistical);
  py::register_exception<WeakInstrumentError>(m, "WeakInstrumentError", identification);
  py::register_exception<SeparationError>(m, "SeparationError", statistical);
  py::register_exception<SingleClassError>(m, "SingleClassError", statistical);

  py::class_<NCDataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("x"), py::arg("y"), py::arg("z"), py::arg("w"),
           py::arg("v") = py::none())
      .def_property_readonly("n", &NCDataset::n)
      .def_property_readonly("p", &NCDataset::p)
      .def_property_readonly("x", &NCDataset::x)
      .def_property_readonly("y", &NCDataset::y)
      .def_property_readonly("z", &NCDataset::z)
      .def_property_readonly("w", &NCDataset::w)
      .def_property_readonly("v", &NCDataset::v)
      .def("__len__", &NCDataset::n);

  m.def(
      "read_csv",
      [](const std::string& path, const std::string& x, const std::string& y, const std::string& z,
         const std::string& w, const std::vector<std::string>& v, const std::vector<std::string>& sqrt) {
        ColumnMap cols{x, y, z, w, v, {sqrt.begin(), sqrt.end()}};
        return read_csv(path, cols);
      },
      py::arg("path"), py::arg("x") = "x", py::arg("y") = "y", py::arg("z") = "z", py::arg("w") = "w",
      py::arg("v") = std::vector<std::string>{}, py::arg("sqrt") = std::vector<std::string>{});

  m.def(
      "gmm",
      [](const NCDataset& data, const std::string& bridge, std::optional<std::string> parameter,
         std::optional<Index> hac) {
        const MomentSpec spec = resolve_bridge(bridge, data.p());
        GmmOptions opts;
        opts.hac = hac_option(hac);
        const GmmFit fit = gmm_fit(spec, data, opts);
        if (!parameter) parameter = spec.contrast() ? "ace" : "x";
        return as_dict(to_json(make_estimate_report(fit, *parameter)));
      },
      py::arg("data"), py::arg("bridge") = "binary_interaction", py::arg("parameter") = py::none(),
      py::arg("hac") = py::none(),
      "GMM fit with a builtin bridge name or a key = value bridge config; returns a report dict.");

  m.def(
      "nc_estimate", [](const NCDataset& d) { return as_dict(to_json(make_estimate_report(nc_estimate(d), "x", d.n()))); },
      py::arg("data"));
  m.def(
      "nc_tsls", [](const NCDataset& d) { return as_dict(to_json(make_estimate_report(nc_tsls(d), "x", d.n()))); },
      py::arg("data"));
  m.def(
      "iv_estimate",
      [](const NCDataset& d, const Controls& c) { return as_dict(to_json(make_estimate_report(iv_estimate(d, c), "x", d.n()))); },
      py::arg("data"), py::arg("controls") = Controls{});
  m.def(
      "ols_estimate",
      [](const NCDataset& d, const Controls& c) { return as_dict(to_json(make_estimate_report(ols_estimate(d, c), "x", d.n()))); },
      py::arg("data"), py::arg("controls") = Controls{});
  m.def(
      "ipw_estimate",
      [](const NCDataset& d, const Controls& c, std::uint64_t seed, int bootstrap) {
        std::mt19937_64 rng(seed);
        IpwOptions opts;
        opts.bootstrap = bootstrap;
        return as_dict(to_json(make_estimate_report(ipw_estimate(d, c, rng, opts), "x", d.n())));
      },
      py::arg("data"), py::arg("controls") = Controls{}, py::arg("seed") = 0, py::arg("bootstrap") = 200);

  m.def(
      "binary_nc_adjust",
      [](const py::object& summary, bool interaction) {
        return as_dict(to_json(binary_nc_adjust(summary_from(summary), interaction), interaction));
      },
      py::arg("summary"), py::arg("interaction") = true,
      "Adjustment from risk differences given as a dict or key = value text.");
  m.def(
      "positive_control_adjust",
      [](const py::object& summary, double a, double b) {
        const RiskDifferenceSummary s = summary_from(summary);
        const SensitivityResult r = positive_control_adjust(s, a, b);
        std::optional<double> threshold;
        if (r.gamma2 != 0.0) threshold = explain_away_threshold(s);
        return as_dict(to_json(r, threshold));
      },
      py::arg("summary"), py::arg("a") = 0.0, py::arg("b") = 0.0);
  m.def(
      "explain_away_threshold", [](const py::object& summary) { return explain_away_threshold(summary_from(summary)); },
      py::arg("summary"));

  m.def(
      "analyze_series",
      [](const Vector& x, const Vector& y, std::optional<RowMatrix> covariates, Index lag, Index exposure_lags,
         std::optional<Index> hac) {
        SeriesFrame frame;
        frame.x = x;
        frame.y = y;
        frame.covariates = covariates ? *covariates : RowMatrix(x.size(), 0);
        for (Index j = 0; j < frame.covariates.cols(); ++j) frame.covariate_names.push_back("v" + std::to_string(j));
        frame.trend = RowMatrix(x.size(), 0);
        frame.lag = lag;
        frame.exposure_lags = exposure_lags;
        const SeriesReport r = analyze_series(frame, hac ? HacConfig::fixed(*hac) : HacConfig::rule());
        return as_dict(to_json(r));
      },
      py::arg("x"), py::arg("y"), py::arg("covariates") = py::none(), py::arg("lag") = 1,
      py::arg("exposure_lags") = 1, py::arg("hac") = py::none());

  m.def(
      "run_study",
      [](const std::string& scenario, double eta, double xi, Index n, int reps, std::uint64_t seed,
         std::optional<std::vector<std::string>> estimators, int ipw_bootstrap, unsigned threads) {
        const DgpConfig cfg{parse_scenario(scenario), eta, xi, n};
        std::vector<Estimator> chosen;
        if (estimators) {
          for (const auto& e : *estimators) chosen.push_back(parse_estimator(e));
        } else {
          chosen = default_estimators(cfg.scenario);
        }
        SimulationReport r;
        {
          py::gil_scoped_release release;
          r = run_study(cfg, chosen, reps, seed, {ipw_bootstrap, threads});
        }
        return as_dict(to_json(r));
      },
      py::arg("scenario"), py::arg("eta") = 0.5, py::arg("xi") = 0.6, py::arg("n") = 500, py::arg("reps") = 100,
      py::arg("seed") = 1, py::arg("estimators") = py::none(), py::arg("ipw_bootstrap") = 200,
      py::arg("threads") = 0);

  m.def(
      "generate",
      [](const std::string& scenario, double eta, double xi, Index n, std::uint64_t seed) -> py::object {
        const DgpConfig cfg{parse_scenario(scenario), eta, xi, n};
        std::mt19937_64 rng(seed);
        auto data = generate(cfg, rng);
        if (auto* d = std::get_if<NCDataset>(&data)) return py::cast(std::move(*d));
        const auto& s = std::get<SeriesFrame>(data);
        py::dict out;
        out["x"] = s.x;
        out["y"] = s.y;
        out["v"] = Vector(s.covariates.col(0));
        return out;
      },
      py::arg("scenario"), py::arg("eta") = 0.5, py::arg("xi") = 0.6, py::arg("n") = 500, py::arg("seed") = 1);

  m.def(
      "counterexample_check",
      [](std::uint64_t seed, Index n) { return as_dict(to_json(counterexample_check(seed, n))); },
      py::arg("seed") = 20240101, py::arg("n") = 1000000);
}
