#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rem/dataset.hpp"
#include "rem/evaluate.hpp"
#include "rem/lnn.hpp"
#include "rem/mechanisms.hpp"
#include "rem/privacy.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Names = std::vector<std::string>;
using MarginalDict = std::map<Names, std::vector<double>>;

std::vector<rem::Clique> to_workload(const rem::Domain& domain,
                                     const std::vector<Names>& cliques) {
  std::vector<rem::Clique> out;
  for (const Names& names : cliques) out.push_back(domain.clique_of(names));
  return out;
}

py::dict to_dict(const rem::Domain& domain,
                 const std::map<rem::Clique, rem::MarginalTable>& marginals) {
  py::dict out;
  for (const auto& [gamma, table] : marginals) {
    out[py::tuple(py::cast(domain.names_of(gamma)))] = table.values;
  }
  return out;
}

std::map<rem::Clique, rem::MarginalTable> from_dict(const rem::Domain& domain,
                                                    const MarginalDict& tables) {
  std::map<rem::Clique, rem::MarginalTable> out;
  for (const auto& [names, values] : tables) {
    const rem::Clique gamma = domain.clique_of(names);
    out.emplace(gamma, rem::MarginalTable{gamma, values});
  }
  return out;
}

py::dict run_to_dict(const rem::Domain& domain, const rem::MechanismRun& run) {
  py::dict out;
  out["marginals"] = to_dict(domain, run.recon.marginals);
  out["rho"] = run.rho;
  out["archive"] = run.archive.to_json(domain).dump();
  out["manifest"] = run.manifest.dump();
  py::list spends;
  for (const rem::Spend& spend : run.spends) {
    spends.append(py::make_tuple(spend.label, spend.rho));
  }
  out["spends"] = std::move(spends);
  py::list selected;
  for (const rem::Clique& gamma : run.selected) {
    selected.append(py::tuple(py::cast(domain.names_of(gamma))));
  }
  out["selected"] = std::move(selected);
  return out;
}

rem::LnnConfig lnn_config(const std::string& preset, int max_rounds, double step, double eta,
                          double wall_seconds) {
  rem::LnnConfig config = preset == "mwem" ? rem::LnnConfig::mwem_style()
                                           : rem::LnnConfig::residual_style();
  if (max_rounds > 0) config.max_rounds = max_rounds;
  if (step > 0.0) config.step = step;
  if (eta > 0.0) config.eta = eta;
  if (wall_seconds > 0.0) config.wall_clock_seconds = wall_seconds;
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Residual-based reconstruction of marginal queries under zCDP";

  const py::exception<rem::Error> base = py::register_exception<rem::Error>(m, "Error");
  py::register_exception<rem::BudgetError>(m, "BudgetError", base.ptr());

  py::class_<rem::Domain>(m, "Domain")
      .def_static("from_json",
                  [](const std::string& text) { return rem::Domain::from_json(json::parse(text)); })
      .def_static("load", &rem::Domain::load)
      .def("save", &rem::Domain::save)
      .def("to_json", [](const rem::Domain& d) { return d.to_json().dump(); })
      .def_property_readonly("dim", &rem::Domain::dim)
      .def_property_readonly("universe_size", &rem::Domain::universe_size)
      .def("name", &rem::Domain::name)
      .def("size", &rem::Domain::size)
      .def("marginal_len",
           [](const rem::Domain& d, const Names& names) {
             return d.marginal_len(d.clique_of(names));
           })
      .def("all_k_way", [](const rem::Domain& d, int k) {
        py::list out;
        for (const rem::Clique& c : rem::all_k_way(d, k)) {
          out.append(py::tuple(py::cast(d.names_of(c))));
        }
        return out;
      });

  py::class_<rem::RecordSet>(m, "RecordSet")
      .def_property_readonly("domain", &rem::RecordSet::domain)
      .def("__len__", &rem::RecordSet::size)
      .def("exact_marginal", [](const rem::RecordSet& data, const Names& names) {
        return data.exact_marginal(data.domain().clique_of(names)).values;
      });

  m.def(
      "load_csv",
      [](const std::string& path, const std::optional<rem::Domain>& domain) {
        return rem::load_csv(path, domain);
      },
      py::arg("path"), py::arg("domain") = std::nullopt);
  m.def("save_csv", &rem::save_csv, py::arg("data"), py::arg("path"));
  m.def("synthetic_titanic_shaped", &rem::synthetic_titanic_shaped, py::arg("seed"),
        py::arg("rows") = 1304);

  m.def("solve_rho", &rem::solve_rho, py::arg("eps"), py::arg("delta"));
  m.def("zcdp_to_eps_delta", &rem::zcdp_to_eps_delta, py::arg("rho"), py::arg("eps"));

  m.def(
      "run_residualplanner_style",
      [](const rem::RecordSet& data, const std::vector<Names>& workload, double eps,
         double delta, bool noiseless, std::uint64_t seed,
         const std::map<Names, double>& scales) {
        rem::RpStyleConfig config;
        config.workload = to_workload(data.domain(), workload);
        config.eps = eps;
        config.delta = delta;
        config.noiseless = noiseless;
        config.seed = seed;
        for (const auto& [names, sigma2] : scales) {
          config.sigma2_override[data.domain().clique_of(names)] = sigma2;
        }
        return run_to_dict(data.domain(), rem::run_residualplanner_style(data, config));
      },
      py::arg("data"), py::arg("workload"), py::arg("eps") = 1.0, py::arg("delta") = 1e-9,
      py::arg("noiseless") = false, py::arg("seed") = 0,
      py::arg("scales") = std::map<Names, double>{});

  m.def(
      "run_scalable_mwem",
      [](const rem::RecordSet& data, const std::vector<Names>& workload, int rounds,
         double eps, double delta, double alpha, std::uint64_t seed, bool audit) {
        rem::MwemConfig config;
        config.workload = to_workload(data.domain(), workload);
        config.rounds = rounds;
        config.eps = eps;
        config.delta = delta;
        config.alpha = alpha;
        config.seed = seed;
        config.audit = audit;
        return run_to_dict(data.domain(), rem::run_scalable_mwem(data, config));
      },
      py::arg("data"), py::arg("workload"), py::arg("rounds") = 30, py::arg("eps") = 1.0,
      py::arg("delta") = 1e-9, py::arg("alpha") = 0.1, py::arg("seed") = 0,
      py::arg("audit") = false);

  m.def(
      "replay",
      [](const rem::Domain& domain, const std::string& archive_json,
         const std::vector<Names>& workload) {
        const rem::MeasurementArchive archive =
            rem::MeasurementArchive::from_json(domain, json::parse(archive_json));
        const rem::OperatorCache ops(domain);
        const rem::Reconstruction recon = rem::reconstruct_workload(
            ops, to_workload(domain, workload), rem::group_by_residual(ops, archive));
        return to_dict(domain, recon.marginals);
      },
      py::arg("domain"), py::arg("archive_json"), py::arg("workload"));

  m.def(
      "grem_lnn",
      [](const rem::Domain& domain, const std::string& archive_json,
         const std::vector<Names>& workload, const std::string& preset, int max_rounds,
         double step, double eta, double wall_seconds) {
        const rem::MeasurementArchive archive =
            rem::MeasurementArchive::from_json(domain, json::parse(archive_json));
        const rem::OperatorCache ops(domain);
        const rem::LnnResult result = rem::grem_lnn(
            ops, to_workload(domain, workload), rem::group_by_residual(ops, archive),
            lnn_config(preset, max_rounds, step, eta, wall_seconds));
        py::dict out;
        out["marginals"] = to_dict(domain, result.recon.marginals);
        out["report"] = result.report.to_json().dump();
        out["converged"] = result.report.converged;
        return out;
      },
      py::arg("domain"), py::arg("archive_json"), py::arg("workload"),
      py::arg("preset") = "residual", py::arg("max_rounds") = 0, py::arg("step") = 0.0,
      py::arg("eta") = 0.0, py::arg("wall_seconds") = 0.0);

  m.def("trunc", [](std::vector<double> values) {
    rem::MarginalTable table{{}, std::move(values)};
    return rem::trunc(std::move(table)).values;
  });
  m.def("trunc_rescale", [](std::vector<double> values) {
    rem::MarginalTable table{{}, std::move(values)};
    return rem::trunc_rescale(std::move(table)).values;
  });

  m.def(
      "workload_error",
      [](const rem::Domain& domain, const MarginalDict& truth, const MarginalDict& estimate,
         int norm) {
        return rem::workload_error(from_dict(domain, truth), from_dict(domain, estimate),
                                   norm);
      },
      py::arg("domain"), py::arg("truth"), py::arg("estimate"), py::arg("norm") = 1);
}
