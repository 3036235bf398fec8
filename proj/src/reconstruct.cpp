#include "rem/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace rem {

void MeasurementArchive::add_marginal(const Clique& gamma, std::vector<double> values,
                                      double sigma2) {
  if (!(sigma2 > 0.0)) throw ConfigError("measurement scale must be positive");
  entries_.push_back(Entry{true, gamma, std::move(values), sigma2,
                           static_cast<int>(entries_.size())});
}

void MeasurementArchive::add_residual(const Clique& tau, std::vector<double> values,
                                      double sigma2) {
  if (!(sigma2 > 0.0)) throw ConfigError("measurement scale must be positive");
  entries_.push_back(Entry{false, tau, std::move(values), sigma2,
                           static_cast<int>(entries_.size())});
}

nlohmann::json MeasurementArchive::to_json(const Domain& domain) const {
  nlohmann::json out = nlohmann::json::array();
  for (const Entry& e : entries_) {
    out.push_back({{"kind", e.is_marginal ? "marginal" : "residual"},
                   {"clique", domain.names_of(e.clique)},
                   {"sigma2", e.sigma2},
                   {"values", e.values},
                   {"seq", e.seq}});
  }
  return out;
}

MeasurementArchive MeasurementArchive::from_json(const Domain& domain,
                                                 const nlohmann::json& j) {
  if (!j.is_array()) throw IngestError("measurement archive must be a json array");
  std::vector<Entry> entries;
  entries.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("kind") || !item.contains("clique") ||
        !item.contains("sigma2") || !item.contains("values") || !item.contains("seq")) {
      throw IngestError("archive record needs kind, clique, sigma2, values, seq");
    }
    Entry e;
    const std::string kind = item["kind"].get<std::string>();
    if (kind == "marginal") {
      e.is_marginal = true;
    } else if (kind == "residual") {
      e.is_marginal = false;
    } else {
      throw IngestError("archive record kind must be 'marginal' or 'residual'");
    }
    std::vector<std::string> names;
    for (const auto& n : item["clique"]) names.push_back(n.get<std::string>());
    e.clique = domain.clique_of(names);
    e.sigma2 = item["sigma2"].get<double>();
    if (!(e.sigma2 > 0.0)) throw IngestError("archive record has non-positive sigma2");
    e.values = item["values"].get<std::vector<double>>();
    const std::size_t expect = e.is_marginal ? domain.marginal_len(e.clique)
                                             : domain.residual_len(e.clique);
    if (e.values.size() != expect) {
      throw IngestError("archive record on " + clique_label(domain, e.clique) + " has " +
                        std::to_string(e.values.size()) + " values, expected " +
                        std::to_string(expect));
    }
    e.seq = item["seq"].get<int>();
    entries.push_back(std::move(e));
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.seq < b.seq; });
  MeasurementArchive archive;
  archive.entries_ = std::move(entries);
  return archive;
}

void MeasurementArchive::save(const Domain& domain, const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write archive file '" + path + "'");
  out << to_json(domain).dump(2) << '\n';
}

MeasurementArchive MeasurementArchive::load(const Domain& domain, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open archive file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError("archive file '" + path + "' is not valid json: " + e.what());
  }
  return from_json(domain, j);
}

ResidualVector grem_mle_combine(std::span<const ResidualMeasurement> measurements) {
  if (measurements.empty()) {
    throw ConfigError("grem_mle_combine: no measurements");
  }
  const Clique& tau = measurements.front().tau;
  const std::size_t len = measurements.front().values.size();
  ResidualVector out{tau, std::vector<double>(len, 0.0)};
  double total_weight = 0.0;
  for (const ResidualMeasurement& m : measurements) {
    if (m.tau != tau) throw CliqueError("grem_mle_combine: mixed cliques");
    if (m.values.size() != len) throw ShapeError("grem_mle_combine: mixed lengths");
    if (!(m.sigma2 > 0.0)) throw ConfigError("grem_mle_combine: non-positive scale");
    const double w = 1.0 / m.sigma2;
    total_weight += w;
    for (std::size_t i = 0; i < len; ++i) out.values[i] += w * m.values[i];
  }
  for (double& v : out.values) v /= total_weight;
  return out;
}

std::vector<ResidualMeasurement> decompose_marginal(const OperatorCache& ops,
                                                    const Clique& gamma,
                                                    std::span<const double> y_gamma,
                                                    double sigma2) {
  const Domain& domain = ops.domain();
  if (y_gamma.size() != domain.marginal_len(gamma)) {
    throw ShapeError("decompose_marginal: marginal on " + clique_label(domain, gamma) +
                     " has the wrong number of cells");
  }
  if (!(sigma2 > 0.0)) throw ConfigError("decompose_marginal: scale must be positive");
  std::vector<ResidualMeasurement> out;
  const std::string provenance = "marginal " + clique_label(domain, gamma);
  for (const Clique& tau : subsets_of(gamma)) {
    double scale = sigma2;
    std::size_t ti = 0;
    for (int attr : gamma) {
      if (ti < tau.size() && tau[ti] == attr) {
        ++ti;
      } else {
        scale *= static_cast<double>(domain.size(attr));
      }
    }
    out.push_back(ResidualMeasurement{tau, ops.extract(gamma, tau).apply(y_gamma), scale,
                                      provenance});
  }
  return out;
}

GroupedMeasurements group_by_residual(const OperatorCache& ops,
                                      const MeasurementArchive& archive) {
  GroupedMeasurements grouped;
  for (const auto& e : archive.entries()) {
    if (e.is_marginal) {
      for (ResidualMeasurement& m : decompose_marginal(ops, e.clique, e.values, e.sigma2)) {
        grouped[m.tau].push_back(std::move(m));
      }
    } else {
      grouped[e.clique].push_back(
          ResidualMeasurement{e.clique, e.values, e.sigma2, "residual"});
    }
  }
  return grouped;
}

Reconstruction reconstruct_workload(const OperatorCache& ops, std::span<const Clique> workload,
                                    const GroupedMeasurements& grouped) {
  const Domain& domain = ops.domain();
  std::map<Clique, ResidualVector> combined;
  std::map<Clique, double> weights;
  for (const auto& [tau, ms] : grouped) {
    combined.emplace(tau, grem_mle_combine(ms));
    double w = 0.0;
    for (const ResidualMeasurement& m : ms) w += 1.0 / m.sigma2;
    weights.emplace(tau, w);
  }

  Reconstruction recon;
  for (const Clique& gamma : workload) {
    domain.validate(gamma);
    if (recon.marginals.count(gamma)) continue;
    MarginalTable mu{gamma, std::vector<double>(domain.marginal_len(gamma), 0.0)};
    MarginalMeta meta;
    for (const Clique& tau : subsets_of(gamma)) {
      ++meta.expected;
      auto it = combined.find(tau);
      if (it == combined.end()) continue;
      ++meta.contributing;
      meta.weights.emplace(tau, weights.at(tau));
      const std::vector<double> part = ops.lift(gamma, tau).apply(it->second.values);
      for (std::size_t i = 0; i < mu.values.size(); ++i) mu.values[i] += part[i];
    }
    meta.partial = meta.contributing < meta.expected;
    recon.marginals.emplace(gamma, std::move(mu));
    recon.meta.emplace(gamma, std::move(meta));
  }
  return recon;
}

Reconstruction emp_reconstruct(const OperatorCache& ops, std::span<const Clique> workload,
                               std::span<const MarginalMeasurement> measured) {
  GroupedMeasurements grouped;
  for (const MarginalMeasurement& m : measured) {
    for (ResidualMeasurement& r : decompose_marginal(ops, m.gamma, m.values, m.sigma2)) {
      grouped[r.tau].push_back(std::move(r));
    }
  }
  return reconstruct_workload(ops, workload, grouped);
}

Reconstruction residualplanner_reconstruct(const OperatorCache& ops,
                                           std::span<const Clique> workload,
                                           std::span<const ResidualMeasurement> measured) {
  GroupedMeasurements grouped;
  for (const ResidualMeasurement& m : measured) {
    if (m.values.size() != ops.domain().residual_len(m.tau)) {
      throw ShapeError("residual measurement on " + clique_label(ops.domain(), m.tau) +
                       " has the wrong length");
    }
    grouped[m.tau].push_back(m);
  }
  return reconstruct_workload(ops, workload, grouped);
}

}  // namespace rem
