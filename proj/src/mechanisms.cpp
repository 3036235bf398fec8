#include "rem/mechanisms.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rem {

namespace {

nlohmann::json clique_names_json(const Domain& domain, std::span<const Clique> cliques) {
  nlohmann::json out = nlohmann::json::array();
  for (const Clique& c : cliques) out.push_back(domain.names_of(c));
  return out;
}

nlohmann::json spends_json(std::span<const Spend> spends) {
  nlohmann::json out = nlohmann::json::array();
  for (const Spend& s : spends) out.push_back({{"label", s.label}, {"rho", s.rho}});
  return out;
}

}  // namespace

MechanismRun run_residualplanner_style(const RecordSet& data, const RpStyleConfig& config) {
  if (config.workload.empty()) throw ConfigError("residual mechanism: empty workload");
  const Domain& domain = data.domain();
  OperatorCache ops(domain);
  const std::vector<Clique> closure = downward_closure(config.workload);

  MechanismRun run;
  nlohmann::json manifest{{"mechanism", "residualplanner"},
                          {"seed", config.seed},
                          {"noiseless", config.noiseless},
                          {"workload", clique_names_json(domain, config.workload)}};

  if (config.noiseless) {
    for (const Clique& tau : closure) {
      const MarginalTable mu = data.exact_marginal(tau);
      ResidualVector alpha = residual_from_marginal(ops, mu, tau);
      run.archive.add_residual(tau, std::move(alpha.values), 1.0);
    }
    run.recon = reconstruct_workload(ops, config.workload, group_by_residual(ops, run.archive));
    manifest["rho"] = 0.0;
    manifest["spends"] = nlohmann::json::array();
    run.manifest = std::move(manifest);
    return run;
  }

  const double rho = solve_rho(config.eps, config.delta);
  manifest["epsilon"] = config.eps;
  manifest["delta"] = config.delta;
  manifest["rho"] = rho;

  // Resolve per-clique scales and make sure the plan is affordable before
  // sampling anything.
  std::map<Clique, double> sigma2;
  if (!config.sigma2_override.empty()) {
    for (const Clique& tau : closure) {
      auto it = config.sigma2_override.find(tau);
      if (it == config.sigma2_override.end()) {
        throw ConfigError("no noise scale supplied for " + clique_label(domain, tau));
      }
      if (!(it->second > 0.0)) {
        throw ConfigError("noise scale for " + clique_label(domain, tau) +
                          " must be positive");
      }
      sigma2.emplace(tau, it->second);
    }
    double total = 0.0;
    std::ostringstream breakdown;
    for (const Clique& tau : closure) {
      const double cost = residual_cov_cost(domain, tau, sigma2.at(tau));
      total += cost;
      breakdown << "  " << clique_label(domain, tau) << ": " << cost << " zCDP\n";
    }
    if (total > rho * (1.0 + 1e-9)) {
      throw BudgetError("supplied noise scales cost " + std::to_string(total) +
                        " zCDP against a budget of " + std::to_string(rho) +
                        "; per-clique costs:\n" + breakdown.str());
    }
    manifest["calibration"] = "supplied";
  } else {
    // Uniform split: equal zCDP share per residual, scale solved from the
    // correlated-Gaussian cost at sigma2 = 1.
    const double share = rho / static_cast<double>(closure.size());
    for (const Clique& tau : closure) {
      sigma2.emplace(tau, residual_cov_cost(domain, tau, 1.0) / share);
    }
    manifest["calibration"] = "uniform-split";
  }
  nlohmann::json scales = nlohmann::json::array();
  for (const Clique& tau : closure) {
    scales.push_back({{"clique", domain.names_of(tau)}, {"sigma2", sigma2.at(tau)}});
  }
  manifest["scales"] = std::move(scales);

  PrivacyAccountant acct(rho);
  std::uint64_t stream = 0;
  for (const Clique& tau : closure) {
    const MarginalTable mu = data.exact_marginal(tau);
    const ResidualVector alpha = residual_from_marginal(ops, mu, tau);
    RngStream rng(config.seed, stream++);
    ResidualVector noisy = residual_cov_measure(acct, ops, alpha, sigma2.at(tau), rng,
                                                "residual " + clique_label(domain, tau));
    run.archive.add_residual(tau, std::move(noisy.values), sigma2.at(tau));
  }
  run.recon = reconstruct_workload(ops, config.workload, group_by_residual(ops, run.archive));
  run.rho = rho;
  run.spends = acct.spends();
  manifest["rho_spent"] = acct.rho_spent();
  manifest["spends"] = spends_json(run.spends);
  run.manifest = std::move(manifest);
  return run;
}

MechanismRun run_scalable_mwem(const RecordSet& data, const MwemConfig& config) {
  if (config.workload.empty()) throw ConfigError("scalable mwem: empty workload");
  if (config.rounds < 1) throw ConfigError("scalable mwem: rounds must be >= 1");
  if (!(config.alpha > 0.0) || !(config.alpha < 1.0)) {
    throw ConfigError("scalable mwem: alpha must lie in (0, 1)");
  }
  const Domain& domain = data.domain();
  OperatorCache ops(domain);

  std::vector<MarginalTable> exact;
  exact.reserve(config.workload.size());
  for (const Clique& gamma : config.workload) exact.push_back(data.exact_marginal(gamma));

  const double rho = solve_rho(config.eps, config.delta);
  const double T = static_cast<double>(config.rounds);
  const double sigma2_total = 1.0 / (2.0 * config.alpha * rho);
  const double sigma2_round = T / ((1.0 - config.alpha) * rho);
  const double eps_em = 2.0 * std::sqrt((1.0 - config.alpha) * rho / T);

  PrivacyAccountant acct(rho);
  MechanismRun run;

  RngStream total_rng(config.seed, 0);
  const MarginalTable total = data.exact_marginal({});
  std::vector<double> noisy_total =
      gaussian_measure(acct, total.values, sigma2_total, total_rng, "total");
  run.archive.add_marginal({}, std::move(noisy_total), sigma2_total);

  nlohmann::json rounds_json = nlohmann::json::array();
  for (int t = 1; t <= config.rounds; ++t) {
    Reconstruction recon =
        reconstruct_workload(ops, config.workload, group_by_residual(ops, run.archive));
    if (config.audit) {
      const Reconstruction again =
          reconstruct_workload(ops, config.workload, group_by_residual(ops, run.archive));
      for (const auto& [gamma, mu] : recon.marginals) {
        if (again.marginals.at(gamma).values != mu.values) {
          throw NumericError("scalable mwem: reconstruction is not reproducible");
        }
      }
    }
    std::vector<double> scores(config.workload.size(), 0.0);
    for (std::size_t g = 0; g < config.workload.size(); ++g) {
      const std::vector<double>& est = recon.marginals.at(config.workload[g]).values;
      const std::vector<double>& ref = exact[g].values;
      double err = 0.0;
      for (std::size_t i = 0; i < ref.size(); ++i) err += std::abs(ref[i] - est[i]);
      scores[g] = err;
    }
    RngStream select_rng(config.seed, static_cast<std::uint64_t>(2 * t - 1));
    const std::size_t pick =
        exponential_select(acct, scores, eps_em, 1.0, select_rng,
                           "select round " + std::to_string(t));
    const Clique& gamma = config.workload[pick];
    run.selected.push_back(gamma);

    RngStream measure_rng(config.seed, static_cast<std::uint64_t>(2 * t));
    std::vector<double> noisy =
        gaussian_measure(acct, exact[pick].values, sigma2_round, measure_rng,
                         "measure round " + std::to_string(t) + " " +
                             clique_label(domain, gamma));
    run.archive.add_marginal(gamma, std::move(noisy), sigma2_round);
    rounds_json.push_back({{"round", t},
                           {"selected", domain.names_of(gamma)},
                           {"spend_select", eps_em * eps_em / 8.0},
                           {"spend_measure", 0.5 / sigma2_round}});
  }

  run.recon = reconstruct_workload(ops, config.workload, group_by_residual(ops, run.archive));
  run.rho = rho;
  run.spends = acct.spends();
  if (std::abs(acct.rho_spent() - rho) > 1e-12 * std::max(1.0, rho)) {
    throw NumericError("scalable mwem: ledger does not sum to the budget");
  }
  run.manifest = nlohmann::json{{"mechanism", "smwem"},
                                {"seed", config.seed},
                                {"epsilon", config.eps},
                                {"delta", config.delta},
                                {"rho", rho},
                                {"rho_spent", acct.rho_spent()},
                                {"rounds_config", config.rounds},
                                {"alpha", config.alpha},
                                {"sigma2_total", sigma2_total},
                                {"sigma2_round", sigma2_round},
                                {"eps_em", eps_em},
                                {"workload", clique_names_json(domain, config.workload)},
                                {"rounds", std::move(rounds_json)},
                                {"spends", spends_json(run.spends)}};
  return run;
}

}  // namespace rem
