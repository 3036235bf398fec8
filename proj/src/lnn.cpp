#include "rem/lnn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include <Eigen/Dense>

namespace rem {

namespace {

struct TauBlock {
  Clique tau;
  bool measured = false;
  std::vector<double> target;       // combined measurement (measured only)
  double weight = 0.0;              // K scaling: weight_base^|tau|
  // Per-factor inverses, only built for the blocks that need them:
  // measured tau uses inv(D D^T) for the objective, unmeasured tau uses
  // inv(pinv(D)^T pinv(D)) for the primal update.
  std::vector<Eigen::MatrixXd> inv_factors;
  std::vector<int> gammas;          // indices into the workload
};

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

nlohmann::json LnnReport::to_json() const {
  return nlohmann::json{{"rounds", rounds},
                        {"attempts", attempts},
                        {"total_rounds", total_rounds},
                        {"final_step", final_step},
                        {"max_violation", max_violation},
                        {"objective", objective},
                        {"converged", converged},
                        {"wall_seconds", wall_seconds}};
}

LnnResult grem_lnn(const OperatorCache& ops, std::span<const Clique> workload,
                   const GroupedMeasurements& grouped, const LnnConfig& config) {
  const Domain& domain = ops.domain();
  if (workload.empty()) throw ConfigError("grem_lnn: empty workload");
  if (config.max_rounds < 1) throw ConfigError("grem_lnn: max_rounds must be >= 1");
  if (!(config.step > 0.0)) throw ConfigError("grem_lnn: step must be positive");
  if (config.dual_init > 0.0) throw ConfigError("grem_lnn: dual init must be <= 0");

  std::vector<Clique> gammas;
  for (const Clique& gamma : workload) {
    domain.validate(gamma);
    if (std::find(gammas.begin(), gammas.end(), gamma) == gammas.end()) {
      gammas.push_back(gamma);
    }
  }

  // The primal lives on every measured clique plus every subset of the
  // workload; subsets never measured are the ridge-regularized blocks.
  std::set<Clique> keys;
  for (const auto& [tau, ms] : grouped) keys.insert(tau);
  std::size_t unmeasured = 0;
  for (const Clique& gamma : gammas) {
    for (Clique& tau : subsets_of(gamma)) {
      if (!grouped.count(tau)) ++unmeasured;
      keys.insert(std::move(tau));
    }
  }
  if (unmeasured > 0 && !(config.eta > 0.0)) {
    throw ConfigError("grem_lnn: unmeasured residuals present, eta must be positive");
  }

  std::vector<TauBlock> blocks;
  std::map<Clique, int> block_of;
  for (const Clique& tau : keys) {
    TauBlock b;
    b.tau = tau;
    b.weight = std::pow(config.weight_base, static_cast<double>(tau.size()));
    auto it = grouped.find(tau);
    if (it != grouped.end()) {
      b.measured = true;
      b.target = grem_mle_combine(it->second).values;
    }
    for (int attr : tau) {
      const int n = domain.size(attr);
      if (b.measured) {
        const Eigen::MatrixXd d = kron::Factor::diff(n).dense();
        b.inv_factors.push_back((d * d.transpose()).inverse());
      } else {
        const Eigen::MatrixXd p = kron::Factor::diff_pinv(n).dense();
        b.inv_factors.push_back((p.transpose() * p).inverse());
      }
    }
    block_of.emplace(tau, static_cast<int>(blocks.size()));
    blocks.push_back(std::move(b));
  }

  std::vector<std::vector<int>> gamma_blocks(gammas.size());
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    for (const Clique& tau : subsets_of(gammas[g])) {
      const int b = block_of.at(tau);
      gamma_blocks[g].push_back(b);
      blocks[b].gammas.push_back(static_cast<int>(g));
    }
  }

  const auto objective_of = [&](const std::vector<std::vector<double>>& alpha) {
    double obj = 0.0;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const TauBlock& blk = blocks[b];
      if (blk.measured) {
        std::vector<double> diff(alpha[b].size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = alpha[b][i] - blk.target[i];
        const std::vector<double> kin = kron::apply_dense_kron(blk.inv_factors, diff);
        double dot = 0.0;
        for (std::size_t i = 0; i < diff.size(); ++i) dot += diff[i] * kin[i];
        obj += dot / blk.weight;
      } else {
        const std::vector<double> lifted = ops.lift(blk.tau, blk.tau).apply(alpha[b]);
        double sq = 0.0;
        for (double v : lifted) sq += v * v;
        obj += config.eta * sq;
      }
    }
    return obj;
  };

  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  const auto out_of_time = [&] {
    return config.wall_clock_seconds > 0.0 && elapsed() > config.wall_clock_seconds;
  };

  double step = config.step;
  LnnReport best_report;
  std::vector<std::vector<double>> best_alpha;
  std::vector<std::vector<double>> best_mu;
  std::map<Clique, std::vector<double>> best_lambda;
  bool have_best = false;
  int total_rounds = 0;

  for (int attempt = 0; attempt <= config.max_retries; ++attempt, step /= std::sqrt(10.0)) {
    std::map<Clique, std::vector<double>> lambda;
    for (const Clique& gamma : gammas) {
      lambda[gamma].assign(domain.marginal_len(gamma), config.dual_init);
    }
    std::vector<std::vector<double>> alpha(blocks.size());
    std::vector<std::vector<double>> prev(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      alpha[b].assign(domain.residual_len(blocks[b].tau), 0.0);
    }
    std::vector<std::vector<double>> mu(gammas.size());

    int stable = 0;
    int round = 0;
    bool finite = true;
    bool converged = false;
    double max_violation = 0.0;

    for (round = 1; round <= config.max_rounds; ++round) {
      prev = alpha;
      // Primal update per block from the current duals.
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        TauBlock& blk = blocks[b];
        std::vector<double> lam_sum(alpha[b].size(), 0.0);
        for (int g : blk.gammas) {
          const std::vector<double> part =
              ops.lift(gammas[g], blk.tau).apply_transpose(lambda.at(gammas[g]));
          for (std::size_t i = 0; i < lam_sum.size(); ++i) lam_sum[i] += part[i];
        }
        if (blk.measured) {
          // Minimizer of (a - t)^T K^{-1} (a - t) + Lambda^T a with K = w D D^T.
          const kron::KronOperator& d = ops.residual_diff(blk.tau);
          const std::vector<double> k_lam = d.apply(d.apply_transpose(lam_sum));
          const double half_w = 0.5 * blk.weight;
          for (std::size_t i = 0; i < alpha[b].size(); ++i) {
            alpha[b][i] = blk.target[i] - half_w * k_lam[i];
          }
        } else {
          const std::vector<double> g_inv = kron::apply_dense_kron(blk.inv_factors, lam_sum);
          const double c = -0.5 / config.eta;
          for (std::size_t i = 0; i < alpha[b].size(); ++i) alpha[b][i] = c * g_inv[i];
        }
      }

      // Reconstruct workload marginals, check feasibility, ascend the duals.
      double total_est = 0.0;
      if (auto it = block_of.find(Clique{}); it != block_of.end()) {
        total_est = alpha[it->second].empty() ? 0.0 : alpha[it->second][0];
      }
      max_violation = 0.0;
      double primal_change = 0.0;
      double primal_scale = 0.0;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        primal_scale = std::max(primal_scale, max_abs(alpha[b]));
        for (std::size_t i = 0; i < alpha[b].size(); ++i) {
          primal_change = std::max(primal_change, std::abs(alpha[b][i] - prev[b][i]));
        }
      }
      if (!std::isfinite(primal_scale)) {
        finite = false;
        break;
      }
      for (std::size_t g = 0; g < gammas.size(); ++g) {
        std::vector<double>& table = mu[g];
        table.assign(domain.marginal_len(gammas[g]), 0.0);
        for (int b : gamma_blocks[g]) {
          const std::vector<double> part = ops.lift(gammas[g], blocks[b].tau).apply(alpha[b]);
          for (std::size_t i = 0; i < table.size(); ++i) table[i] += part[i];
        }
        std::vector<double>& lam = lambda.at(gammas[g]);
        for (std::size_t i = 0; i < table.size(); ++i) {
          max_violation = std::max(max_violation, -table[i]);
          lam[i] = std::min(lam[i] + step * table[i], 0.0);
        }
      }
      max_violation = std::max(max_violation, 0.0);

      const double viol_tol = config.violation_tol * std::max(1.0, total_est);
      const double rel_change = primal_change / std::max(1.0, primal_scale);
      stable = rel_change <= config.primal_tol ? stable + 1 : 0;
      if (max_violation <= viol_tol && stable >= config.stable_rounds) {
        converged = true;
        break;
      }
      if (out_of_time()) break;
    }
    total_rounds += std::min(round, config.max_rounds);

    if (finite) {
      LnnReport report;
      report.rounds = std::min(round, config.max_rounds);
      report.attempts = attempt + 1;
      report.final_step = step;
      report.max_violation = max_violation;
      report.objective = objective_of(alpha);
      report.converged = converged;
      const bool better =
          !have_best ||
          std::make_pair(report.max_violation, report.objective) <
              std::make_pair(best_report.max_violation, best_report.objective);
      if (better) {
        best_report = report;
        best_alpha = alpha;
        best_mu = mu;
        best_lambda = lambda;
        have_best = true;
      }
      if (converged) break;
    }
    if (out_of_time()) break;
  }

  if (!have_best) {
    throw NumericError("grem_lnn: all attempts produced non-finite iterates");
  }
  best_report.total_rounds = total_rounds;
  best_report.wall_seconds = elapsed();

  LnnResult result;
  result.report = best_report;
  result.state.round = best_report.rounds;
  result.state.lambda = std::move(best_lambda);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    result.state.alpha.emplace(blocks[b].tau,
                               ResidualVector{blocks[b].tau, best_alpha[b]});
  }
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    result.recon.marginals.emplace(gammas[g], MarginalTable{gammas[g], best_mu[g]});
    MarginalMeta meta;
    for (int b : gamma_blocks[g]) {
      ++meta.expected;
      if (blocks[b].measured) {
        ++meta.contributing;
        double w = 0.0;
        for (const ResidualMeasurement& m : grouped.at(blocks[b].tau)) w += 1.0 / m.sigma2;
        meta.weights.emplace(blocks[b].tau, w);
      }
    }
    meta.partial = meta.contributing < meta.expected;
    result.recon.meta.emplace(gammas[g], std::move(meta));
  }
  return result;
}

}  // namespace rem
