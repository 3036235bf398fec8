#pragma once

#include <map>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "rem/reconstruct.hpp"
#include "rem/workload.hpp"

namespace rem {

struct LnnConfig {
  int max_rounds = 4000;
  double step = 0.1;
  double dual_init = -1.0;
  // Regularization weight for residuals that were never measured; only used
  // in the underdetermined case.
  double eta = 40.0;
  // Base of the per-clique weight |tau| exponent: K_tau = base^|tau| D D^T.
  double weight_base = 2.0;
  int max_retries = 6;
  double wall_clock_seconds = 600.0;  // 0 disables the limit
  double violation_tol = 1e-6;        // scaled by max(1, reconstructed total)
  double primal_tol = 1e-8;
  int stable_rounds = 10;

  // Defaults tuned for direct residual measurements.
  static LnnConfig residual_style() { return LnnConfig{}; }
  // Defaults tuned for adaptively measured marginals.
  static LnnConfig mwem_style() {
    LnnConfig c;
    c.max_rounds = 1000;
    c.step = 0.02;
    return c;
  }
};

struct DualState {
  std::map<Clique, std::vector<double>> lambda;  // per workload clique, <= 0
  std::map<Clique, ResidualVector> alpha;
  int round = 0;
};

struct LnnReport {
  int rounds = 0;
  int attempts = 1;
  int total_rounds = 0;
  double final_step = 0.0;
  double max_violation = 0.0;
  double objective = 0.0;
  bool converged = false;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

struct LnnResult {
  Reconstruction recon;
  LnnReport report;
  DualState state;
};

// Dual ascent for the locally non-negative reconstruction: minimizes the
// K-weighted distance to the combined residual measurements subject to every
// workload marginal being entrywise non-negative.  Measurements are first
// combined per clique by inverse-variance weighting; unmeasured subsets are
// ridge-regularized by eta.
LnnResult grem_lnn(const OperatorCache& ops, std::span<const Clique> workload,
                   const GroupedMeasurements& grouped, const LnnConfig& config);

}  // namespace rem
