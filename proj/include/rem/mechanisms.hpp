#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "rem/dataset.hpp"
#include "rem/privacy.hpp"
#include "rem/reconstruct.hpp"

namespace rem {

struct RpStyleConfig {
  std::vector<Clique> workload;
  double eps = 1.0;
  double delta = 1e-9;
  // Per-clique noise scales over the downward closure; empty means the
  // uniform budget split.
  std::map<Clique, double> sigma2_override;
  // Test mode: record exact residuals, no noise, no budget accounting.
  bool noiseless = false;
  std::uint64_t seed = 0;
};

struct MwemConfig {
  std::vector<Clique> workload;
  int rounds = 30;
  double eps = 1.0;
  double delta = 1e-9;
  double alpha = 0.1;  // budget fraction for the initial total query
  std::uint64_t seed = 0;
  // Re-derives each round's reconstruction from the archive a second time and
  // insists on bitwise agreement.
  bool audit = false;
};

struct MechanismRun {
  MeasurementArchive archive;
  Reconstruction recon;
  double rho = 0.0;
  std::vector<Spend> spends;
  std::vector<Clique> selected;  // adaptive mechanisms only
  nlohmann::json manifest;
};

// Measures every residual in the workload's downward closure once with
// correlated Gaussian noise, then reconstructs.
MechanismRun run_residualplanner_style(const RecordSet& data, const RpStyleConfig& config);

// Adaptive select-measure-reconstruct: exponential-mechanism selection over
// workload marginals by l1 score, isotropic Gaussian measurement, and
// from-scratch reconstruction each round.  Total spend is exactly the zCDP
// budget implied by (eps, delta).
MechanismRun run_scalable_mwem(const RecordSet& data, const MwemConfig& config);

}  // namespace rem
