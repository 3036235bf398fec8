#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rem/workload.hpp"

namespace rem {

// One noisy observation of the residual on tau, with covariance
// sigma2 * D_tau D_tau^T.
struct ResidualMeasurement {
  Clique tau;
  std::vector<double> values;
  double sigma2 = 1.0;
  // "residual" for direct measurements, or the source marginal's label when
  // extracted by decomposition.
  std::string provenance = "residual";
};

// One noisy observation of the marginal on gamma under isotropic noise.
struct MarginalMeasurement {
  Clique gamma;
  std::vector<double> values;
  double sigma2 = 1.0;
};

// Append-only log of everything a mechanism measured, in measurement order.
// Serializable and replayable: reconstructing from a saved archive reproduces
// the original tables bit for bit.
class MeasurementArchive {
 public:
  struct Entry {
    bool is_marginal = false;
    Clique clique;
    std::vector<double> values;
    double sigma2 = 1.0;
    int seq = 0;
  };

  void add_marginal(const Clique& gamma, std::vector<double> values, double sigma2);
  void add_residual(const Clique& tau, std::vector<double> values, double sigma2);

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  nlohmann::json to_json(const Domain& domain) const;
  static MeasurementArchive from_json(const Domain& domain, const nlohmann::json& j);
  void save(const Domain& domain, const std::string& path) const;
  static MeasurementArchive load(const Domain& domain, const std::string& path);

 private:
  std::vector<Entry> entries_;
};

// Inverse-variance weighted average of measurements sharing one tau.  Under
// the proportional-covariance family sigma2_i * D D^T this is the exact
// generalized-least-squares estimate, computed without matrix solves.
ResidualVector grem_mle_combine(std::span<const ResidualMeasurement> measurements);

// Splits an isotropically-noised marginal into independent residual
// measurements, one per subset tau of gamma, with scale
// sigma2 * prod_{k in gamma \ tau} n_k.
std::vector<ResidualMeasurement> decompose_marginal(const OperatorCache& ops,
                                                    const Clique& gamma,
                                                    std::span<const double> y_gamma,
                                                    double sigma2);

// Per-reconstruction diagnostics.
struct MarginalMeta {
  int contributing = 0;  // subsets of gamma with at least one measurement
  int expected = 0;      // 2^|gamma|
  bool partial = false;  // some subset was never measured (minimum-norm fill)
  // Total inverse-variance weight per contributing subset.
  std::map<Clique, double> weights;
};

struct Reconstruction {
  std::map<Clique, MarginalTable> marginals;
  std::map<Clique, MarginalMeta> meta;
};

using GroupedMeasurements = std::map<Clique, std::vector<ResidualMeasurement>>;

// Decomposes marginal entries, passes residual entries through, and groups
// everything by the canonical sorted clique, in archive order.
GroupedMeasurements group_by_residual(const OperatorCache& ops,
                                      const MeasurementArchive& archive);

// Combines each group with grem_mle_combine and rebuilds every workload
// marginal from the residuals on its subsets.
Reconstruction reconstruct_workload(const OperatorCache& ops, std::span<const Clique> workload,
                                    const GroupedMeasurements& grouped);

// Efficient marginal pseudoinversion: decompose, combine, reconstruct.  With
// equal sigma this equals the dense pseudoinverse reconstruction M_gamma M_Q^+ y;
// with per-measurement sigma it equals the variance-scaled version.
Reconstruction emp_reconstruct(const OperatorCache& ops, std::span<const Clique> workload,
                               std::span<const MarginalMeasurement> measured);

// Reconstruction from direct residual measurements (one or more per tau).
Reconstruction residualplanner_reconstruct(const OperatorCache& ops,
                                           std::span<const Clique> workload,
                                           std::span<const ResidualMeasurement> measured);

}  // namespace rem
