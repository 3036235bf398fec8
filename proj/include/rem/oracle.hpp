#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rem/dataset.hpp"
#include "rem/reconstruct.hpp"
#include "rem/workload.hpp"

namespace rem::oracle {

// Dense brute-force counterparts of the structured operators, for small
// domains only.  Everything here materializes matrices over the full
// universe, guarded by an entry-count limit.

// Marginal query matrix M_gamma over the full universe (n_gamma x n).
Eigen::MatrixXd dense_marginal_query(const Domain& domain, const Clique& gamma,
                                     std::size_t guard = 4000000);

// Residual query matrix R_tau = D_tau M_tau over the full universe.
Eigen::MatrixXd dense_residual_query(const Domain& domain, const Clique& tau,
                                     std::size_t guard = 4000000);

// Moore-Penrose pseudoinverse via SVD.
Eigen::MatrixXd pinv(const Eigen::MatrixXd& m);

// Explicit data vector of a record set (guarded; test use only).
Eigen::VectorXd dense_data_vector(const RecordSet& data, std::size_t guard = 4000000);

struct RowSpaceReport {
  // Largest |<r_i, r'_j>| between residual rows of two different cliques.
  double max_cross_dot = 0.0;
  // Largest |R_tau_a M_tau_b^T| entry when tau_a is not contained in tau_b.
  double max_marginal_dot = 0.0;
  int rank = 0;
  int expected_rank = 0;
  bool ok = false;
};

// Checks the defining structure of residual queries on a small domain:
// orthogonal row spaces across cliques, orthogonality to marginals of
// non-superset cliques, and full row rank.
RowSpaceReport residual_row_space_checks(const Domain& domain, const Clique& tau_a,
                                         const Clique& tau_b, std::size_t guard = 4000000);

struct DeviationReport {
  double max_rel_dev = 0.0;
  bool ok = false;
};

// Compares emp_reconstruct against the dense pseudoinverse reconstruction
// M_gamma M_Q^+ y (variance-scaled when sigmas differ) over the given
// workload.  fault_scale deliberately corrupts the structured path; tests use
// it to prove the oracle can fail.
DeviationReport emp_vs_dense(const Domain& domain, std::span<const Clique> workload,
                             std::span<const MarginalMeasurement> measured,
                             double tolerance = 1e-8, double fault_scale = 1.0,
                             std::size_t guard = 4000000);

// Compares residualplanner_reconstruct against dense M_gamma R_S^+ z.
DeviationReport residual_vs_dense(const Domain& domain, std::span<const Clique> workload,
                                  std::span<const ResidualMeasurement> measured,
                                  double tolerance = 1e-8, double fault_scale = 1.0,
                                  std::size_t guard = 4000000);

// Dense active-set solve of the locally non-negative least squares program on
// the explicit residual space, for cross-checking the dual-ascent solver.
struct DenseQpResult {
  std::map<Clique, std::vector<double>> alpha;
  double objective = 0.0;
  int iterations = 0;
};

DenseQpResult dense_lnn_qp(const Domain& domain, std::span<const Clique> workload,
                           const GroupedMeasurements& grouped, double eta,
                           double weight_base = 2.0, std::size_t guard = 4000000);

// Objective of the locally non-negative program at a given residual point.
double lnn_objective(const Domain& domain, std::span<const Clique> workload,
                     const GroupedMeasurements& grouped,
                     const std::map<Clique, std::vector<double>>& alpha, double eta,
                     double weight_base = 2.0);

}  // namespace rem::oracle
