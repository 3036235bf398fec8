#include "rem/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rem/lnn.hpp"

namespace rem::oracle {

namespace {

// Brute-force Kronecker product of dense matrices; independent of the
// structured engine on purpose.
Eigen::MatrixXd dense_kron(const std::vector<Eigen::MatrixXd>& mats) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(1, 1);
  for (const Eigen::MatrixXd& f : mats) {
    Eigen::MatrixXd next(m.rows() * f.rows(), m.cols() * f.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        next.block(i * f.rows(), j * f.cols(), f.rows(), f.cols()) = m(i, j) * f;
      }
    }
    m = std::move(next);
  }
  return m;
}

Eigen::MatrixXd diff_dense(int n) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n - 1, n);
  for (int i = 0; i + 1 < n; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -1.0;
  }
  return d;
}

void check_guard(double entries, std::size_t guard, const char* what) {
  if (entries > static_cast<double>(guard)) {
    throw GuardError(std::string(what) + " would need " + std::to_string(entries) +
                     " dense entries, guard is " + std::to_string(guard));
  }
}

std::size_t universe_cells(const Domain& domain, std::size_t guard) {
  check_guard(domain.universe_size(), guard, "dense universe");
  std::size_t n = 1;
  for (const Attribute& a : domain.attributes()) n *= static_cast<std::size_t>(a.size);
  return n;
}

// Weighted per-tau combination shared by the dense comparisons.
std::map<Clique, std::vector<double>> combine_by_tau(
    std::span<const ResidualMeasurement> measured) {
  GroupedMeasurements grouped;
  for (const ResidualMeasurement& m : measured) grouped[m.tau].push_back(m);
  std::map<Clique, std::vector<double>> combined;
  for (const auto& [tau, ms] : grouped) combined.emplace(tau, grem_mle_combine(ms).values);
  return combined;
}

}  // namespace

Eigen::MatrixXd dense_marginal_query(const Domain& domain, const Clique& gamma,
                                     std::size_t guard) {
  const std::size_t rows = domain.marginal_len(gamma);
  const std::size_t cols = universe_cells(domain, guard);
  check_guard(static_cast<double>(rows) * static_cast<double>(cols), guard,
              "dense marginal query");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  for (std::size_t cell = 0; cell < cols; ++cell) {
    // Decode the universe cell (attribute 0 slowest), project onto gamma.
    std::size_t rest = cell;
    std::vector<int> code(domain.dim());
    for (int a = domain.dim() - 1; a >= 0; --a) {
      code[a] = static_cast<int>(rest % static_cast<std::size_t>(domain.size(a)));
      rest /= static_cast<std::size_t>(domain.size(a));
    }
    std::size_t row = 0;
    for (int attr : gamma) {
      row = row * static_cast<std::size_t>(domain.size(attr)) +
            static_cast<std::size_t>(code[attr]);
    }
    m(row, cell) = 1.0;
  }
  return m;
}

Eigen::MatrixXd dense_residual_query(const Domain& domain, const Clique& tau,
                                     std::size_t guard) {
  domain.validate(tau);
  const std::size_t cols = universe_cells(domain, guard);
  check_guard(static_cast<double>(domain.residual_len(tau)) * static_cast<double>(cols),
              guard, "dense residual query");
  std::vector<Eigen::MatrixXd> mats;
  std::size_t ti = 0;
  for (int a = 0; a < domain.dim(); ++a) {
    if (ti < tau.size() && tau[ti] == a) {
      mats.push_back(diff_dense(domain.size(a)));
      ++ti;
    } else {
      mats.push_back(Eigen::MatrixXd::Ones(1, domain.size(a)));
    }
  }
  return dense_kron(mats);
}

Eigen::MatrixXd pinv(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double tol = std::max(m.rows(), m.cols()) * svd.singularValues()(0) * 1e-13;
  Eigen::VectorXd inv = svd.singularValues();
  for (Eigen::Index i = 0; i < inv.size(); ++i) {
    inv(i) = inv(i) > tol ? 1.0 / inv(i) : 0.0;
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::VectorXd dense_data_vector(const RecordSet& data, std::size_t guard) {
  const Domain& domain = data.domain();
  const std::size_t n = universe_cells(domain, guard);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < data.size(); ++r) {
    std::size_t cell = 0;
    for (int a = 0; a < domain.dim(); ++a) {
      cell = cell * static_cast<std::size_t>(domain.size(a)) +
             static_cast<std::size_t>(data.code(r, a));
    }
    p(static_cast<Eigen::Index>(cell)) += 1.0;
  }
  return p;
}

RowSpaceReport residual_row_space_checks(const Domain& domain, const Clique& tau_a,
                                         const Clique& tau_b, std::size_t guard) {
  RowSpaceReport report;
  const Eigen::MatrixXd ra = dense_residual_query(domain, tau_a, guard);
  const Eigen::MatrixXd rb = dense_residual_query(domain, tau_b, guard);
  if (tau_a != tau_b) {
    report.max_cross_dot = (ra * rb.transpose()).cwiseAbs().maxCoeff();
  }
  if (!is_subset(tau_a, tau_b)) {
    const Eigen::MatrixXd mb = dense_marginal_query(domain, tau_b, guard);
    report.max_marginal_dot = (ra * mb.transpose()).cwiseAbs().maxCoeff();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ra);
  const double tol = std::max(ra.rows(), ra.cols()) * svd.singularValues()(0) * 1e-12;
  report.rank = static_cast<int>((svd.singularValues().array() > tol).count());
  report.expected_rank = static_cast<int>(domain.residual_len(tau_a));
  report.ok = report.max_cross_dot < 1e-9 && report.max_marginal_dot < 1e-9 &&
              report.rank == report.expected_rank;
  return report;
}

DeviationReport emp_vs_dense(const Domain& domain, std::span<const Clique> workload,
                             std::span<const MarginalMeasurement> measured,
                             double tolerance, double fault_scale, std::size_t guard) {
  const std::size_t n = universe_cells(domain, guard);
  std::size_t rows = 0;
  for (const MarginalMeasurement& m : measured) rows += domain.marginal_len(m.gamma);
  check_guard(static_cast<double>(rows) * static_cast<double>(n), guard,
              "dense measured stack");

  // Variance-scaled stack: rows M_gamma / sigma, right side y / sigma.  With
  // equal scales this reduces to the plain pseudoinverse reconstruction.
  Eigen::MatrixXd stack(rows, n);
  Eigen::VectorXd rhs(rows);
  std::size_t at = 0;
  for (const MarginalMeasurement& m : measured) {
    const double s = 1.0 / std::sqrt(m.sigma2);
    const Eigen::MatrixXd mq = dense_marginal_query(domain, m.gamma, guard);
    stack.middleRows(at, mq.rows()) = s * mq;
    for (Eigen::Index i = 0; i < mq.rows(); ++i) {
      rhs(static_cast<Eigen::Index>(at) + i) = s * m.values[i];
    }
    at += mq.rows();
  }
  const Eigen::VectorXd p_hat = pinv(stack) * rhs;

  OperatorCache ops(domain);
  const Reconstruction recon = emp_reconstruct(ops, workload, measured);

  DeviationReport report;
  for (const Clique& gamma : workload) {
    const Eigen::VectorXd dense = dense_marginal_query(domain, gamma, guard) * p_hat;
    const std::vector<double>& fast = recon.marginals.at(gamma).values;
    double scale = std::max(1.0, dense.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < dense.size(); ++i) {
      const double dev = std::abs(fast[static_cast<std::size_t>(i)] * fault_scale - dense(i));
      report.max_rel_dev = std::max(report.max_rel_dev, dev / scale);
    }
  }
  report.ok = report.max_rel_dev <= tolerance;
  return report;
}

DeviationReport residual_vs_dense(const Domain& domain, std::span<const Clique> workload,
                                  std::span<const ResidualMeasurement> measured,
                                  double tolerance, double fault_scale, std::size_t guard) {
  const std::size_t n = universe_cells(domain, guard);
  const auto combined = combine_by_tau(measured);
  std::size_t rows = 0;
  for (const auto& [tau, z] : combined) rows += z.size();
  check_guard(static_cast<double>(rows) * static_cast<double>(n), guard,
              "dense residual stack");

  Eigen::MatrixXd stack(rows, n);
  Eigen::VectorXd rhs(rows);
  std::size_t at = 0;
  for (const auto& [tau, z] : combined) {
    const Eigen::MatrixXd rq = dense_residual_query(domain, tau, guard);
    stack.middleRows(at, rq.rows()) = rq;
    for (std::size_t i = 0; i < z.size(); ++i) {
      rhs(static_cast<Eigen::Index>(at + i)) = z[i];
    }
    at += rq.rows();
  }
  const Eigen::VectorXd p_hat = pinv(stack) * rhs;

  OperatorCache ops(domain);
  const Reconstruction recon = residualplanner_reconstruct(ops, workload, measured);

  DeviationReport report;
  for (const Clique& gamma : workload) {
    const Eigen::VectorXd dense = dense_marginal_query(domain, gamma, guard) * p_hat;
    const std::vector<double>& fast = recon.marginals.at(gamma).values;
    double scale = std::max(1.0, dense.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < dense.size(); ++i) {
      const double dev = std::abs(fast[static_cast<std::size_t>(i)] * fault_scale - dense(i));
      report.max_rel_dev = std::max(report.max_rel_dev, dev / scale);
    }
  }
  report.ok = report.max_rel_dev <= tolerance;
  return report;
}

namespace {

struct QpLayout {
  std::vector<Clique> taus;
  std::vector<std::size_t> offset;
  std::size_t total = 0;
  std::vector<bool> measured;
};

QpLayout qp_layout(const Domain& domain, std::span<const Clique> workload,
                   const GroupedMeasurements& grouped) {
  std::set<Clique> keys;
  for (const auto& [tau, ms] : grouped) keys.insert(tau);
  std::vector<Clique> sorted_workload(workload.begin(), workload.end());
  for (const Clique& gamma : sorted_workload) {
    for (Clique& tau : subsets_of(gamma)) keys.insert(std::move(tau));
  }
  QpLayout layout;
  for (const Clique& tau : keys) {
    layout.offset.push_back(layout.total);
    layout.total += domain.residual_len(tau);
    layout.measured.push_back(grouped.count(tau) > 0);
    layout.taus.push_back(tau);
  }
  return layout;
}

// A_{gamma,tau} built densely from an SVD pseudoinverse of the differencing
// factor, sidestepping the closed form the library uses.
Eigen::MatrixXd dense_lift(const Domain& domain, const Clique& gamma, const Clique& tau) {
  std::vector<Eigen::MatrixXd> mats;
  std::size_t ti = 0;
  for (int attr : gamma) {
    const int n = domain.size(attr);
    if (ti < tau.size() && tau[ti] == attr) {
      mats.push_back(pinv(diff_dense(n)));
      ++ti;
    } else {
      mats.push_back(Eigen::MatrixXd::Constant(n, 1, 1.0 / n));
    }
  }
  return dense_kron(mats);
}

Eigen::MatrixXd dense_k_inverse(const Domain& domain, const Clique& tau,
                                double weight_base) {
  std::vector<Eigen::MatrixXd> mats;
  for (int attr : tau) {
    const Eigen::MatrixXd d = diff_dense(domain.size(attr));
    mats.push_back(d * d.transpose());
  }
  const Eigen::MatrixXd k = dense_kron(mats);
  const double w = std::pow(weight_base, static_cast<double>(tau.size()));
  return (w * k).inverse();
}

}  // namespace

double lnn_objective(const Domain& domain, std::span<const Clique> workload,
                     const GroupedMeasurements& grouped,
                     const std::map<Clique, std::vector<double>>& alpha, double eta,
                     double weight_base) {
  double obj = 0.0;
  const QpLayout layout = qp_layout(domain, workload, grouped);
  for (std::size_t b = 0; b < layout.taus.size(); ++b) {
    const Clique& tau = layout.taus[b];
    const std::vector<double>& a = alpha.at(tau);
    Eigen::VectorXd av = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
    if (layout.measured[b]) {
      const std::vector<double> target = grem_mle_combine(grouped.at(tau)).values;
      const Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(target.data(), target.size());
      const Eigen::MatrixXd kinv = dense_k_inverse(domain, tau, weight_base);
      obj += (av - t).dot(kinv * (av - t));
    } else {
      const Eigen::MatrixXd a_self = dense_lift(domain, tau, tau);
      obj += eta * (a_self * av).squaredNorm();
    }
  }
  return obj;
}

DenseQpResult dense_lnn_qp(const Domain& domain, std::span<const Clique> workload,
                           const GroupedMeasurements& grouped, double eta,
                           double weight_base, std::size_t guard) {
  const QpLayout layout = qp_layout(domain, workload, grouped);
  const std::size_t dim = layout.total;
  std::size_t crows = 0;
  for (const Clique& gamma : workload) crows += domain.marginal_len(gamma);
  check_guard(static_cast<double>(dim) * static_cast<double>(crows), guard, "dense qp");

  // Quadratic form: P block-diagonal over taus, q linear term; constraints
  // C alpha >= 0 stack the per-workload reconstruction maps.
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(dim);
  double constant = 0.0;
  for (std::size_t b = 0; b < layout.taus.size(); ++b) {
    const Clique& tau = layout.taus[b];
    const std::size_t len = domain.residual_len(tau);
    const std::size_t off = layout.offset[b];
    if (layout.measured[b]) {
      const Eigen::MatrixXd kinv = dense_k_inverse(domain, tau, weight_base);
      const std::vector<double> target = grem_mle_combine(grouped.at(tau)).values;
      const Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(target.data(), target.size());
      p.block(off, off, len, len) = 2.0 * kinv;
      q.segment(off, len) = -2.0 * kinv * t;
      constant += t.dot(kinv * t);
    } else {
      const Eigen::MatrixXd a_self = dense_lift(domain, tau, tau);
      p.block(off, off, len, len) = 2.0 * eta * a_self.transpose() * a_self;
    }
  }

  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(crows, dim);
  std::size_t at = 0;
  for (const Clique& gamma : workload) {
    const std::size_t rows = domain.marginal_len(gamma);
    for (std::size_t b = 0; b < layout.taus.size(); ++b) {
      if (!is_subset(layout.taus[b], gamma)) continue;
      c.block(at, layout.offset[b], rows, domain.residual_len(layout.taus[b])) =
          dense_lift(domain, gamma, layout.taus[b]);
    }
    at += rows;
  }

  // ADMM on min 1/2 x'Px + q'x s.t. Cx = z, z >= 0.
  const double rho = 1.0;
  const Eigen::MatrixXd lhs = p + rho * c.transpose() * c +
                              1e-9 * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::LDLT<Eigen::MatrixXd> solver(lhs);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(crows);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(crows);
  int it = 0;
  for (; it < 200000; ++it) {
    x = solver.solve(-q + rho * c.transpose() * (z - u));
    const Eigen::VectorXd cx = c * x;
    const Eigen::VectorXd z_new = (cx + u).cwiseMax(0.0);
    const double dual_res = rho * (c.transpose() * (z_new - z)).cwiseAbs().maxCoeff();
    z = z_new;
    u += cx - z;
    const double primal_res = (cx - z).cwiseAbs().maxCoeff();
    if (primal_res < 1e-10 && dual_res < 1e-10) break;
  }

  DenseQpResult result;
  result.iterations = it;
  result.objective = 0.5 * x.dot(p * x) + q.dot(x) + constant;
  for (std::size_t b = 0; b < layout.taus.size(); ++b) {
    const std::size_t len = domain.residual_len(layout.taus[b]);
    std::vector<double> block(len);
    for (std::size_t i = 0; i < len; ++i) block[i] = x(layout.offset[b] + i);
    result.alpha.emplace(layout.taus[b], std::move(block));
  }
  return result;
}

}  // namespace rem::oracle
