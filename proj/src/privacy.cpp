#include "rem/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace rem {

namespace {

// log of the conversion objective at a given alpha > 1.
double log_delta_at(double alpha, double rho, double eps) {
  return (alpha - 1.0) * (alpha * rho - eps) - std::log(alpha - 1.0) +
         alpha * std::log1p(-1.0 / alpha);
}

double min_log_delta(double rho, double eps) {
  // The unconstrained optimum of the dominant quadratic term sits near
  // (eps + rho) / (2 rho); widen generously and search on log(alpha).
  const double rough = (eps + rho) / (2.0 * rho);
  const double hi_alpha = std::max(500.0, 8.0 * rough);
  double lo = std::log1p(1e-12);
  double hi = std::log(hi_alpha);

  const double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = log_delta_at(std::exp(c), rho, eps);
  double fd = log_delta_at(std::exp(d), rho, eps);
  for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = log_delta_at(std::exp(c), rho, eps);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = log_delta_at(std::exp(d), rho, eps);
    }
  }
  double best = std::min(fc, fd);

  // Grid fallback in case the objective was not unimodal over the bracket.
  const int grid = 4000;
  for (int i = 0; i <= grid; ++i) {
    const double u = lo + (hi - lo) * i / grid;
    best = std::min(best, log_delta_at(std::exp(u), rho, eps));
  }
  return best;
}

}  // namespace

PrivacyAccountant::PrivacyAccountant(double rho_total) : total_(rho_total) {
  if (!(rho_total > 0.0) || !std::isfinite(rho_total)) {
    throw ConfigError("privacy budget must be positive and finite");
  }
}

PrivacyAccountant::PrivacyAccountant(double rho_total, std::pair<double, double> target)
    : PrivacyAccountant(rho_total) {
  target_ = target;
}

PrivacyAccountant PrivacyAccountant::from_eps_delta(double eps, double delta) {
  return PrivacyAccountant(solve_rho(eps, delta), std::make_pair(eps, delta));
}

double PrivacyAccountant::rho_spent() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return spent_;
}

double PrivacyAccountant::rho_remaining() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return total_ - spent_;
}

void PrivacyAccountant::charge(double rho, const std::string& label) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) {
    throw ConfigError("spend '" + label + "' has invalid cost");
  }
  std::lock_guard<std::mutex> lock(mutex_);
  if (spent_ + rho > total_ + 1e-12) {
    throw BudgetError("spend '" + label + "' of " + std::to_string(rho) +
                      " zCDP exceeds remaining budget " + std::to_string(total_ - spent_));
  }
  spent_ += rho;
  spends_.push_back(Spend{label, rho});
}

std::vector<Spend> PrivacyAccountant::spends() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return spends_;
}

double zcdp_to_eps_delta(double rho, double eps) {
  if (!(rho > 0.0)) throw ConfigError("rho must be positive");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  const double ld = min_log_delta(rho, eps);
  if (ld >= 0.0) return 1.0;
  return std::exp(ld);
}

double solve_rho(double eps, double delta) {
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(delta > 0.0) || !(delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");

  double lo = 1e-18;
  if (zcdp_to_eps_delta(lo, eps) > delta) {
    throw NumericError("solve_rho: delta unattainably small for this eps");
  }
  double hi = 1e-6;
  while (zcdp_to_eps_delta(hi, eps) < delta) {
    hi *= 2.0;
    if (hi > 1e9) throw NumericError("solve_rho: failed to bracket delta");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (zcdp_to_eps_delta(mid, eps) < delta) {
      lo = mid;
    } else {
      hi = mid;
    }
    const double d = zcdp_to_eps_delta(hi, eps);
    if (std::abs(d - delta) / delta <= 1e-8) return hi;
  }
  const double rho = hi;
  if (std::abs(zcdp_to_eps_delta(rho, eps) - delta) / delta > 1e-6) {
    throw NumericError("solve_rho: bisection did not reach the target delta");
  }
  return rho;
}

double gaussian_cost(double sigma2) {
  if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be positive");
  return 0.5 / sigma2;
}

double residual_cov_cost(const Domain& domain, const Clique& tau, double sigma2) {
  if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be positive");
  domain.validate(tau);
  double prod = 1.0;
  for (int attr : tau) {
    const int n = domain.size(attr);
    const Eigen::MatrixXd d = kron::Factor::diff(n).dense();
    const Eigen::MatrixXd gram = d * d.transpose();
    const Eigen::MatrixXd proj = d.transpose() * gram.ldlt().solve(d);
    prod *= proj.diagonal().maxCoeff();
  }
  return 0.5 * prod / sigma2;
}

std::vector<double> gaussian_measure(PrivacyAccountant& acct, std::span<const double> answer,
                                     double sigma2, RngStream& rng,
                                     const std::string& label) {
  acct.charge(gaussian_cost(sigma2), label);
  const double sigma = std::sqrt(sigma2);
  std::vector<double> noisy(answer.begin(), answer.end());
  for (double& v : noisy) v += sigma * rng.normal();
  return noisy;
}

ResidualVector residual_cov_measure(PrivacyAccountant& acct, const OperatorCache& ops,
                                    const ResidualVector& alpha, double sigma2,
                                    RngStream& rng, const std::string& label) {
  const Domain& domain = ops.domain();
  if (alpha.values.size() != domain.residual_len(alpha.clique)) {
    throw ShapeError("residual on " + clique_label(domain, alpha.clique) +
                     " has the wrong length");
  }
  acct.charge(residual_cov_cost(domain, alpha.clique, sigma2), label);
  const double sigma = std::sqrt(sigma2);
  std::vector<double> g(domain.marginal_len(alpha.clique));
  for (double& v : g) v = sigma * rng.normal();
  std::vector<double> noise = ops.residual_diff(alpha.clique).apply(g);
  ResidualVector out{alpha.clique, alpha.values};
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += noise[i];
  return out;
}

std::size_t exponential_select(PrivacyAccountant& acct, std::span<const double> scores,
                               double eps, double sensitivity, RngStream& rng,
                               const std::string& label) {
  if (scores.empty()) throw ConfigError("exponential_select: no candidates");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(sensitivity > 0.0)) throw ConfigError("sensitivity must be positive");
  acct.charge(eps * eps / 8.0, label);
  std::size_t best = 0;
  double best_key = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double key = eps * scores[i] / (2.0 * sensitivity) + rng.gumbel();
    if (key > best_key) {
      best_key = key;
      best = i;
    }
  }
  return best;
}

}  // namespace rem
