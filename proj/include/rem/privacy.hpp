#pragma once

#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rem/rng.hpp"
#include "rem/workload.hpp"

namespace rem {

struct Spend {
  std::string label;
  double rho = 0.0;
};

// Tracks zCDP budget under adaptive composition.  Every mechanism charges the
// accountant before sampling noise, so an overdraw never leaks anything.
class PrivacyAccountant {
 public:
  explicit PrivacyAccountant(double rho_total);
  static PrivacyAccountant from_eps_delta(double eps, double delta);

  double rho_total() const { return total_; }
  double rho_spent() const;
  double rho_remaining() const;
  std::optional<std::pair<double, double>> eps_delta_target() const { return target_; }

  void charge(double rho, const std::string& label);
  std::vector<Spend> spends() const;

 private:
  PrivacyAccountant(double rho_total, std::pair<double, double> target);

  double total_ = 0.0;
  std::optional<std::pair<double, double>> target_;
  mutable std::mutex mutex_;
  double spent_ = 0.0;
  std::vector<Spend> spends_;
};

// delta = min_{alpha>1} exp((alpha-1)(alpha*rho - eps)) / (alpha-1)
//         * (1 - 1/alpha)^alpha, capped at 1.
double zcdp_to_eps_delta(double rho, double eps);

// Inverse of the above in rho at fixed eps, by bisection.
double solve_rho(double eps, double delta);

double gaussian_cost(double sigma2);

// zCDP cost of releasing the residual on tau with covariance sigma2 * D D^T:
// max diagonal of R^T Sigma^{-1} R / 2, assembled from per-attribute
// projection factors.
double residual_cov_cost(const Domain& domain, const Clique& tau, double sigma2);

// answer + N(0, sigma2 * I); charges 1/(2 sigma2).
std::vector<double> gaussian_measure(PrivacyAccountant& acct, std::span<const double> answer,
                                     double sigma2, RngStream& rng, const std::string& label);

// alpha + sigma * D_tau g with g standard normal over tau's marginal cells,
// so the noise covariance is exactly sigma2 * D_tau D_tau^T.
ResidualVector residual_cov_measure(PrivacyAccountant& acct, const OperatorCache& ops,
                                    const ResidualVector& alpha, double sigma2,
                                    RngStream& rng, const std::string& label);

// Gumbel-max sampling with Pr(i) proportional to exp(eps * score_i / (2 * sensitivity));
// charges eps^2 / 8.
std::size_t exponential_select(PrivacyAccountant& acct, std::span<const double> scores,
                               double eps, double sensitivity, RngStream& rng,
                               const std::string& label);

}  // namespace rem
