#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rem/errors.hpp"
#include "rem/kron.hpp"

namespace rem {

// Attribute subset, as strictly ascending attribute indices.  The empty
// clique is the table total.
using Clique = std::vector<int>;

struct Attribute {
  std::string name;
  int size = 0;
  // Category labels in code order; empty when the attribute is unlabeled.
  std::vector<std::string> labels;

  bool operator==(const Attribute&) const = default;
};

class Domain {
 public:
  Domain() = default;
  explicit Domain(std::vector<Attribute> attributes);

  int dim() const { return static_cast<int>(attributes_.size()); }
  int size(int attr) const;
  const std::string& name(int attr) const;
  int index_of(const std::string& name) const;
  const std::vector<Attribute>& attributes() const { return attributes_; }

  // Throws CliqueError unless indices are in range, strictly ascending.
  void validate(const Clique& clique) const;

  // Cell count of the marginal on `clique` (1 for the empty clique).
  std::size_t marginal_len(const Clique& clique) const;
  // Length of the residual vector on `clique`: product of (size - 1).
  std::size_t residual_len(const Clique& clique) const;
  // Product of all attribute sizes, as a double since it can be astronomically large.
  double universe_size() const;

  Clique clique_of(const std::vector<std::string>& names) const;
  std::vector<std::string> names_of(const Clique& clique) const;

  nlohmann::json to_json() const;
  static Domain from_json(const nlohmann::json& j);
  static Domain load(const std::string& path);
  void save(const std::string& path) const;

  bool operator==(const Domain&) const = default;

 private:
  std::vector<Attribute> attributes_;
  std::map<std::string, int> index_;
};

// Marginal table over a clique, cells in row-major order with the smallest
// attribute index varying slowest.
struct MarginalTable {
  Clique clique;
  std::vector<double> values;
};

// Residual coefficients over a clique, same layout with per-axis length
// (size - 1).  The empty clique's residual is the scalar table total.
struct ResidualVector {
  Clique clique;
  std::vector<double> values;
};

// All subsets of all input cliques, deduplicated, sorted by (length, lex).
// Always contains the empty clique when the input is non-empty.
std::vector<Clique> downward_closure(std::span<const Clique> cliques);

std::vector<Clique> subsets_of(const Clique& clique);
std::vector<Clique> all_k_way(const Domain& domain, int k);

bool is_subset(const Clique& a, const Clique& b);

std::string clique_label(const Domain& domain, const Clique& clique);

// Builds and memoizes the structured operators tying residuals to marginals.
// Thread-safe; operators are immutable once built.
class OperatorCache {
 public:
  explicit OperatorCache(Domain domain);

  const Domain& domain() const { return domain_; }

  // Marginal query matrix M_gamma restricted to gamma's axes is the identity;
  // the interesting operators all act between cliques tau subset gamma.

  // lift(gamma, tau): residual(tau) -> marginal(gamma).  Per axis: the diff
  // pseudoinverse on tau's attributes, a (1/n) ones column on gamma \ tau.
  const kron::KronOperator& lift(const Clique& gamma, const Clique& tau) const;

  // extract(gamma, tau): marginal(gamma) -> residual(tau).  Per axis: diff on
  // tau's attributes, a ones row on gamma \ tau.  Left inverse of lift.
  const kron::KronOperator& extract(const Clique& gamma, const Clique& tau) const;

  // residual_diff(tau): marginal(tau) -> residual(tau), diff on every axis.
  const kron::KronOperator& residual_diff(const Clique& tau) const;

  // project(gamma, tau): marginal(gamma) -> marginal(tau), summing out
  // gamma \ tau.
  const kron::KronOperator& project(const Clique& gamma, const Clique& tau) const;

 private:
  enum class Op { lift, extract, residual_diff, project };
  const kron::KronOperator& get(Op op, const Clique& gamma, const Clique& tau) const;

  Domain domain_;
  mutable std::mutex mutex_;
  mutable std::map<std::tuple<int, Clique, Clique>, std::unique_ptr<kron::KronOperator>> cache_;
};

// Residual of a marginal: z_tau = extract(gamma, tau) applied to mu.
ResidualVector residual_from_marginal(const OperatorCache& ops, const MarginalTable& mu,
                                      const Clique& tau);

// Reconstructs mu_gamma from residuals on subsets of gamma.  Missing subsets
// contribute zero (the minimum-norm completion).  Residuals on cliques that
// are not subsets of gamma raise CliqueError.
MarginalTable marginal_from_residuals(const OperatorCache& ops, const Clique& gamma,
                                      const std::map<Clique, ResidualVector>& residuals);

MarginalTable project_marginal(const OperatorCache& ops, const MarginalTable& mu,
                               const Clique& tau);

}  // namespace rem
