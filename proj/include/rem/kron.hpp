#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rem/errors.hpp"

namespace rem::kron {

// Structured factors of a Kronecker product operator over one attribute axis.
//
//   identity         I_n                (n x n)
//   ones_row         1^T                (1 x n), sums an axis away
//   scaled_ones_col  c * 1              (n x 1), broadcasts with weight c
//   diff             successive differences, (Dv)_i = v_i - v_{i+1}   ((n-1) x n)
//   diff_pinv        closed-form pseudoinverse of diff                (n x (n-1))
//   scalar_one       [1]                (1 x 1), placeholder for absent axes
enum class FactorType {
  identity,
  ones_row,
  scaled_ones_col,
  diff,
  diff_pinv,
  scalar_one,
};

struct Factor {
  FactorType type = FactorType::scalar_one;
  int n = 1;
  double scale = 1.0;

  static Factor identity(int n);
  static Factor ones_row(int n);
  static Factor scaled_ones_col(int n, double scale);
  static Factor diff(int n);
  static Factor diff_pinv(int n);
  static Factor scalar_one();

  std::size_t rows() const;
  std::size_t cols() const;
  // True when the factor is a square no-op (identity or scalar_one).
  bool is_noop() const;
  Eigen::MatrixXd dense() const;
};

// Kronecker product of structured factors, applied without materializing the
// product.  Factor order matches attribute order; the first factor varies
// slowest in the row-major input and output vectors.
class KronOperator {
 public:
  KronOperator() = default;
  explicit KronOperator(std::vector<Factor> factors);

  const std::vector<Factor>& factors() const { return factors_; }
  std::size_t in_len() const { return in_len_; }
  std::size_t out_len() const { return out_len_; }

  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> apply_transpose(std::span<const double> y) const;

 private:
  std::vector<Factor> factors_;
  std::size_t in_len_ = 1;
  std::size_t out_len_ = 1;
};

// Materializes the full product matrix.  Test and debugging aid only; refuses
// to allocate more than `guard` entries.
Eigen::MatrixXd dense_materialize(const KronOperator& op, std::size_t guard = 1000000);

// Applies a Kronecker product of small dense matrices axis by axis, same data
// layout as KronOperator.  Used where per-axis matrices have no structured
// form (e.g. inverses of small Gram matrices).
std::vector<double> apply_dense_kron(std::span<const Eigen::MatrixXd> mats,
                                     std::span<const double> x);

}  // namespace rem::kron
