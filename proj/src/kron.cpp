#include "rem/kron.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <string>

namespace rem::kron {

namespace {

void require_min_size(const char* what, int n, int min_n) {
  if (n < min_n) {
    throw ShapeError(std::string(what) + " factor needs size >= " +
                     std::to_string(min_n) + ", got " + std::to_string(n));
  }
}

std::size_t checked_mul(std::size_t a, std::size_t b) {
  if (b != 0 && a > std::numeric_limits<std::size_t>::max() / b) {
    throw GuardError("kron operator dimensions overflow");
  }
  return a * b;
}

// One axis of the product: reshape x as (left, cols, right) row-major and
// contract the middle axis with the factor (or its transpose).  All kernels
// keep the innermost loop over the contiguous `right` block.
void apply_axis(const Factor& f, bool transposed, std::size_t left, std::size_t right,
                const double* x, double* y, std::vector<double>& scratch) {
  const std::size_t n = static_cast<std::size_t>(f.n);
  switch (f.type) {
    case FactorType::identity:
    case FactorType::scalar_one:
      std::memcpy(y, x, left * n * right * sizeof(double));
      break;

    case FactorType::ones_row:
      if (!transposed) {
        for (std::size_t l = 0; l < left; ++l) {
          const double* xb = x + l * n * right;
          double* yb = y + l * right;
          std::memcpy(yb, xb, right * sizeof(double));
          for (std::size_t j = 1; j < n; ++j) {
            const double* row = xb + j * right;
            for (std::size_t r = 0; r < right; ++r) yb[r] += row[r];
          }
        }
      } else {
        for (std::size_t l = 0; l < left; ++l) {
          const double* xb = x + l * right;
          double* yb = y + l * n * right;
          for (std::size_t i = 0; i < n; ++i) {
            std::memcpy(yb + i * right, xb, right * sizeof(double));
          }
        }
      }
      break;

    case FactorType::scaled_ones_col:
      if (!transposed) {
        for (std::size_t l = 0; l < left; ++l) {
          const double* xb = x + l * right;
          double* yb = y + l * n * right;
          for (std::size_t i = 0; i < n; ++i) {
            double* row = yb + i * right;
            for (std::size_t r = 0; r < right; ++r) row[r] = f.scale * xb[r];
          }
        }
      } else {
        for (std::size_t l = 0; l < left; ++l) {
          const double* xb = x + l * n * right;
          double* yb = y + l * right;
          std::memcpy(yb, xb, right * sizeof(double));
          for (std::size_t j = 1; j < n; ++j) {
            const double* row = xb + j * right;
            for (std::size_t r = 0; r < right; ++r) yb[r] += row[r];
          }
          for (std::size_t r = 0; r < right; ++r) yb[r] *= f.scale;
        }
      }
      break;

    case FactorType::diff:
      if (!transposed) {
        for (std::size_t l = 0; l < left; ++l) {
          const double* xb = x + l * n * right;
          double* yb = y + l * (n - 1) * right;
          for (std::size_t i = 0; i + 1 < n; ++i) {
            const double* a = xb + i * right;
            const double* b = a + right;
            double* row = yb + i * right;
            for (std::size_t r = 0; r < right; ++r) row[r] = a[r] - b[r];
          }
        }
      } else {
        for (std::size_t l = 0; l < left; ++l) {
          const double* xb = x + l * (n - 1) * right;
          double* yb = y + l * n * right;
          std::memcpy(yb, xb, right * sizeof(double));
          for (std::size_t i = 1; i + 1 < n; ++i) {
            const double* a = xb + i * right;
            const double* b = a - right;
            double* row = yb + i * right;
            for (std::size_t r = 0; r < right; ++r) row[r] = a[r] - b[r];
          }
          const double* last = xb + (n - 2) * right;
          double* row = yb + (n - 1) * right;
          for (std::size_t r = 0; r < right; ++r) row[r] = -last[r];
        }
      }
      break;

    case FactorType::diff_pinv: {
      // Closed form: row i of the pinv output is s/n - sum_{j<i} x_j where
      // s = sum_j (n-1-j) x_j, so consecutive rows differ by one input row.
      const std::size_t m = n - 1;
      const double inv_n = 1.0 / static_cast<double>(n);
      if (!transposed) {
        scratch.resize(right);
        for (std::size_t l = 0; l < left; ++l) {
          const double* xb = x + l * m * right;
          double* yb = y + l * n * right;
          std::fill(scratch.begin(), scratch.end(), 0.0);
          for (std::size_t j = 0; j < m; ++j) {
            const double w = static_cast<double>(m - j);
            const double* row = xb + j * right;
            for (std::size_t r = 0; r < right; ++r) scratch[r] += w * row[r];
          }
          for (std::size_t r = 0; r < right; ++r) yb[r] = scratch[r] * inv_n;
          for (std::size_t i = 1; i < n; ++i) {
            const double* prev = yb + (i - 1) * right;
            const double* sub = xb + (i - 1) * right;
            double* row = yb + i * right;
            for (std::size_t r = 0; r < right; ++r) row[r] = prev[r] - sub[r];
          }
        }
      } else {
        scratch.resize(2 * right);
        double* tot = scratch.data();
        double* suf = scratch.data() + right;
        for (std::size_t l = 0; l < left; ++l) {
          const double* xb = x + l * n * right;
          double* yb = y + l * m * right;
          std::memcpy(tot, xb, right * sizeof(double));
          for (std::size_t j = 1; j < n; ++j) {
            const double* row = xb + j * right;
            for (std::size_t r = 0; r < right; ++r) tot[r] += row[r];
          }
          std::fill(suf, suf + right, 0.0);
          for (std::size_t i = m; i-- > 0;) {
            const double* below = xb + (i + 1) * right;
            for (std::size_t r = 0; r < right; ++r) suf[r] += below[r];
            const double w = static_cast<double>(m - i) * inv_n;
            double* row = yb + i * right;
            for (std::size_t r = 0; r < right; ++r) row[r] = w * tot[r] - suf[r];
          }
        }
      }
      break;
    }
  }
}

}  // namespace

Factor Factor::identity(int n) {
  require_min_size("identity", n, 1);
  return Factor{FactorType::identity, n, 1.0};
}

Factor Factor::ones_row(int n) {
  require_min_size("ones_row", n, 1);
  return Factor{FactorType::ones_row, n, 1.0};
}

Factor Factor::scaled_ones_col(int n, double scale) {
  require_min_size("scaled_ones_col", n, 1);
  return Factor{FactorType::scaled_ones_col, n, scale};
}

Factor Factor::diff(int n) {
  require_min_size("diff", n, 2);
  return Factor{FactorType::diff, n, 1.0};
}

Factor Factor::diff_pinv(int n) {
  require_min_size("diff_pinv", n, 2);
  return Factor{FactorType::diff_pinv, n, 1.0};
}

Factor Factor::scalar_one() { return Factor{FactorType::scalar_one, 1, 1.0}; }

std::size_t Factor::rows() const {
  switch (type) {
    case FactorType::identity: return static_cast<std::size_t>(n);
    case FactorType::ones_row: return 1;
    case FactorType::scaled_ones_col: return static_cast<std::size_t>(n);
    case FactorType::diff: return static_cast<std::size_t>(n - 1);
    case FactorType::diff_pinv: return static_cast<std::size_t>(n);
    case FactorType::scalar_one: return 1;
  }
  return 0;
}

std::size_t Factor::cols() const {
  switch (type) {
    case FactorType::identity: return static_cast<std::size_t>(n);
    case FactorType::ones_row: return static_cast<std::size_t>(n);
    case FactorType::scaled_ones_col: return 1;
    case FactorType::diff: return static_cast<std::size_t>(n);
    case FactorType::diff_pinv: return static_cast<std::size_t>(n - 1);
    case FactorType::scalar_one: return 1;
  }
  return 0;
}

bool Factor::is_noop() const {
  return type == FactorType::identity || type == FactorType::scalar_one;
}

Eigen::MatrixXd Factor::dense() const {
  switch (type) {
    case FactorType::identity:
      return Eigen::MatrixXd::Identity(n, n);
    case FactorType::ones_row:
      return Eigen::MatrixXd::Ones(1, n);
    case FactorType::scaled_ones_col:
      return Eigen::MatrixXd::Constant(n, 1, scale);
    case FactorType::diff: {
      Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n - 1, n);
      for (int i = 0; i + 1 < n; ++i) {
        d(i, i) = 1.0;
        d(i, i + 1) = -1.0;
      }
      return d;
    }
    case FactorType::diff_pinv: {
      Eigen::MatrixXd d(n, n - 1);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j + 1 < n; ++j) {
          d(i, j) = static_cast<double>(n - 1 - j) / n - (j < i ? 1.0 : 0.0);
        }
      }
      return d;
    }
    case FactorType::scalar_one:
      return Eigen::MatrixXd::Ones(1, 1);
  }
  return {};
}

KronOperator::KronOperator(std::vector<Factor> factors) : factors_(std::move(factors)) {
  for (const Factor& f : factors_) {
    in_len_ = checked_mul(in_len_, f.cols());
    out_len_ = checked_mul(out_len_, f.rows());
  }
}

std::vector<double> KronOperator::apply(std::span<const double> x) const {
  if (x.size() != in_len_) {
    throw ShapeError("kron apply: input length " + std::to_string(x.size()) +
                     ", operator expects " + std::to_string(in_len_));
  }
  std::vector<double> bufs[2];
  std::vector<double> scratch;
  std::span<const double> cur = x;
  int which = 0;
  std::size_t left = 1;
  std::size_t rem = in_len_;
  bool touched = false;
  for (const Factor& f : factors_) {
    rem /= f.cols();
    if (f.is_noop()) {
      left *= f.rows();
      continue;
    }
    std::vector<double>& out = bufs[which];
    out.resize(left * f.rows() * rem);
    apply_axis(f, false, left, rem, cur.data(), out.data(), scratch);
    cur = out;
    which ^= 1;
    left *= f.rows();
    touched = true;
  }
  if (!touched) return std::vector<double>(x.begin(), x.end());
  return std::move(bufs[which ^ 1]);
}

std::vector<double> KronOperator::apply_transpose(std::span<const double> y) const {
  if (y.size() != out_len_) {
    throw ShapeError("kron apply_transpose: input length " + std::to_string(y.size()) +
                     ", operator expects " + std::to_string(out_len_));
  }
  std::vector<double> bufs[2];
  std::vector<double> scratch;
  std::span<const double> cur = y;
  int which = 0;
  std::size_t left = 1;
  std::size_t rem = out_len_;
  bool touched = false;
  for (const Factor& f : factors_) {
    rem /= f.rows();
    if (f.is_noop()) {
      left *= f.cols();
      continue;
    }
    std::vector<double>& out = bufs[which];
    out.resize(left * f.cols() * rem);
    apply_axis(f, true, left, rem, cur.data(), out.data(), scratch);
    cur = out;
    which ^= 1;
    left *= f.cols();
    touched = true;
  }
  if (!touched) return std::vector<double>(y.begin(), y.end());
  return std::move(bufs[which ^ 1]);
}

Eigen::MatrixXd dense_materialize(const KronOperator& op, std::size_t guard) {
  const std::size_t out = op.out_len();
  const std::size_t in = op.in_len();
  if (out != 0 && in > guard / out) {
    throw GuardError("dense_materialize: " + std::to_string(out) + " x " +
                     std::to_string(in) + " exceeds guard of " + std::to_string(guard) +
                     " entries");
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Ones(1, 1);
  for (const Factor& f : op.factors()) {
    const Eigen::MatrixXd fd = f.dense();
    Eigen::MatrixXd next(m.rows() * fd.rows(), m.cols() * fd.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        next.block(i * fd.rows(), j * fd.cols(), fd.rows(), fd.cols()) = m(i, j) * fd;
      }
    }
    m = std::move(next);
  }
  return m;
}

std::vector<double> apply_dense_kron(std::span<const Eigen::MatrixXd> mats,
                                     std::span<const double> x) {
  std::size_t in_len = 1;
  for (const auto& a : mats) in_len = checked_mul(in_len, a.cols());
  if (x.size() != in_len) {
    throw ShapeError("apply_dense_kron: input length " + std::to_string(x.size()) +
                     ", factors expect " + std::to_string(in_len));
  }
  std::vector<double> bufs[2];
  std::span<const double> cur = x;
  int which = 0;
  std::size_t left = 1;
  std::size_t rem = in_len;
  bool touched = false;
  for (const auto& a : mats) {
    const std::size_t nr = a.rows();
    const std::size_t nc = a.cols();
    rem /= nc;
    std::vector<double>& out = bufs[which];
    out.resize(left * nr * rem);
    for (std::size_t l = 0; l < left; ++l) {
      const double* xb = cur.data() + l * nc * rem;
      double* yb = out.data() + l * nr * rem;
      for (std::size_t i = 0; i < nr; ++i) {
        double* row = yb + i * rem;
        std::fill(row, row + rem, 0.0);
        for (std::size_t j = 0; j < nc; ++j) {
          const double w = a(i, j);
          if (w == 0.0) continue;
          const double* src = xb + j * rem;
          for (std::size_t r = 0; r < rem; ++r) row[r] += w * src[r];
        }
      }
    }
    cur = out;
    which ^= 1;
    left *= nr;
    touched = true;
  }
  if (!touched) return std::vector<double>(x.begin(), x.end());
  return std::move(bufs[which ^ 1]);
}

}  // namespace rem::kron
