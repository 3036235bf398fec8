#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "rem/kron.hpp"
#include "rem/rng.hpp"
#include "test_support.hpp"

using rem::kron::Factor;
using rem::kron::KronOperator;
using rem::kron::apply_dense_kron;
using rem::kron::dense_materialize;

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_close(const std::vector<double>& got, const std::vector<double>& want,
                 double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    INFO("index ", i);
    CHECK(std::abs(got[i] - want[i]) <= tol * std::max(1.0, std::abs(want[i])));
  }
}

Factor random_factor(rem::RngStream& rng) {
  const int pick = static_cast<int>(rng.next_u64() % 6);
  const int n = 2 + static_cast<int>(rng.next_u64() % 4);
  switch (pick) {
    case 0: return Factor::identity(n);
    case 1: return Factor::ones_row(n);
    case 2: return Factor::scaled_ones_col(n, 0.25 + rng.uniform());
    case 3: return Factor::diff(n);
    case 4: return Factor::diff_pinv(n);
    default: return Factor::scalar_one();
  }
}

KronOperator random_operator(rem::RngStream& rng, std::size_t max_len) {
  for (;;) {
    const int count = 1 + static_cast<int>(rng.next_u64() % 4);
    std::vector<Factor> factors;
    for (int i = 0; i < count; ++i) factors.push_back(random_factor(rng));
    KronOperator op(std::move(factors));
    if (op.in_len() <= max_len && op.out_len() <= max_len) return op;
  }
}

}  // namespace

TEST_CASE("difference factor matches hand-worked values") {
  KronOperator d3({Factor::diff(3)});
  check_close(d3.apply(std::vector<double>{5, 3, 2}), {2, 1});
  check_close(d3.apply(std::vector<double>{4, 4, 4}), {0, 0});
  check_close(d3.apply_transpose(std::vector<double>{1, 0}), {1, -1, 0});

  KronOperator dp3({Factor::diff_pinv(3)});
  check_close(dp3.apply(std::vector<double>{3, 0}), {2, -1, -1});
}

TEST_CASE("ones row sums and its transpose broadcasts") {
  KronOperator row({Factor::ones_row(3)});
  check_close(row.apply(std::vector<double>{1, 2, 4}), {7});
  check_close(row.apply_transpose(std::vector<double>{6}), {6, 6, 6});
}

TEST_CASE("scaled ones column broadcasts with weight") {
  KronOperator col({Factor::scaled_ones_col(4, 0.25)});
  check_close(col.apply(std::vector<double>{8}), {2, 2, 2, 2});
  check_close(col.apply_transpose(std::vector<double>{1, 2, 3, 4}), {2.5});
}

TEST_CASE("dense materialization of small factors") {
  Eigen::MatrixXd d2 = dense_materialize(KronOperator({Factor::diff(2)}));
  REQUIRE(d2.rows() == 1);
  REQUIRE(d2.cols() == 2);
  CHECK(d2(0, 0) == 1.0);
  CHECK(d2(0, 1) == -1.0);

  Eigen::MatrixXd one = dense_materialize(KronOperator({Factor::scalar_one()}));
  REQUIRE(one.rows() == 1);
  REQUIRE(one.cols() == 1);
  CHECK(one(0, 0) == 1.0);

  Eigen::MatrixXd proj = dense_materialize(KronOperator({Factor::ones_row(2), Factor::identity(2)}));
  Eigen::MatrixXd want(2, 4);
  want << 1, 0, 1, 0, 0, 1, 0, 1;
  CHECK((proj - want).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("diff pseudoinverse is a right inverse with zero column sums") {
  for (int n : {2, 3, 5, 9}) {
    Eigen::MatrixXd d = Factor::diff(n).dense();
    Eigen::MatrixXd dp = Factor::diff_pinv(n).dense();
    Eigen::MatrixXd prod = d * dp;
    CHECK((prod - Eigen::MatrixXd::Identity(n - 1, n - 1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(dp.colwise().sum().cwiseAbs().maxCoeff() < 1e-12);
    // Agreement with the SVD pseudoinverse pins down the closed form.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXd svd_pinv =
        svd.matrixV() * svd.singularValues().cwiseInverse().asDiagonal() * svd.matrixU().transpose();
    CHECK((dp - svd_pinv).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("factor constructors reject degenerate sizes") {
  CHECK_THROWS_AS(Factor::diff(1), rem::ShapeError);
  CHECK_THROWS_AS(Factor::diff_pinv(1), rem::ShapeError);
  CHECK_THROWS_AS(Factor::identity(0), rem::ShapeError);
}

TEST_CASE("apply rejects mismatched input lengths") {
  KronOperator op({Factor::diff(3), Factor::identity(2)});
  CHECK(op.in_len() == 6);
  CHECK(op.out_len() == 4);
  CHECK_THROWS_AS(op.apply(std::vector<double>{1, 2, 3}), rem::ShapeError);
  CHECK_THROWS_AS(op.apply_transpose(std::vector<double>{1, 2, 3}), rem::ShapeError);
}

TEST_CASE("dense materialization refuses oversized operators") {
  KronOperator op({Factor::identity(1024), Factor::identity(1024)});
  CHECK_THROWS_AS(dense_materialize(op), rem::GuardError);
}

TEST_CASE("random operators agree with their dense form") {
  rem::RngStream rng(101, 0);
  for (int trial = 0; trial < 100; ++trial) {
    KronOperator op = random_operator(rng, 2048);
    Eigen::MatrixXd dense = dense_materialize(op, 1u << 24);
    std::vector<double> x = test_support::random_vector(rng, op.in_len(), -1.0, 1.0);
    std::vector<double> y = test_support::random_vector(rng, op.out_len(), -1.0, 1.0);
    Eigen::VectorXd want = dense * to_eigen(x);
    Eigen::VectorXd want_t = dense.transpose() * to_eigen(y);
    check_close(op.apply(x), to_std(want), 1e-10);
    check_close(op.apply_transpose(y), to_std(want_t), 1e-10);
  }
}

TEST_CASE("composition matches the matrix product") {
  rem::RngStream rng(202, 0);
  for (int trial = 0; trial < 40; ++trial) {
    KronOperator b = random_operator(rng, 512);
    // Build a compatible left operator axis by axis.
    std::vector<Factor> left;
    for (const Factor& f : b.factors()) {
      const int rows = static_cast<int>(f.rows());
      if (rows == 1) {
        left.push_back(Factor::scalar_one());
      } else if (rng.next_u64() % 2 == 0) {
        left.push_back(Factor::identity(rows));
      } else {
        left.push_back(Factor::ones_row(rows));
      }
    }
    KronOperator a(std::move(left));
    REQUIRE(a.in_len() == b.out_len());
    std::vector<double> x = test_support::random_vector(rng, b.in_len(), -2.0, 2.0);
    Eigen::MatrixXd prod = dense_materialize(a, 1u << 24) * dense_materialize(b, 1u << 24);
    Eigen::VectorXd want = prod * to_eigen(x);
    check_close(a.apply(b.apply(x)), to_std(want), 1e-10);
  }
}

TEST_CASE("dense kron apply matches explicit kronecker product") {
  rem::RngStream rng(303, 0);
  std::vector<Eigen::MatrixXd> mats;
  mats.push_back(Eigen::MatrixXd::Random(2, 3));
  mats.push_back(Eigen::MatrixXd::Random(4, 2));
  mats.push_back(Eigen::MatrixXd::Random(1, 5));
  Eigen::MatrixXd full = Eigen::MatrixXd::Ones(1, 1);
  for (const Eigen::MatrixXd& m : mats) {
    Eigen::MatrixXd next(full.rows() * m.rows(), full.cols() * m.cols());
    for (Eigen::Index i = 0; i < full.rows(); ++i)
      for (Eigen::Index j = 0; j < full.cols(); ++j)
        next.block(i * m.rows(), j * m.cols(), m.rows(), m.cols()) = full(i, j) * m;
    full = next;
  }
  std::vector<double> x = test_support::random_vector(rng, static_cast<std::size_t>(full.cols()),
                                                      -1.0, 1.0);
  Eigen::VectorXd want = full * to_eigen(x);
  check_close(apply_dense_kron(mats, x), to_std(want), 1e-10);
}

namespace {

double median_apply_seconds(const KronOperator& op, int reps) {
  std::vector<double> x(op.in_len(), 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i % 7) - 3.0;
  std::vector<double> times;
  volatile double sink = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> y = op.apply(x);
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + y[0];
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

TEST_CASE("structured apply scales near linearly in the axis size") {
  // Wide two-axis operator so per-call work dominates allocation overhead.
  std::vector<double> log_n;
  std::vector<double> log_t;
  for (int n : {1 << 8, 1 << 9, 1 << 10, 1 << 11, 1 << 12, 1 << 13, 1 << 14}) {
    KronOperator op({Factor::diff(n), Factor::diff_pinv(65)});
    median_apply_seconds(op, 2);  // warm up
    log_n.push_back(std::log(static_cast<double>(n)));
    log_t.push_back(std::log(median_apply_seconds(op, 9)));
  }
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (std::size_t i = 0; i < log_n.size(); ++i) {
    mean_x += log_n[i];
    mean_y += log_t[i];
  }
  mean_x /= static_cast<double>(log_n.size());
  mean_y /= static_cast<double>(log_n.size());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < log_n.size(); ++i) {
    num += (log_n[i] - mean_x) * (log_t[i] - mean_y);
    den += (log_n[i] - mean_x) * (log_n[i] - mean_x);
  }
  const double slope = num / den;
  INFO("fitted slope ", slope);
  CHECK(slope < 1.2);
}
