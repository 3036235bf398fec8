#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "rem/oracle.hpp"
#include "rem/reconstruct.hpp"
#include "rem/rng.hpp"
#include "test_support.hpp"

using namespace rem;

namespace {

Domain domain_of(std::vector<int> sizes) {
  std::vector<Attribute> attrs;
  for (std::size_t i = 0; i < sizes.size(); ++i)
    attrs.push_back({"a" + std::to_string(i), sizes[i], {}});
  return Domain(std::move(attrs));
}

void check_close(const std::vector<double>& got, const std::vector<double>& want,
                 double tol = 1e-12) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    INFO("index ", i);
    CHECK(std::abs(got[i] - want[i]) <= tol * std::max(1.0, std::abs(want[i])));
  }
}

}  // namespace

TEST_CASE("inverse-variance combination of repeated measurements") {
  ResidualMeasurement a{{0}, {4.0}, 1.0, "residual"};
  ResidualMeasurement b{{0}, {8.0}, 3.0, "residual"};
  std::vector<ResidualMeasurement> both{a, b};
  check_close(grem_mle_combine(std::vector<ResidualMeasurement>{a}).values, {4.0});
  check_close(grem_mle_combine(both).values, {5.0});

  CHECK_THROWS_AS(grem_mle_combine(std::vector<ResidualMeasurement>{}), ConfigError);
  ResidualMeasurement other{{1}, {1.0}, 1.0, "residual"};
  std::vector<ResidualMeasurement> mixed{a, other};
  CHECK_THROWS_AS(grem_mle_combine(mixed), CliqueError);
  ResidualMeasurement bad{{0}, {1.0}, 0.0, "residual"};
  std::vector<ResidualMeasurement> with_bad{a, bad};
  CHECK_THROWS_AS(grem_mle_combine(with_bad), ConfigError);
}

TEST_CASE("scalar weighting equals the dense generalized least squares solve") {
  Domain d = domain_of({4});
  OperatorCache ops(d);
  Eigen::MatrixXd diff = kron::dense_materialize(ops.residual_diff({0}));
  Eigen::MatrixXd gram = diff * diff.transpose();

  rem::RngStream rng(808, 0);
  std::vector<ResidualMeasurement> ms;
  std::vector<double> sigmas{0.5, 1.0, 2.5};
  for (double s2 : sigmas)
    ms.push_back({{0}, test_support::random_vector(rng, 3, -2, 2), s2, "residual"});

  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(3);
  for (const ResidualMeasurement& m : ms) {
    Eigen::MatrixXd prec = (m.sigma2 * gram).inverse();
    info += prec;
    rhs += prec * Eigen::Map<const Eigen::VectorXd>(m.values.data(), 3);
  }
  Eigen::VectorXd want = info.ldlt().solve(rhs);
  check_close(grem_mle_combine(ms).values,
              std::vector<double>(want.data(), want.data() + 3), 1e-10);
}

TEST_CASE("marginal decomposition matches hand-worked scales") {
  Domain d = domain_of({2});
  OperatorCache ops(d);
  std::vector<double> y{3.0, 5.0};
  std::vector<ResidualMeasurement> parts = decompose_marginal(ops, {0}, y, 1.0);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].tau == Clique{});
  check_close(parts[0].values, {8.0});
  CHECK(parts[0].sigma2 == 2.0);
  CHECK(parts[1].tau == Clique{0});
  check_close(parts[1].values, {-2.0});
  CHECK(parts[1].sigma2 == 1.0);
  CHECK(parts[0].provenance == "marginal {a0}");
}

TEST_CASE("decomposition recovers exact residuals from exact marginals") {
  rem::RngStream rng(809, 0);
  for (int trial = 0; trial < 15; ++trial) {
    Domain dom = test_support::random_domain(rng, 3, 4);
    OperatorCache ops(dom);
    Clique gamma;
    for (int a = 0; a < dom.dim(); ++a) gamma.push_back(a);
    MarginalTable mu{gamma, test_support::random_vector(rng, dom.marginal_len(gamma), 0, 6)};
    for (const ResidualMeasurement& part : decompose_marginal(ops, gamma, mu.values, 0.7)) {
      ResidualVector want = residual_from_marginal(ops, mu, part.tau);
      check_close(part.values, want.values, 1e-10);
      double expect = 0.7;
      for (int a : gamma)
        if (std::find(part.tau.begin(), part.tau.end(), a) == part.tau.end())
          expect *= dom.size(a);
      CHECK(part.sigma2 == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("decomposed components are independent with the advertised covariance") {
  Domain d = domain_of({2, 3});
  OperatorCache ops(d);
  const Clique gamma{0, 1};
  const double sigma2 = 1.3;
  MarginalTable mu{gamma, {5, 2, 1, 4, 3, 6}};

  const int draws = 20000;
  // Stack all residual coordinates: 1 + 1 + 2 + 2.
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(6, 6);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(6);
  std::vector<ResidualMeasurement> clean = decompose_marginal(ops, gamma, mu.values, sigma2);
  for (int i = 0; i < draws; ++i) {
    RngStream rng(900, static_cast<std::uint64_t>(i));
    std::vector<double> noisy = mu.values;
    for (double& v : noisy) v += std::sqrt(sigma2) * rng.normal();
    std::vector<ResidualMeasurement> parts = decompose_marginal(ops, gamma, noisy, sigma2);
    Eigen::VectorXd z(6);
    int at = 0;
    for (std::size_t p = 0; p < parts.size(); ++p)
      for (std::size_t j = 0; j < parts[p].values.size(); ++j)
        z[at++] = parts[p].values[j] - clean[p].values[j];
    sum += z * z.transpose();
    mean += z;
  }
  Eigen::MatrixXd emp = sum / draws;
  mean /= draws;

  // Want block-diagonal sigma2_tau * D D^T per component, zero across.
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(6, 6);
  int at = 0;
  for (const ResidualMeasurement& part : clean) {
    Eigen::MatrixXd dd = kron::dense_materialize(ops.residual_diff(part.tau));
    Eigen::MatrixXd block = part.sigma2 * dd * dd.transpose();
    want.block(at, at, block.rows(), block.cols()) = block;
    at += static_cast<int>(block.rows());
  }
  CHECK((emp - want).norm() <= 0.10 * want.norm());
  CHECK(mean.cwiseAbs().maxCoeff() < 0.15);
}

TEST_CASE("single fully measured marginal reconstructs to itself") {
  Domain d = domain_of({2, 3});
  OperatorCache ops(d);
  std::vector<MarginalMeasurement> measured{{{0, 1}, {1, 2, 3, 4, 5, 6}, 1.0}};
  std::vector<Clique> w{{0, 1}};
  Reconstruction recon = emp_reconstruct(ops, w, measured);
  check_close(recon.marginals.at({0, 1}).values, {1, 2, 3, 4, 5, 6}, 1e-12);
  CHECK(recon.meta.at({0, 1}).contributing == 4);
  CHECK(recon.meta.at({0, 1}).expected == 4);
  CHECK(!recon.meta.at({0, 1}).partial);
}

TEST_CASE("pseudoinverse reconstruction matches the dense oracle") {
  rem::RngStream rng(810, 0);
  for (int trial = 0; trial < 10; ++trial) {
    Domain dom = test_support::random_domain(rng, 3, 3);
    OperatorCache ops(dom);
    std::vector<Clique> workload = test_support::one_and_two_way(dom);
    std::vector<MarginalMeasurement> measured;
    for (const Clique& gamma : workload)
      measured.push_back(
          {gamma, test_support::random_vector(rng, dom.marginal_len(gamma), -1, 5), 1.0});
    oracle::DeviationReport equal_sigma = oracle::emp_vs_dense(dom, workload, measured, 1e-8);
    INFO("equal-sigma deviation ", equal_sigma.max_rel_dev);
    CHECK(equal_sigma.ok);

    for (std::size_t i = 0; i < measured.size(); ++i)
      measured[i].sigma2 = 0.5 + 0.5 * static_cast<double>(i % 3);
    oracle::DeviationReport scaled = oracle::emp_vs_dense(dom, workload, measured, 1e-8);
    INFO("scaled-sigma deviation ", scaled.max_rel_dev);
    CHECK(scaled.ok);
  }
}

TEST_CASE("the dense oracle catches an injected fault") {
  Domain dom = domain_of({2, 3});
  OperatorCache ops(dom);
  std::vector<Clique> workload{{0}, {0, 1}};
  rem::RngStream rng(811, 0);
  std::vector<MarginalMeasurement> measured;
  for (const Clique& gamma : workload)
    measured.push_back(
        {gamma, test_support::random_vector(rng, dom.marginal_len(gamma), 1, 4), 1.0});
  CHECK(oracle::emp_vs_dense(dom, workload, measured, 1e-8).ok);
  CHECK(!oracle::emp_vs_dense(dom, workload, measured, 1e-8, 1.02).ok);

  std::vector<ResidualMeasurement> res{{{0}, {1.5}, 1.0, "residual"},
                                       {{}, {9.0}, 1.0, "residual"}};
  CHECK(oracle::residual_vs_dense(dom, workload, res, 1e-8).ok);
  CHECK(!oracle::residual_vs_dense(dom, workload, res, 1e-8, 1.02).ok);
}

TEST_CASE("residual reconstruction equals the direct rebuild when unique") {
  Domain d = domain_of({3, 2});
  OperatorCache ops(d);
  std::vector<ResidualMeasurement> measured{
      {{}, {12.0}, 1.0, "residual"},
      {{0}, {1.0, -2.0}, 2.0, "residual"},
      {{1}, {3.0}, 1.5, "residual"},
      {{0, 1}, {0.5, 0.25}, 3.0, "residual"},
  };
  std::vector<Clique> w{{0, 1}};
  Reconstruction recon = residualplanner_reconstruct(ops, w, measured);

  std::map<Clique, ResidualVector> direct;
  for (const ResidualMeasurement& m : measured) direct[m.tau] = ResidualVector{m.tau, m.values};
  MarginalTable want = marginal_from_residuals(ops, {0, 1}, direct);
  CHECK(recon.marginals.at({0, 1}).values == want.values);
}

TEST_CASE("reconstructed marginals agree on shared projections") {
  Domain d = domain_of({2, 3, 2});
  OperatorCache ops(d);
  std::vector<Clique> workload{{0, 1}, {1, 2}};
  rem::RngStream rng(812, 0);
  std::vector<MarginalMeasurement> measured;
  for (const Clique& gamma : workload)
    measured.push_back(
        {gamma, test_support::random_vector(rng, d.marginal_len(gamma), -2, 8), 0.8});
  Reconstruction recon = emp_reconstruct(ops, workload, measured);

  MarginalTable via01 = project_marginal(ops, recon.marginals.at({0, 1}), {1});
  MarginalTable via12 = project_marginal(ops, recon.marginals.at({1, 2}), {1});
  check_close(via01.values, via12.values, 1e-9);
}

TEST_CASE("missing subsets are filled with the minimum-norm completion") {
  Domain d = domain_of({2, 2});
  OperatorCache ops(d);
  std::vector<ResidualMeasurement> measured{{{0}, {4.0}, 1.0, "residual"}};
  std::vector<Clique> w{{0, 1}};
  Reconstruction recon = residualplanner_reconstruct(ops, w, measured);
  const MarginalMeta& meta = recon.meta.at({0, 1});
  CHECK(meta.partial);
  CHECK(meta.contributing == 1);
  CHECK(meta.expected == 4);
  CHECK(meta.weights.at({0}) == 1.0);
  // Total zero, half the difference spread across the second axis.
  check_close(recon.marginals.at({0, 1}).values, {1, 1, -1, -1});
}

TEST_CASE("measurement archives replay bit for bit") {
  Domain d = domain_of({2, 3});
  OperatorCache ops(d);
  MeasurementArchive archive;
  rem::RngStream rng(813, 0);
  archive.add_marginal({0, 1}, test_support::random_vector(rng, 6, 0, 5), 1.25);
  archive.add_residual({1}, test_support::random_vector(rng, 2, -1, 1), 0.5);
  archive.add_marginal({1}, test_support::random_vector(rng, 3, 0, 5), 2.0);

  std::vector<Clique> w{{0, 1}};
  Reconstruction first = reconstruct_workload(ops, w, group_by_residual(ops, archive));

  nlohmann::json j = archive.to_json(d);
  MeasurementArchive loaded = MeasurementArchive::from_json(d, j);
  REQUIRE(loaded.size() == archive.size());
  Reconstruction second = reconstruct_workload(ops, w, group_by_residual(ops, loaded));
  CHECK(first.marginals.at({0, 1}).values == second.marginals.at({0, 1}).values);

  // Order is restored from seq even if the serialized array is shuffled.
  nlohmann::json shuffled = nlohmann::json::array();
  shuffled.push_back(j[2]);
  shuffled.push_back(j[0]);
  shuffled.push_back(j[1]);
  MeasurementArchive reordered = MeasurementArchive::from_json(d, shuffled);
  CHECK(reordered.entries()[0].seq == 0);
  Reconstruction third = reconstruct_workload(ops, w, group_by_residual(ops, reordered));
  CHECK(first.marginals.at({0, 1}).values == third.marginals.at({0, 1}).values);
}

TEST_CASE("archive json validation rejects malformed entries") {
  Domain d = domain_of({2, 3});
  nlohmann::json good = {{{"kind", "residual"},
                          {"clique", {"a1"}},
                          {"sigma2", 1.0},
                          {"values", {0.5, -0.5}},
                          {"seq", 0}}};
  CHECK(MeasurementArchive::from_json(d, good).size() == 1);

  nlohmann::json wrong_len = good;
  wrong_len[0]["values"] = {0.5};
  CHECK_THROWS_AS(MeasurementArchive::from_json(d, wrong_len), IngestError);

  nlohmann::json bad_kind = good;
  bad_kind[0]["kind"] = "mystery";
  CHECK_THROWS_AS(MeasurementArchive::from_json(d, bad_kind), IngestError);

  nlohmann::json bad_name = good;
  bad_name[0]["clique"] = {"zz"};
  CHECK_THROWS_AS(MeasurementArchive::from_json(d, bad_name), CliqueError);

  nlohmann::json bad_sigma = good;
  bad_sigma[0]["sigma2"] = 0.0;
  CHECK_THROWS_AS(MeasurementArchive::from_json(d, bad_sigma), IngestError);

  CHECK_THROWS_AS(MeasurementArchive::from_json(d, nlohmann::json::object()), IngestError);
}

TEST_CASE("archive add methods validate shapes") {
  MeasurementArchive archive;
  CHECK_THROWS_AS(archive.add_marginal({0}, {1.0}, 0.0), ConfigError);
  archive.add_residual({0}, {1.0}, 1.0);
  CHECK(archive.entries()[0].seq == 0);
  archive.add_marginal({0}, {1.0, 2.0}, 1.0);
  CHECK(archive.entries()[1].seq == 1);
}
