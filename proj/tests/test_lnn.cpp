#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "rem/lnn.hpp"
#include "rem/oracle.hpp"
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

GroupedMeasurements single(const std::map<Clique, std::pair<std::vector<double>, double>>& m) {
  GroupedMeasurements g;
  for (const auto& [tau, vs] : m) g[tau].push_back({tau, vs.first, vs.second, "residual"});
  return g;
}

std::map<Clique, std::vector<double>> alpha_values(const DualState& state) {
  std::map<Clique, std::vector<double>> out;
  for (const auto& [tau, rv] : state.alpha) out.emplace(tau, rv.values);
  return out;
}

double block_norm(const DualState& state, const Clique& tau) {
  double s = 0.0;
  for (double v : state.alpha.at(tau).values) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("one round of dual ascent follows the update equations exactly") {
  Domain d = domain_of({2});
  OperatorCache ops(d);
  GroupedMeasurements grouped = single({{{}, {{8.0}, 1.0}}, {{0}, {{-2.0}, 1.0}}});
  LnnConfig config;
  config.max_rounds = 1;
  config.step = 0.1;
  config.dual_init = -1.0;
  config.max_retries = 0;
  config.wall_clock_seconds = 0.0;
  std::vector<Clique> w{{0}};
  LnnResult result = grem_lnn(ops, w, grouped, config);

  // alpha = target - (w/2) D D^T Lambda with Lambda summed from the duals.
  CHECK(result.state.alpha.at({}).values[0] == doctest::Approx(8.5).epsilon(1e-14));
  CHECK(result.state.alpha.at({0}).values[0] == doctest::Approx(-2.0).epsilon(1e-14));
  // mu = lift(alpha) = [3.25, 5.25]; duals ascend by step * mu, clamped at 0.
  const std::vector<double>& mu = result.recon.marginals.at({0}).values;
  CHECK(mu[0] == doctest::Approx(3.25).epsilon(1e-14));
  CHECK(mu[1] == doctest::Approx(5.25).epsilon(1e-14));
  const std::vector<double>& lam = result.state.lambda.at({0});
  CHECK(lam[0] == doctest::Approx(-0.675).epsilon(1e-14));
  CHECK(lam[1] == doctest::Approx(-0.475).epsilon(1e-14));
  CHECK(result.report.rounds == 1);
  CHECK(!result.report.converged);
  CHECK(result.report.max_violation == 0.0);
}

TEST_CASE("dual ascent clamps the multipliers at zero") {
  Domain d = domain_of({2});
  OperatorCache ops(d);
  GroupedMeasurements grouped = single({{{}, {{8.0}, 1.0}}, {{0}, {{0.0}, 1.0}}});
  LnnConfig config;
  config.max_rounds = 1;
  config.step = 0.1;
  config.dual_init = -0.01;
  config.max_retries = 0;
  std::vector<Clique> w{{0}};
  LnnResult result = grem_lnn(ops, w, grouped, config);
  for (double l : result.state.lambda.at({0})) CHECK(l == 0.0);
}

TEST_CASE("inactive constraints reduce to the unconstrained combination") {
  Domain d = domain_of({2, 3});
  OperatorCache ops(d);
  rem::RngStream rng(910, 0);
  RecordSet data = test_support::random_records(rng, d, 500);
  MarginalTable exact = data.exact_marginal({0, 1});
  std::vector<double> noisy = exact.values;
  for (double& v : noisy) v += 0.1 * rng.normal();

  MeasurementArchive archive;
  archive.add_marginal({0, 1}, noisy, 0.01);
  GroupedMeasurements grouped = group_by_residual(ops, archive);
  std::vector<Clique> w{{0, 1}};

  Reconstruction mle = reconstruct_workload(ops, w, grouped);
  LnnResult lnn = grem_lnn(ops, w, grouped, LnnConfig::residual_style());
  CHECK(lnn.report.converged);
  CHECK(lnn.report.max_violation <= 1e-6 * 500);
  const std::vector<double>& got = lnn.recon.marginals.at({0, 1}).values;
  const std::vector<double>& want = mle.marginals.at({0, 1}).values;
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(std::abs(got[i] - want[i]) <= 1e-6 * std::max(1.0, std::abs(want[i])));
  // Multipliers sit at zero when nothing binds.
  for (double l : lnn.state.lambda.at({0, 1})) CHECK(l == 0.0);
}

TEST_CASE("solver output matches the dense quadratic program") {
  Domain d = domain_of({2, 3});
  OperatorCache ops(d);
  rem::RngStream rng(911, 0);
  RecordSet data = test_support::random_records(rng, d, 20);
  std::vector<Clique> w = test_support::one_and_two_way(d);

  MeasurementArchive archive;
  for (const Clique& gamma : w) {
    std::vector<double> noisy = data.exact_marginal(gamma).values;
    for (double& v : noisy) v += 8.0 * rng.normal();
    archive.add_marginal(gamma, noisy, 64.0);
  }
  GroupedMeasurements grouped = group_by_residual(ops, archive);

  // Heavy noise produces genuinely negative unconstrained cells.
  Reconstruction mle = reconstruct_workload(ops, w, grouped);
  double most_negative = 0.0;
  for (const auto& [gamma, table] : mle.marginals)
    for (double v : table.values) most_negative = std::min(most_negative, v);
  REQUIRE(most_negative < -1.0);

  LnnConfig config = LnnConfig::residual_style();
  config.max_rounds = 30000;
  config.wall_clock_seconds = 120.0;
  LnnResult lnn = grem_lnn(ops, w, grouped, config);
  CHECK(lnn.report.converged);

  oracle::DenseQpResult qp = oracle::dense_lnn_qp(d, w, grouped, config.eta);
  const double f_lnn =
      oracle::lnn_objective(d, w, grouped, alpha_values(lnn.state), config.eta);
  INFO("lnn objective ", f_lnn, " qp objective ", qp.objective);
  CHECK(std::abs(f_lnn - qp.objective) <= 1e-3 * std::max(1.0, std::abs(qp.objective)));
  CHECK(std::abs(lnn.report.objective - f_lnn) <=
        1e-9 * std::max(1.0, std::abs(f_lnn)));
}

TEST_CASE("converged runs respect the scaled violation bound") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Domain d = domain_of({3, 2, 2});
    OperatorCache ops(d);
    rem::RngStream rng(912, seed);
    RecordSet data = test_support::random_records(rng, d, 40);
    std::vector<Clique> w = test_support::one_and_two_way(d);
    MeasurementArchive archive;
    for (const Clique& gamma : w) {
      std::vector<double> noisy = data.exact_marginal(gamma).values;
      for (double& v : noisy) v += 3.0 * rng.normal();
      archive.add_marginal(gamma, noisy, 9.0);
    }
    GroupedMeasurements grouped = group_by_residual(ops, archive);
    LnnResult lnn = grem_lnn(ops, w, grouped, LnnConfig::residual_style());
    const double total = lnn.state.alpha.count(Clique{})
                             ? lnn.state.alpha.at(Clique{}).values[0]
                             : 0.0;
    INFO("seed ", seed, " violation ", lnn.report.max_violation);
    CHECK(lnn.report.converged);
    CHECK(lnn.report.max_violation <= 1e-6 * std::max(1.0, total));
    // Every reported marginal honors the same bound.
    for (const auto& [gamma, table] : lnn.recon.marginals)
      for (double v : table.values) CHECK(v >= -1e-6 * std::max(1.0, total));
  }
}

TEST_CASE("ridge weight shrinks the unmeasured blocks") {
  Domain d = domain_of({2, 2});
  OperatorCache ops(d);
  // Strongly negative single-attribute residuals against a small total force
  // the constraints active asymmetrically, so the duals leak into the one
  // unmeasured block.
  GroupedMeasurements grouped = single(
      {{{}, {{4.0}, 1.0}}, {{0}, {{-10.0}, 1.0}}, {{1}, {{-6.0}, 1.0}}});
  std::vector<Clique> w{{0, 1}};
  double prev = 1e300;
  for (double eta : {1.0, 10.0, 100.0}) {
    LnnConfig config = LnnConfig::residual_style();
    config.eta = eta;
    config.max_rounds = 20000;
    LnnResult lnn = grem_lnn(ops, w, grouped, config);
    const double norm = block_norm(lnn.state, {0, 1});
    INFO("eta ", eta, " unmeasured norm ", norm);
    CHECK(norm <= prev + 1e-9);
    CHECK(norm > 0.0);
    prev = norm;
  }
}

TEST_CASE("partially measured reconstructions stay consistent across cliques") {
  Domain d = domain_of({2, 3, 2});
  OperatorCache ops(d);
  rem::RngStream rng(913, 0);
  RecordSet data = test_support::random_records(rng, d, 30);
  std::vector<Clique> w{{0, 1}, {1, 2}};
  MeasurementArchive archive;
  for (const Clique& gamma : w) {
    std::vector<double> noisy = data.exact_marginal(gamma).values;
    for (double& v : noisy) v += 2.0 * rng.normal();
    archive.add_marginal(gamma, noisy, 4.0);
  }
  GroupedMeasurements grouped = group_by_residual(ops, archive);
  LnnResult lnn = grem_lnn(ops, w, grouped, LnnConfig::residual_style());
  MarginalTable via01 = project_marginal(ops, lnn.recon.marginals.at({0, 1}), {1});
  MarginalTable via12 = project_marginal(ops, lnn.recon.marginals.at({1, 2}), {1});
  for (std::size_t i = 0; i < via01.values.size(); ++i)
    CHECK(std::abs(via01.values[i] - via12.values[i]) <=
          1e-6 * std::max(1.0, std::abs(via01.values[i])));
}

TEST_CASE("solver rejects unusable configurations") {
  Domain d = domain_of({2});
  OperatorCache ops(d);
  GroupedMeasurements grouped = single({{{}, {{4.0}, 1.0}}});
  std::vector<Clique> w{{0}};
  std::vector<Clique> empty;
  CHECK_THROWS_AS(grem_lnn(ops, empty, grouped, LnnConfig{}), ConfigError);

  LnnConfig bad_step;
  bad_step.step = 0.0;
  CHECK_THROWS_AS(grem_lnn(ops, w, grouped, bad_step), ConfigError);

  LnnConfig bad_init;
  bad_init.dual_init = 1.0;
  CHECK_THROWS_AS(grem_lnn(ops, w, grouped, bad_init), ConfigError);

  LnnConfig bad_eta;  // tau = {0} is unmeasured here
  bad_eta.eta = 0.0;
  CHECK_THROWS_AS(grem_lnn(ops, w, grouped, bad_eta), ConfigError);

  LnnConfig bad_rounds;
  bad_rounds.max_rounds = 0;
  CHECK_THROWS_AS(grem_lnn(ops, w, grouped, bad_rounds), ConfigError);
}

TEST_CASE("style presets and report serialization") {
  CHECK(LnnConfig::residual_style().max_rounds == 4000);
  CHECK(LnnConfig::residual_style().step == 0.1);
  CHECK(LnnConfig::mwem_style().max_rounds == 1000);
  CHECK(LnnConfig::mwem_style().step == 0.02);

  LnnReport report;
  report.rounds = 12;
  report.converged = true;
  nlohmann::json j = report.to_json();
  CHECK(j["rounds"] == 12);
  CHECK(j["converged"] == true);
  CHECK(j.contains("max_violation"));
  CHECK(j.contains("objective"));
  CHECK(j.contains("final_step"));
  CHECK(j.contains("wall_seconds"));
}
