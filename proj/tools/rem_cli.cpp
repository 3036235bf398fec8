#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rem/dataset.hpp"
#include "rem/evaluate.hpp"
#include "rem/lnn.hpp"
#include "rem/mechanisms.hpp"
#include "rem/oracle.hpp"

namespace {

using nlohmann::json;

rem::Domain bundled_domain() { return rem::synthetic_titanic_shaped(0, 1).domain(); }

std::vector<rem::Clique> parse_workload(const std::string& spec, const rem::Domain& domain) {
  // "all-K-way", an inline JSON list of name lists, or a path to one.
  if (spec.starts_with("all-") && spec.ends_with("-way")) {
    const std::string mid = spec.substr(4, spec.size() - 8);
    if (!mid.empty() && mid.size() <= 4 &&
        mid.find_first_not_of("0123456789") == std::string::npos) {
      std::vector<rem::Clique> workload = rem::all_k_way(domain, std::stoi(mid));
      if (workload.empty()) {
        throw rem::ConfigError("workload '" + spec + "' is empty on a " +
                               std::to_string(domain.dim()) + "-attribute domain");
      }
      return workload;
    }
  }
  json j;
  if (!spec.empty() && spec.front() == '[') {
    j = json::parse(spec, nullptr, false);
  } else {
    std::ifstream in(spec);
    if (!in) {
      throw rem::ConfigError("workload spec '" + spec +
                             "' is neither all-K-way, inline JSON, nor a readable file");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    j = json::parse(buf.str(), nullptr, false);
  }
  if (j.is_discarded() || !j.is_array() || j.empty()) {
    throw rem::ConfigError("workload JSON must be a non-empty array of name arrays");
  }
  std::vector<rem::Clique> workload;
  for (const auto& entry : j) {
    if (!entry.is_array()) {
      throw rem::ConfigError("workload JSON must be a non-empty array of name arrays");
    }
    std::vector<std::string> names;
    for (const auto& n : entry) {
      if (!n.is_string()) {
        throw rem::ConfigError("workload clique entries must be attribute names");
      }
      names.push_back(n.get<std::string>());
    }
    workload.push_back(domain.clique_of(names));
  }
  return workload;
}

std::map<rem::Clique, double> parse_scales(const std::string& path, const rem::Domain& domain) {
  std::ifstream in(path);
  if (!in) throw rem::ConfigError("cannot open scales file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const json j = json::parse(buf.str(), nullptr, false);
  if (j.is_discarded() || !j.is_array()) {
    throw rem::ConfigError("scales file must be a JSON array of {clique, sigma2}");
  }
  std::map<rem::Clique, double> scales;
  for (const auto& entry : j) {
    if (!entry.is_object() || !entry.contains("clique") || !entry.contains("sigma2") ||
        !entry["clique"].is_array() || !entry["sigma2"].is_number()) {
      throw rem::ConfigError("scales file must be a JSON array of {clique, sigma2}");
    }
    std::vector<std::string> names;
    for (const auto& n : entry["clique"]) {
      if (!n.is_string()) throw rem::ConfigError("scales clique entries must be names");
      names.push_back(n.get<std::string>());
    }
    scales[domain.clique_of(names)] = entry["sigma2"].get<double>();
  }
  return scales;
}

json recon_json(const rem::Domain& domain, const std::vector<rem::Clique>& workload,
                const std::map<rem::Clique, rem::MarginalTable>& marginals) {
  json tables = json::array();
  std::vector<rem::Clique> seen;
  for (const rem::Clique& gamma : workload) {
    if (std::find(seen.begin(), seen.end(), gamma) != seen.end()) continue;
    seen.push_back(gamma);
    tables.push_back(
        {{"clique", domain.names_of(gamma)}, {"values", marginals.at(gamma).values}});
  }
  return json{{"marginals", std::move(tables)}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw rem::IngestError("cannot write '" + path.string() + "'");
  out << text;
}

std::string slug(double v) {
  std::string s = rem::format_double(v);
  for (char& c : s) {
    if (c == '.') c = 'p';
    if (c == '-') c = 'm';
  }
  return s;
}

int worker_count() {
  const char* env = std::getenv("REM_WORKERS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return std::clamp(n, 1, 64);
}

struct RunOptions {
  std::string mechanism;
  std::string data_path;
  std::string domain_path;
  std::string workload_spec = "all-3-way";
  std::vector<double> epsilons{1.0};
  double delta = 1e-9;
  int trials = 1;
  std::uint64_t seed = 0;
  int rounds = 30;
  double alpha = 0.1;
  bool noiseless = false;
  bool audit = false;
  std::string scales_path;
  std::vector<std::string> posts{"mle", "trunc", "trunc_rescale", "lnn"};
  std::string save_recon = "mle";  // mle | all | none
  // "none" zeroes the report's seconds column so identical invocations yield
  // byte-identical reports; manifests always carry real wall times.
  std::string timing = "none";
  int lnn_rounds = 0;  // 0 keeps the per-mechanism default
  double lnn_step = 0.0;
  double lnn_eta = 0.0;
  double lnn_wall = 0.0;
  std::uint64_t synth_seed = 0;
  std::size_t synth_rows = 1304;
  std::string out_dir;
};

json config_echo(const RunOptions& opt) {
  return json{{"mechanism", opt.mechanism},
              {"data", opt.data_path.empty() ? json() : json(opt.data_path)},
              {"domain", opt.domain_path.empty() ? json() : json(opt.domain_path)},
              {"workload", opt.workload_spec},
              {"epsilon", opt.epsilons},
              {"delta", opt.delta},
              {"trials", opt.trials},
              {"seed", opt.seed},
              {"rounds", opt.rounds},
              {"alpha", opt.alpha},
              {"noiseless", opt.noiseless},
              {"audit", opt.audit},
              {"scales", opt.scales_path.empty() ? json() : json(opt.scales_path)},
              {"postprocessors", opt.posts},
              {"save_recon", opt.save_recon},
              {"timing", opt.timing},
              {"synth_seed", opt.synth_seed},
              {"synth_rows", opt.synth_rows},
              {"out", opt.out_dir}};
}

struct TrialOutcome {
  std::vector<rem::ReportRow> rows;
  std::string error;
  bool budget_error = false;
};

rem::LnnConfig lnn_config_for(const RunOptions& opt) {
  rem::LnnConfig config = opt.mechanism == "smwem" ? rem::LnnConfig::mwem_style()
                                                   : rem::LnnConfig::residual_style();
  if (opt.lnn_rounds > 0) config.max_rounds = opt.lnn_rounds;
  if (opt.lnn_step > 0.0) config.step = opt.lnn_step;
  if (opt.lnn_eta > 0.0) config.eta = opt.lnn_eta;
  if (opt.lnn_wall > 0.0) config.wall_clock_seconds = opt.lnn_wall;
  return config;
}

TrialOutcome run_trial(const RunOptions& opt, const rem::RecordSet& data,
                       rem::OperatorCache& ops, const std::vector<rem::Clique>& workload,
                       const std::map<rem::Clique, rem::MarginalTable>& truth,
                       const std::map<rem::Clique, double>& scales,
                       const std::string& dataset_name, double eps, std::uint64_t seed) {
  namespace fs = std::filesystem;
  const rem::Domain& domain = data.domain();
  TrialOutcome outcome;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    rem::MechanismRun run;
    if (opt.mechanism == "rp") {
      rem::RpStyleConfig config;
      config.workload = workload;
      config.eps = eps;
      config.delta = opt.delta;
      config.sigma2_override = scales;
      config.noiseless = opt.noiseless;
      config.seed = seed;
      run = rem::run_residualplanner_style(data, config);
    } else {
      rem::MwemConfig config;
      config.workload = workload;
      config.rounds = opt.rounds;
      config.eps = eps;
      config.delta = opt.delta;
      config.alpha = opt.alpha;
      config.seed = seed;
      config.audit = opt.audit;
      run = rem::run_scalable_mwem(data, config);
    }
    const double mech_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    run.manifest["config"] = config_echo(opt);
    run.manifest["dataset"] = dataset_name;
    run.manifest["trial_epsilon"] = eps;
    run.manifest["trial_seed"] = seed;
    json wall{{"mechanism", mech_seconds}};

    const std::string tag =
        opt.mechanism + "-eps" + slug(eps) + "-seed" + std::to_string(seed);
    const fs::path out(opt.out_dir);
    run.archive.save(domain, (out / ("archive-" + tag + ".json")).string());

    for (const std::string& post : opt.posts) {
      const auto p0 = std::chrono::steady_clock::now();
      std::map<rem::Clique, rem::MarginalTable> tables;
      bool converged = true;
      if (post == "mle") {
        tables = run.recon.marginals;
      } else if (post == "trunc") {
        for (const auto& [gamma, mu] : run.recon.marginals)
          tables.emplace(gamma, rem::trunc(mu));
      } else if (post == "trunc_rescale") {
        for (const auto& [gamma, mu] : run.recon.marginals)
          tables.emplace(gamma, rem::trunc_rescale(mu));
      } else if (post == "lnn") {
        rem::LnnResult lnn = rem::grem_lnn(
            ops, workload, rem::group_by_residual(ops, run.archive), lnn_config_for(opt));
        tables = std::move(lnn.recon.marginals);
        converged = lnn.report.converged;
        run.manifest["lnn_report"] = lnn.report.to_json();
      } else {
        throw rem::ConfigError("unknown postprocessor '" + post + "'");
      }
      const double post_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - p0).count();
      wall[post] = post_seconds;

      rem::ReportRow row;
      row.mechanism = opt.mechanism;
      row.postprocessor = post;
      row.dataset = dataset_name;
      row.epsilon = eps;
      row.seed = seed;
      row.l1_error = rem::workload_error(truth, tables, 1);
      row.l2_error = rem::workload_error(truth, tables, 2);
      row.seconds = opt.timing == "wall" ? mech_seconds + post_seconds : 0.0;
      row.converged = converged;
      outcome.rows.push_back(std::move(row));

      if (opt.save_recon == "all" || (opt.save_recon == "mle" && post == "mle")) {
        write_text(out / ("recon-" + post + "-" + tag + ".json"),
                   recon_json(domain, workload, tables).dump() + "\n");
      }
    }
    run.manifest["wall_seconds"] = std::move(wall);
    write_text(out / ("manifest-" + tag + ".json"), run.manifest.dump(2) + "\n");
  } catch (const rem::BudgetError& e) {
    outcome.error = e.what();
    outcome.budget_error = true;
  } catch (const std::exception& e) {
    outcome.error = e.what();
  }
  return outcome;
}

int cmd_run(const RunOptions& opt) {
  namespace fs = std::filesystem;
  std::optional<rem::Domain> domain;
  if (!opt.domain_path.empty()) domain = rem::Domain::load(opt.domain_path);

  rem::RecordSet data = opt.data_path.empty()
                            ? rem::synthetic_titanic_shaped(opt.synth_seed, opt.synth_rows)
                            : rem::load_csv(opt.data_path, domain);
  const std::string dataset_name =
      opt.data_path.empty() ? "synthetic" : fs::path(opt.data_path).filename().string();

  const std::vector<rem::Clique> workload = parse_workload(opt.workload_spec, data.domain());
  const std::map<rem::Clique, double> scales =
      opt.scales_path.empty() ? std::map<rem::Clique, double>{}
                              : parse_scales(opt.scales_path, data.domain());

  rem::OperatorCache ops(data.domain());
  std::map<rem::Clique, rem::MarginalTable> truth;
  for (const rem::Clique& gamma : workload) {
    truth.emplace(gamma, data.exact_marginal(gamma));
  }

  fs::create_directories(opt.out_dir);
  data.domain().save((fs::path(opt.out_dir) / "domain.json").string());

  struct Task {
    double eps;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (double eps : opt.epsilons) {
    for (int t = 0; t < opt.trials; ++t) tasks.push_back({eps, opt.seed + t});
  }

  std::vector<TrialOutcome> outcomes(tasks.size());
  const int workers = std::min<int>(worker_count(), static_cast<int>(tasks.size()));
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      outcomes[i] = run_trial(opt, data, ops, workload, truth, scales, dataset_name,
                              tasks[i].eps, tasks[i].seed);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  std::vector<rem::ReportRow> rows;
  for (const TrialOutcome& outcome : outcomes) {
    for (const rem::ReportRow& row : outcome.rows) rows.push_back(row);
  }
  rem::write_report_csv(rows, (fs::path(opt.out_dir) / "report.csv").string());
  write_text(fs::path(opt.out_dir) / "summary.json",
             rem::summarize_report(rows).dump(2) + "\n");

  for (const TrialOutcome& outcome : outcomes) {
    if (outcome.budget_error) {
      std::cerr << "budget error: " << outcome.error << "\n";
      return 3;
    }
  }
  for (const TrialOutcome& outcome : outcomes) {
    if (!outcome.error.empty()) {
      std::cerr << "trial failed: " << outcome.error << "\n";
      return 1;
    }
  }
  std::cout << "wrote " << rows.size() << " report rows to " << opt.out_dir << "\n";
  return 0;
}

struct ReplayOptions {
  std::string archive_path;
  std::string domain_path;
  std::string workload_spec = "all-3-way";
  std::string out_path;
};

int cmd_replay(const ReplayOptions& opt) {
  const rem::Domain domain =
      opt.domain_path.empty() ? bundled_domain() : rem::Domain::load(opt.domain_path);
  const rem::MeasurementArchive archive =
      rem::MeasurementArchive::load(domain, opt.archive_path);
  const std::vector<rem::Clique> workload = parse_workload(opt.workload_spec, domain);
  rem::OperatorCache ops(domain);
  const rem::Reconstruction recon =
      rem::reconstruct_workload(ops, workload, rem::group_by_residual(ops, archive));
  const std::string text = recon_json(domain, workload, recon.marginals).dump() + "\n";
  if (opt.out_path.empty()) {
    std::cout << text;
  } else {
    write_text(opt.out_path, text);
  }
  return 0;
}

struct OracleOptions {
  std::string domain_sizes = "2,3,2";
  int trials = 12;
  std::uint64_t seed = 0;
  bool inject_fault = false;
};

int cmd_oracle(const OracleOptions& opt) {
  std::vector<rem::Attribute> attrs;
  std::string token;
  std::istringstream sizes(opt.domain_sizes);
  int index = 0;
  while (std::getline(sizes, token, ',')) {
    attrs.push_back({"a" + std::to_string(index++), std::stoi(token), {}});
  }
  const rem::Domain domain(std::move(attrs));
  const double fault = opt.inject_fault ? 1.02 : 1.0;

  std::vector<rem::Clique> workload = rem::all_k_way(domain, 1);
  if (domain.dim() >= 2) {
    for (rem::Clique& c : rem::all_k_way(domain, 2)) workload.push_back(std::move(c));
  }

  double worst_emp = 0.0;
  double worst_res = 0.0;
  bool ok = true;
  for (int trial = 0; trial < opt.trials; ++trial) {
    rem::RngStream rng(opt.seed, static_cast<std::uint64_t>(trial));
    std::vector<rem::MarginalMeasurement> measured;
    for (const rem::Clique& gamma : workload) {
      const std::size_t len = domain.marginal_len(gamma);
      std::vector<double> values(len);
      for (double& v : values) v = 10.0 * rng.uniform() - 2.0;
      const double sigma2 = trial % 2 == 0 ? 1.0 : 0.5 + rng.uniform();
      measured.push_back({gamma, std::move(values), sigma2});
      if (rng.uniform() < 0.3) {  // occasional repeated measurement of a clique
        std::vector<double> again(len);
        for (double& v : again) v = 10.0 * rng.uniform() - 2.0;
        measured.push_back({gamma, std::move(again), sigma2});
      }
    }
    const rem::oracle::DeviationReport emp =
        rem::oracle::emp_vs_dense(domain, workload, measured, 1e-8, fault);
    worst_emp = std::max(worst_emp, emp.max_rel_dev);
    ok = ok && emp.ok;

    std::vector<rem::ResidualMeasurement> residuals;
    for (const rem::Clique& tau : rem::downward_closure(workload)) {
      std::vector<double> values(domain.residual_len(tau));
      for (double& v : values) v = 4.0 * rng.uniform() - 2.0;
      residuals.push_back({tau, std::move(values), 0.5 + rng.uniform(), "residual"});
    }
    const rem::oracle::DeviationReport res =
        rem::oracle::residual_vs_dense(domain, workload, residuals, 1e-8, fault);
    worst_res = std::max(worst_res, res.max_rel_dev);
    ok = ok && res.ok;
  }

  double worst_cross = 0.0;
  double worst_marginal = 0.0;
  const std::vector<rem::Clique> taus = rem::downward_closure(workload);
  for (std::size_t a = 0; a < taus.size(); ++a) {
    for (std::size_t b = 0; b < taus.size(); ++b) {
      if (a == b) continue;
      const rem::oracle::RowSpaceReport report =
          rem::oracle::residual_row_space_checks(domain, taus[a], taus[b]);
      worst_cross = std::max(worst_cross, report.max_cross_dot);
      worst_marginal = std::max(worst_marginal, report.max_marginal_dot);
      ok = ok && report.ok;
    }
  }

  std::cout << "pseudoinverse reconstruction max relative deviation: " << worst_emp << "\n"
            << "residual reconstruction max relative deviation:      " << worst_res << "\n"
            << "residual row cross-orthogonality max dot:            " << worst_cross << "\n"
            << "residual-vs-marginal orthogonality max dot:          " << worst_marginal
            << "\n"
            << (ok ? "all oracle checks passed" : "ORACLE CHECKS FAILED") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual-based reconstruction of marginal queries under zCDP"};
  app.require_subcommand(1);

  RunOptions run_opt;
  CLI::App* run = app.add_subcommand("run", "Run a mechanism over a trial grid");
  run->add_option("--mechanism", run_opt.mechanism, "rp (residual planner) or smwem")
      ->required()
      ->check(CLI::IsMember({"rp", "smwem"}));
  run->add_option("--data", run_opt.data_path, "input CSV (defaults to bundled synthetic)");
  run->add_option("--domain", run_opt.domain_path, "domain JSON for --data");
  run->add_option("--workload", run_opt.workload_spec,
                  "all-K-way, inline JSON, or a JSON file of name lists");
  run->add_option("--epsilon", run_opt.epsilons, "epsilon grid (repeatable)");
  run->add_option("--delta", run_opt.delta, "target delta");
  run->add_option("--trials", run_opt.trials, "trials per epsilon")->check(CLI::PositiveNumber);
  run->add_option("--seed", run_opt.seed, "base seed; trial t uses seed + t");
  run->add_option("--rounds", run_opt.rounds, "smwem measurement rounds");
  run->add_option("--alpha", run_opt.alpha, "smwem budget fraction for the total query");
  run->add_flag("--noiseless", run_opt.noiseless, "rp test mode: exact residuals");
  run->add_flag("--audit", run_opt.audit, "smwem: re-derive each round and compare");
  run->add_option("--scales", run_opt.scales_path, "rp per-clique sigma2 JSON file");
  run->add_option("--post", run_opt.posts,
                  "postprocessors: mle, lnn, trunc, trunc_rescale (repeatable)");
  run->add_option("--save-recon", run_opt.save_recon, "which reconstructions to write")
      ->check(CLI::IsMember({"mle", "all", "none"}));
  run->add_option("--timing", run_opt.timing,
                  "seconds column: none keeps reports byte-reproducible, wall records "
                  "real time (manifests always carry wall times)")
      ->check(CLI::IsMember({"none", "wall"}));
  run->add_option("--lnn-rounds", run_opt.lnn_rounds, "override solver rounds");
  run->add_option("--lnn-step", run_opt.lnn_step, "override solver step");
  run->add_option("--lnn-eta", run_opt.lnn_eta, "override ridge weight");
  run->add_option("--lnn-wall", run_opt.lnn_wall, "override solver wall-clock limit");
  run->add_option("--synth-seed", run_opt.synth_seed, "bundled synthetic data seed");
  run->add_option("--synth-rows", run_opt.synth_rows, "bundled synthetic row count");
  run->add_option("--out", run_opt.out_dir, "output directory")->required();

  ReplayOptions replay_opt;
  CLI::App* replay = app.add_subcommand("replay", "Reconstruct from a saved archive");
  replay->add_option("--archive", replay_opt.archive_path, "measurement archive JSON")
      ->required();
  replay->add_option("--domain", replay_opt.domain_path,
                     "domain JSON (defaults to the bundled synthetic domain)");
  replay->add_option("--workload", replay_opt.workload_spec, "workload spec");
  replay->add_option("--out", replay_opt.out_path, "output file (stdout when omitted)");

  OracleOptions oracle_opt;
  CLI::App* oracle = app.add_subcommand("oracle", "Dense brute-force cross-checks");
  oracle->add_option("--domain-sizes", oracle_opt.domain_sizes, "comma-separated sizes");
  oracle->add_option("--trials", oracle_opt.trials, "random instances")
      ->check(CLI::PositiveNumber);
  oracle->add_option("--seed", oracle_opt.seed, "instance seed");
  oracle->add_flag("--inject-fault", oracle_opt.inject_fault)->group("");

  std::string synth_out;
  std::string synth_domain_out;
  std::uint64_t synth_seed = 0;
  std::size_t synth_rows = 1304;
  CLI::App* synth = app.add_subcommand("synth", "Write the bundled synthetic dataset");
  synth->add_option("--out", synth_out, "output CSV path")->required();
  synth->add_option("--domain-out", synth_domain_out, "output domain JSON path");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--rows", synth_rows, "row count")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run->parsed()) return cmd_run(run_opt);
    if (replay->parsed()) return cmd_replay(replay_opt);
    if (oracle->parsed()) return cmd_oracle(oracle_opt);
    if (synth->parsed()) {
      const rem::RecordSet data = rem::synthetic_titanic_shaped(synth_seed, synth_rows);
      rem::save_csv(data, synth_out);
      if (!synth_domain_out.empty()) data.domain().save(synth_domain_out);
      std::cout << "wrote " << data.size() << " rows to " << synth_out << "\n";
      return 0;
    }
  } catch (const rem::BudgetError& e) {
    std::cerr << "budget error: " << e.what() << "\n";
    return 3;
  } catch (const rem::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
