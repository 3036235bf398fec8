#include "rem/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

namespace rem {

double workload_error(const std::map<Clique, MarginalTable>& truth,
                      const std::map<Clique, MarginalTable>& estimate, int norm) {
  if (norm != 1 && norm != 2) throw ConfigError("workload_error: norm must be 1 or 2");
  if (truth.size() != estimate.size()) {
    throw CliqueError("workload_error: truth and estimate cover different workloads");
  }
  if (truth.empty()) throw ConfigError("workload_error: empty workload");
  double total = 0.0;
  for (const auto& [gamma, mu] : truth) {
    auto it = estimate.find(gamma);
    if (it == estimate.end()) {
      throw CliqueError("workload_error: estimate is missing a workload clique");
    }
    const MarginalTable& est = it->second;
    if (est.values.size() != mu.values.size()) {
      throw ShapeError("workload_error: marginal size mismatch");
    }
    double err = 0.0;
    for (std::size_t i = 0; i < mu.values.size(); ++i) {
      const double d = std::abs(est.values[i] - mu.values[i]);
      err += norm == 1 ? d : d * d;
    }
    total += norm == 1 ? err : std::sqrt(err);
  }
  return total / static_cast<double>(truth.size());
}

MarginalTable trunc(MarginalTable table) {
  for (double& v : table.values) v = std::max(v, 0.0);
  return table;
}

MarginalTable trunc_rescale(MarginalTable table) {
  double pre_sum = 0.0;
  for (double v : table.values) pre_sum += v;
  const double target = std::max(pre_sum, 0.0);
  double trunc_sum = 0.0;
  for (double& v : table.values) {
    v = std::max(v, 0.0);
    trunc_sum += v;
  }
  if (trunc_sum == 0.0) return table;
  const double scale = target / trunc_sum;
  for (double& v : table.values) v *= scale;
  return table;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string report_csv(std::span<const ReportRow> rows) {
  std::ostringstream out;
  out << "mechanism,postprocessor,dataset,epsilon,seed,l1_error,l2_error,seconds,converged\n";
  for (const ReportRow& r : rows) {
    out << r.mechanism << ',' << r.postprocessor << ',' << r.dataset << ','
        << format_double(r.epsilon) << ',' << r.seed << ',' << format_double(r.l1_error)
        << ',' << format_double(r.l2_error) << ',' << format_double(r.seconds) << ','
        << (r.converged ? "true" : "false") << '\n';
  }
  return out.str();
}

void write_report_csv(std::span<const ReportRow> rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write report file '" + path + "'");
  out << report_csv(rows);
}

nlohmann::json summarize_report(std::span<const ReportRow> rows) {
  std::map<std::tuple<std::string, std::string, double>, std::vector<const ReportRow*>> groups;
  for (const ReportRow& r : rows) {
    groups[{r.mechanism, r.postprocessor, r.epsilon}].push_back(&r);
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, grp] : groups) {
    const auto stats = [&](auto getter) {
      double lo = getter(*grp.front()), hi = lo, sum = 0.0;
      for (const ReportRow* r : grp) {
        const double v = getter(*r);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
      }
      return nlohmann::json{{"min", lo}, {"mean", sum / grp.size()}, {"max", hi}};
    };
    out.push_back(
        {{"mechanism", std::get<0>(key)},
         {"postprocessor", std::get<1>(key)},
         {"epsilon", std::get<2>(key)},
         {"trials", grp.size()},
         {"l1_error", stats([](const ReportRow& r) { return r.l1_error; })},
         {"l2_error", stats([](const ReportRow& r) { return r.l2_error; })},
         {"seconds", stats([](const ReportRow& r) { return r.seconds; })},
         {"converged_all",
          std::all_of(grp.begin(), grp.end(), [](const ReportRow* r) { return r->converged; })}});
  }
  return out;
}

}  // namespace rem
