#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "rem/workload.hpp"

namespace rem {

// Mean over workload cliques of the per-marginal error norm (1 or 2).
double workload_error(const std::map<Clique, MarginalTable>& truth,
                      const std::map<Clique, MarginalTable>& estimate, int norm);

// Entrywise max(value, 0).
MarginalTable trunc(MarginalTable table);

// Truncate, then rescale so the sum matches max(0, pre-truncation sum).
// All-zero truncations stay zero.
MarginalTable trunc_rescale(MarginalTable table);

struct ReportRow {
  std::string mechanism;
  std::string postprocessor;
  std::string dataset;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  double l1_error = 0.0;
  double l2_error = 0.0;
  double seconds = 0.0;
  bool converged = true;
};

// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

std::string report_csv(std::span<const ReportRow> rows);
void write_report_csv(std::span<const ReportRow> rows, const std::string& path);

// min/mean/max of both errors, grouped by (mechanism, postprocessor, epsilon).
nlohmann::json summarize_report(std::span<const ReportRow> rows);

}  // namespace rem
