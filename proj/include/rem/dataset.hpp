#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rem/workload.hpp"

namespace rem {

// Encoded tabular data: one integer code per attribute per record.  Immutable
// after construction.  Marginals are computed straight from records, so the
// full contingency vector is never formed.
class RecordSet {
 public:
  RecordSet(Domain domain, std::vector<std::int32_t> codes);

  const Domain& domain() const { return domain_; }
  std::size_t size() const { return rows_; }
  std::int32_t code(std::size_t row, int attr) const {
    return codes_[row * static_cast<std::size_t>(domain_.dim()) + attr];
  }
  const std::vector<std::int32_t>& codes() const { return codes_; }

  MarginalTable exact_marginal(const Clique& gamma) const;

 private:
  Domain domain_;
  std::vector<std::int32_t> codes_;
  std::size_t rows_ = 0;
};

// Loads an RFC-4180-style CSV with a header row.  Without a domain, category
// codes follow first appearance in the file and the returned domain carries
// the labels.  With a domain, values must match its labels (or, for unlabeled
// attributes, be integer codes within range).
RecordSet load_csv(const std::string& path, const std::optional<Domain>& domain = {});

void save_csv(const RecordSet& data, const std::string& path);

// Synthetic categorical dataset with the shape of the Titanic benchmark:
// 9 attributes with sizes (2,3,2,88,7,8,125,4,3), independently sampled with
// a skewed (roughly Zipf) distribution per attribute.
RecordSet synthetic_titanic_shaped(std::uint64_t seed, std::size_t rows = 1304);

}  // namespace rem
