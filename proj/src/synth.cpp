#include <array>
#include <string>
#include <vector>

#include "rem/dataset.hpp"
#include "rem/rng.hpp"

namespace rem {

namespace {

struct SynthAttr {
  const char* name;
  int size;
};

// Shape of the Titanic benchmark after categorical preprocessing: 9 attributes
// whose sizes multiply to 88,704,000 cells.
constexpr std::array<SynthAttr, 9> kSynthAttrs{{
    {"survived", 2},
    {"pclass", 3},
    {"sex", 2},
    {"age", 88},
    {"sibsp", 7},
    {"parch", 8},
    {"fare", 125},
    {"embarked", 4},
    {"deck", 3},
}};

}  // namespace

RecordSet synthetic_titanic_shaped(std::uint64_t seed, std::size_t rows) {
  std::vector<Attribute> attrs;
  attrs.reserve(kSynthAttrs.size());
  for (const SynthAttr& a : kSynthAttrs) {
    Attribute attr{a.name, a.size, {}};
    attr.labels.reserve(a.size);
    for (int v = 0; v < a.size; ++v) attr.labels.push_back(std::to_string(v));
    attrs.push_back(std::move(attr));
  }
  Domain domain(std::move(attrs));

  const int d = domain.dim();
  std::vector<std::int32_t> codes(rows * static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) {
    // Zipf-like weights 1/(v+1) make the low codes dominate, the way survival,
    // class, and fare buckets skew in the real data.
    const int n = domain.size(a);
    std::vector<double> cum(n);
    double total = 0.0;
    for (int v = 0; v < n; ++v) {
      total += 1.0 / (v + 1.0);
      cum[v] = total;
    }
    RngStream rng(seed, static_cast<std::uint64_t>(a));
    for (std::size_t r = 0; r < rows; ++r) {
      const double u = rng.uniform() * total;
      int lo = 0, hi = n - 1;
      while (lo < hi) {
        const int mid = (lo + hi) / 2;
        if (cum[mid] < u) {
          lo = mid + 1;
        } else {
          hi = mid;
        }
      }
      codes[r * static_cast<std::size_t>(d) + a] = lo;
    }
  }
  return RecordSet(std::move(domain), std::move(codes));
}

}  // namespace rem
