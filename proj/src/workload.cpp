#include "rem/workload.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace rem {

namespace {

bool clique_order(const Clique& a, const Clique& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

}  // namespace

Domain::Domain(std::vector<Attribute> attributes) : attributes_(std::move(attributes)) {
  for (int i = 0; i < dim(); ++i) {
    const Attribute& a = attributes_[i];
    if (a.name.empty()) {
      throw ConfigError("attribute " + std::to_string(i) + " has an empty name");
    }
    if (a.size < 2) {
      // Residuals difference adjacent categories, so every axis needs >= 2.
      throw ConfigError("attribute '" + a.name + "' has size " + std::to_string(a.size));
    }
    if (!a.labels.empty() && a.labels.size() != static_cast<std::size_t>(a.size)) {
      throw ConfigError("attribute '" + a.name + "' has " + std::to_string(a.labels.size()) +
                        " labels for size " + std::to_string(a.size));
    }
    if (!index_.emplace(a.name, i).second) {
      throw ConfigError("duplicate attribute name '" + a.name + "'");
    }
  }
}

int Domain::size(int attr) const {
  if (attr < 0 || attr >= dim()) {
    throw CliqueError("attribute index " + std::to_string(attr) + " out of range");
  }
  return attributes_[attr].size;
}

const std::string& Domain::name(int attr) const {
  if (attr < 0 || attr >= dim()) {
    throw CliqueError("attribute index " + std::to_string(attr) + " out of range");
  }
  return attributes_[attr].name;
}

int Domain::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw CliqueError("unknown attribute '" + name + "'");
  }
  return it->second;
}

void Domain::validate(const Clique& clique) const {
  int prev = -1;
  for (int attr : clique) {
    if (attr < 0 || attr >= dim()) {
      throw CliqueError("attribute index " + std::to_string(attr) + " out of range");
    }
    if (attr <= prev) {
      throw CliqueError("clique indices must be strictly ascending");
    }
    prev = attr;
  }
}

std::size_t Domain::marginal_len(const Clique& clique) const {
  validate(clique);
  std::size_t len = 1;
  for (int attr : clique) len *= static_cast<std::size_t>(attributes_[attr].size);
  return len;
}

std::size_t Domain::residual_len(const Clique& clique) const {
  validate(clique);
  std::size_t len = 1;
  for (int attr : clique) len *= static_cast<std::size_t>(attributes_[attr].size - 1);
  return len;
}

double Domain::universe_size() const {
  double total = 1.0;
  for (const Attribute& a : attributes_) total *= static_cast<double>(a.size);
  return total;
}

Clique Domain::clique_of(const std::vector<std::string>& names) const {
  Clique clique;
  clique.reserve(names.size());
  for (const std::string& n : names) clique.push_back(index_of(n));
  std::sort(clique.begin(), clique.end());
  validate(clique);
  return clique;
}

std::vector<std::string> Domain::names_of(const Clique& clique) const {
  validate(clique);
  std::vector<std::string> names;
  names.reserve(clique.size());
  for (int attr : clique) names.push_back(attributes_[attr].name);
  return names;
}

nlohmann::json Domain::to_json() const {
  nlohmann::json attrs = nlohmann::json::array();
  for (const Attribute& a : attributes_) {
    nlohmann::json item{{"name", a.name}, {"size", a.size}};
    if (!a.labels.empty()) item["values"] = a.labels;
    attrs.push_back(std::move(item));
  }
  return nlohmann::json{{"attributes", attrs}};
}

Domain Domain::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("attributes") || !j["attributes"].is_array()) {
    throw IngestError("domain json must be an object with an 'attributes' array");
  }
  std::vector<Attribute> attrs;
  for (const auto& item : j["attributes"]) {
    if (!item.is_object() || !item.contains("name") || !item.contains("size") ||
        !item["name"].is_string() || !item["size"].is_number_integer()) {
      throw IngestError("each attribute needs a string 'name' and integer 'size'");
    }
    Attribute a{item["name"].get<std::string>(), item["size"].get<int>(), {}};
    if (item.contains("values")) {
      if (!item["values"].is_array()) {
        throw IngestError("attribute 'values' must be an array of strings");
      }
      for (const auto& v : item["values"]) {
        if (!v.is_string()) throw IngestError("attribute 'values' must be strings");
        a.labels.push_back(v.get<std::string>());
      }
    }
    attrs.push_back(std::move(a));
  }
  try {
    return Domain(std::move(attrs));
  } catch (const ConfigError& e) {
    throw IngestError(std::string("invalid domain: ") + e.what());
  }
}

Domain Domain::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open domain file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IngestError("domain file '" + path + "' is not valid json: " + e.what());
  }
  return from_json(j);
}

void Domain::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write domain file '" + path + "'");
  out << to_json().dump(2) << '\n';
}

std::vector<Clique> subsets_of(const Clique& clique) {
  if (clique.size() > 30) {
    throw CliqueError("refusing to enumerate subsets of a clique with " +
                      std::to_string(clique.size()) + " attributes");
  }
  std::vector<Clique> out;
  const std::size_t total = std::size_t{1} << clique.size();
  out.reserve(total);
  for (std::size_t mask = 0; mask < total; ++mask) {
    Clique s;
    for (std::size_t b = 0; b < clique.size(); ++b) {
      if (mask & (std::size_t{1} << b)) s.push_back(clique[b]);
    }
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), clique_order);
  return out;
}

std::vector<Clique> downward_closure(std::span<const Clique> cliques) {
  std::set<Clique, decltype(&clique_order)> seen(&clique_order);
  for (const Clique& c : cliques) {
    for (Clique& s : subsets_of(c)) seen.insert(std::move(s));
  }
  return {seen.begin(), seen.end()};
}

std::vector<Clique> all_k_way(const Domain& domain, int k) {
  if (k < 0) throw ConfigError("marginal order must be non-negative");
  std::vector<Clique> out;
  if (k > domain.dim()) return out;
  Clique cur(k);
  // Standard combination enumeration in lexicographic order.
  for (int i = 0; i < k; ++i) cur[i] = i;
  while (true) {
    out.push_back(cur);
    int i = k - 1;
    while (i >= 0 && cur[i] == domain.dim() - k + i) --i;
    if (i < 0) break;
    ++cur[i];
    for (int j = i + 1; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  if (k == 0) out.assign(1, Clique{});
  return out;
}

bool is_subset(const Clique& a, const Clique& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::string clique_label(const Domain& domain, const Clique& clique) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (int attr : clique) {
    if (!first) os << ',';
    os << domain.name(attr);
    first = false;
  }
  os << '}';
  return os.str();
}

OperatorCache::OperatorCache(Domain domain) : domain_(std::move(domain)) {}

const kron::KronOperator& OperatorCache::get(Op op, const Clique& gamma,
                                             const Clique& tau) const {
  domain_.validate(gamma);
  domain_.validate(tau);
  if (op != Op::residual_diff && !is_subset(tau, gamma)) {
    throw CliqueError("clique " + clique_label(domain_, tau) + " is not a subset of " +
                      clique_label(domain_, gamma));
  }
  const std::tuple<int, Clique, Clique> key{static_cast<int>(op), gamma, tau};
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = cache_.find(key);
  if (it != cache_.end()) return *it->second;

  std::vector<kron::Factor> factors;
  factors.reserve(gamma.size());
  std::size_t ti = 0;
  for (int attr : gamma) {
    const bool in_tau = ti < tau.size() && tau[ti] == attr;
    if (in_tau) ++ti;
    const int n = domain_.size(attr);
    switch (op) {
      case Op::lift:
        factors.push_back(in_tau ? kron::Factor::diff_pinv(n)
                                 : kron::Factor::scaled_ones_col(n, 1.0 / n));
        break;
      case Op::extract:
        factors.push_back(in_tau ? kron::Factor::diff(n) : kron::Factor::ones_row(n));
        break;
      case Op::residual_diff:
        factors.push_back(kron::Factor::diff(n));
        break;
      case Op::project:
        factors.push_back(in_tau ? kron::Factor::identity(n) : kron::Factor::ones_row(n));
        break;
    }
  }
  auto built = std::make_unique<kron::KronOperator>(std::move(factors));
  const kron::KronOperator& ref = *built;
  cache_.emplace(key, std::move(built));
  return ref;
}

const kron::KronOperator& OperatorCache::lift(const Clique& gamma, const Clique& tau) const {
  return get(Op::lift, gamma, tau);
}

const kron::KronOperator& OperatorCache::extract(const Clique& gamma,
                                                 const Clique& tau) const {
  return get(Op::extract, gamma, tau);
}

const kron::KronOperator& OperatorCache::residual_diff(const Clique& tau) const {
  return get(Op::residual_diff, tau, tau);
}

const kron::KronOperator& OperatorCache::project(const Clique& gamma,
                                                 const Clique& tau) const {
  return get(Op::project, gamma, tau);
}

ResidualVector residual_from_marginal(const OperatorCache& ops, const MarginalTable& mu,
                                      const Clique& tau) {
  const Domain& domain = ops.domain();
  if (mu.values.size() != domain.marginal_len(mu.clique)) {
    throw ShapeError("marginal on " + clique_label(domain, mu.clique) + " has " +
                     std::to_string(mu.values.size()) + " cells, expected " +
                     std::to_string(domain.marginal_len(mu.clique)));
  }
  if (!is_subset(tau, mu.clique)) {
    throw CliqueError("residual clique " + clique_label(domain, tau) +
                      " is not a subset of the marginal clique " +
                      clique_label(domain, mu.clique));
  }
  return ResidualVector{tau, ops.extract(mu.clique, tau).apply(mu.values)};
}

MarginalTable marginal_from_residuals(const OperatorCache& ops, const Clique& gamma,
                                      const std::map<Clique, ResidualVector>& residuals) {
  const Domain& domain = ops.domain();
  MarginalTable mu{gamma, std::vector<double>(domain.marginal_len(gamma), 0.0)};
  for (const auto& [tau, rv] : residuals) {
    if (rv.clique != tau) {
      throw CliqueError("residual stored under " + clique_label(domain, tau) +
                        " is labeled " + clique_label(domain, rv.clique));
    }
    if (rv.values.size() != domain.residual_len(tau)) {
      throw ShapeError("residual on " + clique_label(domain, tau) + " has " +
                       std::to_string(rv.values.size()) + " entries, expected " +
                       std::to_string(domain.residual_len(tau)));
    }
    const std::vector<double> part = ops.lift(gamma, tau).apply(rv.values);
    for (std::size_t i = 0; i < mu.values.size(); ++i) mu.values[i] += part[i];
  }
  return mu;
}

MarginalTable project_marginal(const OperatorCache& ops, const MarginalTable& mu,
                               const Clique& tau) {
  const Domain& domain = ops.domain();
  if (mu.values.size() != domain.marginal_len(mu.clique)) {
    throw ShapeError("marginal on " + clique_label(domain, mu.clique) +
                     " has the wrong number of cells");
  }
  return MarginalTable{tau, ops.project(mu.clique, tau).apply(mu.values)};
}

}  // namespace rem
