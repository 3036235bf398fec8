#include "rem/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace rem {

namespace {

// Parses the whole file into rows of fields.  Handles quoted fields with
// embedded commas, quotes, and newlines; accepts LF and CRLF endings.
std::vector<std::vector<std::string>> parse_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open csv file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        row_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        row_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_started || !field.empty() || !row.empty()) {
          row.push_back(std::move(field));
          field.clear();
          rows.push_back(std::move(row));
          row.clear();
          row_started = false;
        }
        break;
      default:
        field += c;
        row_started = true;
        break;
    }
  }
  if (quoted) throw IngestError("csv file '" + path + "' ends inside a quoted field");
  if (row_started || !field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IngestError("csv file '" + path + "' is empty");
  return rows;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

RecordSet::RecordSet(Domain domain, std::vector<std::int32_t> codes)
    : domain_(std::move(domain)), codes_(std::move(codes)) {
  const std::size_t d = static_cast<std::size_t>(domain_.dim());
  if (d == 0) throw ConfigError("record set needs at least one attribute");
  if (codes_.size() % d != 0) {
    throw ShapeError("code array length " + std::to_string(codes_.size()) +
                     " is not a multiple of " + std::to_string(d) + " attributes");
  }
  rows_ = codes_.size() / d;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t a = 0; a < d; ++a) {
      const std::int32_t c = codes_[r * d + a];
      if (c < 0 || c >= domain_.size(static_cast<int>(a))) {
        throw IngestError("row " + std::to_string(r) + ", attribute '" +
                          domain_.name(static_cast<int>(a)) + "': code " +
                          std::to_string(c) + " out of range");
      }
    }
  }
}

MarginalTable RecordSet::exact_marginal(const Clique& gamma) const {
  const std::size_t len = domain_.marginal_len(gamma);
  MarginalTable mu{gamma, std::vector<double>(len, 0.0)};
  // Mixed-radix strides, last clique attribute fastest.
  std::vector<std::size_t> strides(gamma.size());
  std::size_t stride = 1;
  for (std::size_t q = gamma.size(); q-- > 0;) {
    strides[q] = stride;
    stride *= static_cast<std::size_t>(domain_.size(gamma[q]));
  }
  const std::size_t d = static_cast<std::size_t>(domain_.dim());
  for (std::size_t r = 0; r < rows_; ++r) {
    std::size_t idx = 0;
    for (std::size_t q = 0; q < gamma.size(); ++q) {
      idx += strides[q] * static_cast<std::size_t>(codes_[r * d + gamma[q]]);
    }
    mu.values[idx] += 1.0;
  }
  return mu;
}

RecordSet load_csv(const std::string& path, const std::optional<Domain>& domain) {
  const auto rows = parse_csv(path);
  const std::vector<std::string>& header = rows.front();
  const std::size_t d = header.size();
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != d) {
      throw IngestError("row " + std::to_string(r) + " of '" + path + "' has " +
                        std::to_string(rows[r].size()) + " fields, header has " +
                        std::to_string(d));
    }
  }

  std::vector<std::map<std::string, std::int32_t>> encoders(d);
  std::vector<Attribute> attrs(d);
  if (domain.has_value()) {
    if (static_cast<std::size_t>(domain->dim()) != d) {
      throw IngestError("csv has " + std::to_string(d) + " columns, domain has " +
                        std::to_string(domain->dim()) + " attributes");
    }
    for (std::size_t a = 0; a < d; ++a) {
      const Attribute& attr = domain->attributes()[a];
      if (attr.name != header[a]) {
        throw IngestError("csv column " + std::to_string(a) + " is '" + header[a] +
                          "', domain expects '" + attr.name + "'");
      }
      for (std::size_t v = 0; v < attr.labels.size(); ++v) {
        encoders[a][attr.labels[v]] = static_cast<std::int32_t>(v);
      }
      if (attr.labels.empty()) {
        // Unlabeled attribute: accept integer codes written as strings.
        for (int v = 0; v < attr.size; ++v) {
          encoders[a][std::to_string(v)] = v;
        }
      }
    }
  } else {
    for (std::size_t a = 0; a < d; ++a) {
      attrs[a].name = header[a];
      if (attrs[a].name.empty()) {
        throw IngestError("csv column " + std::to_string(a) + " has an empty header");
      }
    }
  }

  std::vector<std::int32_t> codes;
  codes.reserve((rows.size() - 1) * d);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    for (std::size_t a = 0; a < d; ++a) {
      const std::string& value = rows[r][a];
      auto it = encoders[a].find(value);
      if (it == encoders[a].end()) {
        if (domain.has_value()) {
          throw IngestError("row " + std::to_string(r) + ", column '" + header[a] +
                            "': value '" + value + "' not in domain");
        }
        const auto code = static_cast<std::int32_t>(attrs[a].labels.size());
        attrs[a].labels.push_back(value);
        it = encoders[a].emplace(value, code).first;
      }
      codes.push_back(it->second);
    }
  }

  if (domain.has_value()) {
    return RecordSet(*domain, std::move(codes));
  }
  for (std::size_t a = 0; a < d; ++a) {
    attrs[a].size = static_cast<int>(attrs[a].labels.size());
    if (attrs[a].size == 0) {
      throw IngestError("csv file '" + path + "' has no data rows");
    }
  }
  return RecordSet(Domain(std::move(attrs)), std::move(codes));
}

void save_csv(const RecordSet& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write csv file '" + path + "'");
  const Domain& domain = data.domain();
  for (int a = 0; a < domain.dim(); ++a) {
    if (a) out << ',';
    out << csv_quote(domain.name(a));
  }
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (int a = 0; a < domain.dim(); ++a) {
      if (a) out << ',';
      const Attribute& attr = domain.attributes()[a];
      const std::int32_t c = data.code(r, a);
      if (attr.labels.empty()) {
        out << c;
      } else {
        out << csv_quote(attr.labels[c]);
      }
    }
    out << '\n';
  }
}

}  // namespace rem
