#pragma once

#include "kernbal/balancing.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace kernbal::csv {

/// Comma-separated numeric table with a required header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  /// Column position, or -1 if absent.
  long find(const std::string& name) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

/// Shortest decimal that round-trips is not required; 17 significant digits.
std::string format_double(double v);

struct Roles {
  std::string treatment;
  std::string outcome;
  std::vector<std::string> covariates;  // empty: every other column
};

/// Builds a sample from declared column roles. Throws Error(kParse) naming
/// the missing column or the offending row.
balancing::Sample to_sample(const Table& table, const Roles& roles);

/// Writes the sample as CSV with columns covariates..., a, y.
void write_sample(std::ostream& out, const balancing::Sample& sample);

}  // namespace kernbal::csv
