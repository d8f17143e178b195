#include "kernbal/csv.hpp"

#include "kernbal/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace kernbal::csv {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\"");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& cell, std::size_t line_no, const std::string& column) {
  const std::string t = trim(cell);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ", column '" + column +
                                       "': cannot parse '" + t + "' as a number");
  }
  return v;
}

}  // namespace

long Table::find(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return static_cast<long>(j);
  }
  return -1;
}

Table read(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    for (auto& h : split(line)) t.header.push_back(trim(h));
    break;
  }
  if (t.header.empty()) throw Error(ErrorCode::kParse, "CSV input has no header row");
  t.columns.assign(t.header.size(), {});
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size()) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + " has " +
                                         std::to_string(cells.size()) + " fields, header has " +
                                         std::to_string(t.header.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      t.columns[j].push_back(parse_number(cells[j], line_no, t.header[j]));
    }
  }
  return t;
}

Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kParse, "cannot open '" + path + "'");
  return read(in);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

balancing::Sample to_sample(const Table& table, const Roles& roles) {
  auto require = [&](const std::string& name, const char* role) {
    const long j = table.find(name);
    if (j < 0) {
      throw Error(ErrorCode::kParse,
                  std::string(role) + " column '" + name + "' not found in input header");
    }
    return static_cast<std::size_t>(j);
  };
  const std::size_t ja = require(roles.treatment, "treatment");
  const std::size_t jy = require(roles.outcome, "outcome");
  std::vector<std::string> cov_names = roles.covariates;
  if (cov_names.empty()) {
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      if (j != ja && j != jy) cov_names.push_back(table.header[j]);
    }
  }
  if (cov_names.empty()) throw Error(ErrorCode::kParse, "no covariate columns");
  std::vector<std::size_t> cov_idx;
  for (const auto& c : cov_names) cov_idx.push_back(require(c, "covariate"));

  const auto n = static_cast<linalg::Index>(table.rows());
  linalg::DenseMatrix x(n, static_cast<linalg::Index>(cov_idx.size()));
  std::vector<int> a(static_cast<std::size_t>(n));
  linalg::Vector y(n);
  for (linalg::Index i = 0; i < n; ++i) {
    const double av = table.columns[ja][static_cast<std::size_t>(i)];
    if (av != 0.0 && av != 1.0) {
      throw Error(ErrorCode::kParse, "treatment column '" + roles.treatment + "' row " +
                                         std::to_string(i + 1) + " is not 0 or 1");
    }
    a[static_cast<std::size_t>(i)] = static_cast<int>(av);
    y[i] = table.columns[jy][static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < cov_idx.size(); ++k) {
      x(i, static_cast<linalg::Index>(k)) = table.columns[cov_idx[k]][static_cast<std::size_t>(i)];
    }
  }
  try {
    return balancing::Sample(kernel::CovariateMatrix(std::move(x), cov_names), std::move(a),
                             std::move(y));
  } catch (const Error& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
}

void write_sample(std::ostream& out, const balancing::Sample& sample) {
  for (const auto& name : sample.x().names()) out << name << ',';
  out << "a,y\n";
  const auto& x = sample.x().values();
  for (linalg::Index i = 0; i < sample.n(); ++i) {
    for (linalg::Index j = 0; j < x.cols(); ++j) out << format_double(x(i, j)) << ',';
    out << sample.a()[static_cast<std::size_t>(i)] << ',' << format_double(sample.y()[i]) << '\n';
  }
}

}  // namespace kernbal::csv
