#include "patternkit/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace patternkit {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

int PatternId::missing_count() const {
  return std::popcount(bits);
}

std::string PatternId::to_string() const {
  std::string s(static_cast<std::size_t>(width), '0');
  for (int j = 0; j < width; ++j)
    if (missing(j)) s[static_cast<std::size_t>(j)] = '1';
  return s;
}

PatternId pattern_of(const std::vector<std::uint8_t>& mask_row) {
  const int p = static_cast<int>(mask_row.size());
  if (p > 63) throw std::invalid_argument("pattern_of: more than 63 covariates");
  PatternId id;
  id.width = p;
  for (int j = 0; j < p; ++j) {
    if (mask_row[static_cast<std::size_t>(j)] > 1)
      throw std::invalid_argument("pattern_of: mask entries must be 0 or 1");
    if (mask_row[static_cast<std::size_t>(j)]) id.bits |= (1ULL << j);
  }
  return id;
}

std::vector<int> observed_columns(const PatternId& id) {
  std::vector<int> out;
  for (int j = 0; j < id.width; ++j)
    if (!id.missing(j)) out.push_back(j);
  return out;
}

std::vector<int> missing_columns(const PatternId& id) {
  std::vector<int> out;
  for (int j = 0; j < id.width; ++j)
    if (id.missing(j)) out.push_back(j);
  return out;
}

Dataset::Dataset(Eigen::MatrixXd x, MaskMatrix mask, Eigen::VectorXd y,
                 std::vector<std::string> col_names)
    : x_(std::move(x)), mask_(std::move(mask)), y_(std::move(y)),
      col_names_(std::move(col_names)) {
  if (x_.cols() > 63) throw std::invalid_argument("Dataset: p must be <= 63");
  if (mask_.rows() != x_.rows() || mask_.cols() != x_.cols())
    throw std::invalid_argument("Dataset: mask shape does not match x");
  if (y_.size() != x_.rows())
    throw std::invalid_argument("Dataset: y length does not match row count");
  if (static_cast<Eigen::Index>(col_names_.size()) != x_.cols())
    throw std::invalid_argument("Dataset: column name count does not match p");
  for (Eigen::Index i = 0; i < y_.size(); ++i)
    if (!std::isfinite(y_(i)))
      throw std::invalid_argument("Dataset: response must be fully observed");
  for (Eigen::Index i = 0; i < x_.rows(); ++i) {
    for (Eigen::Index j = 0; j < x_.cols(); ++j) {
      if (mask_(i, j) > 1)
        throw std::invalid_argument("Dataset: mask entries must be 0 or 1");
      if (mask_(i, j)) {
        x_(i, j) = kNaN;  // mask is authoritative; poison the payload
      } else if (!std::isfinite(x_(i, j))) {
        throw std::invalid_argument("Dataset: non-finite value in observed cell");
      }
    }
  }
}

double Dataset::value(int i, int j) const {
  if (mask_(i, j))
    throw std::logic_error("Dataset::value: cell (" + std::to_string(i) + "," +
                           std::to_string(j) + ") is missing");
  return x_(i, j);
}

PatternId Dataset::row_pattern(int i) const {
  PatternId id;
  id.width = n_cols();
  id.bits = row_bits(i);
  return id;
}

std::uint64_t Dataset::row_bits(int i) const {
  std::uint64_t bits = 0;
  for (int j = 0; j < n_cols(); ++j)
    if (mask_(i, j)) bits |= (1ULL << j);
  return bits;
}

Eigen::VectorXd Dataset::row_values(int i) const {
  return x_.row(i).transpose();
}

int Dataset::count_complete_rows() const {
  int count = 0;
  for (int i = 0; i < n_rows(); ++i)
    if (row_bits(i) == 0) ++count;
  return count;
}

Dataset Dataset::subset(const std::vector<int>& rows) const {
  const int m = static_cast<int>(rows.size());
  Eigen::MatrixXd x(m, n_cols());
  MaskMatrix mask(m, n_cols());
  Eigen::VectorXd y(m);
  for (int r = 0; r < m; ++r) {
    const int i = rows[static_cast<std::size_t>(r)];
    if (i < 0 || i >= n_rows())
      throw std::out_of_range("Dataset::subset: row index out of range");
    x.row(r) = x_.row(i);
    mask.row(r) = mask_.row(i);
    y(r) = y_(i);
  }
  return Dataset(std::move(x), std::move(mask), std::move(y), col_names_);
}

PatternIndex partition(const Dataset& ds) {
  PatternIndex index;
  for (int i = 0; i < ds.n_rows(); ++i)
    index.groups[ds.row_pattern(i)].push_back(i);
  return index;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& raw, int row, const std::string& col) {
  const std::string s = trim(raw);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw std::runtime_error("load_csv: non-numeric cell \"" + raw +
                             "\" in column " + col + ", data row " +
                             std::to_string(row));
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_csv: empty file " + path);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  int response_idx = -1;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == opts.response) response_idx = static_cast<int>(j);
  if (response_idx < 0)
    throw std::runtime_error("load_csv: response column \"" + opts.response +
                             "\" not found in header of " + path);

  std::vector<std::string> col_names;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (static_cast<int>(j) != response_idx) col_names.push_back(header[j]);
  const int p = static_cast<int>(col_names.size());
  if (p > 63) throw std::runtime_error("load_csv: more than 63 covariates");

  std::vector<std::vector<double>> x_rows;
  std::vector<std::vector<std::uint8_t>> mask_rows;
  std::vector<double> y_vals;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("load_csv: data row " + std::to_string(row) +
                               " has " + std::to_string(fields.size()) +
                               " fields, expected " +
                               std::to_string(header.size()));
    std::vector<double> xr(static_cast<std::size_t>(p));
    std::vector<std::uint8_t> mr(static_cast<std::size_t>(p), 0);
    int jx = 0;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const std::string cell = trim(fields[j]);
      if (static_cast<int>(j) == response_idx) {
        if (cell == opts.na_token)
          throw std::runtime_error(
              "load_csv: missing response (na token) in data row " +
              std::to_string(row));
        y_vals.push_back(parse_number(cell, row, header[j]));
      } else {
        if (cell == opts.na_token) {
          mr[static_cast<std::size_t>(jx)] = 1;
          xr[static_cast<std::size_t>(jx)] = kNaN;
        } else {
          xr[static_cast<std::size_t>(jx)] = parse_number(cell, row, header[j]);
        }
        ++jx;
      }
    }
    x_rows.push_back(std::move(xr));
    mask_rows.push_back(std::move(mr));
    ++row;
  }

  const int n = static_cast<int>(x_rows.size());
  Eigen::MatrixXd x(n, p);
  MaskMatrix mask(n, p);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    y(i) = y_vals[static_cast<std::size_t>(i)];
    for (int j = 0; j < p; ++j) {
      x(i, j) = x_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      mask(i, j) =
          mask_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  return Dataset(std::move(x), std::move(mask), std::move(y),
                 std::move(col_names));
}

void save_csv(const Dataset& ds, const std::string& path,
              const CsvOptions& opts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  for (int j = 0; j < ds.n_cols(); ++j) {
    if (j) out << ',';
    out << ds.col_names()[static_cast<std::size_t>(j)];
  }
  out << (ds.n_cols() ? "," : "") << opts.response << '\n';
  for (int i = 0; i < ds.n_rows(); ++i) {
    for (int j = 0; j < ds.n_cols(); ++j) {
      if (j) out << ',';
      if (ds.is_missing(i, j))
        out << opts.na_token;
      else
        out << format_double(ds.value(i, j));
    }
    out << (ds.n_cols() ? "," : "") << format_double(ds.y()(i)) << '\n';
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

}  // namespace patternkit
