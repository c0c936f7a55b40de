#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace patternkit {

using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Identity of a missingness pattern: bit j set <=> covariate j missing.
// Width is capped at 63 so patterns stay totally ordered by numeric value.
struct PatternId {
  std::uint64_t bits = 0;
  int width = 0;

  bool missing(int j) const { return (bits >> j) & 1u; }
  int missing_count() const;
  bool fully_observed() const { return bits == 0; }

  // true when every column missing here is also missing in `other`
  bool subset_of(const PatternId& other) const {
    return (bits & other.bits) == bits;
  }

  std::string to_string() const;  // e.g. "10" = first covariate missing

  friend auto operator<=>(const PatternId& a, const PatternId& b) {
    return a.bits <=> b.bits;
  }
  friend bool operator==(const PatternId& a, const PatternId& b) {
    return a.bits == b.bits;
  }
};

PatternId pattern_of(const std::vector<std::uint8_t>& mask_row);
std::vector<int> observed_columns(const PatternId& id);
std::vector<int> missing_columns(const PatternId& id);

// Response, covariates with missing entries, and the missingness mask.
// Missing cells carry NaN payloads and the mask is authoritative; value()
// refuses to read a missing cell.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd x, MaskMatrix mask, Eigen::VectorXd y,
          std::vector<std::string> col_names);

  int n_rows() const { return static_cast<int>(x_.rows()); }
  int n_cols() const { return static_cast<int>(x_.cols()); }

  bool is_missing(int i, int j) const { return mask_(i, j) != 0; }
  double value(int i, int j) const;

  PatternId row_pattern(int i) const;
  std::uint64_t row_bits(int i) const;
  Eigen::VectorXd row_values(int i) const;  // NaN where missing

  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& x_raw() const { return x_; }  // NaN payloads in gaps
  const MaskMatrix& mask() const { return mask_; }
  const std::vector<std::string>& col_names() const { return col_names_; }

  int count_complete_rows() const;
  Dataset subset(const std::vector<int>& rows) const;

 private:
  Eigen::MatrixXd x_;
  MaskMatrix mask_;
  Eigen::VectorXd y_;
  std::vector<std::string> col_names_;
};

// Partition of row indices by missingness pattern. std::map keeps the
// iteration order deterministic (ascending pattern id).
struct PatternIndex {
  std::map<PatternId, std::vector<int>> groups;

  int pattern_count() const { return static_cast<int>(groups.size()); }
  const std::vector<int>* rows_for(const PatternId& id) const {
    auto it = groups.find(id);
    return it == groups.end() ? nullptr : &it->second;
  }
};

PatternIndex partition(const Dataset& ds);

struct CsvOptions {
  std::string response;        // response column name, must exist in header
  std::string na_token = "NA"; // token marking a missing covariate cell
};

Dataset load_csv(const std::string& path, const CsvOptions& opts);
void save_csv(const Dataset& ds, const std::string& path,
              const CsvOptions& opts);

// 17 significant digits: enough for binary64 round trips through text.
std::string format_double(double v);

}  // namespace patternkit
