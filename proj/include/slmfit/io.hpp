#pragma once

#include <map>
#include <string>
#include <vector>

#include "slmfit/marginal.hpp"
#include "slmfit/weights.hpp"

namespace slmfit::io {

inline constexpr const char* kMissingToken = "NA";

/// Column-oriented numeric table. Missing cells are NaN.
struct Table {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  /// Index of a named column; throws InvalidInput when absent.
  std::size_t column(const std::string& name) const;
};

/// Comma-separated with a header row. Cells equal to "NA" become NaN;
/// anything else must parse as a number. Errors name the line and column.
Table read_table(const std::string& path);
Table parse_table(const std::string& text, const std::string& source = "<memory>");

/// Sparse weights: a header line "n nnz standardized" followed by nnz lines
/// "i j value" with 0-based indices. Lines starting with '#' are skipped.
WeightsMatrix read_weights(const std::string& path);
WeightsMatrix parse_weights(const std::string& text, const std::string& source = "<memory>");
std::string format_weights(const WeightsMatrix& w);

/// Point file: CSV with columns id,x,y; rows keep file order.
std::vector<Point2> read_points(const std::string& path);

/// 17 significant digits; NaN prints as NA, infinities as Inf / -Inf.
std::string format_double(double v);

std::string marginal_csv(const Marginal& m, const std::string& x_name);

/// Files collected in memory and written together, so a failed run leaves
/// no partial outputs behind.
class OutputSet {
 public:
  void add(const std::string& relative_path, std::string content);
  bool empty() const { return files_.empty(); }
  const std::map<std::string, std::string>& files() const { return files_; }
  /// Writes every file below `dir`. On any failure the files written so
  /// far are removed and InvalidInput is thrown.
  void commit(const std::string& dir) const;

 private:
  std::map<std::string, std::string> files_;
};

}  // namespace slmfit::io
