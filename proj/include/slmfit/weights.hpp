#pragma once

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slmfit/sparse.hpp"

namespace slmfit {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Admissible open interval for the spatial autocorrelation parameter.
struct RhoBounds {
  double min = -1.0;
  double max = 1.0;
};

/// Sparse n x n spatial weights with standardization state.
///
/// Invariants: square, zero diagonal, finite entries. When `standardized`
/// is set every nonempty row sums to one. `row_scale` holds the row sums
/// before standardization when they are known; it is used to recognise
/// matrices that are similar to a symmetric one.
struct WeightsMatrix {
  SparseMat mat;
  bool standardized = false;
  std::optional<RhoBounds> bounds;
  std::vector<double> row_scale;
  std::vector<std::string> warnings;

  Eigen::Index n() const { return mat.rows(); }
  std::vector<Eigen::Index> empty_rows() const;
  bool has_empty_rows() const { return !empty_rows().empty(); }
};

/// Validates shape, diagonal and finiteness; records island rows as warnings.
WeightsMatrix make_weights(SparseMat mat, bool standardized);

WeightsMatrix knn_adjacency(std::span<const Point2> coords, int k);

WeightsMatrix row_standardize(const WeightsMatrix& w);

enum class SpectrumMethod {
  Automatic,  ///< dense below kDenseSpectrumLimit, iterative above
  Dense,
  Iterative,
};

inline constexpr Eigen::Index kDenseSpectrumLimit = 2000;

/// rho_max = 1 / lambda_max and rho_min = 1 / lambda_min over the real
/// eigenvalues of W. For a row-standardized W rho_max is exactly 1.
RhoBounds rho_range(const WeightsMatrix& w,
                    SpectrumMethod method = SpectrumMethod::Automatic);

/// All eigenvalues of W by a dense solver; symmetric when W is similar to a
/// symmetric matrix.
std::vector<std::complex<double>> dense_spectrum(const WeightsMatrix& w);

/// Returns a copy with `bounds` filled in from rho_range.
WeightsMatrix with_rho_bounds(WeightsMatrix w,
                              SpectrumMethod method = SpectrumMethod::Automatic);

/// W * X, column by column. The caller decides which columns to lag.
Eigen::MatrixXd lag_covariates(const Eigen::MatrixXd& x, const WeightsMatrix& w);

}  // namespace slmfit
