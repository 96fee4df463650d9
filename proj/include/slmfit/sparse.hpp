#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <vector>

namespace slmfit {

using SparseMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Builds a compressed sparse matrix from (row, col, value) triples.
/// Throws InvalidInput on duplicate coordinates, out-of-range indices or
/// non-finite values.
SparseMat sparse_from_triplets(Eigen::Index n_rows, Eigen::Index n_cols,
                               const std::vector<Triplet>& entries);

/// Symmetry check on both pattern and values, |a_ij - a_ji| <= tol * max|a|.
bool is_symmetric(const SparseMat& m, double tol = 1e-12);

SparseMat sparse_identity(Eigen::Index n);

}  // namespace slmfit
