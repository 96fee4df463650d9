#include "slmfit/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "slmfit/error.hpp"

namespace slmfit {

SparseMat sparse_from_triplets(Eigen::Index n_rows, Eigen::Index n_cols,
                               const std::vector<Triplet>& entries) {
  if (n_rows < 0 || n_cols < 0) throw InvalidInput("negative matrix dimension");
  std::vector<Triplet> sorted(entries);
  for (const auto& t : sorted) {
    if (t.row() < 0 || t.row() >= n_rows || t.col() < 0 || t.col() >= n_cols) {
      std::ostringstream msg;
      msg << "entry (" << t.row() << ", " << t.col() << ") outside " << n_rows
          << " x " << n_cols;
      throw InvalidInput(msg.str());
    }
    if (!std::isfinite(t.value())) {
      std::ostringstream msg;
      msg << "non-finite value at (" << t.row() << ", " << t.col() << ")";
      throw InvalidInput(msg.str());
    }
  }
  std::sort(sorted.begin(), sorted.end(), [](const Triplet& a, const Triplet& b) {
    return a.col() != b.col() ? a.col() < b.col() : a.row() < b.row();
  });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].row() == sorted[i - 1].row() &&
        sorted[i].col() == sorted[i - 1].col()) {
      std::ostringstream msg;
      msg << "duplicate entry (" << sorted[i].row() << ", " << sorted[i].col() << ")";
      throw InvalidInput(msg.str());
    }
  }
  SparseMat m(n_rows, n_cols);
  m.setFromTriplets(sorted.begin(), sorted.end());
  m.makeCompressed();
  return m;
}

bool is_symmetric(const SparseMat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const SparseMat t = m.transpose();
  const SparseMat diff = m - t;
  double scale = 0.0;
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMat::InnerIterator it(m, k); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SparseMat::InnerIterator it(diff, k); it; ++it)
      if (std::abs(it.value()) > tol * std::max(scale, 1e-300)) return false;
  return true;
}

SparseMat sparse_identity(Eigen::Index n) {
  SparseMat id(n, n);
  id.setIdentity();
  return id;
}

}  // namespace slmfit
