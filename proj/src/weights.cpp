#include "slmfit/weights.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "slmfit/error.hpp"
#include "slmfit/kernels.hpp"

namespace slmfit {

std::vector<Eigen::Index> WeightsMatrix::empty_rows() const {
  std::vector<int> count(static_cast<std::size_t>(mat.rows()), 0);
  for (int k = 0; k < mat.outerSize(); ++k)
    for (SparseMat::InnerIterator it(mat, k); it; ++it)
      if (it.value() != 0.0) ++count[static_cast<std::size_t>(it.row())];
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < count.size(); ++i)
    if (count[i] == 0) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

WeightsMatrix make_weights(SparseMat mat, bool standardized) {
  if (mat.rows() != mat.cols()) throw InvalidInput("weights matrix must be square");
  if (mat.rows() == 0) throw InvalidInput("weights matrix is empty");
  mat.makeCompressed();
  for (int k = 0; k < mat.outerSize(); ++k) {
    for (SparseMat::InnerIterator it(mat, k); it; ++it) {
      if (!std::isfinite(it.value())) throw InvalidInput("non-finite weight");
      if (it.row() == it.col() && it.value() != 0.0) {
        std::ostringstream msg;
        msg << "weights matrix has nonzero diagonal at row " << it.row();
        throw InvalidInput(msg.str());
      }
    }
  }
  mat.prune(0.0);
  WeightsMatrix w;
  w.mat = std::move(mat);
  w.standardized = standardized;
  const auto islands = w.empty_rows();
  if (!islands.empty()) {
    std::ostringstream msg;
    msg << islands.size() << " region(s) without neighbours (first: row " << islands.front()
        << ")";
    w.warnings.push_back(msg.str());
  }
  if (standardized) {
    Eigen::VectorXd sums = w.mat * Eigen::VectorXd::Ones(w.n());
    for (Eigen::Index i = 0; i < w.n(); ++i) {
      if (sums[i] != 0.0 && std::abs(sums[i] - 1.0) > 1e-10) {
        std::ostringstream msg;
        msg << "row " << i << " sums to " << sums[i] << " but matrix is marked standardized";
        throw InvalidInput(msg.str());
      }
    }
  }
  return w;
}

WeightsMatrix knn_adjacency(std::span<const Point2> coords, int k) {
  const auto n = static_cast<Eigen::Index>(coords.size());
  if (k < 1) throw InvalidParameter("k must be at least 1");
  if (k >= n) {
    std::ostringstream msg;
    msg << "k = " << k << " must be smaller than the number of points (" << n << ")";
    throw InvalidParameter(msg.str());
  }
  for (const auto& p : coords)
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw InvalidInput("non-finite coordinate in point set");

  const auto knn = kernels::knn_parallel(coords, k);
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i)
    for (int r = 0; r < k; ++r)
      entries.emplace_back(i, knn.neighbors[static_cast<std::size_t>(i * k + r)], 1.0);
  WeightsMatrix w = make_weights(sparse_from_triplets(n, n, entries), false);
  if (!knn.tied_rows.empty()) {
    std::ostringstream msg;
    msg << knn.tied_rows.size()
        << " row(s) with tied k-th neighbour distance resolved by lowest index (first: row "
        << knn.tied_rows.front() << ")";
    w.warnings.push_back(msg.str());
  }
  return w;
}

WeightsMatrix row_standardize(const WeightsMatrix& w) {
  if (w.mat.nonZeros() == 0) throw InvalidInput("cannot standardize an all-zero weights matrix");
  Eigen::VectorXd sums = w.mat * Eigen::VectorXd::Ones(w.n());
  for (Eigen::Index i = 0; i < w.n(); ++i)
    if (!(sums[i] >= 0.0))
      throw InvalidInput("row standardization requires nonnegative row sums");
  SparseMat scaled = w.mat;
  for (int k = 0; k < scaled.outerSize(); ++k)
    for (SparseMat::InnerIterator it(scaled, k); it; ++it)
      it.valueRef() /= sums[it.row()];

  WeightsMatrix out;
  out.mat = std::move(scaled);
  out.standardized = true;
  out.warnings = w.warnings;
  out.row_scale.resize(static_cast<std::size_t>(w.n()));
  if (w.standardized && !w.row_scale.empty()) {
    out.row_scale = w.row_scale;
  } else {
    for (Eigen::Index i = 0; i < w.n(); ++i) out.row_scale[static_cast<std::size_t>(i)] = sums[i];
  }
  return out;
}

namespace {

// Returns d with d_i W_ij = d_j W_ji when such weights are known or can be
// guessed (original row sums, row counts, or the identity). Empty when W is
// not recognisably similar to a symmetric matrix.
std::vector<double> symmetrizing_weights(const WeightsMatrix& w) {
  std::vector<std::vector<double>> candidates;
  if (!w.row_scale.empty()) candidates.push_back(w.row_scale);
  std::vector<double> counts(static_cast<std::size_t>(w.n()), 0.0);
  for (int k = 0; k < w.mat.outerSize(); ++k)
    for (SparseMat::InnerIterator it(w.mat, k); it; ++it)
      counts[static_cast<std::size_t>(it.row())] += 1.0;
  candidates.push_back(counts);
  candidates.emplace_back(static_cast<std::size_t>(w.n()), 1.0);

  for (auto& d : candidates) {
    for (auto& v : d)
      if (v <= 0.0) v = 1.0;  // islands do not constrain the similarity
    SparseMat a = w.mat;
    for (int k = 0; k < a.outerSize(); ++k)
      for (SparseMat::InnerIterator it(a, k); it; ++it)
        it.valueRef() *= d[static_cast<std::size_t>(it.row())];
    if (is_symmetric(a, 1e-10)) return d;
  }
  return {};
}

SparseMat symmetrized(const WeightsMatrix& w, const std::vector<double>& d) {
  SparseMat s = w.mat;
  for (int k = 0; k < s.outerSize(); ++k)
    for (SparseMat::InnerIterator it(s, k); it; ++it)
      it.valueRef() *= std::sqrt(d[static_cast<std::size_t>(it.row())] /
                                 d[static_cast<std::size_t>(it.col())]);
  return s;
}

struct ExtremeEigen {
  double min = 0.0;
  double max = 0.0;
};

ExtremeEigen dense_extremes(const WeightsMatrix& w, const std::vector<double>& d) {
  ExtremeEigen out;
  if (!d.empty()) {
    Eigen::MatrixXd s = Eigen::MatrixXd(symmetrized(w, d));
    s = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
      throw NumericFailure("symmetric eigen-solver did not converge");
    out.min = solver.eigenvalues().minCoeff();
    out.max = solver.eigenvalues().maxCoeff();
    return out;
  }
  Eigen::MatrixXd dense = Eigen::MatrixXd(w.mat);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(dense, false);
  if (solver.info() != Eigen::Success)
    throw NumericFailure("general eigen-solver did not converge");
  out.min = std::numeric_limits<double>::infinity();
  out.max = -std::numeric_limits<double>::infinity();
  for (const auto& lambda : solver.eigenvalues()) {
    if (std::abs(lambda.imag()) > 1e-9 * (1.0 + std::abs(lambda.real()))) continue;
    out.min = std::min(out.min, lambda.real());
    out.max = std::max(out.max, lambda.real());
  }
  if (!std::isfinite(out.max)) throw NumericFailure("weights matrix has no real eigenvalue");
  return out;
}

// Power iteration for the dominant eigenvalue of op, followed by inverse
// iteration around the estimate. `target` is +1 for the largest and -1 for
// the smallest eigenvalue of s; the shift makes that eigenvalue dominant.
double iterative_extreme(const SparseMat& s, int target, bool symmetric) {
  const Eigen::Index n = s.rows();
  double shift = 0.0;
  for (int k = 0; k < s.outerSize(); ++k) {
    double col = 0.0;
    for (SparseMat::InnerIterator it(s, k); it; ++it) col += std::abs(it.value());
    shift = std::max(shift, col);
  }
  Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < s.outerSize(); ++k)
    for (SparseMat::InnerIterator it(s, k); it; ++it) rowsum[it.row()] += std::abs(it.value());
  shift = std::max(shift, rowsum.maxCoeff());

  auto apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return target > 0 ? Eigen::VectorXd(s * v + shift * v) : Eigen::VectorXd(shift * v - s * v);
  };

  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
  v.normalize();
  constexpr int kPowerIterations = 5000;
  double estimate = 0.0;
  double previous = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < kPowerIterations; ++iter) {
    Eigen::VectorXd next = apply(v);
    const double norm = next.norm();
    if (norm == 0.0) break;
    const double rayleigh = v.dot(s * v);
    estimate = rayleigh;
    v = next / norm;
    if (std::abs(rayleigh - previous) < 1e-7 * (1.0 + std::abs(rayleigh))) break;
    previous = rayleigh;
  }

  // Inverse iteration with a shift just beyond the estimate: for a symmetric
  // matrix the Rayleigh quotient never overshoots the extreme eigenvalue, so
  // the nearest eigenvalue to the shift is the one we want.
  Eigen::VectorXd residual = s * v - estimate * v;
  const double delta = std::max(1e-3 * (1.0 + std::abs(estimate)), 2.0 * residual.norm());
  const double sigma = estimate + target * delta;
  SparseMat shifted = s - sigma * sparse_identity(n);
  shifted.makeCompressed();
  Eigen::SparseLU<SparseMat> lu;
  lu.compute(shifted);
  if (lu.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "inverse iteration factorization failed at shift " << sigma << " after " << iter
        << " power iterations";
    throw NumericFailure(msg.str());
  }
  double lambda = estimate;
  for (int k = 0; k < 200; ++k) {
    Eigen::VectorXd next = lu.solve(v);
    next.normalize();
    const double rq = next.dot(s * next);
    const double res = (s * next - rq * next).norm();
    v = next;
    lambda = rq;
    if (res < 1e-10 * (1.0 + std::abs(rq))) return lambda;
  }
  if (!symmetric) {
    std::ostringstream msg;
    msg << "eigenvalue iteration did not converge (power iterations: " << iter
        << ", last estimate " << lambda << ")";
    throw NumericFailure(msg.str());
  }
  std::ostringstream msg;
  msg << "inverse iteration did not converge (power iterations: " << iter
      << ", last estimate " << lambda << ")";
  throw NumericFailure(msg.str());
}

}  // namespace

std::vector<std::complex<double>> dense_spectrum(const WeightsMatrix& w) {
  std::vector<std::complex<double>> out;
  const auto d = symmetrizing_weights(w);
  if (!d.empty()) {
    Eigen::MatrixXd s = Eigen::MatrixXd(symmetrized(w, d));
    s = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericFailure("symmetric eigen-solver did not converge");
    for (Eigen::Index i = 0; i < s.rows(); ++i) out.emplace_back(solver.eigenvalues()[i], 0.0);
    return out;
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(w.mat), false);
  if (solver.info() != Eigen::Success) throw NumericFailure("general eigen-solver did not converge");
  for (const auto& lambda : solver.eigenvalues()) out.push_back(lambda);
  return out;
}

RhoBounds rho_range(const WeightsMatrix& w, SpectrumMethod method) {
  if (w.mat.nonZeros() == 0) throw InvalidInput("rho range undefined for an all-zero matrix");
  const auto d = symmetrizing_weights(w);
  const bool dense = method == SpectrumMethod::Dense ||
                     (method == SpectrumMethod::Automatic && w.n() <= kDenseSpectrumLimit);
  ExtremeEigen ext;
  if (dense) {
    ext = dense_extremes(w, d);
  } else {
    const SparseMat s = d.empty() ? w.mat : symmetrized(w, d);
    ext.max = w.standardized ? 1.0 : iterative_extreme(s, +1, !d.empty());
    ext.min = iterative_extreme(s, -1, !d.empty());
  }
  if (!(ext.max > 0.0)) throw NumericFailure("weights matrix has no positive real eigenvalue");
  RhoBounds b;
  b.max = w.standardized ? 1.0 : 1.0 / ext.max;
  b.min = ext.min < 0.0 ? 1.0 / ext.min : -b.max;
  return b;
}

WeightsMatrix with_rho_bounds(WeightsMatrix w, SpectrumMethod method) {
  w.bounds = rho_range(w, method);
  return w;
}

Eigen::MatrixXd lag_covariates(const Eigen::MatrixXd& x, const WeightsMatrix& w) {
  if (x.rows() != w.n()) {
    std::ostringstream msg;
    msg << "design has " << x.rows() << " rows but weights matrix is " << w.n() << " x "
        << w.n();
    throw InvalidInput(msg.str());
  }
  return w.mat * x;
}

}  // namespace slmfit
