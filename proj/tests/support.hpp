#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "slmfit/weights.hpp"

namespace slmfit::testing {

using Rng = std::mt19937_64;

/// Rook contiguity on a rows x cols lattice.
inline WeightsMatrix lattice(int rows, int cols, bool standardize = true) {
  std::vector<Triplet> t;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int i = r * cols + c;
      if (r > 0) t.emplace_back(i, i - cols, 1.0);
      if (r + 1 < rows) t.emplace_back(i, i + cols, 1.0);
      if (c > 0) t.emplace_back(i, i - 1, 1.0);
      if (c + 1 < cols) t.emplace_back(i, i + 1, 1.0);
    }
  WeightsMatrix w = make_weights(sparse_from_triplets(rows * cols, rows * cols, t), false);
  return with_rho_bounds(standardize ? row_standardize(w) : w);
}

/// Ring plus random symmetric chords, so no row is empty.
inline WeightsMatrix random_graph(int n, Rng& rng, bool standardize = true, double chord_prob = 0.15) {
  std::vector<std::vector<char>> a(n, std::vector<char>(n, 0));
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    if (j != i) a[i][j] = a[j][i] = 1;
  }
  std::bernoulli_distribution coin(chord_prob);
  for (int i = 0; i < n; ++i)
    for (int j = i + 2; j < n; ++j)
      if (coin(rng)) a[i][j] = a[j][i] = 1;
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (a[i][j]) t.emplace_back(i, j, 1.0);
  WeightsMatrix w = make_weights(sparse_from_triplets(n, n, t), false);
  return with_rho_bounds(standardize ? row_standardize(w) : w);
}

inline std::vector<Point2> random_points(int n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<Point2> p(n);
  for (auto& q : p) q = {u(rng), u(rng)};
  return p;
}

inline Eigen::MatrixXd dense(const WeightsMatrix& w) { return Eigen::MatrixXd(w.mat); }

inline Eigen::MatrixXd normal_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> z(0.0, sd);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = z(rng);
  return m;
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Dense multivariate normal log density.
inline double mvn_logpdf(const Eigen::VectorXd& y, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd r = llt.matrixL().solve(y - mean);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(y.size()) * std::log(2.0 * M_PI) + logdet + r.squaredNorm());
}

inline double sup_norm(const Eigen::MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace slmfit::testing
