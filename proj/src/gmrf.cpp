#include "slmfit/gmrf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <Eigen/SparseLU>

#include "slmfit/error.hpp"

namespace slmfit {

double LogitGaussianPrior::log_density(double logit_rho) const {
  const double d = logit_rho - mean;
  return 0.5 * std::log(precision / (2.0 * std::numbers::pi)) - 0.5 * precision * d * d;
}

double LogGammaPrior::log_density(double log_tau) const {
  return shape * std::log(rate) - std::lgamma(shape) + shape * log_tau - rate * std::exp(log_tau);
}

SlmSpec make_slm_spec(WeightsMatrix w, Eigen::MatrixXd x_design, std::optional<SparseMat> q_beta) {
  if (x_design.rows() != w.n()) {
    std::ostringstream msg;
    msg << "slm design has " << x_design.rows() << " rows, weights have " << w.n();
    throw InvalidInput(msg.str());
  }
  if (!x_design.allFinite()) throw InvalidInput("slm design contains non-finite values");
  if (!w.bounds) w = with_rho_bounds(std::move(w));
  if (!(w.bounds->min < 0.0 && 0.0 < w.bounds->max))
    throw InvalidParameter("rho bounds must satisfy rho_min < 0 < rho_max");
  const Eigen::Index p = x_design.cols();
  SparseMat q;
  if (q_beta) {
    q = *q_beta;
    if (q.rows() != p || q.cols() != p) throw InvalidInput("beta prior precision has wrong shape");
    if (!is_symmetric(q, 1e-12)) throw InvalidInput("beta prior precision is not symmetric");
    if (p > 0) {
      Eigen::SimplicialLLT<SparseMat> llt(q);
      if (llt.info() != Eigen::Success)
        throw InvalidInput("beta prior precision is not positive definite");
    }
  } else {
    q = kDefaultBetaPrecision * sparse_identity(p);
  }
  SlmSpec spec;
  spec.w = std::move(w);
  spec.x_design = std::move(x_design);
  spec.q_beta = std::move(q);
  return spec;
}

double rho_to_internal(double external, RhoBounds b) {
  if (!std::isfinite(external) || !(external > b.min && external < b.max)) {
    std::ostringstream msg;
    msg << "rho = " << external << " outside the open interval (" << b.min << ", " << b.max << ")";
    throw InvalidParameter(msg.str());
  }
  return (external - b.min) / (b.max - b.min);
}

double rho_to_external(double internal, RhoBounds b) {
  if (!std::isfinite(internal) || !(internal > 0.0 && internal < 1.0)) {
    std::ostringstream msg;
    msg << "internal rho = " << internal << " outside (0, 1)";
    throw InvalidParameter(msg.str());
  }
  return b.min + internal * (b.max - b.min);
}

RhoParam RhoParam::from_external(double external, RhoBounds bounds) {
  return RhoParam(rho_to_internal(external, bounds), external, bounds);
}

RhoParam RhoParam::from_internal(double internal, RhoBounds bounds) {
  return RhoParam(internal, rho_to_external(internal, bounds), bounds);
}

RhoParam RhoParam::from_logit(double logit_internal, RhoBounds bounds) {
  if (!std::isfinite(logit_internal)) throw InvalidParameter("non-finite logit(rho)");
  double internal = 1.0 / (1.0 + std::exp(-logit_internal));
  internal = std::clamp(internal, kInternalRhoClamp, 1.0 - kInternalRhoClamp);
  return from_internal(internal, bounds);
}

SparseMat spatial_operator(const WeightsMatrix& w, double rho) {
  SparseMat a = sparse_identity(w.n()) - rho * w.mat;
  a.makeCompressed();
  return a;
}

JointPrecision joint_precision(const SlmSpec& spec, const RhoParam& rho, double tau) {
  if (!std::isfinite(tau) || !(tau > 0.0)) {
    std::ostringstream msg;
    msg << "tau = " << tau << " must be a positive finite value";
    throw InvalidParameter(msg.str());
  }
  const RhoBounds b = spec.bounds();
  if (!(rho.external() > b.min && rho.external() < b.max))
    throw InvalidParameter("rho at or outside its bounds");

  const Eigen::Index n = spec.n();
  const Eigen::Index p = spec.p();
  const SparseMat a = spatial_operator(spec.w, rho.external());
  const SparseMat at = a.transpose();
  const SparseMat top_left = tau * (at * a);

  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(top_left.nonZeros() + 2 * n * p + p * p));
  for (int k = 0; k < top_left.outerSize(); ++k)
    for (SparseMat::InnerIterator it(top_left, k); it; ++it)
      entries.emplace_back(it.row(), it.col(), it.value());

  if (p > 0) {
    // -tau (I - rho W') X, dense n x p block
    const Eigen::MatrixXd off = -tau * (at * spec.x_design);
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index i = 0; i < n; ++i) {
        if (off(i, j) == 0.0) continue;
        entries.emplace_back(i, n + j, off(i, j));
        entries.emplace_back(n + j, i, off(i, j));
      }
    Eigen::MatrixXd bottom = Eigen::MatrixXd(spec.q_beta) +
                             tau * spec.x_design.transpose() * spec.x_design;
    bottom = 0.5 * (bottom + bottom.transpose());
    for (Eigen::Index j = 0; j < p; ++j)
      for (Eigen::Index i = 0; i < p; ++i)
        if (bottom(i, j) != 0.0) entries.emplace_back(n + i, n + j, bottom(i, j));
  }
  JointPrecision out;
  out.n = n;
  out.p = p;
  out.p_mat.resize(n + p, n + p);
  out.p_mat.setFromTriplets(entries.begin(), entries.end());
  out.p_mat.makeCompressed();
  return out;
}

CholeskyFactor::CholeskyFactor(const SparseMat& spd, const std::string& context)
    : solver_(std::make_unique<Solver>()), size_(spd.rows()) {
  auto fail = [&](const std::string& why) {
    std::ostringstream msg;
    msg << "Cholesky factorization failed (" << why << ")";
    if (!context.empty()) msg << " at " << context;
    throw NumericFailure(msg.str());
  };
  if (spd.rows() != spd.cols()) fail("matrix not square");
  if (size_ == 0) return;
  solver_->compute(spd);
  if (solver_->info() != Eigen::Success) fail("zero pivot");
  const Eigen::VectorXd& d = solver_->vectorD();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d[i] > 0.0) || !std::isfinite(d[i])) fail("matrix is not positive definite");
    acc += std::log(d[i]);
  }
  log_det_ = acc;
}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const {
  if (size_ == 0) return b;
  return solver_->solve(b);
}

double CholeskyFactor::inverse_quadratic(const Eigen::VectorXd& a) const {
  if (size_ == 0) return 0.0;
  Eigen::VectorXd y = solver_->permutationP() * a;
  solver_->matrixL().solveInPlace(y);
  return (y.array().square() / solver_->vectorD().array()).sum();
}

double CholeskyFactor::inverse_quadratic(std::span<const Eigen::Index> idx,
                                         std::span<const double> val) const {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(size_);
  for (std::size_t k = 0; k < idx.size(); ++k) a[idx[k]] += val[k];
  return inverse_quadratic(a);
}

Eigen::VectorXd CholeskyFactor::marginal_variances(std::span<const Eigen::Index> indices) const {
  // TODO: selected inversion (Takahashi recursions) would make this
  // O(nnz(L)) instead of one triangular solve per requested index.
  Eigen::VectorXd out(static_cast<Eigen::Index>(indices.size()));
  Eigen::VectorXd e = Eigen::VectorXd::Zero(size_);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    e[indices[k]] = 1.0;
    out[static_cast<Eigen::Index>(k)] = inverse_quadratic(e);
    e[indices[k]] = 0.0;
  }
  return out;
}

CholeskyFactor factorize(const JointPrecision& p) { return CholeskyFactor(p.p_mat, "joint precision"); }

ConditionalLatent conditional_latent(const SlmSpec& spec, const RhoParam& rho, double tau,
                                     const Eigen::VectorXd& beta) {
  if (beta.size() != spec.p()) throw InvalidInput("beta has wrong length");
  if (!std::isfinite(tau) || !(tau > 0.0)) throw InvalidParameter("tau must be positive");
  const SparseMat a = spatial_operator(spec.w, rho.external());
  ConditionalLatent out;
  const Eigen::VectorXd rhs = spec.p() > 0 ? Eigen::VectorXd(spec.x_design * beta)
                                           : Eigen::VectorXd::Zero(spec.n());
  Eigen::SparseLU<SparseMat> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "I - rho W is singular at rho = " << rho.external();
    throw NumericFailure(msg.str());
  }
  out.mean = lu.solve(rhs);
  out.precision = tau * SparseMat(SparseMat(a.transpose()) * a);
  return out;
}

std::string covariate_scale_warning(const Eigen::MatrixXd& x, double ratio) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  Eigen::Index lo_col = -1, hi_col = -1;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double sd =
        x.rows() > 1 ? std::sqrt((x.col(j).array() - mean).square().sum() / double(x.rows() - 1)) : 0.0;
    if (!(sd > 0.0)) continue;
    if (sd < lo) { lo = sd; lo_col = j; }
    if (sd > hi) { hi = sd; hi_col = j; }
  }
  if (lo_col < 0 || hi / lo <= ratio) return {};
  std::ostringstream msg;
  msg << "covariate scales differ by a factor of " << hi / lo << " (columns " << hi_col << " and "
      << lo_col << "); consider re-scaling";
  return msg.str();
}

}  // namespace slmfit
