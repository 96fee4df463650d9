#pragma once

// The spatial-lag latent effect x = (I - rho W)^{-1} (X beta + eps) as a
// sparse GMRF over (x, beta), with factorization services.

#include <memory>
#include <optional>
#include <span>
#include <string>

#include <Eigen/SparseCholesky>

#include "slmfit/sparse.hpp"
#include "slmfit/weights.hpp"

namespace slmfit {

inline constexpr double kDefaultBetaPrecision = 1e-3;
inline constexpr double kInternalRhoClamp = 1e-6;

/// Gaussian prior on logit of the internal (0, 1) autocorrelation parameter.
struct LogitGaussianPrior {
  double mean = 0.0;
  double precision = 10.0;

  double log_density(double logit_rho) const;
};

/// tau ~ Gamma(shape, rate), expressed as a density on log(tau).
struct LogGammaPrior {
  double shape = 1.0;
  double rate = 5e-5;

  double log_density(double log_tau) const;
};

struct SlmSpec {
  WeightsMatrix w;
  Eigen::MatrixXd x_design;  // n x p, p may be zero
  SparseMat q_beta;          // p x p prior precision of beta
  LogitGaussianPrior rho_prior;
  LogGammaPrior tau_prior;
  std::optional<double> tau_fixed;
  std::optional<double> rho_fixed;  // external scale

  Eigen::Index n() const { return w.n(); }
  Eigen::Index p() const { return x_design.cols(); }
  RhoBounds bounds() const { return *w.bounds; }
};

/// Validates dimensions and the beta prior; fills rho bounds and the default
/// diagonal beta precision when they are missing.
SlmSpec make_slm_spec(WeightsMatrix w, Eigen::MatrixXd x_design,
                      std::optional<SparseMat> q_beta = std::nullopt);

/// Internal (0, 1) and external (rho_min, rho_max) views of rho.
class RhoParam {
 public:
  static RhoParam from_external(double external, RhoBounds bounds);
  static RhoParam from_internal(double internal, RhoBounds bounds);
  /// Internal value clamped to [kInternalRhoClamp, 1 - kInternalRhoClamp].
  static RhoParam from_logit(double logit_internal, RhoBounds bounds);

  double internal() const { return internal_; }
  double external() const { return external_; }
  RhoBounds bounds() const { return bounds_; }

 private:
  RhoParam(double internal, double external, RhoBounds bounds)
      : internal_(internal), external_(external), bounds_(bounds) {}

  double internal_;
  double external_;
  RhoBounds bounds_;
};

double rho_to_internal(double external, RhoBounds bounds);
double rho_to_external(double internal, RhoBounds bounds);

/// I - rho W.
SparseMat spatial_operator(const WeightsMatrix& w, double rho);

/// Precision of (x, beta):
///   [ tau (I - rho W')(I - rho W)   -tau (I - rho W') X ]
///   [ -tau X'(I - rho W)             Q + tau X'X        ]
struct JointPrecision {
  SparseMat p_mat;
  Eigen::Index n = 0;
  Eigen::Index p = 0;
};

JointPrecision joint_precision(const SlmSpec& spec, const RhoParam& rho, double tau);

/// Sparse LDL' factorization with approximate-minimum-degree ordering.
class CholeskyFactor {
 public:
  /// Throws NumericFailure (mentioning `context`) if the matrix is not SPD.
  explicit CholeskyFactor(const SparseMat& spd, const std::string& context = {});

  Eigen::Index size() const { return size_; }
  double log_det() const { return log_det_; }
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// a' A^{-1} a
  double inverse_quadratic(const Eigen::VectorXd& a) const;
  /// Same for a sparse vector given by (index, value) pairs.
  double inverse_quadratic(std::span<const Eigen::Index> idx, std::span<const double> val) const;
  Eigen::VectorXd marginal_variances(std::span<const Eigen::Index> indices) const;

 private:
  using Solver = Eigen::SimplicialLDLT<SparseMat, Eigen::Lower, Eigen::AMDOrdering<int>>;
  std::unique_ptr<Solver> solver_;
  Eigen::Index size_ = 0;
  double log_det_ = 0.0;
};

CholeskyFactor factorize(const JointPrecision& p);

/// x | beta ~ N(M, T^{-1}) with M = (I - rho W)^{-1} X beta and
/// T = tau (I - rho W')(I - rho W).
struct ConditionalLatent {
  Eigen::VectorXd mean;
  SparseMat precision;
};

ConditionalLatent conditional_latent(const SlmSpec& spec, const RhoParam& rho, double tau,
                                     const Eigen::VectorXd& beta);

/// Warning text when covariate scales differ by more than `ratio`, empty
/// otherwise. Constant columns are ignored.
std::string covariate_scale_warning(const Eigen::MatrixXd& x, double ratio = 1e4);

}  // namespace slmfit
