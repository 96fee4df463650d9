#pragma once

// Grid-based integrated-Laplace inference over the model hyperparameters.
//
// Working coordinates of theta, in this order, each present only when the
// corresponding quantity is free: logit of internal rho, log tau of the slm
// term, log precision of the exchangeable effect, log observation precision.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slmfit/gmrf.hpp"
#include "slmfit/marginal.hpp"
#include "slmfit/model.hpp"
#include "slmfit/optim.hpp"

namespace slmfit {

enum class HyperRole { RhoLogit, LogTau, LogIidPrecision, LogObsPrecision };

struct HyperParameter {
  HyperRole role;
  std::string name;  // external-scale name: rho, tau, iid_precision, obs_precision
};

std::vector<HyperParameter> hyperparameters(const ModelSpec& model);

/// Model quantities implied by one theta.
struct HyperValues {
  std::optional<RhoParam> rho;
  double tau = 1.0;
  double iid_precision = 1.0;
  double obs_precision = kCopyPrecision;
};

HyperValues decode(const ModelSpec& model, const Eigen::VectorXd& theta);
/// Prior log density of theta in working coordinates.
double log_hyper_prior(const ModelSpec& model, const Eigen::VectorXd& theta);
std::string describe_theta(const ModelSpec& model, const Eigen::VectorXd& theta);

/// Prior precision of the full latent vector z at the given hyperparameters.
SparseMat latent_precision(const ModelSpec& model, const HyperValues& values);

/// Gaussian (or Gaussian-approximated) conditional posterior of z.
struct GaussianPosterior {
  Eigen::VectorXd mean;
  std::shared_ptr<const CholeskyFactor> factor;  // of the posterior precision
  /// Maps a coefficient vector on z to the coordinates the factor lives in;
  /// empty when they coincide.
  std::shared_ptr<const SparseMat> to_factor;

  /// Var(a'z) for a sparse a.
  double variance(std::span<const Eigen::Index> idx, std::span<const double> val) const;
};

struct ConditionalFit {
  double log_evidence = 0.0;     // log pi(y | theta), exact or Laplace
  double log_likelihood = 0.0;   // log pi(y | z_hat)
  GaussianPosterior posterior;
  int iterations = 0;
  double gradient_norm = 0.0;    // sup-norm at the returned mode (probit)
};

struct LaplaceOptions {
  double step_tolerance = 1e-8;
  int max_iterations = 100;
};

/// Closed form for the Gaussian likelihood, inner Laplace for probit.
/// Factorization failures are reported as NumericFailure naming theta.
ConditionalFit log_conditional_evidence(const ModelSpec& model, const Eigen::VectorXd& theta,
                                        const Eigen::VectorXd* warm_start = nullptr);

/// Newton iterations for the probit posterior mode, then the standard
/// Laplace evidence log pi(y|z) + log pi(z|theta) - log pi_G(z|y, theta) at the mode.
ConditionalFit laplace_inner(const ModelSpec& model, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd* warm_start = nullptr,
                             const LaplaceOptions& options = {});

struct GridOptions {
  int half_width = 3;     // K: levels -K..K per dimension
  double step = 0.8;      // spacing in units of the marginal sd at the mode
  double max_drop = 6.0;  // discard points this far below the mode
  double hessian_step = 1e-4;
  NelderMeadOptions mode_search;
  bool parallel = true;
};

struct GridPoint {
  Eigen::VectorXd theta;
  std::vector<int> level;
  double log_evidence = 0.0;
  double log_prior = 0.0;
  double log_post = 0.0;
  HyperValues values;
  GaussianPosterior posterior;
};

struct HyperGrid {
  std::vector<HyperParameter> params;
  Eigen::VectorXd mode;
  double mode_log_post = 0.0;
  Eigen::MatrixXd hessian;  // of -log posterior at the mode
  Eigen::VectorXd sigma;    // marginal sd at the mode, per working coordinate
  double step = 0.8;
  int half_width = 3;
  double log_delta = 0.0;   // log of the common area element
  std::vector<GridPoint> points;
  std::vector<double> normalized_weights;
  std::vector<std::string> warnings;

  std::size_t dim() const { return params.size(); }
};

HyperGrid explore_hypergrid(const ModelSpec& model, const GridOptions& options = {});

/// log of sum_g pi(y|theta_g) pi(theta_g) Delta_g.
double marginal_likelihood(const HyperGrid& grid);

/// Posterior of working coordinate k, smoothed over the grid levels.
Marginal hyper_marginal_internal(const HyperGrid& grid, std::size_t k);
/// Same on the external scale (rho in its bounds, precisions positive).
Marginal hyper_marginal(const HyperGrid& grid, const ModelSpec& model, std::size_t k);

/// Mixture over grid points of the conditional Gaussians of a'z.
Marginal combination_marginal(const HyperGrid& grid, std::span<const Eigen::Index> idx,
                              std::span<const double> val);
Marginal latent_marginal(const HyperGrid& grid, Eigen::Index index);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Exact mean and variance of a'z under the grid mixture.
Moments combination_moments(const HyperGrid& grid, std::span<const Eigen::Index> idx,
                            std::span<const double> val);

/// Per grid point conditional mean and variance of each linear predictor.
struct PredictorMoments {
  Eigen::MatrixXd mean;      // n x G
  Eigen::MatrixXd variance;  // n x G
  Eigen::VectorXd posterior_mean() const;
  std::vector<double> weights;
};

PredictorMoments predictor_moments(const HyperGrid& grid, const ModelSpec& model, bool parallel = true);

struct DicResult {
  double dic = 0.0;
  double p_eff = 0.0;
  double mean_deviance = 0.0;
  double deviance_at_mean = 0.0;
  bool degenerate = false;  // probit fitted probabilities at 0 or 1
};

DicResult dic(const HyperGrid& grid, const ModelSpec& model);
DicResult dic(const HyperGrid& grid, const ModelSpec& model, const PredictorMoments& moments);

/// Predictive marginal of each missing response, in model.missing order.
std::vector<Marginal> predict_missing(const HyperGrid& grid, const ModelSpec& model);
std::vector<Marginal> predict_missing(const HyperGrid& grid, const ModelSpec& model,
                                      const PredictorMoments& moments);

/// Nodes and weights for integrals against exp(-x^2).
void gauss_hermite(int order, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace slmfit
