#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slmfit/gmrf.hpp"
#include "slmfit/weights.hpp"

namespace slmfit {

enum class ModelKind { SEM, SLM, SDM, SDEM, SLX };
enum class Likelihood { Gaussian, Probit };

std::string to_string(ModelKind kind);
std::string to_string(Likelihood likelihood);
ModelKind parse_model_kind(const std::string& text);
Likelihood parse_likelihood(const std::string& text);

/// Covariates as supplied by the user. The intercept, if any, is an
/// explicit column of ones and is never spatially lagged.
struct Design {
  Eigen::MatrixXd x;
  std::vector<std::string> names;
  std::optional<Eigen::Index> intercept;
};

/// Adds a leading column of ones named "(Intercept)".
Design with_intercept(const Eigen::MatrixXd& x, std::vector<std::string> names);

struct PriorConfig {
  double beta_precision = kDefaultBetaPrecision;
  LogitGaussianPrior rho;
  LogGammaPrior tau;
  LogGammaPrior iid;
  LogGammaPrior obs;
};

inline constexpr double kCopyPrecision = 1e8;

struct ModelOptions {
  Likelihood likelihood = Likelihood::Gaussian;
  PriorConfig priors;
  /// Usable rho interval; must lie inside the spectral bounds of W.
  std::optional<RhoBounds> rho_bounds;
  std::optional<double> rho_fixed;  // external scale
  std::optional<double> tau_fixed;
  std::optional<double> iid_precision_fixed;
  /// Gaussian only: treat the observation precision as a hyperparameter
  /// instead of fixing it at `obs_precision`.
  bool estimate_obs_precision = false;
  double obs_precision = kCopyPrecision;
  /// SLX exchangeable effect; defaults to on for Gaussian, off for probit.
  std::optional<bool> slx_iid_effect;
};

/// Offsets of each block inside the latent vector z = (x, beta_slm, beta_fixed, u).
struct LatentLayout {
  Eigen::Index slm_x = 0, n_slm = 0;
  Eigen::Index slm_beta = 0, p_slm = 0;
  Eigen::Index fixed = 0, p_fixed = 0;
  Eigen::Index iid = 0, n_iid = 0;
  Eigen::Index dim = 0;
};

struct FixedEffects {
  Eigen::MatrixXd x;  // n x p_fixed
  SparseMat q;        // prior precision
};

struct IidEffect {
  LogGammaPrior prior;
  std::optional<double> precision_fixed;
};

struct ObservationModel {
  Likelihood likelihood = Likelihood::Gaussian;
  double fixed_precision = kCopyPrecision;
  std::optional<LogGammaPrior> precision_prior;  // set when estimated
};

/// Coefficient of covariate r and (for lagged models) of its lag, as
/// latent indices.
struct ImpactTerm {
  std::string covariate;
  Eigen::Index beta = -1;
  std::optional<Eigen::Index> gamma;
};

struct ModelSpec {
  ModelKind kind = ModelKind::SLM;
  Likelihood likelihood = Likelihood::Gaussian;
  Eigen::VectorXd y;  // NaN marks a missing response
  std::vector<Eigen::Index> observed;
  std::vector<Eigen::Index> missing;
  Design design;
  WeightsMatrix w;
  std::optional<WeightsMatrix> m;

  std::optional<SlmSpec> slm;
  FixedEffects fixed;
  std::optional<IidEffect> iid;
  ObservationModel obs;

  LatentLayout layout;
  std::vector<std::string> coefficient_names;
  std::vector<Eigen::Index> coefficient_index;
  std::vector<ImpactTerm> impact_terms;
  std::vector<std::string> warnings;

  Eigen::Index n() const { return y.size(); }
  /// Nonzero entries of row i of the predictor map eta = A z.
  void predictor_row(Eigen::Index i, std::vector<Eigen::Index>& idx, std::vector<double>& val) const;
  SparseMat predictor_matrix(const std::vector<Eigen::Index>& rows) const;
};

/// Compiles one of the five formulations. SEM and SDEM get a covariate-free
/// slm term plus ordinary fixed effects; SLM and SDM carry the covariates
/// inside the slm term; SLX is a regression on [X, WX] with an optional
/// exchangeable effect. SDM, SDEM and SLX never lag the intercept.
ModelSpec build(ModelKind kind, Eigen::VectorXd y, Design x, WeightsMatrix w,
                std::optional<WeightsMatrix> m = std::nullopt, const ModelOptions& options = {});

}  // namespace slmfit
