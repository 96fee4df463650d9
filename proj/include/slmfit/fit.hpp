#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slmfit/engine.hpp"
#include "slmfit/model.hpp"

namespace slmfit {

struct NamedMarginal {
  std::string name;
  Marginal marginal;
};

struct FitResult {
  ModelKind kind = ModelKind::SLM;
  Likelihood likelihood = Likelihood::Gaussian;
  LatentLayout layout;
  HyperGrid grid;
  std::optional<Marginal> rho_marginal;  // external scale
  std::optional<Marginal> tau_marginal;
  std::vector<NamedMarginal> hyper_marginals;  // every free hyperparameter, external scale
  std::vector<std::string> coefficient_names;
  std::vector<Eigen::Index> coefficient_index;
  std::vector<Marginal> coef_marginals;
  double log_mlik = 0.0;
  DicResult dic;
  std::vector<Eigen::Index> missing;
  std::vector<Marginal> predictive;
  Eigen::VectorXd predictor_mean;  // posterior mean of the linear predictor, all rows
  std::vector<std::string> warnings;

  /// Marginal of the slm latent value x_i, computed on demand.
  Marginal latent_marginal(Eigen::Index i) const;
  /// External-scale marginal of a named hyperparameter, if it was free.
  const Marginal* hyper(const std::string& name) const;
};

FitResult fit(const ModelSpec& model, const GridOptions& options = {});

}  // namespace slmfit
