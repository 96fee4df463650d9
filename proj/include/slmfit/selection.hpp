#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slmfit/fit.hpp"

namespace slmfit {

/// pi(M_i | y) from log marginal likelihoods and (unnormalized) prior
/// probabilities. Entries at -infinity get probability zero.
std::vector<double> posterior_model_probs(std::span<const double> log_mliks,
                                          std::span<const double> prior_probs);

struct ModelEntry {
  std::string label;
  std::optional<int> k;
  FitResult fit;
  double log_mlik = 0.0;
  double prior_prob = 1.0;
};

struct ModelSet {
  std::vector<ModelEntry> entries;
  std::vector<double> posterior_probs;
  std::vector<std::string> warnings;
};

/// Normalizes the priors and fills posterior_probs.
void update_posteriors(ModelSet& set);

enum class ScanPrior { Uniform, InverseSquare };

ScanPrior parse_scan_prior(const std::string& text);
double scan_prior_weight(ScanPrior prior, int k);

struct ScanInput {
  Eigen::VectorXd y;
  Design x;
  std::vector<Point2> coords;
  ModelKind kind = ModelKind::SEM;
  ModelOptions options;
  GridOptions grid;
};

/// One fit per k on the row-standardized k-nearest-neighbour graph. Fits
/// that fail are dropped with a warning and the probabilities renormalized.
ModelSet neighbor_scan(const ScanInput& input, std::span<const int> k_range, ScanPrior prior,
                       bool parallel = true);

using MarginalSelector = std::function<const Marginal*(const FitResult&)>;

MarginalSelector select_coefficient(const std::string& name);
MarginalSelector select_hyperparameter(const std::string& name);

/// Probability-weighted mixture of the selected marginal over the set,
/// tabulated on the union of the component abscissae.
Marginal bma_combine(const ModelSet& set, const MarginalSelector& selector);

struct StepwiseStep {
  std::vector<std::size_t> columns;
  double dic = 0.0;
  std::string move;
};

struct StepwiseResult {
  std::vector<std::size_t> columns;
  double dic = 0.0;
  std::vector<StepwiseStep> path;
};

/// Greedy forward-backward search over candidate columns. `score` returns
/// the DIC of a column subset; a move is taken only when it lowers DIC by
/// more than `delta`. Columns in `keep` are never removed.
StepwiseResult stepwise_dic(const std::function<double(const std::vector<std::size_t>&)>& score,
                            std::size_t n_columns, std::vector<std::size_t> start,
                            std::vector<std::size_t> keep = {}, double delta = 2.0);

/// Stepwise search over the design columns of one model kind. The
/// intercept, when present, is always kept.
StepwiseResult stepwise_dic(ModelKind kind, const Eigen::VectorXd& y, const Design& x, const WeightsMatrix& w,
                            const ModelOptions& options = {}, const GridOptions& grid = {},
                            double delta = 2.0);

}  // namespace slmfit
