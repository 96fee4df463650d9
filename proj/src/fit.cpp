#include "slmfit/fit.hpp"

#include "slmfit/error.hpp"

namespace slmfit {

Marginal FitResult::latent_marginal(Eigen::Index i) const {
  if (layout.n_slm == 0) throw InvalidParameter("model has no slm latent effect");
  if (i < 0 || i >= layout.n_slm) throw InvalidParameter("latent index out of range");
  return slmfit::latent_marginal(grid, layout.slm_x + i);
}

const Marginal* FitResult::hyper(const std::string& name) const {
  for (const auto& h : hyper_marginals)
    if (h.name == name) return &h.marginal;
  return nullptr;
}

FitResult fit(const ModelSpec& model, const GridOptions& options) {
  FitResult r;
  r.kind = model.kind;
  r.likelihood = model.likelihood;
  r.layout = model.layout;
  r.warnings = model.warnings;
  r.grid = explore_hypergrid(model, options);
  for (const auto& w : r.grid.warnings) r.warnings.push_back(w);

  for (std::size_t k = 0; k < r.grid.dim(); ++k) {
    NamedMarginal nm{r.grid.params[k].name, hyper_marginal(r.grid, model, k)};
    if (r.grid.params[k].role == HyperRole::RhoLogit) r.rho_marginal = nm.marginal;
    if (r.grid.params[k].role == HyperRole::LogTau) r.tau_marginal = nm.marginal;
    r.hyper_marginals.push_back(std::move(nm));
  }

  r.coefficient_names = model.coefficient_names;
  r.coefficient_index = model.coefficient_index;
  for (auto idx : model.coefficient_index) r.coef_marginals.push_back(slmfit::latent_marginal(r.grid, idx));

  r.log_mlik = marginal_likelihood(r.grid);
  const PredictorMoments pm = predictor_moments(r.grid, model, options.parallel);
  r.dic = dic(r.grid, model, pm);
  r.predictor_mean = pm.posterior_mean();
  r.missing = model.missing;
  if (!model.missing.empty()) r.predictive = predict_missing(r.grid, model, pm);
  return r;
}

}  // namespace slmfit
