#include "slmfit/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "slmfit/error.hpp"

namespace slmfit {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::SEM: return "SEM";
    case ModelKind::SLM: return "SLM";
    case ModelKind::SDM: return "SDM";
    case ModelKind::SDEM: return "SDEM";
    case ModelKind::SLX: return "SLX";
  }
  return "?";
}

std::string to_string(Likelihood likelihood) {
  return likelihood == Likelihood::Gaussian ? "gaussian" : "probit";
}

ModelKind parse_model_kind(const std::string& text) {
  std::string up(text);
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto k : {ModelKind::SEM, ModelKind::SLM, ModelKind::SDM, ModelKind::SDEM, ModelKind::SLX})
    if (to_string(k) == up) return k;
  throw InvalidInput("unknown model kind '" + text + "'");
}

Likelihood parse_likelihood(const std::string& text) {
  std::string low(text);
  std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
  if (low == "gaussian") return Likelihood::Gaussian;
  if (low == "probit") return Likelihood::Probit;
  throw InvalidInput("unknown likelihood '" + text + "'");
}

Design with_intercept(const Eigen::MatrixXd& x, std::vector<std::string> names) {
  Design d;
  d.x.resize(x.rows(), x.cols() + 1);
  d.x.col(0).setOnes();
  d.x.rightCols(x.cols()) = x;
  d.names.reserve(names.size() + 1);
  d.names.push_back("(Intercept)");
  for (auto& n : names) d.names.push_back(std::move(n));
  d.intercept = 0;
  return d;
}

void ModelSpec::predictor_row(Eigen::Index i, std::vector<Eigen::Index>& idx,
                              std::vector<double>& val) const {
  idx.clear();
  val.clear();
  if (layout.n_slm > 0) {
    idx.push_back(layout.slm_x + i);
    val.push_back(1.0);
  }
  for (Eigen::Index j = 0; j < layout.p_fixed; ++j) {
    const double v = fixed.x(i, j);
    if (v == 0.0) continue;
    idx.push_back(layout.fixed + j);
    val.push_back(v);
  }
  if (layout.n_iid > 0) {
    idx.push_back(layout.iid + i);
    val.push_back(1.0);
  }
}

SparseMat ModelSpec::predictor_matrix(const std::vector<Eigen::Index>& rows) const {
  std::vector<Triplet> entries;
  std::vector<Eigen::Index> idx;
  std::vector<double> val;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    predictor_row(rows[r], idx, val);
    for (std::size_t k = 0; k < idx.size(); ++k)
      entries.emplace_back(static_cast<Eigen::Index>(r), idx[k], val[k]);
  }
  SparseMat a(static_cast<Eigen::Index>(rows.size()), layout.dim);
  a.setFromTriplets(entries.begin(), entries.end());
  a.makeCompressed();
  return a;
}

namespace {

// [X, WX] with the intercept column left unlagged.
Design durbin_design(const Design& d, const WeightsMatrix& w, std::vector<Eigen::Index>& lagged) {
  lagged.clear();
  for (Eigen::Index j = 0; j < d.x.cols(); ++j)
    if (!d.intercept || *d.intercept != j) lagged.push_back(j);
  Eigen::MatrixXd to_lag(d.x.rows(), static_cast<Eigen::Index>(lagged.size()));
  for (std::size_t k = 0; k < lagged.size(); ++k) to_lag.col(static_cast<Eigen::Index>(k)) = d.x.col(lagged[k]);
  const Eigen::MatrixXd lag = lag_covariates(to_lag, w);
  Design out;
  out.x.resize(d.x.rows(), d.x.cols() + lag.cols());
  out.x << d.x, lag;
  out.names = d.names;
  for (auto j : lagged) out.names.push_back("lag." + d.names[static_cast<std::size_t>(j)]);
  out.intercept = d.intercept;
  return out;
}

RhoBounds resolve_bounds(WeightsMatrix& w, const std::optional<RhoBounds>& requested) {
  if (!w.bounds) w = with_rho_bounds(std::move(w));
  if (!requested) return *w.bounds;
  const RhoBounds& admissible = *w.bounds;
  const double slack = 1e-10;
  if (!(requested->min < 0.0 && requested->max > 0.0) ||
      requested->min < admissible.min - slack || requested->max > admissible.max + slack) {
    std::ostringstream msg;
    msg << "requested rho range (" << requested->min << ", " << requested->max
        << ") is not inside the admissible range (" << admissible.min << ", " << admissible.max << ")";
    throw InvalidParameter(msg.str());
  }
  return *requested;
}

}  // namespace

ModelSpec build(ModelKind kind, Eigen::VectorXd y, Design x, WeightsMatrix w,
                std::optional<WeightsMatrix> m, const ModelOptions& options) {
  const Eigen::Index n = y.size();
  if (n == 0) throw InvalidInput("response is empty");
  if (x.x.rows() != n) {
    std::ostringstream msg;
    msg << "design has " << x.x.rows() << " rows, response has " << n;
    throw InvalidInput(msg.str());
  }
  if (static_cast<Eigen::Index>(x.names.size()) != x.x.cols())
    throw InvalidInput("design column names do not match column count");
  if (w.n() != n) {
    std::ostringstream msg;
    msg << "weights matrix is " << w.n() << " x " << w.n() << " but there are " << n << " observations";
    throw InvalidInput(msg.str());
  }
  if (m && m->n() != n) throw InvalidInput("error weights matrix M is not conformable with the data");
  if (!x.x.allFinite()) throw InvalidInput("design contains non-finite values");

  ModelSpec spec;
  spec.kind = kind;
  spec.likelihood = options.likelihood;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isnan(y[i])) {
      spec.missing.push_back(i);
    } else {
      if (!std::isfinite(y[i])) throw InvalidInput("response contains infinite values");
      if (options.likelihood == Likelihood::Probit && y[i] != 0.0 && y[i] != 1.0) {
        std::ostringstream msg;
        msg << "probit likelihood needs a binary response; y[" << i << "] = " << y[i];
        throw InvalidInput(msg.str());
      }
      spec.observed.push_back(i);
    }
  }
  if (spec.observed.empty()) throw InvalidInput("all responses are missing");

  const bool probit = options.likelihood == Likelihood::Probit;
  spec.obs.likelihood = options.likelihood;
  spec.obs.fixed_precision = options.obs_precision;
  if (!probit && options.estimate_obs_precision) spec.obs.precision_prior = options.priors.obs;

  auto make_slm = [&](WeightsMatrix weights, Eigen::MatrixXd design) {
    const RhoBounds bounds = resolve_bounds(weights, options.rho_bounds);
    weights.bounds = bounds;
    SparseMat q = options.priors.beta_precision * sparse_identity(design.cols());
    SlmSpec slm = make_slm_spec(std::move(weights), std::move(design), q);
    slm.rho_prior = options.priors.rho;
    slm.tau_prior = options.priors.tau;
    slm.tau_fixed = probit ? std::optional<double>(1.0) : options.tau_fixed;
    slm.rho_fixed = options.rho_fixed;
    if (slm.rho_fixed) (void)rho_to_internal(*slm.rho_fixed, bounds);
    return slm;
  };

  std::vector<Eigen::Index> lagged;
  Design used = x;
  switch (kind) {
    case ModelKind::SLM:
      spec.slm = make_slm(w, x.x);
      break;
    case ModelKind::SDM:
      used = durbin_design(x, w, lagged);
      spec.slm = make_slm(w, used.x);
      break;
    case ModelKind::SEM:
      spec.slm = make_slm(w, Eigen::MatrixXd(n, 0));
      spec.fixed.x = x.x;
      break;
    case ModelKind::SDEM:
      used = durbin_design(x, w, lagged);
      spec.slm = make_slm(m ? *m : w, Eigen::MatrixXd(n, 0));
      spec.fixed.x = used.x;
      break;
    case ModelKind::SLX: {
      used = durbin_design(x, w, lagged);
      spec.fixed.x = used.x;
      if (options.slx_iid_effect.value_or(!probit))
        spec.iid = IidEffect{options.priors.iid, options.iid_precision_fixed};
      break;
    }
  }
  if (spec.fixed.x.size() == 0) spec.fixed.x.resize(n, 0);
  spec.fixed.q = options.priors.beta_precision * sparse_identity(spec.fixed.x.cols());

  LatentLayout& lay = spec.layout;
  Eigen::Index offset = 0;
  if (spec.slm) {
    lay.slm_x = offset;
    lay.n_slm = n;
    offset += n;
    lay.slm_beta = offset;
    lay.p_slm = spec.slm->p();
    offset += lay.p_slm;
  }
  lay.fixed = offset;
  lay.p_fixed = spec.fixed.x.cols();
  offset += lay.p_fixed;
  if (spec.iid) {
    lay.iid = offset;
    lay.n_iid = n;
    offset += n;
  }
  lay.dim = offset;

  spec.coefficient_names = used.names;
  const Eigen::Index coef_offset = (kind == ModelKind::SLM || kind == ModelKind::SDM) ? lay.slm_beta : lay.fixed;
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(used.names.size()); ++j)
    spec.coefficient_index.push_back(coef_offset + j);

  for (Eigen::Index j = 0, lag_k = 0; j < x.x.cols(); ++j) {
    if (x.intercept && *x.intercept == j) continue;
    ImpactTerm term;
    term.covariate = x.names[static_cast<std::size_t>(j)];
    term.beta = coef_offset + j;
    if (!lagged.empty()) term.gamma = coef_offset + x.x.cols() + lag_k;
    ++lag_k;
    spec.impact_terms.push_back(term);
  }

  spec.design = std::move(x);
  spec.y = std::move(y);
  spec.warnings = w.warnings;
  if (const auto warning = covariate_scale_warning(used.x); !warning.empty())
    spec.warnings.push_back(warning);
  spec.w = std::move(w);
  spec.m = std::move(m);
  return spec;
}

}  // namespace slmfit
