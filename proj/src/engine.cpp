#include "slmfit/engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "slmfit/error.hpp"
#include "slmfit/kernels.hpp"

namespace slmfit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double sparse_log_det_spd(const SparseMat& q) {
  if (q.rows() == 0) return 0.0;
  return CholeskyFactor(q, "beta prior precision").log_det();
}

// log |det(I - rho W)| by sparse LU.
double log_abs_det_operator(const WeightsMatrix& w, double rho) {
  Eigen::SparseLU<SparseMat> lu;
  const SparseMat a = spatial_operator(w, rho);
  lu.compute(a);
  if (lu.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "I - rho W is singular at rho = " << rho;
    throw NumericFailure(msg.str());
  }
  return lu.logAbsDeterminant();
}

// log |P| and z'Pz evaluated block by block, without factorizing P.
struct PriorTerms {
  double log_det = 0.0;
  double quad = 0.0;
};

PriorTerms prior_terms(const ModelSpec& model, const HyperValues& hv, const Eigen::VectorXd& z) {
  PriorTerms t;
  const LatentLayout& lay = model.layout;
  if (model.slm) {
    const SlmSpec& s = *model.slm;
    const double n = static_cast<double>(lay.n_slm);
    t.log_det += n * std::log(hv.tau) + 2.0 * log_abs_det_operator(s.w, hv.rho->external()) +
                 sparse_log_det_spd(s.q_beta);
    const Eigen::VectorXd x = z.segment(lay.slm_x, lay.n_slm);
    Eigen::VectorXd r = x - hv.rho->external() * (s.w.mat * x);
    if (lay.p_slm > 0) {
      const Eigen::VectorXd beta = z.segment(lay.slm_beta, lay.p_slm);
      r -= s.x_design * beta;
      t.quad += beta.dot(s.q_beta * beta);
    }
    t.quad += hv.tau * r.squaredNorm();
  }
  if (lay.p_fixed > 0) {
    const Eigen::VectorXd b = z.segment(lay.fixed, lay.p_fixed);
    t.log_det += sparse_log_det_spd(model.fixed.q);
    t.quad += b.dot(model.fixed.q * b);
  }
  if (lay.n_iid > 0) {
    t.log_det += static_cast<double>(lay.n_iid) * std::log(hv.iid_precision);
    t.quad += hv.iid_precision * z.segment(lay.iid, lay.n_iid).squaredNorm();
  }
  return t;
}

Eigen::VectorXd observed_response(const ModelSpec& model) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(model.observed.size()));
  for (std::size_t k = 0; k < model.observed.size(); ++k) y[static_cast<Eigen::Index>(k)] = model.y[model.observed[k]];
  return y;
}

double ols_residual_variance(const ModelSpec& model) {
  const Eigen::VectorXd y = observed_response(model);
  const Eigen::Index m = y.size();
  double var = 0.0;
  Eigen::MatrixXd x(m, model.design.x.cols());
  for (Eigen::Index k = 0; k < m; ++k) x.row(k) = model.design.x.row(model.observed[static_cast<std::size_t>(k)]);
  if (x.cols() > 0 && m > x.cols() + 1) {
    const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
    var = (y - x * beta).squaredNorm() / static_cast<double>(m - x.cols());
  } else if (m > 1) {
    var = (y.array() - y.mean()).square().sum() / static_cast<double>(m - 1);
  }
  if (!(var > 1e-12) || !std::isfinite(var)) var = 1.0;
  return var;
}

Eigen::VectorXd initial_theta(const ModelSpec& model, const std::vector<HyperParameter>& params) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(params.size()));
  const double var = model.likelihood == Likelihood::Gaussian ? ols_residual_variance(model) : 1.0;
  int precisions = 0;
  for (const auto& p : params)
    if (p.role != HyperRole::RhoLogit && p.role != HyperRole::LogTau) ++precisions;
  for (std::size_t k = 0; k < params.size(); ++k) {
    switch (params[k].role) {
      case HyperRole::RhoLogit: {
        const RhoBounds b = model.slm->bounds();
        const double u = -b.min / (b.max - b.min);
        t[static_cast<Eigen::Index>(k)] = std::log(u / (1.0 - u));
        break;
      }
      case HyperRole::LogTau:
        t[static_cast<Eigen::Index>(k)] = -std::log(var);
        break;
      default:
        t[static_cast<Eigen::Index>(k)] = -std::log(var) + std::log(static_cast<double>(std::max(1, precisions)));
        break;
    }
  }
  return t;
}

// Natural cubic spline through (x_i, y_i); linear beyond the end knots.
class NaturalSpline {
 public:
  NaturalSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    m_.assign(n, 0.0);
    if (n < 3) return;
    std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), r(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
      a[i] = h0 / 6.0;
      b[i] = (h0 + h1) / 3.0;
      c[i] = h1 / 6.0;
      r[i] = (y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0;
    }
    // Thomas algorithm on rows 1..n-2 with m_0 = m_{n-1} = 0.
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double f = a[i] / b[i - 1];
      b[i] -= f * c[i - 1];
      r[i] -= f * r[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m_[i] = (r[i] - (i + 2 < n ? c[i] * m_[i + 1] : 0.0)) / b[i];
      if (i == 1) break;
    }
  }

  double operator()(double t) const {
    const std::size_t n = x_.size();
    if (n == 1) return y_[0];
    if (t <= x_.front()) return y_.front() + slope(0) * (t - x_.front());
    if (t >= x_.back()) return y_.back() + slope(n - 1) * (t - x_.back());
    const auto it = std::upper_bound(x_.begin(), x_.end(), t);
    const std::size_t j = static_cast<std::size_t>(it - x_.begin());
    const double h = x_[j] - x_[j - 1];
    const double u = (x_[j] - t) / h, v = (t - x_[j - 1]) / h;
    return u * y_[j - 1] + v * y_[j] + ((u * u * u - u) * m_[j - 1] + (v * v * v - v) * m_[j]) * h * h / 6.0;
  }

  // First derivative at knot i.
  double slope(std::size_t i) const {
    const std::size_t n = x_.size();
    if (n == 1) return 0.0;
    if (i + 1 < n) {
      const double h = x_[i + 1] - x_[i];
      return (y_[i + 1] - y_[i]) / h - h * (2.0 * m_[i] + m_[i + 1]) / 6.0;
    }
    const double h = x_[n - 1] - x_[n - 2];
    return (y_[n - 1] - y_[n - 2]) / h + h * (m_[n - 2] + 2.0 * m_[n - 1]) / 6.0;
  }

 private:
  std::vector<double> x_, y_, m_;
};

}  // namespace

std::vector<HyperParameter> hyperparameters(const ModelSpec& model) {
  std::vector<HyperParameter> out;
  if (model.slm) {
    if (!model.slm->rho_fixed) out.push_back({HyperRole::RhoLogit, "rho"});
    if (!model.slm->tau_fixed) out.push_back({HyperRole::LogTau, "tau"});
  }
  if (model.iid && !model.iid->precision_fixed) out.push_back({HyperRole::LogIidPrecision, "iid_precision"});
  if (model.likelihood == Likelihood::Gaussian && model.obs.precision_prior)
    out.push_back({HyperRole::LogObsPrecision, "obs_precision"});
  return out;
}

HyperValues decode(const ModelSpec& model, const Eigen::VectorXd& theta) {
  const auto params = hyperparameters(model);
  if (theta.size() != static_cast<Eigen::Index>(params.size())) {
    std::ostringstream msg;
    msg << "theta has " << theta.size() << " components, model has " << params.size() << " hyperparameters";
    throw InvalidParameter(msg.str());
  }
  HyperValues hv;
  if (model.slm) {
    const RhoBounds b = model.slm->bounds();
    if (model.slm->rho_fixed) hv.rho = RhoParam::from_external(*model.slm->rho_fixed, b);
    if (model.slm->tau_fixed) hv.tau = *model.slm->tau_fixed;
  }
  if (model.iid && model.iid->precision_fixed) hv.iid_precision = *model.iid->precision_fixed;
  hv.obs_precision = model.obs.fixed_precision;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double t = theta[static_cast<Eigen::Index>(k)];
    if (!std::isfinite(t)) throw InvalidParameter("non-finite hyperparameter coordinate");
    switch (params[k].role) {
      case HyperRole::RhoLogit: hv.rho = RhoParam::from_logit(t, model.slm->bounds()); break;
      case HyperRole::LogTau: hv.tau = std::exp(t); break;
      case HyperRole::LogIidPrecision: hv.iid_precision = std::exp(t); break;
      case HyperRole::LogObsPrecision: hv.obs_precision = std::exp(t); break;
    }
  }
  for (double v : {hv.tau, hv.iid_precision, hv.obs_precision})
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidParameter("precision overflow at " + describe_theta(model, theta));
  return hv;
}

double log_hyper_prior(const ModelSpec& model, const Eigen::VectorXd& theta) {
  const auto params = hyperparameters(model);
  double acc = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double t = theta[static_cast<Eigen::Index>(k)];
    switch (params[k].role) {
      case HyperRole::RhoLogit: acc += model.slm->rho_prior.log_density(t); break;
      case HyperRole::LogTau: acc += model.slm->tau_prior.log_density(t); break;
      case HyperRole::LogIidPrecision: acc += model.iid->prior.log_density(t); break;
      case HyperRole::LogObsPrecision: acc += model.obs.precision_prior->log_density(t); break;
    }
  }
  return acc;
}

std::string describe_theta(const ModelSpec& model, const Eigen::VectorXd& theta) {
  const auto params = hyperparameters(model);
  std::ostringstream msg;
  msg << "theta = (";
  for (std::size_t k = 0; k < params.size() && k < static_cast<std::size_t>(theta.size()); ++k) {
    if (k) msg << ", ";
    const double t = theta[static_cast<Eigen::Index>(k)];
    switch (params[k].role) {
      case HyperRole::RhoLogit: {
        const RhoBounds b = model.slm->bounds();
        msg << "rho=" << b.min + (b.max - b.min) * sigmoid(t);
        break;
      }
      default: msg << params[k].name << "=" << std::exp(t); break;
    }
  }
  msg << ")";
  return msg.str();
}

SparseMat latent_precision(const ModelSpec& model, const HyperValues& hv) {
  const LatentLayout& lay = model.layout;
  std::vector<Triplet> entries;
  if (model.slm) {
    const JointPrecision jp = joint_precision(*model.slm, *hv.rho, hv.tau);
    entries.reserve(static_cast<std::size_t>(jp.p_mat.nonZeros()));
    for (int k = 0; k < jp.p_mat.outerSize(); ++k)
      for (SparseMat::InnerIterator it(jp.p_mat, k); it; ++it)
        entries.emplace_back(lay.slm_x + it.row(), lay.slm_x + it.col(), it.value());
  }
  for (int k = 0; k < model.fixed.q.outerSize(); ++k)
    for (SparseMat::InnerIterator it(model.fixed.q, k); it; ++it)
      entries.emplace_back(lay.fixed + it.row(), lay.fixed + it.col(), it.value());
  for (Eigen::Index i = 0; i < lay.n_iid; ++i) entries.emplace_back(lay.iid + i, lay.iid + i, hv.iid_precision);
  SparseMat p(lay.dim, lay.dim);
  p.setFromTriplets(entries.begin(), entries.end());
  p.makeCompressed();
  return p;
}

double GaussianPosterior::variance(std::span<const Eigen::Index> idx, std::span<const double> val) const {
  if (!to_factor) return factor->inverse_quadratic(idx, val);
  Eigen::SparseVector<double> a(to_factor->cols());
  for (std::size_t k = 0; k < idx.size(); ++k) a.coeffRef(idx[k]) += val[k];
  const Eigen::SparseVector<double> b = *to_factor * a;
  std::vector<Eigen::Index> bi;
  std::vector<double> bv;
  for (Eigen::SparseVector<double>::InnerIterator it(b); it; ++it) {
    bi.push_back(it.index());
    bv.push_back(it.value());
  }
  return factor->inverse_quadratic(bi, bv);
}

namespace {

// With a near-copy observation layer, factorizing P + tau_o A'A directly
// loses about log10(tau_o) digits in the Schur complements of the fixed
// effects. The block of z that enters eta with unit weight (the slm field,
// or the exchangeable effect in SLX) is therefore replaced by eta itself:
// z = L w with w_B = eta, so tau_o only touches the diagonal.
struct Reparam {
  SparseMat l;   // z = L w
  SparseMat lt;  // L'
  Eigen::Index block = 0;
};

std::optional<Reparam> unit_block_reparam(const ModelSpec& model) {
  const LatentLayout& lay = model.layout;
  Eigen::Index block;
  if (lay.n_slm > 0) block = lay.slm_x;
  else if (lay.n_iid > 0) block = lay.iid;
  else return std::nullopt;
  const Eigen::Index n = model.n();
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(lay.dim + n * (lay.p_fixed + 1)));
  for (Eigen::Index i = 0; i < lay.dim; ++i) t.emplace_back(i, i, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < lay.p_fixed; ++j)
      if (const double v = model.fixed.x(i, j); v != 0.0) t.emplace_back(block + i, lay.fixed + j, -v);
    if (lay.n_iid > 0 && block != lay.iid) t.emplace_back(block + i, lay.iid + i, -1.0);
  }
  Reparam r;
  r.block = block;
  r.l.resize(lay.dim, lay.dim);
  r.l.setFromTriplets(t.begin(), t.end());
  r.l.makeCompressed();
  r.lt = r.l.transpose();
  if (lay.p_fixed == 0 && (lay.n_iid == 0 || block == lay.iid)) return std::nullopt;
  return r;
}

ConditionalFit gaussian_evidence(const ModelSpec& model, const Eigen::VectorXd& theta) {
  const HyperValues hv = decode(model, theta);
  const double tau_o = hv.obs_precision;
  const SparseMat p = latent_precision(model, hv);
  const SparseMat a = model.predictor_matrix(model.observed);
  const Eigen::VectorXd y = observed_response(model);
  const std::optional<Reparam> rp = unit_block_reparam(model);

  SparseMat pw = rp ? SparseMat(rp->lt * p * rp->l) : p;
  SparseMat aw = rp ? SparseMat(a * rp->l) : a;
  aw.prune(0.0);
  pw.prune(0.0);
  const SparseMat awt = aw.transpose();
  SparseMat h = pw + tau_o * SparseMat(awt * aw);
  h.makeCompressed();

  auto factor = std::make_shared<CholeskyFactor>(h, describe_theta(model, theta));
  const Eigen::VectorXd b = tau_o * (awt * y);
  Eigen::VectorXd w = factor->solve(b);
  w += factor->solve(b - h * w);
  Eigen::VectorXd z = rp ? Eigen::VectorXd(rp->l * w) : w;

  const Eigen::VectorXd r = y - aw * w;
  const double m = static_cast<double>(y.size());
  const double loglik = 0.5 * m * (std::log(tau_o) - kLog2Pi) - 0.5 * tau_o * r.squaredNorm();
  const PriorTerms pt = prior_terms(model, hv, z);

  ConditionalFit out;
  out.log_likelihood = loglik;
  out.log_evidence = loglik + 0.5 * pt.log_det - 0.5 * pt.quad - 0.5 * factor->log_det();
  out.posterior.mean = std::move(z);
  out.posterior.factor = std::move(factor);
  if (rp) out.posterior.to_factor = std::make_shared<const SparseMat>(rp->lt);
  out.iterations = 1;
  return out;
}

struct ProbitTerms {
  double loglik = 0.0;
  Eigen::VectorXd g;  // d loglik / d eta
  Eigen::VectorXd w;  // -d2 loglik / d eta2
};

ProbitTerms probit_terms(const Eigen::VectorXd& eta, const Eigen::VectorXd& s) {
  ProbitTerms t;
  t.g.resize(eta.size());
  t.w.resize(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double u = s[i] * eta[i];
    const double lcdf = log_normal_cdf(u);
    const double lam = std::exp(-0.5 * u * u - 0.5 * kLog2Pi - lcdf);
    t.loglik += lcdf;
    t.g[i] = s[i] * lam;
    t.w[i] = lam * (lam + u);
  }
  return t;
}

}  // namespace

ConditionalFit laplace_inner(const ModelSpec& model, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd* warm_start, const LaplaceOptions& options) {
  if (model.likelihood != Likelihood::Probit) throw InvalidInput("laplace_inner needs a probit model");
  const HyperValues hv = decode(model, theta);
  const SparseMat p = latent_precision(model, hv);
  const SparseMat a = model.predictor_matrix(model.observed);
  const SparseMat at = a.transpose();
  const Eigen::VectorXd y = observed_response(model);
  const Eigen::VectorXd s = 2.0 * y.array() - 1.0;
  const Eigen::Index dim = model.layout.dim;
  const std::string where = describe_theta(model, theta);

  Eigen::VectorXd z = (warm_start && warm_start->size() == dim) ? *warm_start : Eigen::VectorXd::Zero(dim);
  auto objective = [&](const Eigen::VectorXd& v, ProbitTerms& terms) {
    terms = probit_terms(a * v, s);
    return terms.loglik - 0.5 * v.dot(p * v);
  };
  auto hessian = [&](const ProbitTerms& terms) {
    SparseMat h = p + SparseMat(at * terms.w.asDiagonal() * a);
    h.makeCompressed();
    return h;
  };

  ProbitTerms terms;
  double psi = objective(z, terms);
  Eigen::VectorXd grad = at * terms.g - p * z;
  bool converged = false;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const CholeskyFactor f(hessian(terms), where);
    const Eigen::VectorXd delta = f.solve(grad);
    double t = 1.0;
    ProbitTerms trial_terms;
    Eigen::VectorXd trial = z + delta;
    double trial_psi = objective(trial, trial_terms);
    while (!(trial_psi >= psi - 1e-12 * (1.0 + std::abs(psi))) && t > 1e-10) {
      t *= 0.5;
      trial = z + t * delta;
      trial_psi = objective(trial, trial_terms);
    }
    const double step = (t * delta).cwiseAbs().maxCoeff();
    z = std::move(trial);
    psi = trial_psi;
    terms = std::move(trial_terms);
    grad = at * terms.g - p * z;
    if (step < options.step_tolerance) {
      converged = true;
      ++it;
      break;
    }
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "probit Laplace iterations did not converge at " << where << " (gradient sup-norm "
        << grad.cwiseAbs().maxCoeff() << ")";
    throw NumericFailure(msg.str());
  }

  auto factor = std::make_shared<CholeskyFactor>(hessian(terms), where);
  const PriorTerms pt = prior_terms(model, hv, z);
  ConditionalFit out;
  out.log_likelihood = terms.loglik;
  out.log_evidence = terms.loglik + 0.5 * pt.log_det - 0.5 * pt.quad - 0.5 * factor->log_det();
  out.gradient_norm = dim > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  out.iterations = it;
  out.posterior.mean = std::move(z);
  out.posterior.factor = std::move(factor);
  return out;
}

ConditionalFit log_conditional_evidence(const ModelSpec& model, const Eigen::VectorXd& theta,
                                        const Eigen::VectorXd* warm_start) {
  if (model.observed.empty()) throw InvalidInput("all responses are missing");
  if (model.likelihood == Likelihood::Gaussian) return gaussian_evidence(model, theta);
  return laplace_inner(model, theta, warm_start);
}

HyperGrid explore_hypergrid(const ModelSpec& model, const GridOptions& options) {
  HyperGrid grid;
  grid.params = hyperparameters(model);
  grid.step = options.step;
  grid.half_width = options.half_width;
  const auto d = static_cast<Eigen::Index>(grid.params.size());

  Eigen::VectorXd warm;
  auto neg_log_post = [&](const Eigen::VectorXd& theta) {
    try {
      const ConditionalFit c = log_conditional_evidence(model, theta, warm.size() ? &warm : nullptr);
      if (model.likelihood == Likelihood::Probit) warm = c.posterior.mean;
      return -(c.log_evidence + log_hyper_prior(model, theta));
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const Eigen::VectorXd theta0 = initial_theta(model, grid.params);
  const NelderMeadResult nm = nelder_mead(neg_log_post, theta0, options.mode_search);
  if (!nm.converged || !std::isfinite(nm.value)) {
    std::ostringstream msg;
    msg << "hyperparameter mode search did not converge after " << nm.evaluations << " evaluations";
    if (std::isfinite(nm.value)) msg << " (last " << describe_theta(model, nm.x) << ")";
    throw NumericFailure(msg.str());
  }
  grid.mode = nm.x;
  grid.mode_log_post = -nm.value;

  // Curvature and spacing.
  grid.sigma = Eigen::VectorXd::Ones(d);
  if (d > 0) {
    Eigen::MatrixXd h = numeric_hessian(neg_log_post, grid.mode, options.hessian_step);
    h = 0.5 * (h + h.transpose()).eval();
    if (!h.allFinite()) throw NumericFailure("Hessian at the hyperparameter mode is not finite");
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) {
      grid.warnings.push_back("Hessian at the hyperparameter mode is not positive definite; using its diagonal");
      Eigen::VectorXd diag = h.diagonal().cwiseAbs().cwiseMax(1e-8);
      h = diag.asDiagonal();
      llt.compute(h);
    }
    grid.hessian = h;
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(d, d));
    grid.sigma = cov.diagonal().cwiseSqrt();
  }
  grid.log_delta = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) grid.log_delta += std::log(options.step * grid.sigma[k]);

  // Regular grid, first coordinate varying slowest.
  const int side = 2 * options.half_width + 1;
  std::size_t count = 1;
  for (Eigen::Index k = 0; k < d; ++k) count *= static_cast<std::size_t>(side);

  Eigen::VectorXd mode_z;
  if (model.likelihood == Likelihood::Probit)
    mode_z = log_conditional_evidence(model, grid.mode, nullptr).posterior.mean;

  struct Evaluated {
    bool ok = false;
    GridPoint point;
    std::string error;
  };
  auto evaluate = [&](std::size_t index) {
    Evaluated e;
    e.point.level.assign(static_cast<std::size_t>(d), 0);
    e.point.theta = grid.mode;
    std::size_t rem = index;
    for (Eigen::Index k = d - 1; k >= 0; --k) {
      const int lv = static_cast<int>(rem % static_cast<std::size_t>(side)) - options.half_width;
      rem /= static_cast<std::size_t>(side);
      e.point.level[static_cast<std::size_t>(k)] = lv;
      e.point.theta[k] += options.step * grid.sigma[k] * lv;
    }
    try {
      ConditionalFit c = log_conditional_evidence(model, e.point.theta, mode_z.size() ? &mode_z : nullptr);
      e.point.log_evidence = c.log_evidence;
      e.point.log_prior = log_hyper_prior(model, e.point.theta);
      e.point.log_post = e.point.log_evidence + e.point.log_prior;
      e.point.values = decode(model, e.point.theta);
      e.point.posterior = std::move(c.posterior);
      e.ok = std::isfinite(e.point.log_post);
      if (!e.ok) e.error = "non-finite log posterior";
    } catch (const Error& err) {
      e.error = err.what();
    }
    return e;
  };
  std::vector<Evaluated> evaluated = options.parallel ? kernels::parallel_map<Evaluated>(count, evaluate)
                                                      : kernels::serial_map<Evaluated>(count, evaluate);

  double best = grid.mode_log_post;
  std::size_t failures = 0;
  for (const auto& e : evaluated) {
    if (e.ok) best = std::max(best, e.point.log_post);
    else ++failures;
  }
  const std::size_t centre = count / 2;
  if (!evaluated[centre].ok)
    throw NumericFailure("evaluation failed at the hyperparameter mode: " + evaluated[centre].error);
  if (failures > 0) {
    std::ostringstream msg;
    msg << failures << " grid point(s) failed to evaluate and were dropped";
    grid.warnings.push_back(msg.str());
  }
  for (auto& e : evaluated)
    if (e.ok && best - e.point.log_post <= options.max_drop) grid.points.push_back(std::move(e.point));

  std::vector<double> lp;
  lp.reserve(grid.points.size());
  for (const auto& g : grid.points) lp.push_back(g.log_post);
  const double lse = log_sum_exp(lp);
  grid.normalized_weights.resize(lp.size());
  for (std::size_t g = 0; g < lp.size(); ++g) grid.normalized_weights[g] = std::exp(lp[g] - lse);
  return grid;
}

double marginal_likelihood(const HyperGrid& grid) {
  std::vector<double> terms;
  terms.reserve(grid.points.size());
  for (const auto& g : grid.points) terms.push_back(g.log_evidence + g.log_prior + grid.log_delta);
  if (terms.empty()) throw InvalidParameter("empty hyperparameter grid");
  return log_sum_exp(terms);
}

Marginal hyper_marginal_internal(const HyperGrid& grid, std::size_t k) {
  if (k >= grid.dim()) throw InvalidParameter("hyperparameter index out of range");
  const double spacing = grid.step * grid.sigma[static_cast<Eigen::Index>(k)];
  const double centre = grid.mode[static_cast<Eigen::Index>(k)];
  std::vector<double> mass(static_cast<std::size_t>(2 * grid.half_width + 1), 0.0);
  for (std::size_t g = 0; g < grid.points.size(); ++g)
    mass[static_cast<std::size_t>(grid.points[g].level[k] + grid.half_width)] += grid.normalized_weights[g];

  std::vector<double> xs, ys;
  for (std::size_t j = 0; j < mass.size(); ++j) {
    if (!(mass[j] > 0.0)) continue;
    xs.push_back(centre + spacing * (static_cast<double>(j) - grid.half_width));
    ys.push_back(std::log(mass[j] / spacing));
  }
  if (xs.size() < 2) return Marginal::gaussian(centre, grid.sigma[static_cast<Eigen::Index>(k)]);

  const NaturalSpline spline(xs, ys);
  const double lo = xs.front() - spacing, hi = xs.back() + spacing;
  const double left_slope = std::max(spline.slope(0), 0.0);
  const double right_slope = std::min(spline.slope(xs.size() - 1), 0.0);
  std::vector<double> s(kMarginalPoints), logd(kMarginalPoints);
  double top = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < kMarginalPoints; ++i) {
    const double t = lo + (hi - lo) * i / (kMarginalPoints - 1);
    double v;
    if (t < xs.front()) v = ys.front() + left_slope * (t - xs.front());
    else if (t > xs.back()) v = ys.back() + right_slope * (t - xs.back());
    else v = spline(t);
    s[static_cast<std::size_t>(i)] = t;
    logd[static_cast<std::size_t>(i)] = v;
    top = std::max(top, v);
  }
  std::vector<double> dens(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) dens[i] = std::exp(logd[i] - top);
  return Marginal(std::move(s), std::move(dens));
}

Marginal hyper_marginal(const HyperGrid& grid, const ModelSpec& model, std::size_t k) {
  const Marginal m = hyper_marginal_internal(grid, k);
  if (grid.params[k].role == HyperRole::RhoLogit) {
    const RhoBounds b = model.slm->bounds();
    const double range = b.max - b.min;
    return transform_marginal(
        m, [&](double t) { return b.min + range * sigmoid(t); },
        [&](double t) {
          const double u = sigmoid(t);
          return range * u * (1.0 - u);
        });
  }
  return transform_marginal(m, [](double t) { return std::exp(t); }, [](double t) { return std::exp(t); });
}

Marginal combination_marginal(const HyperGrid& grid, std::span<const Eigen::Index> idx,
                              std::span<const double> val) {
  if (grid.points.empty()) throw InvalidParameter("empty hyperparameter grid");
  const Eigen::Index dim = grid.points.front().posterior.mean.size();
  for (auto i : idx)
    if (i < 0 || i >= dim) throw InvalidParameter("latent index out of range");
  std::vector<double> means(grid.points.size()), sds(grid.points.size());
  for (std::size_t g = 0; g < grid.points.size(); ++g) {
    const auto& post = grid.points[g].posterior;
    double m = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) m += val[k] * post.mean[idx[k]];
    means[g] = m;
    sds[g] = std::sqrt(post.variance(idx, val));
  }
  return gaussian_mixture(grid.normalized_weights, means, sds);
}

Marginal latent_marginal(const HyperGrid& grid, Eigen::Index index) {
  const std::array<Eigen::Index, 1> idx{index};
  const std::array<double, 1> val{1.0};
  return combination_marginal(grid, idx, val);
}

Moments combination_moments(const HyperGrid& grid, std::span<const Eigen::Index> idx,
                            std::span<const double> val) {
  Moments out;
  double second = 0.0;
  for (std::size_t g = 0; g < grid.points.size(); ++g) {
    const auto& post = grid.points[g].posterior;
    double m = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) m += val[k] * post.mean[idx[k]];
    const double w = grid.normalized_weights[g];
    out.mean += w * m;
    second += w * (post.variance(idx, val) + m * m);
  }
  out.variance = std::max(0.0, second - out.mean * out.mean);
  return out;
}

Eigen::VectorXd PredictorMoments::posterior_mean() const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mean.rows());
  for (Eigen::Index g = 0; g < mean.cols(); ++g) out += weights[static_cast<std::size_t>(g)] * mean.col(g);
  return out;
}

PredictorMoments predictor_moments(const HyperGrid& grid, const ModelSpec& model, bool parallel) {
  const Eigen::Index n = model.n();
  const auto G = static_cast<Eigen::Index>(grid.points.size());
  PredictorMoments pm;
  pm.mean.resize(n, G);
  pm.variance.resize(n, G);
  pm.weights = grid.normalized_weights;
  auto row = [&](std::size_t i) {
    std::vector<Eigen::Index> idx;
    std::vector<double> val;
    model.predictor_row(static_cast<Eigen::Index>(i), idx, val);
    std::vector<double> out(2 * static_cast<std::size_t>(G));
    for (Eigen::Index g = 0; g < G; ++g) {
      const auto& post = grid.points[static_cast<std::size_t>(g)].posterior;
      double m = 0.0;
      for (std::size_t k = 0; k < idx.size(); ++k) m += val[k] * post.mean[idx[k]];
      out[2 * static_cast<std::size_t>(g)] = m;
      out[2 * static_cast<std::size_t>(g) + 1] = post.variance(idx, val);
    }
    return out;
  };
  const auto rows = parallel ? kernels::parallel_map<std::vector<double>>(static_cast<std::size_t>(n), row)
                             : kernels::serial_map<std::vector<double>>(static_cast<std::size_t>(n), row);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index g = 0; g < G; ++g) {
      pm.mean(i, g) = rows[static_cast<std::size_t>(i)][2 * static_cast<std::size_t>(g)];
      pm.variance(i, g) = rows[static_cast<std::size_t>(i)][2 * static_cast<std::size_t>(g) + 1];
    }
  return pm;
}

void gauss_hermite(int order, std::vector<double>& nodes, std::vector<double>& weights) {
  if (order < 1) throw InvalidParameter("Gauss-Hermite order must be positive");
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  nodes.resize(static_cast<std::size_t>(order));
  weights.resize(static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    nodes[static_cast<std::size_t>(k)] = es.eigenvalues()[k];
    const double v = es.eigenvectors()(0, k);
    weights[static_cast<std::size_t>(k)] = std::sqrt(std::numbers::pi) * v * v;
  }
}

DicResult dic(const HyperGrid& grid, const ModelSpec& model) {
  return dic(grid, model, predictor_moments(grid, model));
}

DicResult dic(const HyperGrid& grid, const ModelSpec& model, const PredictorMoments& pm) {
  DicResult r;
  const Eigen::VectorXd eta_bar = pm.posterior_mean();
  const auto G = grid.points.size();
  if (model.likelihood == Likelihood::Gaussian) {
    double tau_bar = 0.0;
    for (std::size_t g = 0; g < G; ++g) tau_bar += grid.normalized_weights[g] * grid.points[g].values.obs_precision;
    for (std::size_t g = 0; g < G; ++g) {
      const double tau_o = grid.points[g].values.obs_precision;
      double dev = 0.0;
      for (auto i : model.observed) {
        const double e = model.y[i] - pm.mean(i, static_cast<Eigen::Index>(g));
        dev += kLog2Pi - std::log(tau_o) + tau_o * (e * e + pm.variance(i, static_cast<Eigen::Index>(g)));
      }
      r.mean_deviance += grid.normalized_weights[g] * dev;
    }
    for (auto i : model.observed) {
      const double e = model.y[i] - eta_bar[i];
      r.deviance_at_mean += kLog2Pi - std::log(tau_bar) + tau_bar * e * e;
    }
  } else {
    std::vector<double> nodes, weights;
    gauss_hermite(40, nodes, weights);
    for (std::size_t g = 0; g < G; ++g) {
      double dev = 0.0;
      for (auto i : model.observed) {
        const double s = 2.0 * model.y[i] - 1.0;
        const double m = pm.mean(i, static_cast<Eigen::Index>(g));
        const double sd = std::sqrt(2.0 * pm.variance(i, static_cast<Eigen::Index>(g)));
        double e = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k)
          e += weights[k] * -2.0 * log_normal_cdf(s * (m + sd * nodes[k]));
        dev += e / std::sqrt(std::numbers::pi);
      }
      r.mean_deviance += grid.normalized_weights[g] * dev;
    }
    for (auto i : model.observed) {
      const double s = 2.0 * model.y[i] - 1.0;
      if (normal_cdf(eta_bar[i]) < 1e-12 || normal_cdf(-eta_bar[i]) < 1e-12) r.degenerate = true;
      r.deviance_at_mean += -2.0 * log_normal_cdf(s * eta_bar[i]);
    }
  }
  r.p_eff = r.mean_deviance - r.deviance_at_mean;
  r.dic = r.mean_deviance + r.p_eff;
  if (r.degenerate) {
    r.dic = std::numeric_limits<double>::infinity();
    r.p_eff = std::numeric_limits<double>::infinity();
  }
  return r;
}

std::vector<Marginal> predict_missing(const HyperGrid& grid, const ModelSpec& model) {
  if (model.missing.empty()) return {};
  return predict_missing(grid, model, predictor_moments(grid, model));
}

std::vector<Marginal> predict_missing(const HyperGrid& grid, const ModelSpec& model,
                                      const PredictorMoments& pm) {
  std::vector<Marginal> out;
  const auto G = grid.points.size();
  std::vector<double> means(G), sds(G);
  for (auto i : model.missing) {
    for (std::size_t g = 0; g < G; ++g) {
      means[g] = pm.mean(i, static_cast<Eigen::Index>(g));
      double v = pm.variance(i, static_cast<Eigen::Index>(g));
      if (model.likelihood == Likelihood::Gaussian) v += 1.0 / grid.points[g].values.obs_precision;
      sds[g] = std::sqrt(v);
    }
    Marginal eta = gaussian_mixture(grid.normalized_weights, means, sds);
    if (model.likelihood == Likelihood::Gaussian) {
      out.push_back(std::move(eta));
    } else {
      // Phi saturates at 1 in double precision beyond eta ~ 8.3, so the
      // probability scale keeps only the abscissae it can resolve.
      std::vector<double> u, g;
      for (std::size_t k = 0; k < eta.support().size(); ++k) {
        const double t = eta.support()[k];
        const double p = normal_cdf(t), jac = normal_pdf(t);
        if (!(jac > 0.0) || !(p < 1.0) || (!u.empty() && !(p > u.back()))) continue;
        u.push_back(p);
        g.push_back(eta.density()[k] / jac);
      }
      if (u.size() < 2) throw NumericFailure("predictive probability is degenerate at 0 or 1");
      out.emplace_back(std::move(u), std::move(g));
    }
  }
  return out;
}

}  // namespace slmfit
