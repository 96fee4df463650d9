#include "slmfit/impacts.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "slmfit/error.hpp"
#include "slmfit/kernels.hpp"

namespace slmfit {

namespace {

Eigen::PartialPivLU<Eigen::MatrixXd> dense_operator_lu(const WeightsMatrix& w, double rho) {
  const Eigen::Index n = w.n();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - rho * Eigen::MatrixXd(w.mat);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  if (!(lu.rcond() > 1e-14)) {
    std::ostringstream msg;
    msg << "I - rho W is singular at rho = " << rho;
    throw NumericFailure(msg.str());
  }
  return lu;
}

bool standardized_without_islands(const WeightsMatrix& w) { return w.standardized && !w.has_empty_rows(); }

double weights_mean_sum(const WeightsMatrix& w) { return w.mat.sum() / static_cast<double>(w.n()); }

double row_sum_norm(const SparseMat& w) {
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(w.rows());
  for (int k = 0; k < w.outerSize(); ++k)
    for (SparseMat::InnerIterator it(w, k); it; ++it) rows[it.row()] += std::abs(it.value());
  return rows.size() ? rows.maxCoeff() : 0.0;
}

ImpactEstimate from_moments(double mean, double variance) {
  ImpactEstimate e;
  e.mean = mean;
  e.sd = std::sqrt(std::max(0.0, variance));
  if (e.sd > 0.0) e.marginal = Marginal::gaussian(e.mean, e.sd);
  return e;
}

ImpactEstimate from_combination(const FitResult& fit, std::span<const Eigen::Index> idx,
                                std::span<const double> val) {
  ImpactEstimate e;
  const Moments m = combination_moments(fit.grid, idx, val);
  e.mean = m.mean;
  e.sd = std::sqrt(m.variance);
  e.marginal = combination_marginal(fit.grid, idx, val);
  return e;
}

ImpactEstimate scaled(const ImpactEstimate& e, double s) {
  ImpactEstimate out;
  out.mean = s * e.mean;
  out.sd = s * e.sd;
  if (e.marginal)
    out.marginal = transform_marginal(*e.marginal, [s](double x) { return s * x; }, [s](double) { return s; });
  return out;
}

// Moments of g(rho) under the rho marginal, or at the fixed value.
struct RhoFunctionMoments {
  double mean = 0.0;
  double sd = 0.0;
};

RhoFunctionMoments rho_moments(const std::vector<double>& values, const Marginal* rho) {
  if (!rho) return {values.front(), 0.0};
  const auto& s = rho->support();
  const auto& d = rho->density();
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double h = s[i] - s[i - 1];
    m1 += 0.5 * h * (values[i] * d[i] + values[i - 1] * d[i - 1]);
    m2 += 0.5 * h * (values[i] * values[i] * d[i] + values[i - 1] * values[i - 1] * d[i - 1]);
  }
  return {m1, std::sqrt(std::max(0.0, m2 - m1 * m1))};
}

}  // namespace

Eigen::MatrixXd impact_matrix_dense(ModelKind kind, const WeightsMatrix& w, double rho, double beta,
                                    double gamma) {
  const Eigen::Index n = w.n();
  const Eigen::MatrixXd wd = Eigen::MatrixXd(w.mat);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  switch (kind) {
    case ModelKind::SEM: return beta * eye;
    case ModelKind::SLM: return dense_operator_lu(w, rho).solve(beta * eye);
    case ModelKind::SDM: return dense_operator_lu(w, rho).solve(beta * eye + gamma * wd);
    case ModelKind::SDEM:
    case ModelKind::SLX: return beta * eye + gamma * wd;
  }
  throw InvalidParameter("unknown model kind");
}

AverageImpacts average_impacts(const Eigen::MatrixXd& s) {
  AverageImpacts a;
  const double n = static_cast<double>(s.rows());
  a.direct = s.trace() / n;
  a.total = s.sum() / n;
  a.indirect = a.total - a.direct;
  return a;
}

TraceTable trace_functions(const WeightsMatrix& w, const std::vector<double>& rho_values, TraceMethod method) {
  const Eigen::Index n = w.n();
  const double nd = static_cast<double>(n);
  if (method == TraceMethod::Automatic)
    method = n <= kDenseSpectrumLimit ? TraceMethod::Spectral : TraceMethod::Series;
  if (w.bounds)
    for (double r : rho_values)
      if (!(r > w.bounds->min && r < w.bounds->max)) {
        std::ostringstream msg;
        msg << "rho = " << r << " is outside (" << w.bounds->min << ", " << w.bounds->max << ")";
        throw InvalidParameter(msg.str());
      }

  TraceTable t;
  t.method = method;
  t.rho = rho_values;
  t.inverse.resize(rho_values.size());
  t.inverse_times_w.resize(rho_values.size());
  t.tail_bound.assign(rho_values.size(), 0.0);

  switch (method) {
    case TraceMethod::DenseLU: {
      const Eigen::MatrixXd wd = Eigen::MatrixXd(w.mat);
      for (std::size_t k = 0; k < rho_values.size(); ++k) {
        const Eigen::MatrixXd inv = dense_operator_lu(w, rho_values[k]).inverse();
        t.inverse[k] = inv.trace() / nd;
        t.inverse_times_w[k] = (inv.array() * wd.transpose().array()).sum() / nd;
      }
      break;
    }
    case TraceMethod::Spectral: {
      const auto lambda = dense_spectrum(w);
      for (std::size_t k = 0; k < rho_values.size(); ++k) {
        std::complex<double> a = 0.0, b = 0.0;
        for (const auto& l : lambda) {
          const std::complex<double> denom = 1.0 - rho_values[k] * l;
          if (std::abs(denom) < 1e-14) throw NumericFailure("I - rho W is singular");
          a += 1.0 / denom;
          b += l / denom;
        }
        t.inverse[k] = a.real() / nd;
        t.inverse_times_w[k] = b.real() / nd;
      }
      break;
    }
    case TraceMethod::Series:
    case TraceMethod::Automatic: {
      std::vector<double> powers;
      if (n <= kExactTraceLimit) {
        powers = kernels::trace_powers_parallel(w.mat, kSeriesTerms + 1);
      } else {
        powers = kernels::trace_powers_stochastic(w.mat, kSeriesTerms + 1, 64, 20240611ULL);
        t.stochastic = true;
      }
      const double radius = row_sum_norm(w.mat);
      for (std::size_t k = 0; k < rho_values.size(); ++k) {
        const double r = rho_values[k];
        double a = 0.0, b = 0.0, pw = 1.0;
        for (int j = 0; j <= kSeriesTerms; ++j) {
          a += pw * powers[static_cast<std::size_t>(j)];
          b += pw * powers[static_cast<std::size_t>(j) + 1];
          pw *= r;
        }
        t.inverse[k] = a / nd;
        t.inverse_times_w[k] = b / nd;
        const double q = std::abs(r) * radius;
        if (q >= 1.0) {
          t.diverged = true;
          t.tail_bound[k] = std::numeric_limits<double>::infinity();
        } else {
          t.tail_bound[k] = std::pow(q, kSeriesTerms + 1) / (1.0 - q);
        }
      }
      break;
    }
  }
  return t;
}

TotalFactors total_factors(const WeightsMatrix& w, double rho) {
  if (standardized_without_islands(w)) {
    const double f = 1.0 / (1.0 - rho);
    return {f, f};
  }
  const Eigen::Index n = w.n();
  SparseMat at = SparseMat(spatial_operator(w, rho).transpose());
  Eigen::SparseLU<SparseMat> lu;
  lu.compute(at);
  if (lu.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "I - rho W is singular at rho = " << rho;
    throw NumericFailure(msg.str());
  }
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd v = lu.solve(ones);
  const Eigen::VectorXd w1 = w.mat * ones;
  return {v.sum() / static_cast<double>(n), v.dot(w1) / static_cast<double>(n)};
}

AverageImpacts average_impacts_at(ModelKind kind, const WeightsMatrix& w, double rho, double beta, double gamma) {
  AverageImpacts a;
  switch (kind) {
    case ModelKind::SEM:
      a.direct = a.total = beta;
      break;
    case ModelKind::SDEM:
    case ModelKind::SLX: {
      // tr(W) = 0
      a.direct = beta;
      a.total = beta + gamma * weights_mean_sum(w);
      break;
    }
    case ModelKind::SLM:
    case ModelKind::SDM: {
      const TraceTable t = trace_functions(w, {rho});
      const TotalFactors f = total_factors(w, rho);
      const double g = kind == ModelKind::SDM ? gamma : 0.0;
      a.direct = t.inverse[0] * beta + t.inverse_times_w[0] * g;
      a.total = f.own * beta + f.lagged * g;
      break;
    }
  }
  a.indirect = a.total - a.direct;
  return a;
}

ProductMoments product_moments(double mu_x, double sd_x, double mu_y, double sd_y) {
  if (sd_x < 0.0 || sd_y < 0.0) throw InvalidParameter("standard deviations must be nonnegative");
  const double a = mu_x * sd_y, b = mu_y * sd_x, c = sd_x * sd_y;
  return {mu_x * mu_y, std::sqrt(a * a + b * b + c * c)};
}

std::vector<ImpactSummary> average_impacts_exact(const ModelSpec& model, const FitResult& fit) {
  if (model.kind != ModelKind::SEM && model.kind != ModelKind::SDEM && model.kind != ModelKind::SLX)
    throw InvalidParameter("exact impacts are available for SEM, SDEM and SLX only");
  const double c = weights_mean_sum(model.w);
  std::vector<ImpactSummary> out;
  for (const auto& term : model.impact_terms) {
    ImpactSummary s;
    s.covariate = term.covariate;
    s.method = ImpactMethod::Exact;
    const std::array<Eigen::Index, 1> bi{term.beta};
    const std::array<double, 1> one{1.0};
    s.direct = from_combination(fit, bi, one);
    if (!term.gamma) {
      s.total = s.direct;
      s.indirect = ImpactEstimate{};
    } else {
      const std::array<Eigen::Index, 2> both{term.beta, *term.gamma};
      const std::array<double, 2> wts{1.0, c};
      s.total = from_combination(fit, both, wts);
      const std::array<Eigen::Index, 1> gi{*term.gamma};
      const std::array<double, 1> cw{c};
      s.indirect = from_combination(fit, gi, cw);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ImpactSummary> average_impacts_approx(const ModelSpec& model, const FitResult& fit) {
  if (model.kind != ModelKind::SLM && model.kind != ModelKind::SDM)
    throw InvalidParameter("product-moment impacts are for SLM and SDM");
  const RhoBounds b = model.slm->bounds();
  const Marginal* rho = fit.rho_marginal ? &*fit.rho_marginal : nullptr;
  std::vector<double> rho_values;
  if (rho) {
    const double near = b.max - 1e-6;
    if (rho->support().back() > near && 1.0 - rho->cdf(near) > 1e-12)
      throw NumericFailure("rho posterior puts mass within 1e-6 of its upper bound; 1/(1 - rho) diverges");
    rho_values = rho->support();
  } else {
    rho_values = {*model.slm->rho_fixed};
  }

  const TraceTable traces = trace_functions(model.w, rho_values);
  if (traces.diverged) throw NumericFailure("trace power series diverges on the rho support");
  std::vector<double> own(rho_values.size()), lagged(rho_values.size());
  for (std::size_t k = 0; k < rho_values.size(); ++k) {
    const TotalFactors f = total_factors(model.w, rho_values[k]);
    own[k] = f.own;
    lagged[k] = f.lagged;
  }
  const RhoFunctionMoments t1 = rho_moments(traces.inverse, rho);
  const RhoFunctionMoments t2 = rho_moments(traces.inverse_times_w, rho);
  const RhoFunctionMoments f_own = rho_moments(own, rho);
  const RhoFunctionMoments f_lag = rho_moments(lagged, rho);
  const bool same_factor = standardized_without_islands(model.w);

  std::vector<ImpactSummary> out;
  for (const auto& term : model.impact_terms) {
    ImpactSummary s;
    s.covariate = term.covariate;
    s.method = ImpactMethod::GaussianProduct;
    const std::array<Eigen::Index, 1> bi{term.beta};
    const std::array<double, 1> one{1.0};
    const Moments mb = combination_moments(fit.grid, bi, one);
    const double sb = std::sqrt(mb.variance);

    ProductMoments d1 = product_moments(t1.mean, t1.sd, mb.mean, sb);
    double direct_mean = d1.mean, direct_var = d1.sd * d1.sd;
    double total_mean = 0.0, total_var = 0.0;
    if (term.gamma) {
      const std::array<Eigen::Index, 1> gi{*term.gamma};
      const Moments mg = combination_moments(fit.grid, gi, one);
      const ProductMoments d2 = product_moments(t2.mean, t2.sd, mg.mean, std::sqrt(mg.variance));
      direct_mean += d2.mean;
      direct_var += d2.sd * d2.sd;
      if (same_factor) {
        const std::array<Eigen::Index, 2> both{term.beta, *term.gamma};
        const std::array<double, 2> wts{1.0, 1.0};
        const Moments ms = combination_moments(fit.grid, both, wts);
        const ProductMoments t = product_moments(f_own.mean, f_own.sd, ms.mean, std::sqrt(ms.variance));
        total_mean = t.mean;
        total_var = t.sd * t.sd;
      } else {
        const ProductMoments p1 = product_moments(f_own.mean, f_own.sd, mb.mean, sb);
        const ProductMoments p2 = product_moments(f_lag.mean, f_lag.sd, mg.mean, std::sqrt(mg.variance));
        total_mean = p1.mean + p2.mean;
        total_var = p1.sd * p1.sd + p2.sd * p2.sd;
      }
    } else {
      const ProductMoments t = product_moments(f_own.mean, f_own.sd, mb.mean, sb);
      total_mean = t.mean;
      total_var = t.sd * t.sd;
    }
    s.direct = from_moments(direct_mean, direct_var);
    s.total = from_moments(total_mean, total_var);
    s.indirect = from_moments(total_mean - direct_mean, std::max(0.0, total_var - direct_var));
    out.push_back(std::move(s));
  }
  return out;
}

double probit_scaling(const Eigen::VectorXd& eta_hat) {
  if (eta_hat.size() == 0) throw InvalidParameter("empty linear predictor");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < eta_hat.size(); ++i) acc += normal_pdf(eta_hat[i]);
  return acc / static_cast<double>(eta_hat.size());
}

double probit_scaling(const FitResult& fit) { return probit_scaling(fit.predictor_mean); }

std::vector<ImpactSummary> compute_impacts(const ModelSpec& model, const FitResult& fit) {
  std::vector<ImpactSummary> out = (model.kind == ModelKind::SLM || model.kind == ModelKind::SDM)
                                       ? average_impacts_approx(model, fit)
                                       : average_impacts_exact(model, fit);
  if (model.likelihood == Likelihood::Probit) {
    const double s = probit_scaling(fit);
    for (auto& summary : out) {
      summary.direct = scaled(summary.direct, s);
      summary.indirect = scaled(summary.indirect, s);
      summary.total = scaled(summary.total, s);
    }
  }
  return out;
}

}  // namespace slmfit
