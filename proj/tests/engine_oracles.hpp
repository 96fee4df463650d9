#pragma once
// Dense references built straight from the model definitions, without
// going through the latent precision.

#include <Eigen/Dense>

#include "slmfit/engine.hpp"
#include "support.hpp"

namespace slmfit::testing {

inline Eigen::MatrixXd lag_inverse(const WeightsMatrix& w, double rho) {
  const Eigen::Index n = w.n();
  return (Eigen::MatrixXd::Identity(n, n) - rho * dense(w)).inverse();
}

inline Eigen::MatrixXd durbin(const Design& x, const WeightsMatrix& w) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index j = 0; j < x.x.cols(); ++j)
    if (!x.intercept || *x.intercept != j) cols.push_back(j);
  Eigen::MatrixXd out(x.x.rows(), x.x.cols() + static_cast<Eigen::Index>(cols.size()));
  out.leftCols(x.x.cols()) = x.x;
  const Eigen::MatrixXd wx = dense(w) * x.x;
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(x.x.cols() + static_cast<Eigen::Index>(k)) = wx.col(cols[k]);
  return out;
}

/// Prior covariance of the linear predictor eta for every row.
inline Eigen::MatrixXd predictor_covariance(const ModelSpec& s, const HyperValues& v, double beta_precision) {
  const Eigen::Index n = s.n();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  const double qinv = 1.0 / beta_precision;
  switch (s.kind) {
    case ModelKind::SLM:
    case ModelKind::SDM: {
      const Eigen::MatrixXd x = s.kind == ModelKind::SLM ? s.design.x : durbin(s.design, s.w);
      const Eigen::MatrixXd a = lag_inverse(s.w, v.rho->external());
      return a * (qinv * x * x.transpose() + eye / v.tau) * a.transpose();
    }
    case ModelKind::SEM:
    case ModelKind::SDEM: {
      const Eigen::MatrixXd x = s.kind == ModelKind::SEM ? s.design.x : durbin(s.design, s.w);
      const Eigen::MatrixXd a = lag_inverse(s.m ? *s.m : s.w, v.rho->external());
      return qinv * x * x.transpose() + a * a.transpose() / v.tau;
    }
    case ModelKind::SLX: {
      const Eigen::MatrixXd x = durbin(s.design, s.w);
      Eigen::MatrixXd c = qinv * x * x.transpose();
      if (s.iid) c += eye / v.iid_precision;
      return c;
    }
  }
  return {};
}

inline Eigen::MatrixXd response_covariance(const ModelSpec& s, const HyperValues& v, double beta_precision) {
  return predictor_covariance(s, v, beta_precision) +
         Eigen::MatrixXd::Identity(s.n(), s.n()) / v.obs_precision;
}

inline Eigen::MatrixXd rows_cols(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& r,
                                 const std::vector<Eigen::Index>& c) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(c.size()));
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(r[i], c[j]);
  return out;
}

inline Eigen::VectorXd rows(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& r) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(r.size()));
  for (std::size_t i = 0; i < r.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[r[i]];
  return out;
}

/// log pi(y_obs | theta) for the Gaussian likelihood.
inline double dense_log_evidence(const ModelSpec& s, const HyperValues& v, double beta_precision) {
  const Eigen::MatrixXd c = response_covariance(s, v, beta_precision);
  const Eigen::VectorXd yo = rows(s.y, s.observed);
  return mvn_logpdf(yo, Eigen::VectorXd::Zero(yo.size()), rows_cols(c, s.observed, s.observed));
}

}  // namespace slmfit::testing
