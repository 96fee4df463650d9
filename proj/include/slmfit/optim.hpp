#pragma once

#include <functional>

#include <Eigen/Dense>

namespace slmfit {

struct NelderMeadOptions {
  double initial_step = 0.5;
  double f_tolerance = 1e-9;
  double x_tolerance = 1e-7;
  int max_evaluations = 4000;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Minimizes f from x0 with the standard reflection/expansion/contraction/
/// shrink simplex moves. Non-finite values are treated as +infinity.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const NelderMeadOptions& options = {});

/// Central-difference Hessian of f at x with step h.
Eigen::MatrixXd numeric_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                const Eigen::VectorXd& x, double h);

}  // namespace slmfit
