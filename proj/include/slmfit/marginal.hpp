#pragma once

#include <functional>
#include <span>
#include <vector>

namespace slmfit {

inline constexpr int kMarginalPoints = 401;
inline constexpr double kMarginalHalfWidth = 6.0;  // in mixture standard deviations

/// Univariate density tabulated on a strictly increasing support, always
/// normalized to unit trapezoid integral. Between abscissae the density is
/// linear; outside the support it is zero.
class Marginal {
 public:
  Marginal() = default;
  Marginal(std::vector<double> support, std::vector<double> density);

  static Marginal gaussian(double mean, double sd, int points = kMarginalPoints,
                           double half_width = kMarginalHalfWidth);

  const std::vector<double>& support() const { return support_; }
  const std::vector<double>& density() const { return density_; }
  bool empty() const { return support_.empty(); }

  double integral() const;
  /// Exact first moment of the piecewise-linear density.
  double mean() const;
  /// Trapezoid estimate around mean().
  double variance() const;
  double sd() const;
  double density_at(double x) const;
  double cdf(double x) const;
  double quantile(double p) const;
  /// Trapezoid estimate of E[f(X)].
  double expectation(const std::function<double(double)>& f) const;

 private:
  std::vector<double> support_;
  std::vector<double> density_;
  std::vector<double> cumulative_;
};

struct MarginalSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q500 = 0.0;
  double q975 = 0.0;
};

MarginalSummary summarize(const Marginal& m);

/// Density of f(X) by change of variables. `df` is the derivative of f.
/// Throws InvalidParameter if f is not strictly monotone on the support.
Marginal transform_marginal(const Marginal& m, const std::function<double(double)>& f,
                            const std::function<double(double)>& df);
/// Same, with a central-difference derivative.
Marginal transform_marginal(const Marginal& m, const std::function<double(double)>& f);

/// Sum_g w_g N(mean_g, sd_g^2) tabulated on the hull of mean +- half_width sd over the
/// mixture and each component with non-negligible weight.
/// Weights need not be normalized.
Marginal gaussian_mixture(std::span<const double> weights, std::span<const double> means,
                          std::span<const double> sds, int points = kMarginalPoints,
                          double half_width = kMarginalHalfWidth);

double normal_pdf(double x, double mean = 0.0, double sd = 1.0);
double normal_cdf(double x);
/// log Phi(x), accurate in the far left tail.
double log_normal_cdf(double x);

}  // namespace slmfit
