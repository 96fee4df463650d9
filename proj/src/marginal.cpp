#include "slmfit/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "slmfit/error.hpp"

namespace slmfit {

double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_normal_cdf(double x) {
  if (x > -5.0) return std::log(normal_cdf(x));
  // Far left tail: log erfc through the Laplace continued fraction, which
  // stays finite where Phi underflows.
  const double z = -x / std::numbers::sqrt2;
  double frac = 0.0;
  for (int k = 60; k >= 1; --k) frac = (k / 2.0) / (z + frac);
  const double erfcx = 1.0 / (std::sqrt(std::numbers::pi) * (z + frac));
  return std::log(0.5) - z * z + std::log(erfcx);
}

Marginal::Marginal(std::vector<double> support, std::vector<double> density)
    : support_(std::move(support)), density_(std::move(density)) {
  if (support_.size() != density_.size()) throw InvalidInput("marginal support/density size mismatch");
  if (support_.size() < 2) throw InvalidInput("marginal needs at least two abscissae");
  for (std::size_t i = 0; i < support_.size(); ++i) {
    if (!std::isfinite(support_[i])) throw InvalidInput("non-finite marginal abscissa");
    if (!(density_[i] >= 0.0) || !std::isfinite(density_[i]))
      throw InvalidInput("marginal density must be finite and nonnegative");
    if (i > 0 && !(support_[i] > support_[i - 1]))
      throw InvalidInput("marginal support must be strictly increasing");
  }
  cumulative_.assign(support_.size(), 0.0);
  for (std::size_t i = 1; i < support_.size(); ++i)
    cumulative_[i] = cumulative_[i - 1] +
                     0.5 * (density_[i] + density_[i - 1]) * (support_[i] - support_[i - 1]);
  const double total = cumulative_.back();
  if (!(total > 0.0)) throw InvalidInput("marginal density integrates to zero");
  for (auto& d : density_) d /= total;
  for (auto& c : cumulative_) c /= total;
}

Marginal Marginal::gaussian(double mean, double sd, int points, double half_width) {
  if (!(sd > 0.0)) throw InvalidParameter("gaussian marginal needs a positive sd");
  std::vector<double> s(static_cast<std::size_t>(points)), d(s.size());
  for (int i = 0; i < points; ++i) {
    s[static_cast<std::size_t>(i)] = mean + sd * half_width * (2.0 * i / (points - 1) - 1.0);
    d[static_cast<std::size_t>(i)] = normal_pdf(s[static_cast<std::size_t>(i)], mean, sd);
  }
  return Marginal(std::move(s), std::move(d));
}

double Marginal::integral() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }

double Marginal::expectation(const std::function<double(double)>& f) const {
  double acc = 0.0;
  double prev = f(support_[0]) * density_[0];
  for (std::size_t i = 1; i < support_.size(); ++i) {
    const double cur = f(support_[i]) * density_[i];
    acc += 0.5 * (prev + cur) * (support_[i] - support_[i - 1]);
    prev = cur;
  }
  return acc;
}

double Marginal::mean() const {
  // Exact for the piecewise-linear density.
  double acc = 0.0;
  for (std::size_t i = 1; i < support_.size(); ++i) {
    const double x0 = support_[i - 1], x1 = support_[i];
    const double f0 = density_[i - 1], f1 = density_[i];
    acc += (x1 - x0) / 6.0 * (2.0 * x0 * f0 + x0 * f1 + x1 * f0 + 2.0 * x1 * f1);
  }
  return acc;
}

double Marginal::variance() const {
  const double m = mean();
  return std::max(0.0, expectation([m](double x) { return (x - m) * (x - m); }));
}

double Marginal::sd() const { return std::sqrt(variance()); }

double Marginal::density_at(double x) const {
  if (x < support_.front() || x > support_.back()) return 0.0;
  const auto it = std::upper_bound(support_.begin(), support_.end(), x);
  if (it == support_.end()) return density_.back();
  const auto j = static_cast<std::size_t>(it - support_.begin());
  const double t = (x - support_[j - 1]) / (support_[j] - support_[j - 1]);
  return (1.0 - t) * density_[j - 1] + t * density_[j];
}

double Marginal::cdf(double x) const {
  if (x <= support_.front()) return 0.0;
  if (x >= support_.back()) return 1.0;
  const auto it = std::upper_bound(support_.begin(), support_.end(), x);
  const auto j = static_cast<std::size_t>(it - support_.begin());
  const double h = x - support_[j - 1];
  const double f0 = density_[j - 1];
  const double slope = (density_[j] - f0) / (support_[j] - support_[j - 1]);
  return cumulative_[j - 1] + f0 * h + 0.5 * slope * h * h;
}

double Marginal::quantile(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidParameter("quantile probability outside [0, 1]");
  if (p <= 0.0) return support_.front();
  if (p >= 1.0) return support_.back();
  const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), p);
  auto j = static_cast<std::size_t>(it - cumulative_.begin());
  if (j == 0) return support_.front();
  const double width = support_[j] - support_[j - 1];
  const double f0 = density_[j - 1];
  const double slope = (density_[j] - f0) / width;
  const double target = p - cumulative_[j - 1];
  double h;
  if (std::abs(slope) * width < 1e-12 * (f0 + 1e-300)) {
    h = f0 > 0.0 ? target / f0 : 0.5 * width;
  } else {
    // 0.5 slope h^2 + f0 h - target = 0, root in [0, width]
    const double disc = std::max(0.0, f0 * f0 + 2.0 * slope * target);
    h = 2.0 * target / (f0 + std::sqrt(disc));
  }
  return support_[j - 1] + std::clamp(h, 0.0, width);
}

MarginalSummary summarize(const Marginal& m) {
  MarginalSummary s;
  s.mean = m.mean();
  s.sd = m.sd();
  s.q025 = m.quantile(0.025);
  s.q500 = m.quantile(0.5);
  s.q975 = m.quantile(0.975);
  return s;
}

Marginal transform_marginal(const Marginal& m, const std::function<double(double)>& f,
                            const std::function<double(double)>& df) {
  const auto& s = m.support();
  const auto& d = m.density();
  std::vector<double> u(s.size()), g(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    u[i] = f(s[i]);
    const double jac = std::abs(df(s[i]));
    if (!std::isfinite(u[i]) || !std::isfinite(jac) || !(jac > 0.0))
      throw InvalidParameter("transform is not differentiable with nonzero slope on the support");
    g[i] = d[i] / jac;
  }
  bool increasing = true, decreasing = true;
  for (std::size_t i = 1; i < u.size(); ++i) {
    increasing = increasing && u[i] > u[i - 1];
    decreasing = decreasing && u[i] < u[i - 1];
  }
  if (!increasing && !decreasing) throw InvalidParameter("transform is not strictly monotone on the support");
  if (decreasing) {
    std::reverse(u.begin(), u.end());
    std::reverse(g.begin(), g.end());
  }
  return Marginal(std::move(u), std::move(g));
}

Marginal transform_marginal(const Marginal& m, const std::function<double(double)>& f) {
  return transform_marginal(m, f, [&f](double x) {
    const double h = 1e-6 * (1.0 + std::abs(x));
    return (f(x + h) - f(x - h)) / (2.0 * h);
  });
}

Marginal gaussian_mixture(std::span<const double> weights, std::span<const double> means,
                          std::span<const double> sds, int points, double half_width) {
  if (weights.size() != means.size() || weights.size() != sds.size() || weights.empty())
    throw InvalidInput("mixture components have inconsistent sizes");
  double total = 0.0, mean = 0.0;
  for (std::size_t g = 0; g < weights.size(); ++g) {
    if (!(weights[g] >= 0.0) || !(sds[g] > 0.0)) throw InvalidParameter("bad mixture component");
    total += weights[g];
    mean += weights[g] * means[g];
  }
  if (!(total > 0.0)) throw InvalidParameter("mixture weights sum to zero");
  mean /= total;
  double var = 0.0;
  for (std::size_t g = 0; g < weights.size(); ++g) {
    const double dm = means[g] - mean;
    var += weights[g] * (sds[g] * sds[g] + dm * dm);
  }
  const double sd = std::sqrt(var / total);
  // Wide components with small weight reach beyond the mixture's own
  // half-width, so the support covers every non-negligible component.
  double lo = mean - half_width * sd, hi = mean + half_width * sd;
  for (std::size_t g = 0; g < weights.size(); ++g)
    if (weights[g] > 1e-10 * total) {
      lo = std::min(lo, means[g] - half_width * sds[g]);
      hi = std::max(hi, means[g] + half_width * sds[g]);
    }
  std::vector<double> s(static_cast<std::size_t>(points)), d(s.size(), 0.0);
  for (int i = 0; i < points; ++i) {
    const double x = lo + (hi - lo) * i / (points - 1);
    s[static_cast<std::size_t>(i)] = x;
    double acc = 0.0;
    for (std::size_t g = 0; g < weights.size(); ++g)
      if (weights[g] > 0.0) acc += weights[g] * normal_pdf(x, means[g], sds[g]);
    d[static_cast<std::size_t>(i)] = acc / total;
  }
  return Marginal(std::move(s), std::move(d));
}

}  // namespace slmfit
