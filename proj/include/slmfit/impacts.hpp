#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slmfit/fit.hpp"
#include "slmfit/weights.hpp"

namespace slmfit {

/// n x n matrix of partial derivatives dE[y_i]/dx_jr for one covariate.
Eigen::MatrixXd impact_matrix_dense(ModelKind kind, const WeightsMatrix& w, double rho, double beta,
                                    double gamma = 0.0);

struct AverageImpacts {
  double direct = 0.0;
  double indirect = 0.0;
  double total = 0.0;
};

/// Mean diagonal and mean row sum of an impact matrix.
AverageImpacts average_impacts(const Eigen::MatrixXd& s);

enum class TraceMethod { Automatic, DenseLU, Spectral, Series };

struct TraceTable {
  std::vector<double> rho;
  std::vector<double> inverse;           // tr((I - rho W)^{-1}) / n
  std::vector<double> inverse_times_w;   // tr((I - rho W)^{-1} W) / n
  std::vector<double> tail_bound;        // series route only, else 0
  bool diverged = false;
  TraceMethod method = TraceMethod::Automatic;
  bool stochastic = false;
};

inline constexpr int kSeriesTerms = 50;
inline constexpr Eigen::Index kExactTraceLimit = 5000;

/// Automatic: spectral for n <= kDenseSpectrumLimit, power series above.
/// DenseLU inverts I - rho W per value and is kept as the reference.
TraceTable trace_functions(const WeightsMatrix& w, const std::vector<double>& rho_values,
                           TraceMethod method = TraceMethod::Automatic);

/// n^-1 1'(I - rho W)^{-1} 1 and n^-1 1'(I - rho W)^{-1} W 1.
struct TotalFactors {
  double own = 0.0;
  double lagged = 0.0;
};
TotalFactors total_factors(const WeightsMatrix& w, double rho);

/// Average impacts at fixed parameters from the trace and row-sum formulas.
AverageImpacts average_impacts_at(ModelKind kind, const WeightsMatrix& w, double rho, double beta,
                                  double gamma = 0.0);

struct ProductMoments {
  double mean = 0.0;
  double sd = 0.0;
};

/// Mean and sd of XY for independent X and Y.
ProductMoments product_moments(double mu_x, double sd_x, double mu_y, double sd_y);

enum class ImpactMethod { Exact, GaussianProduct };

struct ImpactEstimate {
  double mean = 0.0;
  double sd = 0.0;
  std::optional<Marginal> marginal;  // absent for a point mass
};

struct ImpactSummary {
  std::string covariate;
  ImpactEstimate direct, indirect, total;
  ImpactMethod method = ImpactMethod::Exact;
};

/// SEM, SDEM, SLX. Direct is the marginal of beta_r; total that of
/// beta_r + c gamma_r with c = sum(W)/n, built grid point by grid point.
std::vector<ImpactSummary> average_impacts_exact(const ModelSpec& model, const FitResult& fit);

/// SLM, SDM. Rho terms and coefficient terms are treated as independent and
/// combined by product moments; the reported marginals are Gaussian.
std::vector<ImpactSummary> average_impacts_approx(const ModelSpec& model, const FitResult& fit);

/// Mean of phi(eta_i) over the posterior mean linear predictor.
double probit_scaling(const FitResult& fit);
double probit_scaling(const Eigen::VectorXd& eta_hat);

/// Dispatches on the model kind and applies the probit scaling when needed.
std::vector<ImpactSummary> compute_impacts(const ModelSpec& model, const FitResult& fit);

}  // namespace slmfit
