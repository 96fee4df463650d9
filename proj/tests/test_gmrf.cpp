#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include "slmfit/error.hpp"
#include "slmfit/gmrf.hpp"
#include "support.hpp"

using namespace slmfit;
using namespace slmfit::testing;

namespace {

struct Instance {
  SlmSpec spec;
  RhoParam rho;
  double tau;
};

Instance random_instance(Rng& rng, int n, int p) {
  SlmSpec spec = make_slm_spec(random_graph(n, rng), normal_matrix(n, p, rng));
  const RhoParam rho = RhoParam::from_internal(uniform(rng, 0.05, 0.95), spec.bounds());
  return {std::move(spec), rho, std::exp(uniform(rng, -1.0, 2.0))};
}

// Covariance of (x, beta) assembled from x = A (X beta + eps), A = (I - rho W)^{-1},
// beta ~ N(0, Q^{-1}), eps ~ N(0, I / tau).
Eigen::MatrixXd direct_covariance(const Instance& in) {
  const Eigen::Index n = in.spec.n(), p = in.spec.p();
  const Eigen::MatrixXd a =
      (Eigen::MatrixXd::Identity(n, n) - in.rho.external() * dense(in.spec.w)).inverse();
  const Eigen::MatrixXd qinv = Eigen::MatrixXd(in.spec.q_beta).inverse();
  const Eigen::MatrixXd& x = in.spec.x_design;
  Eigen::MatrixXd c(n + p, n + p);
  c.topLeftCorner(n, n) = a * a.transpose() / in.tau + a * x * qinv * x.transpose() * a.transpose();
  c.topRightCorner(n, p) = a * x * qinv;
  c.bottomLeftCorner(p, n) = c.topRightCorner(n, p).transpose();
  c.bottomRightCorner(p, p) = qinv;
  return c;
}

}  // namespace

// Entries of P carry rounding of order eps |P|, which the inverse amplifies
// to eps |C|^2 |P|; C is large under the vague beta prior, so the identity
// is checked relative to its scale.
TEST_CASE("joint precision inverts to the direct covariance") {
  Rng rng(101);
  for (int rep = 0; rep < 40; ++rep) {
    const Instance in = random_instance(rng, 3 + rep % 18, rep % 4);
    const JointPrecision jp = joint_precision(in.spec, in.rho, in.tau);
    const Eigen::MatrixXd inv = Eigen::MatrixXd(jp.p_mat).inverse();
    const Eigen::MatrixXd c = direct_covariance(in);
    CHECK(sup_norm(inv - c) <= 1e-11 * std::max(1.0, sup_norm(c)) * std::max(1.0, sup_norm(c)));
  }
}

TEST_CASE("joint precision inverse is exact to 1e-8 on a well-scaled instance") {
  Rng rng(102);
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 4 + rep % 16, p = 1 + rep % 3;
    SlmSpec spec = make_slm_spec(random_graph(n, rng), normal_matrix(n, p, rng),
                                 SparseMat(sparse_identity(p)));
    const Instance in{std::move(spec), RhoParam::from_external(uniform(rng, -0.5, 0.5), RhoBounds{-1.0, 1.0}), 2.0};
    const JointPrecision jp = joint_precision(in.spec, in.rho, in.tau);
    CHECK(sup_norm(Eigen::MatrixXd(jp.p_mat).inverse() - direct_covariance(in)) <= 1e-8);
  }
}

TEST_CASE("joint precision is symmetric positive definite") {
  Rng rng(103);
  for (int rep = 0; rep < 30; ++rep) {
    const Instance in = random_instance(rng, 4 + rep, 1 + rep % 3);
    const JointPrecision jp = joint_precision(in.spec, in.rho, in.tau);
    CHECK(is_symmetric(jp.p_mat));
    CHECK_NOTHROW(factorize(jp));
  }
}

TEST_CASE("log determinant matches the dense one") {
  Rng rng(107);
  for (int rep = 0; rep < 20; ++rep) {
    const Instance in = random_instance(rng, 10 + 2 * rep, rep % 4);
    const JointPrecision jp = joint_precision(in.spec, in.rho, in.tau);
    const double dense_ld = Eigen::MatrixXd(jp.p_mat).llt().matrixLLT().diagonal().array().log().sum() * 2.0;
    CHECK(std::abs(factorize(jp).log_det() - dense_ld) <= 1e-8 * std::abs(dense_ld));
  }
}

TEST_CASE("sparsity follows the block structure") {
  Rng rng(109);
  for (int rep = 0; rep < 10; ++rep) {
    const Instance in = random_instance(rng, 20 + 5 * rep, 1 + rep % 3);
    const JointPrecision jp = joint_precision(in.spec, in.rho, in.tau);
    const SparseMat wtw = SparseMat(in.spec.w.mat.transpose()) * in.spec.w.mat;
    const Eigen::Index n = in.spec.n(), p = in.spec.p();
    CHECK(jp.p_mat.nonZeros() <= wtw.nonZeros() + 2 * in.spec.w.mat.nonZeros() + n + 2 * n * p + p * p);
  }
}

TEST_CASE("zero-covariate slm term is tau (I - rho W')(I - rho W)") {
  Rng rng(113);
  const Instance in = random_instance(rng, 12, 0);
  const JointPrecision jp = joint_precision(in.spec, in.rho, in.tau);
  const Eigen::MatrixXd s = Eigen::MatrixXd::Identity(12, 12) - in.rho.external() * dense(in.spec.w);
  CHECK(sup_norm(Eigen::MatrixXd(jp.p_mat) - in.tau * s.transpose() * s) <= 1e-12);
}

TEST_CASE("rho scales round trip and clamp") {
  const RhoBounds b{-0.5, 1.0};
  for (double e : {-0.4, 0.0, 0.3, 0.99}) {
    const RhoParam r = RhoParam::from_external(e, b);
    CHECK(r.internal() == doctest::Approx((e + 0.5) / 1.5));
    CHECK(rho_to_external(rho_to_internal(e, b), b) == doctest::Approx(e).epsilon(1e-15));
  }
  CHECK(RhoParam::from_logit(-100.0, b).internal() == kInternalRhoClamp);
  CHECK(RhoParam::from_logit(100.0, b).internal() == 1.0 - kInternalRhoClamp);
  CHECK(RhoParam::from_logit(0.0, b).external() == doctest::Approx(0.25));
  CHECK_THROWS_AS(RhoParam::from_external(1.0, b), InvalidParameter);
}

TEST_CASE("prior densities agree with reference distributions") {
  const LogitGaussianPrior rp{0.3, 10.0};
  const boost::math::normal_distribution<double> nd(0.3, 1.0 / std::sqrt(10.0));
  for (double t : {-2.0, 0.0, 0.7}) CHECK(rp.log_density(t) == doctest::Approx(std::log(boost::math::pdf(nd, t))));
  const LogGammaPrior gp{2.5, 0.4};
  const boost::math::gamma_distribution<double> gd(2.5, 1.0 / 0.4);
  for (double lt : {-3.0, 0.0, 1.5}) {
    const double tau = std::exp(lt);
    CHECK(gp.log_density(lt) == doctest::Approx(std::log(boost::math::pdf(gd, tau) * tau)));
  }
}

TEST_CASE("factor services match dense algebra") {
  Rng rng(127);
  const Instance in = random_instance(rng, 15, 2);
  const JointPrecision jp = joint_precision(in.spec, in.rho, in.tau);
  const CholeskyFactor f = factorize(jp);
  const Eigen::MatrixXd d(jp.p_mat);
  const Eigen::MatrixXd inv = d.inverse();
  const Eigen::VectorXd b = normal_matrix(17, 1, rng);
  CHECK((f.solve(b) - d.ldlt().solve(b)).cwiseAbs().maxCoeff() <= 1e-8 * inv.cwiseAbs().maxCoeff());
  CHECK(f.inverse_quadratic(b) == doctest::Approx(b.dot(inv * b)).epsilon(1e-9));
  const std::vector<Eigen::Index> idx{0, 5, 16};
  const std::vector<double> val{1.0, -2.0, 0.5};
  Eigen::VectorXd a = Eigen::VectorXd::Zero(17);
  for (int k = 0; k < 3; ++k) a[idx[k]] = val[k];
  CHECK(f.inverse_quadratic(idx, val) == doctest::Approx(a.dot(inv * a)).epsilon(1e-9));
  const Eigen::VectorXd mv = f.marginal_variances(idx);
  for (int k = 0; k < 3; ++k) CHECK(mv[k] == doctest::Approx(inv(idx[k], idx[k])).epsilon(1e-9));
}

TEST_CASE("non-SPD input is a numeric failure naming the context") {
  const SparseMat bad = sparse_from_triplets(2, 2, {{0, 0, 1.0}, {0, 1, 2.0}, {1, 0, 2.0}, {1, 1, 1.0}});
  CHECK_THROWS_AS(CholeskyFactor(bad, "probe"), NumericFailure);
  try {
    CholeskyFactor(bad, "probe");
  } catch (const NumericFailure& e) {
    CHECK(std::string(e.what()).find("probe") != std::string::npos);
  }
}

TEST_CASE("conditional latent mean and precision") {
  Rng rng(131);
  const Instance in = random_instance(rng, 10, 2);
  const Eigen::VectorXd beta = normal_matrix(2, 1, rng);
  const ConditionalLatent c = conditional_latent(in.spec, in.rho, in.tau, beta);
  const Eigen::MatrixXd s = Eigen::MatrixXd::Identity(10, 10) - in.rho.external() * dense(in.spec.w);
  CHECK((c.mean - s.inverse() * in.spec.x_design * beta).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(sup_norm(Eigen::MatrixXd(c.precision) - in.tau * s.transpose() * s) <= 1e-12);
  CHECK_THROWS_AS(conditional_latent(in.spec, in.rho, in.tau, Eigen::VectorXd::Zero(3)), InvalidInput);
}

TEST_CASE("slm spec validation") {
  Rng rng(137);
  const WeightsMatrix w = random_graph(8, rng);
  CHECK_THROWS_AS(make_slm_spec(w, Eigen::MatrixXd::Zero(7, 1)), InvalidInput);
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(8, 1);
  x(3, 0) = std::nan("");
  CHECK_THROWS_AS(make_slm_spec(w, x), InvalidInput);
  const SparseMat q = sparse_from_triplets(1, 1, {{0, 0, -1.0}});
  CHECK_THROWS_AS(make_slm_spec(w, Eigen::MatrixXd::Ones(8, 1), q), InvalidInput);
  const SlmSpec s = make_slm_spec(w, Eigen::MatrixXd::Ones(8, 2));
  CHECK(Eigen::MatrixXd(s.q_beta).isApprox(kDefaultBetaPrecision * Eigen::MatrixXd::Identity(2, 2)));
  CHECK(s.w.bounds.has_value());
}

TEST_CASE("covariate scale warning") {
  Eigen::MatrixXd x(4, 3);
  x << 1, 0.1, 1000, 1, 0.2, 3000, 1, 0.3, 2000, 1, 0.1, 5000;
  CHECK_FALSE(covariate_scale_warning(x).empty());
  x.col(2) /= 1000.0;
  CHECK(covariate_scale_warning(x).empty());
}
