#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "engine_oracles.hpp"
#include "slmfit/error.hpp"
#include "slmfit/selection.hpp"

using namespace slmfit;
using namespace slmfit::testing;

namespace {

ScanInput scan_problem(int n, Rng& rng) {
  ScanInput in;
  in.coords = random_points(n, rng);
  in.x = with_intercept(normal_matrix(n, 1, rng), {"a"});
  const WeightsMatrix w = row_standardize(knn_adjacency(in.coords, 6));
  const Eigen::VectorXd e = normal_matrix(n, 1, rng, 0.7);
  in.y = in.x.x * Eigen::Vector2d(0.5, 1.0) + lag_inverse(w, 0.6) * e;
  in.kind = ModelKind::SEM;
  return in;
}

}  // namespace

TEST_CASE("posterior model probabilities by hand") {
  const std::vector<double> lm{-10.0, -11.0, -12.5};
  const std::vector<double> pr{0.2, 0.3, 0.5};
  const auto p = posterior_model_probs(lm, pr);
  double z = 0;
  std::vector<double> ref(3);
  for (int i = 0; i < 3; ++i) z += ref[i] = std::exp(lm[i]) * pr[i];
  for (int i = 0; i < 3; ++i) CHECK(std::abs(p[i] - ref[i] / z) < 1e-12);
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("posterior probabilities ignore a common shift") {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> lm(6), pr(6), shifted(6);
    const double c = uniform(rng, -5000, 5000);
    for (int i = 0; i < 6; ++i) {
      lm[i] = uniform(rng, -20, 0);
      pr[i] = uniform(rng, 0.1, 1);
      shifted[i] = lm[i] + c;
    }
    const auto a = posterior_model_probs(lm, pr);
    const auto b = posterior_model_probs(shifted, pr);
    for (int i = 0; i < 6; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
    // Uniform priors keep the marginal likelihood order.
    const auto u = posterior_model_probs(lm, std::vector<double>(6, 1.0));
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        if (lm[i] > lm[j]) CHECK(u[i] > u[j]);
  }
}

TEST_CASE("posterior probability edge cases") {
  const double inf = std::numeric_limits<double>::infinity();
  const auto p = posterior_model_probs(std::vector<double>{-inf, 3.0}, std::vector<double>{1.0, 1.0});
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 1.0);
  CHECK_THROWS_AS(posterior_model_probs(std::vector<double>{}, std::vector<double>{}), InvalidInput);
  CHECK_THROWS_AS(posterior_model_probs(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), InvalidInput);
  CHECK_THROWS_AS(posterior_model_probs(std::vector<double>{std::nan("")}, std::vector<double>{1.0}), InvalidInput);
  CHECK_THROWS_AS(posterior_model_probs(std::vector<double>{-inf}, std::vector<double>{1.0}), InvalidInput);
  CHECK_THROWS_AS(posterior_model_probs(std::vector<double>{0.0}, std::vector<double>{0.0}), InvalidInput);
}

TEST_CASE("scan priors") {
  CHECK(scan_prior_weight(ScanPrior::Uniform, 7) == 1.0);
  CHECK(scan_prior_weight(ScanPrior::InverseSquare, 4) == 1.0 / 16);
  CHECK(parse_scan_prior("Uniform") == ScanPrior::Uniform);
  CHECK(parse_scan_prior("inverse_square") == ScanPrior::InverseSquare);
  CHECK_THROWS_AS(parse_scan_prior("flat"), InvalidInput);
}

TEST_CASE("neighbour scan and model averaging") {
  Rng rng(2);
  const ScanInput in = scan_problem(60, rng);
  const std::vector<int> ks{3, 5, 7, 9};
  const ModelSet set = neighbor_scan(in, ks, ScanPrior::InverseSquare);
  REQUIRE(set.entries.size() == 4);
  CHECK(set.warnings.empty());
  double prior_total = 0, post_total = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(*set.entries[i].k == ks[i]);
    prior_total += set.entries[i].prior_prob;
    post_total += set.posterior_probs[i];
  }
  CHECK(prior_total == doctest::Approx(1.0));
  CHECK(post_total == doctest::Approx(1.0));
  CHECK(set.entries[0].prior_prob / set.entries[1].prior_prob == doctest::Approx(25.0 / 9.0));

  // Each entry equals a direct fit on the same graph.
  const WeightsMatrix w5 = row_standardize(knn_adjacency(in.coords, 5));
  const FitResult direct = fit(build(in.kind, in.y, in.x, w5, std::nullopt, in.options), in.grid);
  CHECK(set.entries[1].log_mlik == doctest::Approx(direct.log_mlik).epsilon(1e-10));

  const ModelSet serial = neighbor_scan(in, ks, ScanPrior::InverseSquare, false);
  for (std::size_t i = 0; i < 4; ++i) CHECK(serial.entries[i].log_mlik == set.entries[i].log_mlik);

  for (const auto& sel : {select_coefficient("a"), select_hyperparameter("rho")}) {
    const Marginal m = bma_combine(set, sel);
    CHECK(m.integral() == doctest::Approx(1.0).epsilon(1e-6));
    double mean = 0;
    for (std::size_t i = 0; i < 4; ++i) mean += set.posterior_probs[i] * sel(set.entries[i].fit)->mean();
    CHECK(std::abs(m.mean() - mean) < 1e-8);
  }
  CHECK_THROWS_AS(bma_combine(set, select_coefficient("nope")), InvalidInput);
}

TEST_CASE("failed fits are dropped from the scan") {
  Rng rng(3);
  ScanInput in = scan_problem(40, rng);
  const std::vector<int> ks{1, 2, 4, 8, 12};
  // A lower rho limit between the graphs' own limits makes the graphs
  // whose admissible range is narrower fail at build time.
  std::vector<double> mins;
  for (int k : ks) mins.push_back(with_rho_bounds(row_standardize(knn_adjacency(in.coords, k))).bounds->min);
  std::vector<double> sorted = mins;
  std::sort(sorted.begin(), sorted.end());
  REQUIRE(sorted[1] < sorted[3]);
  const double limit = 0.5 * (sorted[1] + sorted[2]);
  in.options.rho_bounds = RhoBounds{limit, 0.9};
  std::vector<int> expected_ok;
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (mins[i] <= limit) expected_ok.push_back(ks[i]);
  REQUIRE(!expected_ok.empty());
  REQUIRE(expected_ok.size() < ks.size());
  const ModelSet set = neighbor_scan(in, ks, ScanPrior::Uniform);
  REQUIRE(set.entries.size() == expected_ok.size());
  for (std::size_t i = 0; i < expected_ok.size(); ++i) CHECK(*set.entries[i].k == expected_ok[i]);
  CHECK(set.warnings.size() == ks.size() - expected_ok.size());
  double total = 0;
  for (double p : set.posterior_probs) total += p;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("scan range validation") {
  Rng rng(4);
  const ScanInput in = scan_problem(20, rng);
  CHECK_THROWS_AS(neighbor_scan(in, std::vector<int>{}, ScanPrior::Uniform), InvalidInput);
  CHECK_THROWS_AS(neighbor_scan(in, std::vector<int>{0}, ScanPrior::Uniform), InvalidInput);
  CHECK_THROWS_AS(neighbor_scan(in, std::vector<int>{20}, ScanPrior::Uniform), InvalidInput);
}

TEST_CASE("stepwise search on a known score") {
  // Columns 1 and 3 help, every other addition costs 3.
  int calls = 0;
  auto score = [&](const std::vector<std::size_t>& s) {
    ++calls;
    double v = 100.0;
    for (auto c : s) v += (c == 1 || c == 3) ? -10.0 : (c == 0 ? 0.0 : 3.0);
    return v;
  };
  const StepwiseResult r = stepwise_dic(score, 6, {0, 4}, {0});
  CHECK(r.columns == std::vector<std::size_t>{0, 1, 3});
  CHECK(r.dic == 80.0);
  CHECK(r.path.front().move == "start");
  CHECK(r.path.size() == 4);
  for (std::size_t i = 1; i < r.path.size(); ++i) CHECK(r.path[i].dic < r.path[i - 1].dic - 2.0);

  // Improvements of at most delta are not taken.
  const StepwiseResult lazy = stepwise_dic(score, 6, {0}, {0}, 10.0);
  CHECK(lazy.columns == std::vector<std::size_t>{0});
}

TEST_CASE("stepwise keeps required columns and skips failing subsets") {
  auto score = [](const std::vector<std::size_t>& s) {
    if (std::find(s.begin(), s.end(), 2) != s.end()) throw NumericFailure("bad subset");
    return 50.0 + 5.0 * static_cast<double>(s.size());
  };
  const StepwiseResult r = stepwise_dic(score, 4, {0, 1, 3}, {1});
  CHECK(r.columns == std::vector<std::size_t>{1});
}

TEST_CASE("stepwise over model designs") {
  Rng rng(5);
  const int n = 80;
  const WeightsMatrix w = lattice(8, 10);
  const Design x = with_intercept(normal_matrix(n, 3, rng), {"signal", "noise1", "noise2"});
  const Eigen::VectorXd y = x.x * Eigen::Vector4d(0.3, 2.0, 0.0, 0.0) + normal_matrix(n, 1, rng, 0.5);
  ModelOptions o;
  o.estimate_obs_precision = true;
  o.slx_iid_effect = false;
  const StepwiseResult r = stepwise_dic(ModelKind::SLX, y, x, w, o);
  REQUIRE(!r.columns.empty());
  CHECK(r.columns.front() == 0);
  CHECK(std::find(r.columns.begin(), r.columns.end(), 1) != r.columns.end());
  CHECK(r.path.size() >= 2);
  CHECK(r.path[1].move == "add 1");
}
