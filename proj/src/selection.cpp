#include "slmfit/selection.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "slmfit/error.hpp"
#include "slmfit/kernels.hpp"

namespace slmfit {

std::vector<double> posterior_model_probs(std::span<const double> log_mliks, std::span<const double> prior_probs) {
  if (log_mliks.size() != prior_probs.size()) throw InvalidInput("marginal likelihoods and priors differ in length");
  if (log_mliks.empty()) throw InvalidInput("no models to compare");
  std::vector<double> score(log_mliks.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (std::isnan(log_mliks[i]) || log_mliks[i] == std::numeric_limits<double>::infinity())
      throw InvalidInput("log marginal likelihoods must be finite or -infinity");
    if (!(prior_probs[i] > 0.0) || !std::isfinite(prior_probs[i]))
      throw InvalidInput("prior model probabilities must be positive");
    score[i] = log_mliks[i] + std::log(prior_probs[i]);
    top = std::max(top, score[i]);
  }
  if (!std::isfinite(top)) throw InvalidInput("all log marginal likelihoods are -infinity");
  double total = 0.0;
  for (auto& s : score) {
    s = std::exp(s - top);
    total += s;
  }
  for (auto& s : score) s /= total;
  return score;
}

void update_posteriors(ModelSet& set) {
  double prior_total = 0.0;
  for (const auto& e : set.entries) prior_total += e.prior_prob;
  std::vector<double> lm, pr;
  for (auto& e : set.entries) {
    e.prior_prob /= prior_total;
    lm.push_back(e.log_mlik);
    pr.push_back(e.prior_prob);
  }
  set.posterior_probs = set.entries.empty() ? std::vector<double>{} : posterior_model_probs(lm, pr);
}

ScanPrior parse_scan_prior(const std::string& text) {
  std::string low(text);
  std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
  if (low == "uniform") return ScanPrior::Uniform;
  if (low == "inverse_square" || low == "1/k^2") return ScanPrior::InverseSquare;
  throw InvalidInput("unknown neighbour prior '" + text + "' (expected uniform or inverse_square)");
}

double scan_prior_weight(ScanPrior prior, int k) {
  return prior == ScanPrior::Uniform ? 1.0 : 1.0 / (static_cast<double>(k) * k);
}

ModelSet neighbor_scan(const ScanInput& input, std::span<const int> k_range, ScanPrior prior, bool parallel) {
  if (k_range.empty()) throw InvalidInput("neighbour range is empty");
  const auto n = static_cast<int>(input.coords.size());
  for (int k : k_range)
    if (k < 1 || k >= n) {
      std::ostringstream msg;
      msg << "k = " << k << " must lie in [1, " << n - 1 << "]";
      throw InvalidInput(msg.str());
    }

  struct Outcome {
    bool ok = false;
    FitResult fit;
    std::string error;
  };
  auto run = [&](std::size_t i) {
    Outcome o;
    try {
      WeightsMatrix w = row_standardize(knn_adjacency(input.coords, k_range[i]));
      const ModelSpec spec = build(input.kind, input.y, input.x, std::move(w), std::nullopt, input.options);
      GridOptions g = input.grid;
      g.parallel = g.parallel && !parallel;
      o.fit = fit(spec, g);
      o.ok = std::isfinite(o.fit.log_mlik);
      if (!o.ok) o.error = "non-finite marginal likelihood";
    } catch (const Error& e) {
      o.error = e.what();
    }
    return o;
  };
  std::vector<Outcome> outcomes = parallel ? kernels::parallel_map<Outcome>(k_range.size(), run)
                                           : kernels::serial_map<Outcome>(k_range.size(), run);

  ModelSet set;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const int k = k_range[i];
    if (!outcomes[i].ok) {
      std::ostringstream msg;
      msg << "fit with k = " << k << " failed and was excluded: " << outcomes[i].error;
      set.warnings.push_back(msg.str());
      continue;
    }
    ModelEntry e;
    e.label = "k=" + std::to_string(k);
    e.k = k;
    e.log_mlik = outcomes[i].fit.log_mlik;
    e.prior_prob = scan_prior_weight(prior, k);
    e.fit = std::move(outcomes[i].fit);
    set.entries.push_back(std::move(e));
  }
  if (set.entries.empty()) throw NumericFailure("every fit in the neighbour scan failed");
  update_posteriors(set);
  return set;
}

MarginalSelector select_coefficient(const std::string& name) {
  return [name](const FitResult& f) -> const Marginal* {
    for (std::size_t j = 0; j < f.coefficient_names.size(); ++j)
      if (f.coefficient_names[j] == name) return &f.coef_marginals[j];
    return nullptr;
  };
}

MarginalSelector select_hyperparameter(const std::string& name) {
  return [name](const FitResult& f) { return f.hyper(name); };
}

Marginal bma_combine(const ModelSet& set, const MarginalSelector& selector) {
  if (set.entries.empty()) throw InvalidInput("empty model set");
  std::vector<const Marginal*> parts;
  for (const auto& e : set.entries) {
    const Marginal* m = selector(e.fit);
    if (!m || m->empty()) throw InvalidInput("selected quantity is missing from model '" + e.label + "'");
    parts.push_back(m);
  }
  if (parts.size() == 1) return *parts.front();

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* m : parts) {
    lo = std::min(lo, m->support().front());
    hi = std::max(hi, m->support().back());
  }
  // Every component is linear between consecutive abscissae of the union,
  // so the mixture is represented exactly. Knots just outside each support
  // make the drop to zero sharp.
  const double eps = 1e-12 * (hi - lo);
  std::set<double> knots;
  for (const auto* m : parts) {
    knots.insert(m->support().begin(), m->support().end());
    if (m->support().front() - eps > lo) knots.insert(m->support().front() - eps);
    if (m->support().back() + eps < hi) knots.insert(m->support().back() + eps);
  }
  std::vector<double> s(knots.begin(), knots.end());
  std::vector<double> d(s.size(), 0.0);
  for (std::size_t c = 0; c < parts.size(); ++c) {
    const double p = set.posterior_probs[c];
    if (p == 0.0) continue;
    for (std::size_t i = 0; i < s.size(); ++i) d[i] += p * parts[c]->density_at(s[i]);
  }
  return Marginal(std::move(s), std::move(d));
}

StepwiseResult stepwise_dic(const std::function<double(const std::vector<std::size_t>&)>& score,
                            std::size_t n_columns, std::vector<std::size_t> start,
                            std::vector<std::size_t> keep, double delta) {
  auto normalize = [](std::vector<std::size_t> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  std::vector<std::size_t> current = normalize(start);
  for (auto k : keep)
    if (std::find(current.begin(), current.end(), k) == current.end()) current.push_back(k);
  current = normalize(current);

  StepwiseResult r;
  r.columns = current;
  r.dic = score(current);
  r.path.push_back({current, r.dic, "start"});
  for (;;) {
    double best = r.dic;
    std::vector<std::size_t> best_cols;
    std::string best_move;
    for (std::size_t j = 0; j < n_columns; ++j) {
      const bool in = std::find(r.columns.begin(), r.columns.end(), j) != r.columns.end();
      if (in && std::find(keep.begin(), keep.end(), j) != keep.end()) continue;
      std::vector<std::size_t> cand = r.columns;
      if (in) cand.erase(std::find(cand.begin(), cand.end(), j));
      else cand.push_back(j);
      cand = normalize(cand);
      if (cand.empty()) continue;
      double v;
      try {
        v = score(cand);
      } catch (const Error&) {
        continue;
      }
      if (v < best) {
        best = v;
        best_cols = cand;
        best_move = (in ? "drop " : "add ") + std::to_string(j);
      }
    }
    if (best_cols.empty() || !(r.dic - best > delta)) break;
    r.columns = best_cols;
    r.dic = best;
    r.path.push_back({best_cols, best, best_move});
  }
  return r;
}

StepwiseResult stepwise_dic(ModelKind kind, const Eigen::VectorXd& y, const Design& x, const WeightsMatrix& w,
                            const ModelOptions& options, const GridOptions& grid, double delta) {
  auto subset = [&](const std::vector<std::size_t>& cols) {
    Design d;
    d.x.resize(x.x.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      d.x.col(static_cast<Eigen::Index>(c)) = x.x.col(static_cast<Eigen::Index>(cols[c]));
      d.names.push_back(x.names[cols[c]]);
      if (x.intercept && static_cast<std::size_t>(*x.intercept) == cols[c]) d.intercept = static_cast<Eigen::Index>(c);
    }
    return d;
  };
  auto score = [&](const std::vector<std::size_t>& cols) {
    const ModelSpec spec = build(kind, y, subset(cols), w, std::nullopt, options);
    return fit(spec, grid).dic.dic;
  };
  std::vector<std::size_t> keep;
  if (x.intercept) keep.push_back(static_cast<std::size_t>(*x.intercept));
  return stepwise_dic(score, static_cast<std::size_t>(x.x.cols()), keep, keep, delta);
}

}  // namespace slmfit
