#include "slmfit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "slmfit/error.hpp"
#include "slmfit/impacts.hpp"
#include "slmfit/kernels.hpp"

namespace slmfit::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string where(const YAML::Node& node, const std::string& source) {
  std::ostringstream msg;
  const YAML::Mark m = node.Mark();
  msg << source;
  if (!m.is_null()) msg << ":" << m.line + 1 << ":" << m.column + 1;
  return msg.str();
}

void check_keys(const YAML::Node& node, std::initializer_list<const char*> allowed, const std::string& section,
                const std::string& source) {
  if (!node.IsMap()) throw InvalidInput(where(node, source) + ": section '" + section + "' must be a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw InvalidInput(where(kv.first, source) + ": unknown key '" + key + "' in '" + section + "'");
  }
}

template <class T>
void read(const YAML::Node& parent, const char* key, T& out) {
  const YAML::Node n = parent[key];
  if (n) out = n.as<T>();
}

template <class T>
void read_optional(const YAML::Node& parent, const char* key, std::optional<T>& out) {
  const YAML::Node n = parent[key];
  if (n && !n.IsNull()) out = n.as<T>();
}

LogGammaPrior read_gamma(const YAML::Node& n, LogGammaPrior p, const std::string& section, const std::string& source) {
  if (!n) return p;
  check_keys(n, {"shape", "rate"}, section, source);
  read(n, "shape", p.shape);
  read(n, "rate", p.rate);
  if (!(p.shape > 0.0) || !(p.rate > 0.0))
    throw InvalidInput(where(n, source) + ": gamma prior needs positive shape and rate");
  return p;
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty()) return p;
  const fs::path path(p);
  return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) out += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ? c : '_';
  return out;
}

ojson number(double v) {
  if (std::isfinite(v)) return v;
  return io::format_double(v);
}

ojson summary_json(const Marginal& m) {
  const MarginalSummary s = summarize(m);
  ojson j;
  j["mean"] = number(s.mean);
  j["sd"] = number(s.sd);
  j["0.025quant"] = number(s.q025);
  j["0.5quant"] = number(s.q500);
  j["0.975quant"] = number(s.q975);
  return j;
}

std::string summary_cells(const Marginal& m) {
  const MarginalSummary s = summarize(m);
  return io::format_double(s.mean) + "," + io::format_double(s.sd) + "," + io::format_double(s.q025) + "," +
         io::format_double(s.q500) + "," + io::format_double(s.q975);
}

struct FittedModel {
  ModelSpec spec;
  FitResult fit;
};

std::vector<FittedModel> fit_all(const RunConfig& config, const Inputs& in, std::ostream& log) {
  std::vector<FittedModel> out;
  for (ModelKind kind : config.kinds) {
    log << "fitting " << to_string(kind) << " (" << to_string(config.options.likelihood) << ")\n";
    FittedModel f{build(kind, in.y, in.x, *in.w, kind == ModelKind::SDEM ? in.m : std::nullopt, config.options), {}};
    f.fit = fit(f.spec, config.grid);
    for (const auto& w : f.fit.warnings) log << "  warning: " << w << "\n";
    log << "  log marginal likelihood " << io::format_double(f.fit.log_mlik) << ", DIC "
        << io::format_double(f.fit.dic.dic) << "\n";
    out.push_back(std::move(f));
  }
  return out;
}

bool has_lag_column(ModelKind kind) {
  return kind == ModelKind::SDM || kind == ModelKind::SDEM || kind == ModelKind::SLX;
}

std::string coefficient_table(const std::vector<FittedModel>& models, const Design& x) {
  std::ostringstream out;
  out << "term[posterior_mean]";
  for (const auto& m : models) {
    out << "," << to_string(m.spec.kind);
    if (has_lag_column(m.spec.kind)) out << "," << to_string(m.spec.kind) << "lag";
  }
  out << "\n";
  auto lookup = [](const FitResult& f, const std::string& name) {
    for (std::size_t j = 0; j < f.coefficient_names.size(); ++j)
      if (f.coefficient_names[j] == name) return f.coef_marginals[j].mean();
    return std::nan("");
  };
  for (const auto& name : x.names) {
    out << name;
    for (const auto& m : models) {
      out << "," << io::format_double(lookup(m.fit, name));
      if (has_lag_column(m.spec.kind)) out << "," << io::format_double(lookup(m.fit, "lag." + name));
    }
    out << "\n";
  }
  auto stat_row = [&](const char* label, auto get) {
    out << label;
    for (const auto& m : models) {
      out << "," << io::format_double(get(m.fit));
      if (has_lag_column(m.spec.kind)) out << "," << io::kMissingToken;
    }
    out << "\n";
  };
  stat_row("DIC", [](const FitResult& f) { return f.dic.dic; });
  stat_row("M. Lik.", [](const FitResult& f) { return f.log_mlik; });
  stat_row("Eff. N. P.", [](const FitResult& f) { return f.dic.p_eff; });
  return out.str();
}

const char* scale_of(const std::string& param) { return param == "rho" ? "external" : "precision"; }

void add_model_outputs(io::OutputSet& outputs, const RunConfig& config, const FittedModel& m) {
  const std::string kind = to_string(m.spec.kind);
  const FitResult& f = m.fit;
  ojson j;
  j["model"] = kind;
  j["likelihood"] = to_string(m.spec.likelihood);
  j["n"] = m.spec.n();
  j["observed"] = m.spec.observed.size();
  if (m.spec.slm) {
    const RhoBounds b = m.spec.slm->bounds();
    j["rho_scale"] = "external";
    j["rho_bounds"] = {number(b.min), number(b.max)};
    if (m.spec.slm->rho_fixed) j["rho_fixed"] = number(*m.spec.slm->rho_fixed);
  }
  ojson hyper = ojson::object();
  for (const auto& h : f.hyper_marginals) {
    hyper[h.name] = summary_json(h.marginal);
    outputs.add("marginals/" + kind + "/" + sanitize(h.name) + ".csv",
                io::marginal_csv(h.marginal, h.name + "[" + scale_of(h.name) + "]"));
  }
  j["hyperparameters"] = hyper;
  ojson coefs = ojson::object();
  for (std::size_t c = 0; c < f.coefficient_names.size(); ++c) {
    coefs[f.coefficient_names[c]] = summary_json(f.coef_marginals[c]);
    outputs.add("marginals/" + kind + "/coef_" + sanitize(f.coefficient_names[c]) + ".csv",
                io::marginal_csv(f.coef_marginals[c], f.coefficient_names[c]));
  }
  j["coefficients"] = coefs;
  j["log_mlik"] = number(f.log_mlik);
  j["dic"] = number(f.dic.dic);
  j["p_eff"] = number(f.dic.p_eff);
  j["grid"] = {{"dimension", f.grid.dim()},
               {"points", f.grid.points.size()},
               {"mode", std::vector<double>(f.grid.mode.data(), f.grid.mode.data() + f.grid.mode.size())},
               {"sigma", std::vector<double>(f.grid.sigma.data(), f.grid.sigma.data() + f.grid.sigma.size())}};
  j["missing"] = f.missing.size();
  j["seed"] = config.seed;
  j["warnings"] = f.warnings;
  outputs.add("models/" + kind + ".json", j.dump(2) + "\n");

  if (!f.missing.empty()) {
    std::string csv = "index,mean,sd,0.025quant,0.5quant,0.975quant\n";
    for (std::size_t k = 0; k < f.missing.size(); ++k) {
      csv += std::to_string(f.missing[k]) + "," + summary_cells(f.predictive[k]) + "\n";
      outputs.add("marginals/" + kind + "/predictive_" + std::to_string(f.missing[k]) + ".csv",
                  io::marginal_csv(f.predictive[k], m.spec.likelihood == Likelihood::Probit ? "probability" : "y"));
    }
    outputs.add("predictive_" + kind + ".csv", csv);
  }
}

void add_impact_outputs(io::OutputSet& outputs, const std::vector<FittedModel>& models) {
  struct Row {
    std::string kind;
    std::vector<ImpactSummary> s;
  };
  std::vector<Row> rows;
  for (const auto& m : models) {
    Row r{to_string(m.spec.kind), compute_impacts(m.spec, m.fit)};
    std::string csv = "covariate,effect,mean,sd,method\n";
    for (const auto& s : r.s) {
      const char* method = s.method == ImpactMethod::Exact ? "exact" : "gaussian_product";
      const std::pair<const char*, const ImpactEstimate*> parts[] = {
          {"direct", &s.direct}, {"indirect", &s.indirect}, {"total", &s.total}};
      for (const auto& [label, e] : parts)
        csv += s.covariate + "," + label + "," + io::format_double(e->mean) + "," + io::format_double(e->sd) +
               "," + method + "\n";
    }
    outputs.add("impacts_" + r.kind + ".csv", csv);
    rows.push_back(std::move(r));
  }
  const std::pair<const char*, ImpactEstimate ImpactSummary::*> effects[] = {
      {"direct", &ImpactSummary::direct}, {"indirect", &ImpactSummary::indirect}, {"total", &ImpactSummary::total}};
  for (const auto& [label, member] : effects) {
    std::string csv = "covariate";
    for (const auto& r : rows) csv += "," + r.kind + "_mean," + r.kind + "_sd";
    csv += "\n";
    if (!rows.empty())
      for (std::size_t c = 0; c < rows.front().s.size(); ++c) {
        csv += rows.front().s[c].covariate;
        for (const auto& r : rows) {
          const ImpactEstimate& e = r.s[c].*member;
          csv += "," + io::format_double(e.mean) + "," + io::format_double(e.sd);
        }
        csv += "\n";
      }
    outputs.add(std::string("impacts_") + label + ".csv", csv);
  }
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& base_dir, const std::string& source) {
  RunConfig c;
  c.base_dir = base_dir;
  try {
    const YAML::Node root = YAML::Load(text);
    if (!root || root.IsNull()) throw InvalidInput(source + ": empty configuration");
    check_keys(root, {"data", "weights", "model", "priors", "grid", "impacts", "scan", "output", "seed", "threads"},
               "top level", source);

    const YAML::Node data = root["data"];
    if (!data) throw InvalidInput(where(root, source) + ": missing 'data' section");
    check_keys(data, {"table", "response", "covariates", "intercept"}, "data", source);
    read(data, "table", c.table);
    read(data, "response", c.response);
    read(data, "covariates", c.covariates);
    read(data, "intercept", c.intercept);
    if (c.table.empty() || c.response.empty())
      throw InvalidInput(where(data, source) + ": 'data' needs 'table' and 'response'");
    c.table = resolve(base_dir, c.table);

    if (const YAML::Node w = root["weights"]) {
      check_keys(w, {"file", "points", "k", "standardize", "error_file"}, "weights", source);
      read(w, "file", c.weights_file);
      read(w, "points", c.points_file);
      read(w, "k", c.k);
      read_optional(w, "standardize", c.standardize);
      read(w, "error_file", c.error_weights_file);
      c.weights_file = resolve(base_dir, c.weights_file);
      c.points_file = resolve(base_dir, c.points_file);
      c.error_weights_file = resolve(base_dir, c.error_weights_file);
      if (!c.weights_file.empty() && !c.points_file.empty())
        throw InvalidInput(where(w, source) + ": give either 'file' or 'points', not both");
    }

    if (const YAML::Node m = root["model"]) {
      check_keys(m, {"kinds", "likelihood", "rho_bounds", "rho_fixed", "tau_fixed", "iid_precision_fixed",
                     "estimate_obs_precision", "obs_precision", "slx_iid"},
                 "model", source);
      if (const YAML::Node k = m["kinds"]) {
        const auto names = k.IsSequence() ? k.as<std::vector<std::string>>()
                                          : std::vector<std::string>{k.as<std::string>()};
        for (const auto& n : names) {
          try {
            c.kinds.push_back(parse_model_kind(n));
          } catch (const InvalidInput& e) {
            throw InvalidInput(where(k, source) + ": " + e.what());
          }
        }
      }
      if (const YAML::Node l = m["likelihood"]) {
        try {
          c.options.likelihood = parse_likelihood(l.as<std::string>());
        } catch (const InvalidInput& e) {
          throw InvalidInput(where(l, source) + ": " + e.what());
        }
      }
      if (const YAML::Node b = m["rho_bounds"]) {
        const auto v = b.as<std::vector<double>>();
        if (v.size() != 2 || !(v[0] < v[1])) throw InvalidInput(where(b, source) + ": rho_bounds must be [min, max]");
        c.options.rho_bounds = RhoBounds{v[0], v[1]};
      }
      read_optional(m, "rho_fixed", c.options.rho_fixed);
      read_optional(m, "tau_fixed", c.options.tau_fixed);
      read_optional(m, "iid_precision_fixed", c.options.iid_precision_fixed);
      read(m, "estimate_obs_precision", c.options.estimate_obs_precision);
      read(m, "obs_precision", c.options.obs_precision);
      read_optional(m, "slx_iid", c.options.slx_iid_effect);
    }

    if (const YAML::Node p = root["priors"]) {
      check_keys(p, {"beta_precision", "rho", "tau", "iid", "obs"}, "priors", source);
      read(p, "beta_precision", c.options.priors.beta_precision);
      if (!(c.options.priors.beta_precision > 0.0))
        throw InvalidInput(where(p, source) + ": beta_precision must be positive");
      if (const YAML::Node r = p["rho"]) {
        check_keys(r, {"mean", "precision"}, "priors.rho", source);
        read(r, "mean", c.options.priors.rho.mean);
        read(r, "precision", c.options.priors.rho.precision);
        if (!(c.options.priors.rho.precision > 0.0))
          throw InvalidInput(where(r, source) + ": rho prior precision must be positive");
      }
      c.options.priors.tau = read_gamma(p["tau"], c.options.priors.tau, "priors.tau", source);
      c.options.priors.iid = read_gamma(p["iid"], c.options.priors.iid, "priors.iid", source);
      c.options.priors.obs = read_gamma(p["obs"], c.options.priors.obs, "priors.obs", source);
    }

    if (const YAML::Node g = root["grid"]) {
      check_keys(g, {"half_width", "step", "max_drop", "hessian_step"}, "grid", source);
      read(g, "half_width", c.grid.half_width);
      read(g, "step", c.grid.step);
      read(g, "max_drop", c.grid.max_drop);
      read(g, "hessian_step", c.grid.hessian_step);
      if (c.grid.half_width < 0 || !(c.grid.step > 0.0) || !(c.grid.max_drop > 0.0) || !(c.grid.hessian_step > 0.0))
        throw InvalidInput(where(g, source) + ": grid settings must be positive");
    }

    read(root, "impacts", c.impacts);

    if (const YAML::Node s = root["scan"]) {
      check_keys(s, {"kind", "k_min", "k_max", "prior", "bma"}, "scan", source);
      ScanConfig sc;
      if (const YAML::Node k = s["kind"]) sc.kind = parse_model_kind(k.as<std::string>());
      read(s, "k_min", sc.k_min);
      read(s, "k_max", sc.k_max);
      if (const YAML::Node pr = s["prior"]) sc.prior = parse_scan_prior(pr.as<std::string>());
      read(s, "bma", sc.bma);
      if (sc.k_min < 1 || sc.k_max < sc.k_min) throw InvalidInput(where(s, source) + ": need 1 <= k_min <= k_max");
      c.scan = sc;
    }

    read(root, "output", c.output);
    c.output = resolve(base_dir, c.output);
    read(root, "seed", c.seed);
    read(root, "threads", c.threads);
  } catch (const YAML::Exception& e) {
    std::ostringstream msg;
    msg << source;
    if (!e.mark.is_null()) msg << ":" << e.mark.line + 1 << ":" << e.mark.column + 1;
    msg << ": " << e.msg;
    throw InvalidInput(msg.str());
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const fs::path p(path);
  const std::string base = p.has_parent_path() ? p.parent_path().string() : ".";
  return parse_config(ss.str(), base, path);
}

Inputs load_inputs(const RunConfig& config, bool need_weights) {
  Inputs in;
  const io::Table t = io::read_table(config.table);
  if (t.rows() == 0) throw InvalidInput(config.table + ": no data rows");
  const std::size_t yc = t.column(config.response);
  std::vector<std::string> covs = config.covariates;
  if (covs.empty())
    for (const auto& n : t.names)
      if (n != config.response) covs.push_back(n);
  const auto n = static_cast<Eigen::Index>(t.rows());
  in.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) in.y[i] = t.columns[yc][static_cast<std::size_t>(i)];
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(covs.size()));
  for (std::size_t j = 0; j < covs.size(); ++j) {
    const std::size_t col = t.column(covs[j]);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = t.columns[col][static_cast<std::size_t>(i)];
      if (std::isnan(v)) {
        std::ostringstream msg;
        msg << config.table << ": covariate '" << covs[j] << "' is missing in row " << i
            << " (only the response may contain NA)";
        throw InvalidInput(msg.str());
      }
      x(i, static_cast<Eigen::Index>(j)) = v;
    }
  }
  if (config.intercept) {
    in.x = with_intercept(x, covs);
  } else {
    in.x.x = x;
    in.x.names = covs;
  }

  if (!config.points_file.empty()) in.coords = io::read_points(config.points_file);
  if (!need_weights) return in;
  if (!config.weights_file.empty()) {
    WeightsMatrix w = io::read_weights(config.weights_file);
    if (config.standardize.value_or(false) && !w.standardized) w = row_standardize(w);
    in.w = std::move(w);
  } else if (!in.coords.empty()) {
    if (config.k < 1) throw InvalidInput("weights from points need k >= 1");
    WeightsMatrix w = knn_adjacency(in.coords, config.k);
    if (config.standardize.value_or(true)) w = row_standardize(w);
    in.w = std::move(w);
  } else {
    throw InvalidInput("no spatial weights: set weights.file or weights.points with weights.k");
  }
  if (in.w->n() != n) {
    std::ostringstream msg;
    msg << "weights are " << in.w->n() << " x " << in.w->n() << " but the table has " << n << " rows";
    throw InvalidInput(msg.str());
  }
  if (!config.error_weights_file.empty()) {
    WeightsMatrix m = io::read_weights(config.error_weights_file);
    if (config.standardize.value_or(false) && !m.standardized) m = row_standardize(m);
    in.m = std::move(m);
  }
  return in;
}

std::vector<std::string> validate(const RunConfig& config) {
  std::vector<std::string> issues;
  if (config.kinds.empty() && !config.scan) issues.push_back("no model kinds requested");
  Inputs in;
  try {
    in = load_inputs(config, !config.scan || !config.kinds.empty() || config.points_file.empty());
  } catch (const Error& e) {
    issues.push_back(e.what());
    return issues;
  }
  if (config.options.likelihood == Likelihood::Probit) {
    for (Eigen::Index i = 0; i < in.y.size(); ++i)
      if (!std::isnan(in.y[i]) && in.y[i] != 0.0 && in.y[i] != 1.0) {
        std::ostringstream msg;
        msg << "non-binary response: row " << i << " has value " << io::format_double(in.y[i]);
        issues.push_back(msg.str());
        break;
      }
  }
  bool any_observed = false;
  for (Eigen::Index i = 0; i < in.y.size(); ++i) any_observed = any_observed || !std::isnan(in.y[i]);
  if (!any_observed) issues.push_back("all responses are missing");
  if (const auto w = covariate_scale_warning(in.x.x); !w.empty()) issues.push_back("rescale warning: " + w);
  if (in.w)
    for (const auto& w : in.w->warnings) issues.push_back("weights: " + w);
  if (in.m && in.m->n() != in.y.size()) issues.push_back("error weights matrix M is not conformable with the data");
  if (config.scan && !in.coords.empty() && config.scan->k_max >= static_cast<int>(in.coords.size()))
    issues.push_back("scan k_max must be smaller than the number of points");
  if (config.scan && in.coords.empty()) issues.push_back("scan needs weights.points");
  return issues;
}

io::OutputSet run_fit(const RunConfig& config, bool impacts, std::ostream& log) {
  if (config.kinds.empty()) throw InvalidInput("no model kinds requested");
  const Inputs in = load_inputs(config);
  const std::vector<FittedModel> models = fit_all(config, in, log);

  io::OutputSet outputs;
  for (const auto& m : models) add_model_outputs(outputs, config, m);
  outputs.add("coefficients.csv", coefficient_table(models, in.x));

  std::string rho = "model,parameter,scale,mean,sd,0.025quant,0.5quant,0.975quant\n";
  for (const auto& m : models)
    for (const auto& h : m.fit.hyper_marginals)
      rho += to_string(m.spec.kind) + "," + h.name + "," + scale_of(h.name) + "," + summary_cells(h.marginal) + "\n";
  outputs.add("rho_summary.csv", rho);

  std::vector<double> lm, prior(models.size(), 1.0);
  for (const auto& m : models) lm.push_back(m.fit.log_mlik);
  const auto post = posterior_model_probs(lm, prior);
  std::string cmp = "model,log_mlik,dic,p_eff,posterior_prob\n";
  for (std::size_t i = 0; i < models.size(); ++i)
    cmp += to_string(models[i].spec.kind) + "," + io::format_double(models[i].fit.log_mlik) + "," +
           io::format_double(models[i].fit.dic.dic) + "," + io::format_double(models[i].fit.dic.p_eff) + "," +
           io::format_double(post[i]) + "\n";
  outputs.add("comparison.csv", cmp);

  if (impacts) add_impact_outputs(outputs, models);
  return outputs;
}

io::OutputSet run_scan(const RunConfig& config, std::ostream& log) {
  if (!config.scan) throw InvalidInput("config has no 'scan' section");
  const ScanConfig& sc = *config.scan;
  Inputs in = load_inputs(config, false);
  if (in.coords.empty()) throw InvalidInput("scan needs weights.points");
  ScanInput si{in.y, in.x, in.coords, sc.kind, config.options, config.grid};
  std::vector<int> ks;
  for (int k = sc.k_min; k <= sc.k_max; ++k) ks.push_back(k);
  log << "scanning k = " << sc.k_min << ".." << sc.k_max << " for " << to_string(sc.kind) << "\n";
  const ModelSet set = neighbor_scan(si, ks, sc.prior);
  for (const auto& w : set.warnings) log << "  warning: " << w << "\n";

  io::OutputSet outputs;
  std::string csv = "k,log_mlik,dic,prior_prob,posterior_prob\n";
  for (std::size_t i = 0; i < set.entries.size(); ++i) {
    const auto& e = set.entries[i];
    csv += std::to_string(*e.k) + "," + io::format_double(e.log_mlik) + "," + io::format_double(e.fit.dic.dic) +
           "," + io::format_double(e.prior_prob) + "," + io::format_double(set.posterior_probs[i]) + "\n";
  }
  outputs.add("scan.csv", csv);
  if (!sc.bma.empty()) {
    std::string summary = "quantity,mean,sd,0.025quant,0.5quant,0.975quant\n";
    for (const auto& name : sc.bma) {
      const bool hyper = name == "rho" || name == "tau" || name == "iid_precision" || name == "obs_precision";
      const Marginal m = bma_combine(set, hyper ? select_hyperparameter(name) : select_coefficient(name));
      summary += name + "," + summary_cells(m) + "\n";
      outputs.add("marginals/bma_" + sanitize(name) + ".csv", io::marginal_csv(m, name));
    }
    outputs.add("bma_summary.csv", summary);
  }
  return outputs;
}

int execute(const std::string& verb, const std::string& config_path, std::optional<int> threads,
            std::optional<std::string> output_dir, std::ostream& out, std::ostream& err) {
  try {
    RunConfig config = load_config(config_path);
    if (threads) config.threads = *threads;
    if (output_dir) config.output = *output_dir;
    if (config.threads > 0) kernels::set_threads(config.threads);

    if (verb == "validate") {
      const auto issues = validate(config);
      if (issues.empty()) out << "OK\n";
      for (const auto& i : issues) out << "issue: " << i << "\n";
      return kOk;
    }
    io::OutputSet outputs;
    if (verb == "fit") outputs = run_fit(config, config.impacts, out);
    else if (verb == "impacts") outputs = run_fit(config, true, out);
    else if (verb == "scan") outputs = run_scan(config, out);
    else throw InvalidInput("unknown verb '" + verb + "'");
    outputs.commit(config.output);
    out << "wrote " << outputs.files().size() << " files to " << config.output << "\n";
    return kOk;
  } catch (const NumericFailure& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const Error& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
}

}  // namespace slmfit::cli
