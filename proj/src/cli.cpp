#include "semfx/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "semfx/baselines.hpp"
#include "semfx/csv.hpp"
#include "semfx/inference.hpp"
#include "semfx/sim.hpp"

namespace semfx {

namespace {

using ojson = nlohmann::ordered_json;

// Doubles are printed identically in the JSON and CSV outputs.
std::string num(double v) {
  if (!std::isfinite(v)) return "NA";
  return ojson(v).dump();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  return out + "\n";
}

void write_output(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::config, "cannot write '" + path + "'");
  f << text;
}

ojson support_json(const Support& s) {
  ojson j;
  if (s.is_discrete()) {
    j["kind"] = "discrete";
    j["levels"] = s.levels;
  } else {
    j["kind"] = "continuous";
    j["lo"] = s.lo;
    j["hi"] = s.hi;
    j["quad_nodes"] = s.quad_nodes;
  }
  return j;
}

ojson header_json(const char* command, const AnalysisConfig& c, const Dataset& d) {
  ojson j;
  j["command"] = command;
  j["input"] = c.input;
  j["response"] = c.response;
  j["covariates"] = d.names;
  j["n"] = d.n();
  j["support"] = support_json(d.support);
  return j;
}

struct EffectRow {
  std::string model;
  std::string effect;
  double tau = std::nan("");
  std::string covariate;
  double estimate = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 0.0;
};

void add_rows(const EffectEstimate& e, const std::string& model, std::vector<EffectRow>& rows) {
  for (int k = 0; k < e.point.size(); ++k) {
    EffectRow r;
    r.model = model;
    r.effect = to_string(e.kind);
    if (e.kind == EffectEstimate::Kind::quantile) r.tau = e.tau;
    r.covariate = e.names.at(static_cast<std::size_t>(k));
    r.estimate = e.point[k];
    r.se = e.se[k];
    r.ci_lo = e.ci_lo[k];
    r.ci_hi = e.ci_hi[k];
    r.p_value = e.p_value[k];
    rows.push_back(std::move(r));
  }
}

ojson row_json(const EffectRow& r, bool with_model) {
  ojson j;
  if (with_model) j["model"] = r.model;
  j["effect"] = r.effect;
  j["tau"] = std::isfinite(r.tau) ? ojson(r.tau) : ojson(nullptr);
  j["covariate"] = r.covariate;
  j["estimate"] = r.estimate;
  j["se"] = r.se;
  j["ci_lo"] = r.ci_lo;
  j["ci_hi"] = r.ci_hi;
  j["p_value"] = r.p_value;
  j["significant"] = r.p_value < 0.05;
  return j;
}

std::string rows_csv(const std::vector<EffectRow>& rows, bool with_model) {
  std::string out;
  std::vector<std::string> head = {"effect", "tau", "covariate", "estimate", "se",
                                   "ci_lo",  "ci_hi", "p_value", "significant"};
  if (with_model) head.insert(head.begin(), "model");
  out += join(head);
  for (const auto& r : rows) {
    std::vector<std::string> cells = {r.effect,      std::isfinite(r.tau) ? num(r.tau) : "",
                                      csv_field(r.covariate), num(r.estimate), num(r.se),
                                      num(r.ci_lo),  num(r.ci_hi), num(r.p_value),
                                      r.p_value < 0.05 ? "true" : "false"};
    if (with_model) cells.insert(cells.begin(), r.model);
    out += join(cells);
  }
  return out;
}

std::vector<double> resolve_tau(const AnalysisConfig& c, const Dataset& d) {
  if (d.support.is_discrete()) {
    if (c.tau && !c.tau->empty()) {
      throw Error(ErrorKind::unsupported, "quantile effects are not defined for a discrete response");
    }
    return {};
  }
  std::vector<double> tau = c.tau ? *c.tau : default_tau_grid();
  for (double t : tau) {
    if (!(t > 0.0 && t < 1.0)) throw Error(ErrorKind::config, "tau must lie in (0, 1)");
  }
  return tau;
}

struct FitBundle {
  Dataset data;
  FittedModel model;
  SigmaBlocks blocks;
};

FitBundle fit_bundle(const AnalysisConfig& c) {
  Dataset d = load_dataset(c);
  FittedModel m = fit(d, fit_config(c));
  SigmaBlocks b = sigma_blocks(m, d);
  return {std::move(d), std::move(m), std::move(b)};
}

std::vector<EffectRow> amle_effect_rows(const FitBundle& fb, const std::vector<double>& tau,
                                        std::vector<std::string>& warnings) {
  std::vector<EffectRow> rows;
  const EffectEstimate xi = estimate_xi(fb.model, fb.data, fb.blocks);
  add_rows(xi, "aMLE", rows);
  warnings.insert(warnings.end(), xi.warnings.begin(), xi.warnings.end());
  for (double t : tau) {
    const EffectEstimate e = estimate_eta(fb.model, fb.data, fb.blocks, t);
    add_rows(e, "aMLE", rows);
    warnings.insert(warnings.end(), e.warnings.begin(), e.warnings.end());
  }
  return rows;
}

ojson fit_json(const AnalysisConfig& c, const FitBundle& fb, std::vector<EffectRow>& coef_rows) {
  const FittedModel& m = fb.model;
  ojson j = header_json("fit", c, fb.data);
  const InfoCriteria ic = aic_bic(m);
  j["converged"] = true;
  j["iterations"] = m.iterations;
  j["grad_norm"] = m.grad_norm;
  j["loglik"] = m.loglik;
  j["df"] = ic.df;
  j["aic"] = ic.aic;
  j["bic"] = ic.bic;
  const EffectEstimate b = estimate_beta(m, fb.data, fb.blocks);
  add_rows(b, "aMLE", coef_rows);
  ojson coefs = ojson::array();
  for (const auto& r : coef_rows) {
    ojson row = row_json(r, false);
    row.erase("effect");
    row.erase("tau");
    coefs.push_back(std::move(row));
  }
  j["coefficients"] = coefs;
  ojson carrier;
  if (m.carrier->discrete()) {
    carrier["levels"] = m.carrier->levels();
  } else {
    carrier["order"] = m.carrier->basis().order();
    carrier["interior_knots"] = m.carrier->basis().knots().interior();
  }
  carrier["gamma"] = std::vector<double>(m.gamma.data(), m.gamma.data() + m.gamma.size());
  j["carrier"] = carrier;
  std::vector<std::string> warnings = m.warnings;
  warnings.insert(warnings.end(), b.warnings.begin(), b.warnings.end());
  j["warnings"] = warnings;
  return j;
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return 2;
    case ErrorKind::parse:
      return 3;
    case ErrorKind::non_convergence:
    case ErrorKind::divergence:
      return 4;
    case ErrorKind::unsupported:
      return 5;
    case ErrorKind::numeric:
    case ErrorKind::singular_information:
    case ErrorKind::ill_conditioned_quantile:
      return 6;
    default:
      return 1;
  }
}

Dataset load_dataset(const AnalysisConfig& c) {
  if (c.input.empty()) throw Error(ErrorKind::config, "--input is required");
  if (c.response.empty()) throw Error(ErrorKind::config, "--response is required");
  const NumericTable t = read_csv_file(c.input);
  const std::vector<double>& ycol = t.column(c.response);
  std::vector<std::string> covs = c.covariates;
  if (covs.empty()) {
    for (const auto& h : t.header) {
      if (h != c.response) covs.push_back(h);
    }
  }
  if (covs.empty()) throw Error(ErrorKind::config, "no covariate columns");
  for (const auto& name : covs) {
    if (name == c.response) throw Error(ErrorKind::config, "response '" + name + "' listed as a covariate");
  }
  const long n = t.rows();
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(covs.size()));
  for (std::size_t k = 0; k < covs.size(); ++k) {
    const auto& col = t.column(covs[k]);
    for (long i = 0; i < n; ++i) x(i, static_cast<Eigen::Index>(k)) = col[static_cast<std::size_t>(i)];
  }
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(ycol.data(), n);

  Support s;
  const int quad = c.quad_nodes > 0 ? c.quad_nodes : 201;
  if (c.discrete) {
    if (c.support) throw Error(ErrorKind::config, "--support and --discrete are exclusive");
    std::set<double> lv(ycol.begin(), ycol.end());
    if (lv.size() < 2) throw Error(ErrorKind::degenerate_input, "discrete response has a single level");
    s = Support::discrete(std::vector<double>(lv.begin(), lv.end()));
  } else if (c.support) {
    s = Support::continuous(c.support->first, c.support->second, quad);
  } else {
    s = padded_support(y, 0.05, quad);
  }
  return Dataset::make(x, std::move(y), s, covs);
}

FitConfig fit_config(const AnalysisConfig& c) {
  FitConfig f;
  f.tol = c.tol;
  f.max_iter = c.max_iter;
  f.interior_knots = c.knots;
  f.quad_nodes = c.quad_nodes;
  return f;
}

std::string cmd_fit(const AnalysisConfig& c) {
  const FitBundle fb = fit_bundle(c);
  std::vector<EffectRow> rows;
  const ojson j = fit_json(c, fb, rows);
  if (c.format == OutputFormat::json) return j.dump(2) + "\n";
  std::string out = join({"quantity", "name", "estimate", "se", "ci_lo", "ci_hi", "p_value"});
  for (const auto& r : rows) {
    out += join({"beta", csv_field(r.covariate), num(r.estimate), num(r.se), num(r.ci_lo),
                 num(r.ci_hi), num(r.p_value)});
  }
  const auto& g = fb.model.gamma;
  for (int k = 0; k < g.size(); ++k) {
    out += join({"gamma", std::to_string(k + 1), num(g[k]), "", "", "", ""});
  }
  for (const char* key : {"loglik", "df", "aic", "bic", "iterations", "grad_norm"}) {
    out += join({key, "", num(j[key].get<double>()), "", "", "", ""});
  }
  return out;
}

std::string cmd_effects(const AnalysisConfig& c) {
  Dataset probe = load_dataset(c);
  const std::vector<double> tau = resolve_tau(c, probe);
  const FitBundle fb = fit_bundle(c);
  std::vector<std::string> warnings = fb.model.warnings;
  const std::vector<EffectRow> rows = amle_effect_rows(fb, tau, warnings);
  if (c.format != OutputFormat::json) return rows_csv(rows, false);
  ojson j = header_json("effects", c, fb.data);
  ojson arr = ojson::array();
  for (const auto& r : rows) arr.push_back(row_json(r, false));
  j["effects"] = arr;
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

std::string cmd_curve(const AnalysisConfig& c) {
  if (c.discrete) throw Error(ErrorKind::unsupported, "the carrier curve needs a continuous response");
  if (c.grid_size < 2) throw Error(ErrorKind::config, "--grid must be at least 2");
  const FitBundle fb = fit_bundle(c);
  const auto pts = curve_band(fb.model, fb.blocks, support_grid(fb.model, c.grid_size));
  if (c.format != OutputFormat::json) {
    std::string out = join({"y", "c", "band_lo", "band_hi"});
    for (const auto& p : pts) out += join({num(p.y), num(p.c), num(p.lo), num(p.hi)});
    return out;
  }
  ojson j = header_json("curve", c, fb.data);
  ojson arr = ojson::array();
  for (const auto& p : pts) arr.push_back({{"y", p.y}, {"c", p.c}, {"band_lo", p.lo}, {"band_hi", p.hi}});
  j["points"] = arr;
  return j.dump(2) + "\n";
}

std::string cmd_analyze(const AnalysisConfig& c) {
  Dataset probe = load_dataset(c);
  const std::vector<double> tau = resolve_tau(c, probe);
  const FitBundle fb = fit_bundle(c);
  std::vector<std::string> warnings = fb.model.warnings;

  struct ModelRow {
    std::string model;
    double loglik;
    InfoCriteria ic;
  };
  std::vector<ModelRow> models;
  models.push_back({"aMLE", fb.model.loglik, aic_bic(fb.model)});
  std::vector<EffectRow> rows;
  add_rows(estimate_beta(fb.model, fb.data, fb.blocks), "aMLE", rows);
  const auto amle_rows = amle_effect_rows(fb, tau, warnings);
  rows.insert(rows.end(), amle_rows.begin(), amle_rows.end());

  const Dataset& d = fb.data;
  std::vector<Family> families;
  if (d.support.is_discrete()) {
    const bool binary = d.support.levels == std::vector<double>{0.0, 1.0};
    const bool counts = std::all_of(d.support.levels.begin(), d.support.levels.end(),
                                    [](double v) { return v >= 0.0 && v == std::floor(v); });
    if (binary) families.push_back(Family::bernoulli);
    if (counts) families.push_back(Family::poisson);
  } else {
    families.push_back(Family::normal);
    if (d.y.minCoeff() > 0.0) families.push_back(Family::gamma);
  }
  for (Family f : families) {
    try {
      const ParametricFit pf = fit_parametric(d, f, true);
      const std::string name = to_string(f);
      models.push_back({name, pf.loglik, aic_bic(pf.loglik, pf.df, static_cast<double>(pf.n))});
      const bool quantiles = f == Family::normal || f == Family::gamma;
      for (const auto& e : parametric_effects(pf, d, quantiles ? tau : std::vector<double>{})) {
        add_rows(e, name, rows);
      }
    } catch (const Error& e) {
      warnings.push_back(std::string(to_string(f)) + " baseline skipped: " + e.what());
    }
  }

  if (c.format != OutputFormat::json) {
    std::string out = join({"model", "loglik", "df", "aic", "bic"});
    for (const auto& m : models) {
      out += join({m.model, num(m.loglik), std::to_string(m.ic.df), num(m.ic.aic), num(m.ic.bic)});
    }
    out += "\n";
    out += rows_csv(rows, true);
    return out;
  }
  ojson j = header_json("analyze", c, d);
  ojson marr = ojson::array();
  for (const auto& m : models) {
    marr.push_back({{"model", m.model}, {"loglik", m.loglik}, {"df", m.ic.df}, {"aic", m.ic.aic},
                    {"bic", m.ic.bic}});
  }
  j["models"] = marr;
  ojson arr = ojson::array();
  for (const auto& r : rows) arr.push_back(row_json(r, true));
  j["effects"] = arr;
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

std::string cmd_simulate(const SimulateConfig& c) {
  Scenario s;
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), c.scenario) != names.end()) {
    s = preset(c.scenario);
  } else if (std::filesystem::is_regular_file(c.scenario)) {
    std::ifstream f(c.scenario);
    std::stringstream ss;
    ss << f.rdbuf();
    s = scenario_from_json(ss.str());
  } else {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw Error(ErrorKind::config,
                "unknown scenario '" + c.scenario + "' (presets: " + list + ", or a JSON file)");
  }
  if (c.replicates) s.replicates = *c.replicates;
  if (c.n) s.n = *c.n;
  if (c.seed) s.seed = *c.seed;
  if (c.tau) s.tau_list = *c.tau;

  std::vector<Method> methods;
  for (const auto& m : c.methods) {
    std::string low = m;
    std::transform(low.begin(), low.end(), low.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (low == "amle") methods.push_back(Method::amle);
    else if (low == "mle") methods.push_back(Method::mle);
    else throw Error(ErrorKind::config, "unknown method '" + m + "' (aMLE, MLE)");
  }
  RunOptions opt;
  opt.workers = c.workers;
  opt.keep_estimates = c.keep_estimates;
  const SimulationReport r = run_scenario(s, methods, opt);

  const std::string json = report_json(r) + "\n";
  std::string text;
  if (c.format == OutputFormat::json) {
    text = json;
  } else if (c.format == OutputFormat::table) {
    text = report_table(r);
  } else {
    text = join({"method", "estimand", "truth", "abs_bias", "sd_sim", "mean_se", "coverage", "count",
                 "failures"});
    for (const auto& ms : r.methods) {
      for (const auto& row : ms.rows) {
        text += join({to_string(ms.method), row.estimand, num(row.truth), num(row.mean_abs_bias),
                      num(row.sd_sim), num(row.mean_se), num(row.coverage), std::to_string(row.count),
                      std::to_string(ms.failures)});
      }
    }
  }
  if (!c.output.empty() && c.format != OutputFormat::json) {
    std::filesystem::path p(c.output);
    write_output(p.replace_extension(".json").string(), json);
  }
  return text;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semiparametric GLM fitting, effect inference and simulation"};
  app.require_subcommand(1);

  AnalysisConfig ac;
  SimulateConfig sc;
  std::string support_text;
  std::string covariates_text;
  std::string tau_text;
  std::string format_text;
  std::string methods_text;

  auto add_data_flags = [&](CLI::App* sub) {
    sub->add_option("--input", ac.input, "CSV file with a header row")->required();
    sub->add_option("--response", ac.response, "response column")->required();
    sub->add_option("--covariates", covariates_text, "comma-separated covariate columns (default: all others)");
    sub->add_option("--support", support_text, "continuous support as lo,hi");
    sub->add_flag("--discrete", ac.discrete, "treat the response as discrete");
    sub->add_option("--knots", ac.knots, "number of interior knots");
    sub->add_option("--quad-nodes", ac.quad_nodes, "quadrature nodes over the support");
    sub->add_option("--tol", ac.tol, "relative log-likelihood tolerance");
    sub->add_option("--max-iter", ac.max_iter, "Newton iteration limit");
    sub->add_option("--seed", ac.seed, "random seed (recorded; fitting is deterministic)");
    sub->add_option("--format", format_text, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--output", ac.output, "output file (default: stdout)");
  };

  CLI::App* fit_cmd = app.add_subcommand("fit", "fit the semiparametric model");
  add_data_flags(fit_cmd);
  CLI::App* eff_cmd = app.add_subcommand("effects", "marginal and quantile effects with inference");
  add_data_flags(eff_cmd);
  eff_cmd->add_option("--tau", tau_text, "comma-separated quantile levels");
  CLI::App* curve_cmd = app.add_subcommand("curve", "fitted carrier curve with a pointwise band");
  add_data_flags(curve_cmd);
  curve_cmd->add_option("--grid", ac.grid_size, "number of grid points");
  CLI::App* an_cmd = app.add_subcommand("analyze", "fit, effects and information criteria against parametric baselines");
  add_data_flags(an_cmd);
  an_cmd->add_option("--tau", tau_text, "comma-separated quantile levels");

  CLI::App* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study of a scenario");
  sim_cmd->add_option("scenario", sc.scenario, "preset name or scenario JSON file")->required();
  int replicates = 0;
  long sim_n = 0;
  std::uint64_t sim_seed = 0;
  CLI::Option* rep_opt = sim_cmd->add_option("--replicates", replicates, "number of replicates");
  CLI::Option* n_opt = sim_cmd->add_option("--n", sim_n, "sample size per replicate");
  CLI::Option* seed_opt = sim_cmd->add_option("--seed", sim_seed, "master seed");
  sim_cmd->add_option("--workers", sc.workers, "worker threads (default: SEMFX_THREADS or all cores)");
  sim_cmd->add_option("--tau", tau_text, "comma-separated quantile levels");
  sim_cmd->add_option("--methods", methods_text, "comma-separated subset of aMLE,MLE");
  sim_cmd->add_flag("--keep-estimates", sc.keep_estimates, "include per-replicate estimates in JSON");
  sim_cmd->add_option("--format", format_text, "table, json or csv")
      ->check(CLI::IsMember({"table", "json", "csv"}));
  sim_cmd->add_option("--output", sc.output, "output file; JSON is written alongside");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  auto parse_numbers = [](const std::string& text, const char* flag) {
    std::vector<double> v;
    for (const auto& item : split_list(text)) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw Error(ErrorKind::config, std::string(flag) + ": '" + item + "' is not a number");
      }
    }
    return v;
  };

  try {
    if (!covariates_text.empty()) ac.covariates = split_list(covariates_text);
    if (!support_text.empty()) {
      const auto b = parse_numbers(support_text, "--support");
      if (b.size() != 2) throw Error(ErrorKind::config, "--support expects lo,hi");
      ac.support = std::make_pair(b[0], b[1]);
    }
    if (!tau_text.empty()) {
      ac.tau = parse_numbers(tau_text, "--tau");
      sc.tau = ac.tau;
    }
    if (rep_opt->count()) sc.replicates = replicates;
    if (n_opt->count()) sc.n = sim_n;
    if (seed_opt->count()) sc.seed = sim_seed;
    if (!methods_text.empty()) sc.methods = split_list(methods_text);
    if (format_text == "csv") ac.format = sc.format = OutputFormat::csv;
    if (format_text == "json") ac.format = sc.format = OutputFormat::json;
    if (format_text == "table") sc.format = OutputFormat::table;

    std::string text;
    std::string dest = ac.output;
    if (fit_cmd->parsed()) text = cmd_fit(ac);
    else if (eff_cmd->parsed()) text = cmd_effects(ac);
    else if (curve_cmd->parsed()) text = cmd_curve(ac);
    else if (an_cmd->parsed()) text = cmd_analyze(ac);
    else {
      text = cmd_simulate(sc);
      dest = sc.output;
    }
    if (dest.empty()) {
      out << text;
    } else {
      write_output(dest, text);
    }
    return 0;
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace semfx
