// Acceptance suite: one PASS/FAIL line per criterion, sub-checks indented.
// Usage: acceptance [criterion numbers...]; no arguments runs everything.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "semfx/effects.hpp"
#include "semfx/error.hpp"
#include "semfx/fit.hpp"
#include "semfx/inference.hpp"
#include "semfx/sim.hpp"
#include "support.hpp"

using namespace semfx;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> lines;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "ok   " : "MISS ") + what);
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

bool within(double v, double centre, double tol) { return std::abs(v - centre) <= tol + 1e-12; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string quad(const EstimandSummary& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s |bias|=%.4f sd_sim=%.4f se_est=%.4f cover=%.3f (n_ok=%ld)",
                r.estimand.c_str(), r.mean_abs_bias, r.sd_sim, r.mean_se, r.coverage, r.count);
  return buf;
}

Outcome table1() {
  Outcome o;
  Scenario s = preset("trunc-normal");
  s.replicates = 1000;
  const auto t0 = std::chrono::steady_clock::now();
  const SimulationReport r = run_scenario(s, {Method::amle, Method::mle});
  const auto& b1 = r.row(Method::amle, "beta1");
  o.lines.push_back("aMLE " + quad(b1));
  o.check(within(b1.mean_abs_bias, 0.049, 0.008), "aMLE beta1 |bias| in .049 +- .008");
  o.check(within(b1.sd_sim, 0.061, 0.008), "aMLE beta1 sd_sim in .061 +- .008");
  o.check(within(b1.mean_se, 0.060, 0.006), "aMLE beta1 mean se in .060 +- .006");
  o.check(within(b1.coverage, 0.947, 0.03), "aMLE beta1 coverage in .947 +- .03");
  for (int k = 1; k <= 3; ++k) {
    const auto& m = r.row(Method::mle, "beta" + std::to_string(k));
    o.lines.push_back("MLE  " + quad(m));
    o.check(m.coverage <= 0.01, "MLE beta" + std::to_string(k) + " coverage <= .01");
  }
  o.lines.push_back(fmt("runtime %.1f s", seconds_since(t0)));
  return o;
}

Outcome table6() {
  Outcome o;
  Scenario s = preset("bernoulli");
  s.replicates = 500;
  RunOptions opt;
  opt.keep_estimates = true;
  const SimulationReport r = run_scenario(s, {Method::amle, Method::mle}, opt);
  const auto& a = r.method(Method::amle);
  const auto& m = r.method(Method::mle);
  o.check(a.failures == 0 && m.failures == 0, "no failed replicates (needed to pair replicates)");
  double worst = 0.0;
  for (std::size_t e = 0; e < a.rows.size() && a.failures == 0 && m.failures == 0; ++e) {
    const auto& ra = a.rows[e];
    const auto& rm = r.row(Method::mle, ra.estimand);
    for (std::size_t i = 0; i < ra.estimates.size(); ++i) {
      worst = std::max(worst, std::abs(ra.estimates[i] - rm.estimates[i]));
    }
  }
  o.check(worst < 5e-4, fmt("per-replicate |aMLE - MLE| max %.2e < 5e-4 (3 decimals)", worst));
  for (const auto& row : a.rows) {
    o.lines.push_back("aMLE " + quad(row));
    o.check(within(row.coverage, 0.95, 0.03), "aMLE " + row.estimand + " coverage in .95 +- .03");
  }
  return o;
}

Outcome table78() {
  Outcome o;
  for (const char* name : {"poisson", "negbinomial"}) {
    Scenario s = preset(name);
    s.replicates = 500;
    const SimulationReport r = run_scenario(s, {Method::amle, Method::mle});
    const auto& xa = r.row(Method::amle, "xi1");
    const auto& xm = r.row(Method::mle, "xi1");
    o.lines.push_back(std::string(name) + " aMLE " + quad(xa));
    o.lines.push_back(std::string(name) + " MLE  " + quad(xm));
    o.check(within(xa.coverage, 0.94, 0.04), std::string(name) + " aMLE xi1 coverage in .94 +- .04");
    if (std::string(name) == "negbinomial") {
      o.check(xm.coverage <= 0.02, "negbinomial MLE xi1 coverage <= .02");
    }
  }
  return o;
}

Outcome table4() {
  Outcome o;
  Scenario s = preset("trunc-gamma");
  s.replicates = 1000;
  s.tau_list = {0.5};
  const SimulationReport r = run_scenario(s, {Method::amle});
  const auto& e = r.row(Method::amle, "eta0.5_1");
  o.lines.push_back("aMLE " + quad(e));
  o.check(within(e.mean_abs_bias, 0.068, 0.015), "aMLE eta1(.50) |bias| in .068 +- .015");
  o.check(within(e.coverage, 0.943, 0.04), "aMLE eta1(.50) coverage in .943 +- .04");
  return o;
}

Outcome runtime() {
  Outcome o;
  const auto sw = testdata::swiss_like(871, 2024);
  const Dataset d = Dataset::make(sw.x, sw.y, padded_support(sw.y), sw.names);
  FitConfig cfg;
  cfg.tol = 1e-6;
  const auto t0 = std::chrono::steady_clock::now();
  const FittedModel fm = fit(d, cfg);
  const double t_fit = seconds_since(t0);
  const SigmaBlocks sb = sigma_blocks(fm, d);
  estimate_xi(fm, d, sb);
  for (double tau : default_tau_grid()) estimate_eta(fm, d, sb, tau);
  const double t_all = seconds_since(t0);
  o.lines.push_back(fmt("iterations %.0f", fm.iterations) + fmt(", max |score| / n = %.2e", fm.grad_norm / d.n()));
  o.check(t_fit < 10.0, fmt("fit of n=871, p=7 took %.3f s (< 10 s)", t_fit));
  o.lines.push_back(fmt("fit + effects with five quantile levels: %.3f s", t_all));
  return o;
}

// Property suite.
Outcome properties() {
  Outcome o;
  std::mt19937_64 rng(42);

  {
    const Dataset cont = testdata::trunc_normal(10, Eigen::Vector3d(1, 2, 3), 9);
    const Dataset disc = testdata::bernoulli(30, 4);
    double gerr = 0.0;
    double herr = 0.0;
    for (const Dataset* d : {&cont, &disc}) {
      FitConfig kc;
      kc.interior_knots = 1;
      auto c = make_carrier(*d, kc);
      const int p = d->p();
      const int mf = c->free_size();
      for (int state = 0; state < 50; ++state) {
        const Eigen::VectorXd theta = testdata::random_vector(p + mf, rng, 1.0);
        auto eval = [&](const Eigen::VectorXd& t, EvalLevel lv) {
          return loglik_grad_hess(*d, c, t.head(p), c->expand(t.tail(mf)), lv);
        };
        const auto ev = eval(theta, EvalLevel::hessian);
        const double h = 1e-5;
        Eigen::VectorXd fg(p + mf);
        Eigen::MatrixXd fh(p + mf, p + mf);
        for (int k = 0; k < p + mf; ++k) {
          Eigen::VectorXd tp = theta, tm = theta;
          tp[k] += h;
          tm[k] -= h;
          const auto up = eval(tp, EvalLevel::gradient);
          const auto dn = eval(tm, EvalLevel::gradient);
          fg[k] = (up.value - dn.value) / (2 * h);
          fh.col(k) = (up.gradient - dn.gradient) / (2 * h);
        }
        gerr = std::max(gerr, (fg - ev.gradient).cwiseAbs().maxCoeff() /
                                  std::max(1.0, ev.gradient.cwiseAbs().maxCoeff()));
        herr = std::max(herr, (fh - ev.hessian).cwiseAbs().maxCoeff() /
                                  std::max(1.0, ev.hessian.cwiseAbs().maxCoeff()));
      }
    }
    o.check(gerr <= 1e-6, fmt("gradient vs finite differences, 100 states: rel err %.2e <= 1e-6", gerr));
    o.check(herr <= 1e-4, fmt("Hessian vs finite differences, 100 states: rel err %.2e <= 1e-4", herr));
  }

  const Dataset d = testdata::trunc_normal(1000, Eigen::Vector3d(1, 2, 3), 5);
  const FittedModel fm = fit(d);
  const TiltFamily fam = fm.family();

  {
    double norm_err = 0.0;
    double inv_err = 0.0;
    for (double nu : {-6.0, -2.0, 0.0, 1.0, 4.0, 8.0}) {
      // composite Simpson on 4000 panels, independent of the internal rule
      const int k = 4000;
      const double lo = fm.support.lo;
      const double hi = fm.support.hi;
      const double h = (hi - lo) / k;
      double s = fam.density(nu, lo) + fam.density(nu, hi);
      for (int i = 1; i < k; ++i) s += (i % 2 ? 4.0 : 2.0) * fam.density(nu, lo + i * h);
      norm_err = std::max(norm_err, std::abs(s * h / 3.0 - 1.0));
      for (double tau : {0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99}) {
        inv_err = std::max(inv_err, std::abs(fam.cdf(nu, fam.quantile(nu, tau).q) - tau));
      }
    }
    o.check(norm_err <= 1e-8, fmt("density integrates to one: err %.2e <= 1e-8", norm_err));
    o.check(inv_err <= 1e-8, fmt("CDF(quantile(tau)) = tau: err %.2e <= 1e-8", inv_err));
  }

  {
    const auto ev = loglik_grad_hess(d, fm.carrier, fm.beta, fm.gamma);
    const double g = ev.gradient.cwiseAbs().maxCoeff();
    o.check(g <= 1e-6 * d.n(), fmt("fitted score max %.2e <= 1e-6 n", g));
    double worst = 0.0;
    for (int rep = 0; rep < 3; ++rep) {
      const Eigen::VectorXd b0 = testdata::random_vector(3, rng, 1.5);
      const Eigen::VectorXd g0 =
          fm.carrier->expand(testdata::random_vector(fm.carrier->free_size(), rng, 3.0));
      const FittedModel again = fit_with_carrier(d, fm.carrier, {}, b0, g0);
      worst = std::max({worst, (again.beta - fm.beta).cwiseAbs().maxCoeff(),
                        (again.gamma - fm.gamma).cwiseAbs().maxCoeff()});
    }
    o.check(worst <= 1e-6, fmt("restart from random starts: max change %.2e <= 1e-6", worst));

    const SigmaBlocks sb = sigma_blocks(fm, d);
    const double diff =
        (sb.assembled() + ev.hessian / static_cast<double>(d.n())).cwiseAbs().maxCoeff();
    o.check(diff <= 1e-10, fmt("-H/n equals the assembled blocks: %.2e <= 1e-10", diff));
  }

  {
    const Dataset pd = testdata::poisson(500, 40);
    const FittedModel pm = fit(pd);
    const SigmaBlocks sb = sigma_blocks(pm, pd);
    const TiltFamily pf = pm.family();
    const Carrier& c = *pm.carrier;
    const int mf = c.free_size();
    const Eigen::MatrixXd proj = sb.s12 * sb.s22.inverse();
    Eigen::MatrixXd eff = Eigen::MatrixXd::Zero(pd.p(), pd.p());
    NodeLaw law;
    for (long i = 0; i < pd.n(); ++i) {
      pf.node_law(pd.x.row(i).dot(pm.beta), law);
      double mu = 0.0;
      Eigen::VectorXd eb = Eigen::VectorXd::Zero(mf);
      for (int j = 0; j < c.node_count(); ++j) {
        const double yv = c.levels()[static_cast<std::size_t>(j)];
        mu += law.p[static_cast<std::size_t>(j)] * yv;
        eb += law.p[static_cast<std::size_t>(j)] * c.eval(yv).tail(mf);
      }
      for (int j = 0; j < c.node_count(); ++j) {
        const double yv = c.levels()[static_cast<std::size_t>(j)];
        const Eigen::VectorXd sc = pd.x.row(i).transpose() * (yv - mu) - proj * (c.eval(yv).tail(mf) - eb);
        eff += law.p[static_cast<std::size_t>(j)] * sc * sc.transpose();
      }
    }
    eff /= static_cast<double>(pd.n());
    const double diff = (eff - sb.sigma_beta.inverse()).cwiseAbs().maxCoeff();
    o.check(diff <= 1e-8, fmt("discrete efficiency identity: %.2e <= 1e-8", diff));
  }

  {
    double e1 = 0.0;
    double e2 = 0.0;
    for (double nu : {-3.0, -1.0, 0.5, 2.0}) {
      for (double tau : {0.1, 0.5, 0.9}) {
        const auto ql = fam.quantile(nu, tau);
        const double h = 1e-4;
        const double qp = fam.quantile(nu + h, tau).q;
        const double qm = fam.quantile(nu - h, tau).q;
        e1 = std::max(e1, std::abs((qp - qm) / (2 * h) - ql.qprime) / std::max(1.0, std::abs(ql.qprime)));
        e2 = std::max(e2, std::abs((qp - 2 * ql.q + qm) / (h * h) - ql.qdprime) /
                              std::max(1.0, std::abs(ql.qdprime)));
      }
    }
    o.check(e1 <= 1e-5, fmt("q' vs finite differences: %.2e <= 1e-5", e1));
    o.check(e2 <= 1e-4, fmt("q'' vs finite differences: %.2e <= 1e-4", e2));
  }

  {
    const Dataset base = testdata::trunc_normal(400, Eigen::Vector2d(0.8, -0.6), 6);
    const FittedModel a = fit(base);
    Eigen::MatrixXd xs = base.raw_x();
    xs.col(0) *= 0.2;
    const Dataset scaled = Dataset::make(xs, base.y, base.support);
    const FittedModel b = fit(scaled);
    const Eigen::Vector2d sc(0.2, 1.0);
    double worst = (b.beta.cwiseProduct(sc) - a.beta).cwiseAbs().maxCoeff();
    worst = std::max(worst, (marginal_effect(b, scaled).cwiseProduct(sc) - marginal_effect(a, base))
                                .cwiseAbs()
                                .maxCoeff());
    for (double tau : {0.25, 0.5, 0.9}) {
      worst = std::max(worst, (quantile_effect(b, scaled, tau).cwiseProduct(sc) -
                               quantile_effect(a, base, tau))
                                  .cwiseAbs()
                                  .maxCoeff());
    }
    o.check(worst <= 1e-8, fmt("covariate rescaling of beta, xi, eta: %.2e <= 1e-8", worst));
  }

  {
    Scenario s = preset("trunc-normal");
    s.n = 500;
    s.replicates = 300;
    s.seed = 77;
    const auto t0 = std::chrono::steady_clock::now();
    const SimulationReport r = run_scenario(s, {Method::amle});
    const double secs = seconds_since(t0);
    const auto& row = r.row(Method::amle, "beta1");
    o.lines.push_back("smoke " + quad(row));
    o.check(row.coverage >= 0.92 && row.coverage <= 0.97,
            fmt("smoke coverage (n=500, 300 replicates) %.3f in [.92, .97]", row.coverage));
    o.check(secs < 120.0, fmt("smoke runtime %.1f s < 120 s", secs));
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "truncated normal, n=1000: aMLE beta1 columns and MLE coverage", table1},
      {2, "Bernoulli: aMLE equals logistic MLE per replicate, coverage", table6},
      {3, "Poisson / negative binomial: xi1 coverage", table78},
      {4, "truncated gamma, tau=.50: eta1 bias and coverage", table4},
      {5, "runtime: n=871, p=7 fit under 10 s", runtime},
      {6, "property suite", properties},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  bool all_pass = true;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const Error& e) {
      o.check(false, std::string("error (") + to_string(e.kind()) + "): " + e.what());
    }
    for (const auto& line : o.lines) std::printf("    %s\n", line.c_str());
    std::printf("%s criterion %d: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title,
                seconds_since(t0));
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
