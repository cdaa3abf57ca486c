#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "semfx/error.hpp"
#include "semfx/inference.hpp"
#include "support.hpp"

using namespace semfx;

namespace {

double min_eig(const Eigen::MatrixXd& m) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("balanced binary covariate with a fair coin") {
  Eigen::MatrixXd x(4, 1);
  x << -0.5, 0.5, -0.5, 0.5;
  Eigen::VectorXd y(4);
  y << 0, 0, 1, 1;
  const Dataset d = Dataset::make(x, y, Support::discrete_upto(1));
  FittedModel fm;
  fm.carrier = make_carrier(d, {});
  fm.beta = Eigen::VectorXd::Zero(1);
  fm.gamma = Eigen::VectorXd::Zero(2);
  fm.n = 4;
  const SigmaBlocks sb = sigma_blocks(fm, d);
  CHECK(sb.s11(0, 0) == doctest::Approx(1.0 / 16).epsilon(1e-15));
  CHECK(std::abs(sb.s12(0, 0)) < 1e-16);
  CHECK(sb.s22(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("assembled blocks equal the negative Hessian over n") {
  const Dataset cont = testdata::trunc_normal(800, Eigen::Vector3d(1, 2, 3), 31);
  const Dataset disc = testdata::poisson(800, 32);
  for (const Dataset* d : {&cont, &disc}) {
    const FittedModel fm = fit(*d);
    const SigmaBlocks sb = sigma_blocks(fm, *d);
    const auto ev = loglik_grad_hess(*d, fm.carrier, fm.beta, fm.gamma);
    const Eigen::MatrixXd diff = sb.assembled() + ev.hessian / static_cast<double>(d->n());
    CHECK(diff.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(min_eig(sb.sstar) > 0.0);
    CHECK((sb.sigma_beta * sb.sstar - Eigen::MatrixXd::Identity(d->p(), d->p())).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("discrete efficiency identity") {
  const Dataset d = testdata::poisson(500, 40);
  const FittedModel fm = fit(d);
  const SigmaBlocks sb = sigma_blocks(fm, d);
  const TiltFamily fam = fm.family();
  const Carrier& c = *fm.carrier;
  const int mf = c.free_size();
  const Eigen::MatrixXd proj = sb.s12 * sb.s22.inverse();
  Eigen::MatrixXd eff = Eigen::MatrixXd::Zero(d.p(), d.p());
  NodeLaw law;
  for (long i = 0; i < d.n(); ++i) {
    const double nu = d.x.row(i).dot(fm.beta);
    fam.node_law(nu, law);
    double mu = 0.0;
    Eigen::VectorXd eb = Eigen::VectorXd::Zero(mf);
    for (int j = 0; j < c.node_count(); ++j) {
      mu += law.p[static_cast<std::size_t>(j)] * c.levels()[static_cast<std::size_t>(j)];
      eb += law.p[static_cast<std::size_t>(j)] * c.eval(c.levels()[static_cast<std::size_t>(j)]).tail(mf);
    }
    for (int j = 0; j < c.node_count(); ++j) {
      const double yv = c.levels()[static_cast<std::size_t>(j)];
      const Eigen::VectorXd s =
          d.x.row(i).transpose() * (yv - mu) - proj * (c.eval(yv).tail(mf) - eb);
      eff += law.p[static_cast<std::size_t>(j)] * s * s.transpose();
    }
  }
  eff /= static_cast<double>(d.n());
  const Eigen::MatrixXd inv_sigma_beta = sb.sigma_beta.inverse();
  CHECK((eff - inv_sigma_beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("effect covariances are symmetric and positive semidefinite") {
  const Dataset d = testdata::trunc_normal(600, Eigen::Vector3d(1, 2, 3), 50);
  const FittedModel fm = fit(d);
  const SigmaBlocks sb = sigma_blocks(fm, d);
  const XiVariance vx = var_xi(fm, d, sb);
  CHECK((vx.sigma - vx.sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(min_eig(vx.sigma) >= -1e-10);
  CHECK(vx.parts.var_of_condvar >= 0.0);
  for (double tau : default_tau_grid()) {
    const EtaVariance ve = var_eta(fm, d, sb, tau);
    CHECK((ve.sigma - ve.sigma.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(min_eig(ve.sigma) >= -1e-10);
    CHECK(ve.parts.var_of_qprime >= 0.0);
  }
}

TEST_CASE("zero coefficients collapse the effect covariances") {
  const Dataset d = testdata::trunc_normal(300, Eigen::Vector2d(0.5, 0.5), 60);
  FittedModel fm = fit(d);
  fm.beta.setZero();
  const SigmaBlocks sb = sigma_blocks(fm, d);
  const XiVariance vx = var_xi(fm, d, sb);
  CHECK(vx.parts.a2.cwiseAbs().maxCoeff() == 0.0);
  const double v = vx.parts.mean_condvar;
  CHECK((vx.sigma - v * v * sb.sigma_beta).cwiseAbs().maxCoeff() < 1e-10 * sb.sigma_beta.norm());
  const EtaVariance ve = var_eta(fm, d, sb, 0.3);
  CHECK(ve.parts.c2.cwiseAbs().maxCoeff() == 0.0);
  const double q = ve.parts.mean_qprime;
  CHECK((ve.sigma - q * q * sb.sigma_beta).cwiseAbs().maxCoeff() < 1e-10 * sb.sigma_beta.norm());
}

TEST_CASE("symmetric Gaussian law has a negligible third-moment term") {
  const Dataset d = testdata::plain_normal(2000, Eigen::Vector2d(0.5, -0.5), 61);
  const FittedModel fm = fit(d);
  const SigmaBlocks sb = sigma_blocks(fm, d);
  const XiVariance vx = var_xi(fm, d, sb);
  const Eigen::MatrixXd third = vx.parts.a1 - vx.parts.mean_condvar * Eigen::MatrixXd::Identity(2, 2);
  CHECK(third.cwiseAbs().maxCoeff() < 0.05 * vx.parts.mean_condvar);
}

TEST_CASE("variances follow an affine change of response units") {
  const Dataset d = testdata::trunc_normal(400, Eigen::Vector2d(0.7, 0.2), 21);
  const double a = -1.0, s = 4.0;
  const Dataset dt = Dataset::make(d.raw_x(), (a + s * d.y.array()).matrix(),
                                   Support::continuous(a - 5 * s, a + 5 * s));
  const FittedModel f1 = fit(d);
  const FittedModel f2 = fit(dt);
  const SigmaBlocks b1 = sigma_blocks(f1, d);
  const SigmaBlocks b2 = sigma_blocks(f2, dt);
  const EffectEstimate beta1 = estimate_beta(f1, d, b1), beta2 = estimate_beta(f2, dt, b2);
  const EffectEstimate xi1 = estimate_xi(f1, d, b1), xi2 = estimate_xi(f2, dt, b2);
  const EffectEstimate eta1 = estimate_eta(f1, d, b1, 0.7), eta2 = estimate_eta(f2, dt, b2, 0.7);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(beta2.se[k] * s / beta1.se[k] - 1.0) < 1e-8);
    CHECK(std::abs(xi2.point[k] / s / xi1.point[k] - 1.0) < 1e-8);
    CHECK(std::abs(xi2.se[k] / s / xi1.se[k] - 1.0) < 1e-8);
    CHECK(std::abs(eta2.point[k] / s / eta1.point[k] - 1.0) < 1e-8);
    CHECK(std::abs(eta2.se[k] / s / eta1.se[k] - 1.0) < 1e-8);
  }
}

TEST_CASE("Wald intervals") {
  EffectEstimate e;
  Eigen::MatrixXd sig(2, 2);
  sig << 0.01 * 0.01 * 100, 0, 0, 0;
  wald(Eigen::Vector2d(0.070, 0.0), sig, 100, e);
  CHECK(e.se[0] == doctest::Approx(0.01));
  CHECK(e.p_value[0] < 1e-3);
  CHECK(e.ci_lo[0] == doctest::Approx(0.070 - 1.959964 * 0.01));
  CHECK(e.ci_hi[0] == doctest::Approx(0.070 + 1.959964 * 0.01));
  CHECK(e.se[1] == 0.0);
  CHECK(e.ci_lo[1] == e.ci_hi[1]);
  CHECK(e.p_value[1] == 1.0);

  Eigen::MatrixXd neg(1, 1);
  neg << -1e-14;
  EffectEstimate f;
  wald(Eigen::VectorXd::Ones(1), neg, 10, f);
  CHECK(f.se[0] == 0.0);
  CHECK(f.p_value[0] == 0.0);
  CHECK(f.warnings.size() == 1);
  neg(0, 0) = -1e-6;
  CHECK_THROWS_AS(wald(Eigen::VectorXd::Ones(1), neg, 10, f), Error);

  Eigen::MatrixXd one(1, 1);
  one << 1.0;
  wald(Eigen::VectorXd::Constant(1, 1.959964 / std::sqrt(50.0)), one, 50, f);
  CHECK(f.p_value[0] == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("information criteria") {
  const InfoCriteria ic = aic_bic(0.0, 3, std::exp(2.0));
  CHECK(ic.aic == doctest::Approx(6.0));
  CHECK(ic.bic == doctest::Approx(6.0));
  const Dataset d = testdata::trunc_normal(300, Eigen::Vector2d(1, 1), 70);
  const FittedModel fm = fit(d);
  CHECK(aic_bic(fm).df == 2 + fm.carrier->size() - 1);
}

TEST_CASE("carrier curve and band") {
  const Dataset d = testdata::trunc_normal(1000, Eigen::Vector2d(1, 1), 80);
  const FittedModel fm = fit(d);
  const SigmaBlocks sb = sigma_blocks(fm, d);
  const auto two = curve_band(fm, sb, support_grid(fm, 2));
  REQUIRE(two.size() == 2);
  CHECK(two[0].y == -5.0);
  CHECK(two[0].c == 0.0);
  CHECK(two[0].lo == 0.0);
  CHECK(two[0].hi == 0.0);
  CHECK(two[1].y == 5.0);

  // truth is -y^2/2 + const, anchored at c(-5) = 0: c(y) = (25 - y^2) / 2
  const auto curve = curve_band(fm, sb, support_grid(fm, 41));
  int inside = 0;
  for (const auto& pt : curve) {
    CHECK(pt.lo <= pt.c);
    CHECK(pt.c <= pt.hi);
    const double truth = 0.5 * (25.0 - pt.y * pt.y);
    inside += truth >= pt.lo && truth <= pt.hi;
  }
  CHECK(inside >= 33);

  const Dataset big = testdata::trunc_normal(4000, Eigen::Vector2d(1, 1), 81);
  const int knots = static_cast<int>(fm.carrier->basis().knots().interior().size());
  const FittedModel fb = fit(big, {.interior_knots = knots});
  const auto wide = curve_band(fb, sigma_blocks(fb, big), {0.0});
  const auto narrow = curve_band(fm, sb, {0.0});
  const double ratio = (narrow[0].hi - narrow[0].lo) / (wide[0].hi - wide[0].lo);
  CHECK(ratio > 1.5);
  CHECK(ratio < 2.7);
}
