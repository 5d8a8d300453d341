#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "levyint/spde.hpp"

using namespace levyint;
using namespace levyint::spde;

namespace {

GridPath stable_path(double alpha, double T, std::size_t cells, std::uint64_t seed) {
  Rng rng(seed);
  return simulate_stable(alpha, TimeGrid::uniform(T, cells), rng);
}

// q^2 sum_k e^{-2 gamma (T - t_k)} dS_k: the conditional variance of the
// exponential-Euler recursion for a one-dimensional additive system.
double frozen_variance(double gamma, double q, const GridPath& ell) {
  const double T = ell.times.back();
  double v = 0.0;
  for (std::size_t k = 0; k + 1 < ell.times.size(); ++k)
    v += std::exp(-2.0 * gamma * (T - ell.times[k])) * ell.increment(k);
  return q * q * v;
}

Vec vec(std::initializer_list<double> v) {
  Vec x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

}  // namespace

TEST(Semigroup, ThetaEstimates) {
  const Vec gamma = heat_chain(32).gamma;
  EXPECT_EQ(c_theta(0.0), 1.0);
  for (double theta : {0.25, 0.5, 1.0, 2.0}) {
    for (double t : {1e-3, 0.1, 1.0, 5.0})
      EXPECT_LE(semigroup_theta_norm(gamma, theta, t), c_theta(theta) * std::pow(t, -theta) * (1.0 + 1e-12));
    Rng rng(3);
    Vec x(gamma.size());
    for (auto& v : x) v = rng.normal();
    EXPECT_GE(theta_norm(gamma, theta, x), std::pow(gamma[0], theta) * x.norm() * (1.0 - 1e-12));
  }
  for (double t : {0.0, 0.3, 2.0}) EXPECT_NEAR(semigroup_theta_norm(gamma, 0.0, t), std::exp(-gamma[0] * t), 1e-15);
}

TEST(System, ChecksDeclarations) {
  GalerkinSystem s = heat_chain(4);
  s.gamma[0] = 0.0;
  EXPECT_THROW(s.check(), DomainError);
  s = heat_chain(4);
  s.x0 = Vec::Zero(3);
  EXPECT_THROW(s.check(), DomainError);
  s = heat_chain(4);
  std::swap(s.gamma[1], s.gamma[2]);
  EXPECT_THROW(s.check(), DomainError);
  EXPECT_THROW(heat_chain(4).truncated(5), DomainError);
  EXPECT_THROW(additive(vec({1.0}), vec({0.0}), vec({1.0, 2.0})), DomainError);
}

TEST(System, ValidateFlagsUnderstatedBounds) {
  auto s = heat_chain(8, {2.0, 1.0, 2.0, 1.0});
  EXPECT_TRUE(validate(s).ok);
  EXPECT_TRUE(check_inverse_bound(s).ok);
  auto bad = s;
  bad.F_sup *= 0.1;
  auto r = validate(bad);
  EXPECT_FALSE(r.ok);
  EXPECT_NE(r.violation.find("||F||_inf"), std::string::npos);
  bad = s;
  bad.Q_lip *= 0.1;
  EXPECT_FALSE(validate(bad).ok);
  bad = s;
  bad.inverse_bound->C *= 0.01;
  EXPECT_FALSE(check_inverse_bound(bad).ok);
  bad.inverse_bound.reset();
  EXPECT_FALSE(check_inverse_bound(bad).ok);
}

TEST(Simulation, DeterministicSystemIsExact) {
  auto s = heat_chain(16, {0.0, 0.0, 2.0, 1.5});
  auto path = simulate(s, BernsteinFunction::stable(0.5), 1.0, 1.0 / 128.0, 7);
  for (std::size_t k = 0; k < path.times.size(); ++k) {
    const Vec exact = ((-path.times[k] * s.gamma.array()).exp() * s.x0.array()).matrix();
    EXPECT_LT((path.X.row(static_cast<Eigen::Index>(k)).transpose() - exact).norm(), 1e-12);
    EXPECT_EQ(path.Z.row(static_cast<Eigen::Index>(k)).norm(), 0.0);
  }
}

TEST(Simulation, StepMustDivideHorizon) {
  EXPECT_THROW(step_grid(1.0, 0.3), DomainError);
  EXPECT_EQ(step_grid(1.0, 0.25).cells(), 4u);
  EXPECT_THROW(node_index(0.3, 0.25), DomainError);
  EXPECT_EQ(node_index(0.75, 0.25), 3u);
}

TEST(Simulation, Deterministic) {
  auto s = heat_chain(8);
  auto phi = BernsteinFunction::stable(0.6);
  auto a = simulate(s, phi, 1.0, 1.0 / 64.0, 11);
  auto b = simulate(s, phi, 1.0, 1.0 / 64.0, 11);
  auto c = simulate(s, phi, 1.0, 1.0 / 64.0, 12);
  EXPECT_TRUE(a.X == b.X);
  EXPECT_TRUE(a.S.values == b.S.values);
  EXPECT_FALSE(a.X == c.X);
  ScanConfig one{1.0 / 64.0, 1e-4, 1}, four{1.0 / 64.0, 1e-4, 4};
  auto r1 = convolution_moment_scan(s, phi, 0.5, 0.0, {0.5, 1.0}, 200, 5, one);
  auto r4 = convolution_moment_scan(s, phi, 0.5, 0.0, {0.5, 1.0}, 200, 5, four);
  EXPECT_EQ(r1.ratio, r4.ratio);
}

TEST(Frozen, ConditionalIsometry) {
  const double gamma = 1.5, q = 0.7;
  auto sys = additive(vec({gamma}), vec({0.0}), vec({q}));
  const auto ell = stable_path(0.5, 1.0, 128, 21);
  const double var = frozen_variance(gamma, q, ell);
  ASSERT_GT(var, 0.0);
  auto zs = map_replicas(20000, 22, [&](std::size_t, Rng& rng) { return simulate_frozen(sys, ell, rng).Z(128, 0); });
  std::vector<double> sq, studentized;
  for (double z : zs) {
    sq.push_back(z * z);
    studentized.push_back(z / std::sqrt(var));
  }
  const auto est = summarize(sq);
  EXPECT_LE(std::abs(est.mean - var), 3.0 * est.std_error);
  EXPECT_GT(stats::ks_one_sample(studentized, stats::normal_cdf).p_value, 0.001);
}

TEST(TwoStage, UnconditionalSecondMoment) {
  // Gamma driver: E dS = dt, so E|Z_T|^2 = q^2 sum_j e^{-2 gamma j dt} dt.
  const double gamma = 2.0, q = 0.8, T = 1.0, dt = 1.0 / 64.0;
  auto sys = additive(vec({gamma}), vec({1.0}), vec({q}));
  const GridDriver driver(BernsteinFunction::gamma());
  auto zs = map_replicas(20000, 31, [&](std::size_t, Rng& rng) {
    auto p = simulate(sys, driver, T, dt, rng);
    return p.Z(p.Z.rows() - 1, 0) * p.Z(p.Z.rows() - 1, 0);
  });
  double expect = 0.0;
  for (int j = 1; j <= 64; ++j) expect += std::exp(-2.0 * gamma * j * dt) * dt;
  expect *= q * q;
  const auto est = summarize(zs);
  EXPECT_LE(std::abs(est.mean - expect), 3.0 * est.std_error);
}

TEST(Frozen, ConditionalMaximalBound) {
  auto sys = heat_chain(8);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const auto ell = stable_path(0.5, 1.0, 128, seed);
    auto c = conditional_maximal_check(sys, ell, 400, seed + 100);
    EXPECT_TRUE(c.ok);
    EXPECT_DOUBLE_EQ(c.bound, 9.0 * sys.Q_hs * sys.Q_hs * ell.values.back());
  }
}

TEST(ZeroNoise, NothingMoves) {
  auto sys = heat_chain(6, {0.0, 0.0, 2.0, 1.0});
  ASSERT_FALSE(sys.has_noise());
  const auto ell = stable_path(0.5, 1.0, 64, 2);
  auto c = conditional_maximal_check(sys, ell, 50, 3);
  EXPECT_EQ(c.sup_sq.mean, 0.0);
  EXPECT_EQ(c.bound, 0.0);
  auto sb = small_ball(sys, BernsteinFunction::stable(0.5), 0.1, 1.0, 200, 4,
                       {.kappa = 0.5, .p = {}, .constant_paths = 500, .cells = 64});
  EXPECT_EQ(sb.hits, 200u);
  EXPECT_THROW(synthesize_null_controller(sys, ell), CapabilityError);
}

TEST(SmallBall, PositiveProbabilityAndBound) {
  auto sys = heat_chain(8);
  auto sb = small_ball(sys, BernsteinFunction::stable(0.5), 0.5, 1.0 / 16.0, 2000, 9,
                       {.kappa = 0.5, .p = {}, .constant_paths = 4000, .cells = 128});
  EXPECT_GT(sb.wilson99.lo, 0.0);
  ASSERT_TRUE(sb.lower_bound_available);
  EXPECT_GT(sb.C1, 0.0);
  EXPECT_LE(sb.delta_tilde, 0.5);
  EXPECT_LE(sb.lower_bound, sb.wilson99.hi);
  EXPECT_THROW(small_ball(sys, BernsteinFunction::stable(0.5), 1.5, 1.0, 10, 1), DomainError);
}

TEST(Controller, LinearCaseSteersToZero) {
  auto sys = heat_chain(4, {0.0, 1.0, 2.0, 1.0});
  const auto ell = stable_path(0.5, 1.0, 128, 5);
  auto r = synthesize_null_controller(sys, ell);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.phi_terminal.norm(), 1e-12);
  EXPECT_LT(r.y_terminal.norm(), 1e-12);
}

TEST(Controller, NonlinearContraction) {
  auto sys = heat_chain(4, {1.0, 1.0, 2.0, 1.0});
  const double T = 0.5;
  const auto ell = stable_path(0.5, T, 128, 6);
  auto r = synthesize_null_controller(sys, ell);
  ASSERT_TRUE(r.converged);
  EXPECT_NEAR(r.contraction, T * sys.F_lip, 1e-15);
  EXPECT_LT(r.phi_terminal.norm(), 1e-12);
  EXPECT_LE(r.y_terminal.norm(), r.y_bound);
  EXPECT_LE(r.fitted_slope, std::log(r.contraction) + 0.1);
  for (std::size_t n = 2; n < r.history.size(); ++n) {
    if (r.history[n] < 1e-14) break;
    EXPECT_LE(r.history[n], r.history[n - 1]) << n;
  }
}

TEST(Controller, RefusesWithoutContraction) {
  auto sys = heat_chain(4, {1.0, 1.0, 2.0, 1.0});
  ASSERT_GT(sys.F_lip, 1.0);
  const auto ell = stable_path(0.5, 1.0, 64, 7);
  EXPECT_THROW(synthesize_null_controller(sys, ell), PreconditionRefusal);
  auto bad = heat_chain(4);
  bad.inverse_bound->C *= 1e-3;
  EXPECT_THROW(synthesize_null_controller(bad, stable_path(0.5, 0.5, 64, 7)), CapabilityError);
}

TEST(Galerkin, FullDimensionHasNoError) {
  auto ref = heat_chain(8);
  ScanConfig cfg{1.0 / 64.0, 1e-4, 0};
  auto lv = galerkin_error(ref, {8}, BernsteinFunction::stable(0.5), 1.0, 50, 3, 0.05, cfg);
  ASSERT_EQ(lv.size(), 1u);
  EXPECT_EQ(lv[0].sup_sq.mean, 0.0);
  EXPECT_EQ(lv[0].exceed, 0u);
}

TEST(Galerkin, DecoupledTailIsDeterministic) {
  // Drift and noise live on the first four modes, so the truncation error is
  // the free decay of the remaining modes, largest at t = 0.
  GalerkinSystem s = heat_chain(8);
  const Vec qk = vec({1.0, 0.25, 1.0 / 9.0, 1.0 / 16.0, 0.0, 0.0, 0.0, 0.0});
  s.Q_diag = [qk](const Vec& x) -> Vec { return (qk.array() * (1.0 + 0.5 * x.array().sin())).matrix(); };
  s.F = [](const Vec& x) -> Vec {
    Vec f = Vec::Zero(x.size());
    f.head(4) = std::sin(x[0] + x[1]) * Vec::Ones(4);
    return f;
  };
  ScanConfig cfg{1.0 / 64.0, 1e-4, 0};
  auto lv = galerkin_error(s, {4}, BernsteinFunction::gamma(), 1.0, 20, 4, 0.05, cfg);
  const double tail = s.x0.tail(4).squaredNorm();
  EXPECT_NEAR(lv[0].sup_sq.mean, tail, 1e-15);
  EXPECT_NEAR(lv[0].sup_sq.std_error, 0.0, 1e-15);
}

TEST(Galerkin, ErrorDecreasesWithDimension) {
  auto ref = heat_chain(32);
  ScanConfig cfg{1.0 / 128.0, 1e-4, 0};
  auto lv = galerkin_error(ref, {4, 8, 16}, BernsteinFunction::gamma(), 1.0, 100, 5, 0.01, cfg);
  EXPECT_GT(lv[0].sup_sq.mean, lv[1].sup_sq.mean);
  EXPECT_GT(lv[1].sup_sq.mean, lv[2].sup_sq.mean);
}

TEST(LongRun, NoiselessMatchesClosedForm) {
  // X_t = x e^{-gamma t}: (1/T) int_1^{T+1} (gamma^theta x e^{-gamma t})^p dt.
  const double gamma = 2.0, x = 3.0, p = 1.0, theta = 0.25;
  auto sys = additive(vec({gamma}), vec({x}), vec({0.0}));
  auto rows = longrun_moment_scan(sys, BernsteinFunction::gamma(), p, theta, {1.0, 2.0, 4.0}, 3, 1);
  for (const auto& row : rows) {
    const double c = std::pow(std::pow(gamma, theta) * x, p);
    const double exact = c * (std::exp(-p * gamma) - std::exp(-p * gamma * (row.T + 1.0))) / (p * gamma) / row.T;
    EXPECT_NEAR(row.average.mean / exact, 1.0, 1e-5) << row.T;
  }
}

TEST(Scans, GridRefinementAgrees) {
  auto sys = additive(vec({1.0}), vec({0.0}), vec({1.0}));
  auto phi = BernsteinFunction::stable(0.7);
  auto coarse = convolution_moment_scan(sys, phi, 0.5, 0.0, {1.0}, 20000, 8, {1.0 / 64.0, 1e-4, 0});
  auto fine = convolution_moment_scan(sys, phi, 0.5, 0.0, {1.0}, 20000, 9, {1.0 / 128.0, 1e-4, 0});
  const double a = coarse.mc_values[0].mean, b = fine.mc_values[0].mean;
  EXPECT_LE(std::abs(a - b), 4.0 * std::hypot(coarse.mc_values[0].std_error, fine.mc_values[0].std_error));
}

TEST(Scans, MaximalRatioBelowStableConstant) {
  auto sys = heat_chain(8);
  const double alpha = 0.5, p = 0.5;
  auto r = maximal_inequality_scan(sys, BernsteinFunction::stable(alpha), p, {1.0, 2.0}, 2000, 10,
                                   {1.0 / 64.0, 1e-4, 0});
  EXPECT_EQ(r.clause, "T ≥ 1");
  EXPECT_LE(r.max_ratio, stable_maximal_constant(alpha, p, sys.Q_hs));
  EXPECT_EQ(stable_maximal_constant(alpha, 1.0, 1.0), kInf);
}

TEST(Gates, RefusalsNameTheCondition) {
  const auto stable = doubling_indices(BernsteinFunction::stable(0.5));
  auto g = convolution_gate(1.2, 0.0, true, stable);
  EXPECT_FALSE(g.ok);
  EXPECT_NE(g.violation.find("liminf"), std::string::npos);
  g = convolution_gate(0.5, 1.5, false, stable);
  EXPECT_FALSE(g.ok);
  EXPECT_NE(g.violation.find("limsup"), std::string::npos);
  EXPECT_TRUE(convolution_gate(0.5, 0.0, true, stable).ok);
  EXPECT_THROW(convolution_gate(0.0, 0.0, true, stable), DomainError);
  EXPECT_FALSE(maximal_gate(0.0, false, stable).ok);
  g = maximal_gate(1.2, true, stable);
  EXPECT_FALSE(g.ok);
  EXPECT_NE(g.violation.find("needed for T < 1"), std::string::npos);
  auto sys = heat_chain(4);
  EXPECT_THROW(maximal_inequality_scan(sys, BernsteinFunction::stable(0.5), 1.2, {1.0}, 10, 1), PreconditionRefusal);
  EXPECT_THROW(convolution_moment_scan(sys, BernsteinFunction::stable(0.5), 1.2, 0.0, {1.0}, 10, 1),
               PreconditionRefusal);
  EXPECT_THROW(GridDriver(BernsteinFunction::ratio(0.5)), CapabilityError);
}
