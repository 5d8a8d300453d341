#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "levyint/bernstein.hpp"

using namespace levyint;

namespace {

std::vector<BernsteinFunction> catalog() {
  return {BernsteinFunction::stable(0.3),           BernsteinFunction::stable(0.7),
          BernsteinFunction::gamma(),               BernsteinFunction::tempered_stable(0.5, 1.0),
          BernsteinFunction::stable_log(0.5, 0.3),  BernsteinFunction::stable_log_inv(0.6, 0.2),
          BernsteinFunction::ratio(0.5),            BernsteinFunction::drift_only(2.0)};
}

// b r + int (1 - e^{-rs}) nu(ds), integrated independently of the library.
double levy_khintchine(const LevyTriplet& t, double r) {
  // Below 1e-100 the integrand is O(s^{-alpha}) and contributes nothing visible.
  auto g = [&](double s) { return s < 1e-100 ? 0.0 : -std::expm1(-r * s) * t.levy_density(s); };
  boost::math::quadrature::tanh_sinh<double> head;
  boost::math::quadrature::exp_sinh<double> tail;
  return t.drift * r + head.integrate(g, 0.0, 1.0) + tail.integrate(g, 1.0, std::numeric_limits<double>::infinity());
}

}  // namespace

TEST(Eval, CatalogValues) {
  EXPECT_DOUBLE_EQ(BernsteinFunction::stable(0.5)(4.0), 2.0);
  EXPECT_NEAR(BernsteinFunction::gamma()(std::numbers::e - 1.0), 1.0, 1e-15);
  EXPECT_NEAR(BernsteinFunction::ratio(0.5)(3.0), 1.5, 1e-15);
  EXPECT_NEAR(BernsteinFunction::stable_log(0.5, 0.3)(2.0), std::sqrt(2.0) * std::pow(std::log(3.0), 0.3), 1e-15);
  EXPECT_NEAR(BernsteinFunction::tempered_stable(0.5, 1.0)(3.0), 1.0, 1e-15);
}

TEST(Eval, DomainErrors) {
  auto phi = BernsteinFunction::stable(0.5);
  EXPECT_THROW(phi(0.0), DomainError);
  EXPECT_THROW(phi(-1.0), DomainError);
  EXPECT_THROW(BernsteinFunction::stable(1.0), DomainError);
  EXPECT_THROW(BernsteinFunction::stable_log(0.5, 0.6), DomainError);
  EXPECT_THROW(BernsteinFunction::stable_log_inv(0.4, 0.5), DomainError);
  EXPECT_THROW(BernsteinFunction::parse("bogus:1"), DomainError);
  EXPECT_THROW(BernsteinFunction::parse("stable:x"), DomainError);
  EXPECT_THROW(BernsteinFunction::parse("stable"), DomainError);
}

TEST(Eval, ParseRoundTrip) {
  for (const char* id : {"stable:0.5", "gamma", "tempered:0.5,1", "stablelog:0.5,0.3", "stableloginv:0.6,0.2",
                         "ratio:0.5", "drift:1"}) {
    auto phi = BernsteinFunction::parse(id);
    EXPECT_EQ(phi.id(), id);
  }
}

TEST(Eval, SimulableFlag) {
  EXPECT_TRUE(BernsteinFunction::stable(0.5).simulable());
  EXPECT_TRUE(BernsteinFunction::gamma().simulable());
  EXPECT_TRUE(BernsteinFunction::tempered_stable(0.5, 1.0).simulable());
  EXPECT_FALSE(BernsteinFunction::stable_log(0.5, 0.3).simulable());
  EXPECT_FALSE(BernsteinFunction::stable_log_inv(0.6, 0.2).simulable());
  EXPECT_FALSE(BernsteinFunction::ratio(0.5).simulable());
}

TEST(Inverse, Examples) {
  EXPECT_NEAR(BernsteinFunction::stable(0.5).inverse(2.0), 4.0, 4e-12);
  EXPECT_NEAR(BernsteinFunction::gamma().inverse(1.0), std::numbers::e - 1.0, 2e-12);
}

TEST(Inverse, RoundTrip) {
  for (const auto& phi : catalog()) {
    for (double s = 1e-3; s <= 1e3 * 1.0001; s *= std::sqrt(10.0)) {
      EXPECT_NEAR(phi.inverse(phi(s)) / s, 1.0, 1e-9) << phi.id() << " s=" << s;
      const double y = 1.3 * phi(s);
      EXPECT_NEAR(phi(phi.inverse(y)) / y, 1.0, 1e-12) << phi.id() << " y=" << y;
    }
  }
}

TEST(Inverse, BoundedRange) {
  auto bounded = BernsteinFunction::custom("1-e^-s", [](double s) { return -std::expm1(-s); }, std::nullopt, 1.0);
  EXPECT_NEAR(bounded.inverse(0.5), std::log(2.0), 1e-12);
  EXPECT_THROW(bounded.inverse(1.5), RangeError);
}

TEST(Shape, CatalogInvariants) {
  for (const auto& phi : catalog()) {
    auto r = check_shape(phi);
    EXPECT_TRUE(r.increasing) << phi.id();
    EXPECT_TRUE(r.concave) << phi.id();
    EXPECT_TRUE(r.subadditive) << phi.id();
    EXPECT_TRUE(r.derivative_bound) << phi.id();
    EXPECT_TRUE(r.vanishes_at_zero) << phi.id();
  }
}

TEST(Shape, SubadditivityOnTwelveDecades) {
  for (const auto& phi : catalog())
    for (double s = 1e-6; s <= 1e6; s *= 1.5) EXPECT_LE(phi(2.0 * s), 2.0 * phi(s) * (1.0 + 1e-12)) << phi.id();
}

TEST(Shape, DetectsNonConcave) {
  auto convex = BernsteinFunction::custom("s^2", [](double s) { return s * s; });
  auto r = check_shape(convex);
  EXPECT_FALSE(r.concave);
  EXPECT_FALSE(r.subadditive);
}

TEST(Triplet, MatchesLevyKhintchine) {
  for (const auto& phi : {BernsteinFunction::stable(0.3), BernsteinFunction::stable(0.7), BernsteinFunction::gamma(),
                          BernsteinFunction::tempered_stable(0.5, 1.0), BernsteinFunction::tempered_stable(0.3, 2.0)}) {
    for (double r : {0.5, 1.0, 2.0, 10.0}) EXPECT_NEAR(levy_khintchine(*phi.triplet(), r) / phi(r), 1.0, 1e-7) << phi.id();
  }
  auto d = BernsteinFunction::drift_only(2.0);
  EXPECT_DOUBLE_EQ(d.triplet()->drift, 2.0);
  EXPECT_DOUBLE_EQ(d(3.0), 6.0);
}

TEST(Triplet, TemperedTailMass) {
  const double a = 0.5, lam = 1.0;
  auto phi = BernsteinFunction::tempered_stable(a, lam);
  const double c = a / std::tgamma(1.0 - a);
  for (double eps : {1e-4, 1e-2, 0.5, 3.0}) {
    // Gamma(-a, x) from the upper incomplete gamma recurrence.
    const double x = lam * eps;
    const double g = (boost::math::tgamma(1.0 - a, x) - std::pow(x, -a) * std::exp(-x)) / (-a);
    EXPECT_NEAR(phi.triplet()->tail_mass(eps) / (c * std::pow(lam, a) * g), 1.0, 1e-7) << eps;
  }
  double prev = kInf;
  for (double eps = 1e-5; eps < 10.0; eps *= 3.0) {
    const double t = phi.triplet()->tail_mass(eps);
    EXPECT_LE(t, prev);
    prev = t;
  }
}

TEST(Triplet, Integrability) {
  for (const auto& phi : {BernsteinFunction::stable(0.5), BernsteinFunction::gamma(),
                          BernsteinFunction::tempered_stable(0.5, 1.0)}) {
    auto r = levy_integrability(*phi.triplet());
    EXPECT_TRUE(r.finite()) << phi.id();
  }
  // int (1 ^ s) c s^{-a-1} ds = c (1/(1-a) + 1/a)
  const double a = 0.5;
  const double c = a / std::tgamma(1.0 - a);
  const double expect = c * (1.0 / (1.0 - a) + 1.0 / a);
  EXPECT_NEAR(levy_integrability(*BernsteinFunction::stable(a).triplet()).value, expect, 1e-7);
}

TEST(Doubling, StableAllFieldsEqualAlpha) {
  for (double a : {0.2, 0.5, 0.7}) {
    auto d = doubling_indices(BernsteinFunction::stable(a));
    for (const auto& v : {d.global_inf, d.global_sup, d.at_zero, d.at_infinity}) {
      ASSERT_TRUE(v.has_value());
      EXPECT_NEAR(*v, a, 1e-6);
    }
  }
}

TEST(Doubling, Ratio) {
  auto d = doubling_indices(BernsteinFunction::ratio(0.5));
  EXPECT_NEAR(*d.at_zero, 1.0, 1e-3);
  EXPECT_NEAR(*d.at_infinity, 0.5, 1e-3);
  EXPECT_NEAR(*d.global_inf, 0.5, 1e-3);
  EXPECT_NEAR(*d.global_sup, 1.0, 1e-3);
}

TEST(Doubling, StableLogInv) {
  auto d = doubling_indices(BernsteinFunction::stable_log_inv(0.6, 0.2));
  EXPECT_NEAR(*d.at_zero, 0.4, 1e-3);
  EXPECT_NEAR(*d.at_infinity, 0.6, 1e-3);
}

TEST(Doubling, Gamma) {
  auto d = doubling_indices(BernsteinFunction::gamma());
  EXPECT_NEAR(*d.at_zero, 1.0, 1e-3);
  EXPECT_NEAR(*d.at_infinity, 0.0, 1e-3);
}

TEST(Doubling, Ordering) {
  for (const auto& phi : catalog()) {
    auto d = doubling_indices(phi);
    ASSERT_TRUE(d.global_inf && d.global_sup);
    EXPECT_GE(*d.global_inf, 0.0);
    EXPECT_LE(*d.global_inf, *d.global_sup + 1e-12);
    EXPECT_LE(*d.global_sup, 1.0);
    if (d.at_zero) {
      EXPECT_LE(*d.global_inf, *d.at_zero + 1e-9) << phi.id();
    }
    if (d.at_infinity) {
      EXPECT_LE(*d.at_infinity, *d.global_sup + 1e-9) << phi.id();
    }
  }
}

TEST(Doubling, RejectsShortGrid) {
  DoublingGrid g;
  g.lo = 1e-3;
  g.hi = 1e3;
  EXPECT_THROW(doubling_indices(BernsteinFunction::stable(0.5), g), DomainError);
}

TEST(Doubling, UndeterminedForOscillatingExponent) {
  // log-periodic modulation: the doubling ratio never settles at either end
  auto osc = BernsteinFunction::custom("osc", [](double s) { return std::sqrt(s) * (2.0 + 0.2 * std::sin(std::log(s))) / 2.0; });
  auto d = doubling_indices(osc);
  EXPECT_FALSE(d.at_zero.has_value());
  EXPECT_FALSE(d.at_infinity.has_value());
}

TEST(Regvar, Examples) {
  auto stable = BernsteinFunction::stable(0.5);
  auto r1 = regvar_upper_check([&](double s) { return stable(s); }, 0.5, 0.1);
  EXPECT_TRUE(r1.holds);
  EXPECT_NEAR(r1.constant, 1.0, 1e-12);
  auto r2 = regvar_upper_check([](double s) { return s; }, 1.0, 0.5);
  EXPECT_TRUE(r2.holds);
  EXPECT_NEAR(r2.constant, 1.0, 1e-12);
  auto r3 = regvar_upper_check([](double s) { return std::log1p(s); }, 1.0, 0.05);
  EXPECT_TRUE(r3.holds);
  EXPECT_LE(r3.constant, 1.0);
  EXPECT_GT(r3.delta, 0.0);
}

TEST(Regvar, RejectsLowIndex) {
  EXPECT_THROW(regvar_upper_check([](double s) { return std::sqrt(s); }, 1.0, 0.1), DomainError);
}
