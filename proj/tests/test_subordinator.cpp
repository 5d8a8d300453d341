#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "levyint/integrate.hpp"
#include "levyint/moments.hpp"
#include "levyint/parallel.hpp"
#include "levyint/stats.hpp"
#include "levyint/subordinator.hpp"

using namespace levyint;

namespace {

// Mean and SE of e^{-r X} over samples.
std::pair<double, double> laplace_mc(const std::vector<double>& x, double r) {
  std::vector<double> e(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) e[i] = std::exp(-r * x[i]);
  auto est = summarize(e);
  return {est.mean, est.std_error};
}

std::vector<double> stable_terminal(double alpha, double t, std::size_t n, std::uint64_t seed, std::size_t cells = 1) {
  const auto grid = TimeGrid::uniform(t, cells);
  return map_replicas(n, seed, [&](std::size_t, Rng& rng) { return simulate_stable(alpha, grid, rng).values.back(); });
}

}  // namespace

TEST(Stable, PathsMonotoneFromZero) {
  auto grid = TimeGrid::uniform(1.0, 500);
  for (std::uint64_t s = 1; s <= 20; ++s) {
    auto p = simulate_stable(0.6, grid, s);
    EXPECT_EQ(p.values.front(), 0.0);
    for (std::size_t k = 1; k < p.values.size(); ++k) EXPECT_GE(p.values[k], p.values[k - 1]);
    EXPECT_EQ(p.provenance.kind, Provenance::Kind::ExactStable);
  }
}

TEST(Stable, LaplaceTransform) {
  for (double alpha : {0.3, 0.7}) {
    auto x = stable_terminal(alpha, 1.0, 100000, 17, 4);
    for (double r : {0.5, 1.0, 2.0}) {
      auto [m, se] = laplace_mc(x, r);
      EXPECT_LE(std::abs(m - std::exp(-std::pow(r, alpha))), 3.0 * se) << alpha << " r=" << r;
    }
  }
}

TEST(Stable, ScalingKolmogorovSmirnov) {
  const double alpha = 0.7;
  const std::vector<double> ts{0.25, 2.0, 5.0};
  auto s1 = stable_terminal(alpha, 1.0, 20000, 100);
  const double level = 0.01 / static_cast<double>(ts.size());  // Bonferroni
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto st = stable_terminal(alpha, ts[i], 20000, 200 + i, 8);
    std::vector<double> scaled(s1);
    for (auto& v : scaled) v *= std::pow(ts[i], 1.0 / alpha);
    // Compare logs: the KS statistic is invariant and the tails stay finite.
    for (auto& v : st) v = std::log(v);
    for (auto& v : scaled) v = std::log(v);
    EXPECT_GT(stats::ks_two_sample(st, scaled).p_value, level) << ts[i];
  }
}

TEST(Stable, IndependentIncrements) {
  const std::size_t n = 20000;
  auto grid = TimeGrid::uniform(1.0, 2);
  auto incs = map_replicas(n, 3, [&](std::size_t, Rng& rng) {
    auto p = simulate_stable(0.5, grid, rng);
    return std::pair{p.increment(0), p.increment(1)};
  });
  std::vector<double> a(n), b(n);
  // Bounded transform keeps the sample correlation well defined.
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = std::exp(-incs[i].first);
    b[i] = std::exp(-incs[i].second);
  }
  EXPECT_LE(std::abs(stats::correlation(a, b)), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Stable, Deterministic) {
  auto grid = TimeGrid::uniform(1.0, 64);
  auto a = simulate_stable(0.5, grid, std::uint64_t{9});
  auto b = simulate_stable(0.5, grid, std::uint64_t{9});
  EXPECT_EQ(a.values, b.values);
  EXPECT_THROW(simulate_stable(1.2, grid, std::uint64_t{9}), DomainError);
}

TEST(Gamma, GridLaplaceTransform) {
  auto grid = TimeGrid::uniform(1.0, 8);
  auto x = map_replicas(100000, 5, [&](std::size_t, Rng& rng) { return simulate_gamma_grid(grid, rng).values.back(); });
  for (double r : {0.5, 1.0, 2.0}) {
    auto [m, se] = laplace_mc(x, r);
    EXPECT_LE(std::abs(m - 1.0 / (1.0 + r)), 3.0 * se) << r;
  }
}

TEST(CompoundPoisson, DriftOnlyIsExact) {
  auto p = simulate_general(BernsteinFunction::drift_only(1.0), 2.0, 1e-3, std::uint64_t{1});
  EXPECT_TRUE(p.jump_times().empty());
  EXPECT_DOUBLE_EQ(p.evaluate(0.5), 0.5);
  EXPECT_DOUBLE_EQ(p.evaluate(2.0), 2.0);
  EXPECT_EQ(p.provenance().kind, Provenance::Kind::DriftOnly);
}

TEST(CompoundPoisson, PathInvariants) {
  auto phi = BernsteinFunction::gamma();
  CompoundPoissonSampler cp(phi, 1e-3);
  EXPECT_LT(cp.table_error(), 1e-6);
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    auto p = cp.sample(1.0, rng);
    const auto& t = p.jump_times();
    for (std::size_t j = 0; j < t.size(); ++j) {
      EXPECT_GT(t[j], 0.0);
      EXPECT_LE(t[j], 1.0);
      if (j > 0) {
        EXPECT_GT(t[j], t[j - 1]);
      }
      EXPECT_GE(p.jump_sizes()[j], 1e-3);
    }
    EXPECT_NEAR(p.drift(), 1.0 - std::exp(-1e-3), 1e-15);
  }
}

TEST(CompoundPoisson, GammaMean) {
  auto phi = BernsteinFunction::gamma();
  CompoundPoissonSampler cp(phi, 1e-4);
  auto x = map_replicas(40000, 8, [&](std::size_t, Rng& rng) { return cp.sample(2.0, rng).total(); });
  auto est = summarize(x);
  EXPECT_LE(std::abs(est.mean - 2.0), 3.0 * est.std_error);
}

TEST(CompoundPoisson, LaplaceCertification) {
  for (const auto& phi : {BernsteinFunction::gamma(), BernsteinFunction::tempered_stable(0.5, 1.0)}) {
    CompoundPoissonSampler cp(phi, 1e-4);
    auto x = map_replicas(100000, 21, [&](std::size_t, Rng& rng) { return cp.sample(1.0, rng).total(); });
    for (double r : {0.5, 1.0, 2.0}) {
      auto [m, se] = laplace_mc(x, r);
      EXPECT_LE(std::abs(m - std::exp(-phi(r))), 3.0 * se) << phi.id() << " r=" << r;
    }
  }
}

TEST(CompoundPoisson, CutoffConsistency) {
  // Compensated-drift bias shrinks with eps; the signal at eps = 0.1 dwarfs MC noise.
  auto phi = BernsteinFunction::tempered_stable(0.5, 1.0);
  const double exact = std::exp(-phi(4.0));
  std::vector<double> err;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    CompoundPoissonSampler cp(phi, eps);
    auto x = map_replicas(100000, 33, [&](std::size_t, Rng& rng) { return cp.sample(1.0, rng).total(); });
    auto [m, se] = laplace_mc(x, 4.0);
    err.push_back(std::abs(m - exact));
    if (eps < 1e-2) {
      EXPECT_LE(err.back(), 3.0 * se);
    }
  }
  EXPECT_GT(err[0], err[1]);
  EXPECT_GT(err[0], err[2]);
}

TEST(CompoundPoisson, Capability) {
  EXPECT_THROW(simulate_general(BernsteinFunction::ratio(0.5), 1.0, 1e-3, std::uint64_t{1}), CapabilityError);
  EXPECT_THROW(simulate_general(BernsteinFunction::gamma(), 1.0, 0.0, std::uint64_t{1}), DomainError);
}

TEST(Path, EvaluateCadlag) {
  SubordinatorPath p(1.0, 0.0, {0.5}, {2.0});
  EXPECT_DOUBLE_EQ(p.evaluate(0.5), 2.0);
  EXPECT_DOUBLE_EQ(p.evaluate(0.49), 0.0);
  EXPECT_DOUBLE_EQ(p.evaluate(1.0), p.total());
  EXPECT_THROW(p.evaluate(1.5), DomainError);
  EXPECT_THROW(SubordinatorPath(1.0, 0.0, {0.5, 0.4}, {1.0, 1.0}), DomainError);
}

TEST(Path, InverseTime) {
  SubordinatorPath drift(2.0, 2.0, {}, {});
  EXPECT_DOUBLE_EQ(drift.inverse_time(1.0), 0.5);
  // drift 1, jump of size 2 at tau = 1: S goes 1 -> 3 at tau.
  SubordinatorPath jump(2.0, 1.0, {1.0}, {2.0});
  EXPECT_DOUBLE_EQ(jump.inverse_time(2.0), 1.0);
  EXPECT_DOUBLE_EQ(jump.inverse_time(0.5), 0.5);
  EXPECT_DOUBLE_EQ(jump.inverse_time(3.5), 1.5);
  EXPECT_THROW(jump.inverse_time(4.0), RangeError);
}

TEST(Path, ChangeOfVariables) {
  // int_0^{S_u} S^{-1}(v) dv = int_0^u s dS_s for u not a jump time.
  CompoundPoissonSampler cp(BernsteinFunction::gamma(), 1e-2);
  Rng rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    auto p = cp.sample(1.0, rng);
    for (double u : {0.3, 0.77, 1.0}) {
      const double top = p.evaluate(u);
      // Breakpoints of S^{-1}: the levels just before and after each jump.
      std::vector<double> knots{0.0};
      double cum = 0.0;
      for (std::size_t j = 0; j < p.jump_times().size(); ++j) {
        const double before = p.drift() * p.jump_times()[j] + cum;
        cum += p.jump_sizes()[j];
        for (double v : {before, before + p.jump_sizes()[j]})
          if (v > knots.back() && v < top) knots.push_back(v);
      }
      knots.push_back(top);
      double lhs = 0.0;
      for (std::size_t k = 0; k + 1 < knots.size(); ++k)
        lhs += quad::adaptive([&](double v) { return p.inverse_time(v); }, knots[k], knots[k + 1], {1e-13, 1e-12}).value;
      const double rhs = stieltjes(Integrand::power(-1.0).restricted(0.0, u), p);
      EXPECT_NEAR(lhs, rhs, 1e-8) << "u=" << u;
    }
  }
}

TEST(Path, OnGridMatchesEvaluate) {
  CompoundPoissonSampler cp(BernsteinFunction::gamma(), 1e-3);
  Rng rng(2);
  auto p = cp.sample(1.0, rng);
  auto g = p.on_grid(TimeGrid::uniform(1.0, 10));
  for (std::size_t k = 0; k < g.times.size(); ++k) EXPECT_DOUBLE_EQ(g.values[k], p.evaluate(g.times[k]));
}

TEST(Csv, GridAndJumpFormats) {
  GridPath g;
  g.times = {0.0, 0.5, 1.0};
  g.values = {0.0, 0.25, 2.0};
  std::ostringstream a;
  write_csv(a, g);
  EXPECT_EQ(a.str(), "t,S_t\n0,0\n0.5,0.25\n1,2\n");
  SubordinatorPath p(2.0, 0.5, {1.5}, {3.0});
  std::ostringstream b;
  write_csv(b, p);
  EXPECT_EQ(b.str(), "drift=0.5,T=2\ntime,size\n1.5,3\n");
}

TEST(Grid, Constructors) {
  auto g = TimeGrid::graded(1.0, 4, 2.0);
  EXPECT_DOUBLE_EQ(g[1], 1.0 / 16.0);
  EXPECT_EQ(g.refined().cells(), 8u);
  auto geo = TimeGrid::geometric(1.0, 1e-3, 10);
  EXPECT_EQ(geo[0], 0.0);
  EXPECT_DOUBLE_EQ(geo[1], 1e-3);
  EXPECT_DOUBLE_EQ(geo.horizon(), 1.0);
  EXPECT_THROW(TimeGrid::from_nodes({0.0, 1.0, 1.0}), DomainError);
  EXPECT_THROW(TimeGrid::uniform(1.0, 0), DomainError);
}
