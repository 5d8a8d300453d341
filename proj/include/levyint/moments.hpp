#pragma once

// Exact stable moments, the characteristic functional, Monte Carlo
// estimators and the index-gated bound scans for general exponents.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "levyint/bernstein.hpp"
#include "levyint/errors.hpp"
#include "levyint/integrate.hpp"
#include "levyint/parallel.hpp"
#include "levyint/special.hpp"
#include "levyint/subordinator.hpp"

namespace levyint {

// ---------------------------------------------------------------------------
// Monte Carlo summaries

enum class EstimatorMethod { PlainMean, MedianOfMeans };

inline const char* to_string(EstimatorMethod m) {
  return m == EstimatorMethod::PlainMean ? "PlainMean" : "MedianOfMeans";
}

struct MCEstimate {
  std::size_t n_samples = 0;
  double mean = kNaN;
  double std_error = 0.0;
  bool heavy_tail_flag = false;
  EstimatorMethod method = EstimatorMethod::PlainMean;
  std::size_t blocks = 0;
  std::size_t n_infinite = 0;
};

/// Pairwise (cascade) summation; the result depends only on the order of x.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline double pairwise_mean(const std::vector<double>& x) {
  return x.empty() ? kNaN : pairwise_sum(x.data(), x.size()) / static_cast<double>(x.size());
}

namespace detail {

inline double sample_sd(const std::vector<double>& x, double mean) {
  if (x.size() < 2) return 0.0;
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - mean) * (x[i] - mean);
  return std::sqrt(pairwise_sum(sq.data(), sq.size()) / static_cast<double>(x.size() - 1));
}

// Second moment over the prefixes N/4, N/2, N; growth by more than 25% at
// both doublings marks a non-stabilizing second moment.
inline bool second_moment_unstable(const std::vector<double>& x) {
  if (x.size() < 64) return false;
  auto m2 = [&](std::size_t n) {
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = x[i] * x[i];
    return pairwise_sum(sq.data(), n) / static_cast<double>(n);
  };
  const double a = m2(x.size() / 4), b = m2(x.size() / 2), c = m2(x.size());
  return b > 1.25 * a && c > 1.25 * b;
}

}  // namespace detail

/// Plain mean with SE = sd/sqrt(n), or median of block means with
/// SE = 1.2533 sd(block means)/sqrt(B). Infinite samples make the mean +inf.
inline MCEstimate summarize(const std::vector<double>& x, EstimatorMethod method = EstimatorMethod::PlainMean,
                            std::size_t blocks = 32, bool heavy_regime = false) {
  MCEstimate e;
  e.n_samples = x.size();
  e.method = method;
  for (double v : x) e.n_infinite += std::isinf(v) ? 1 : 0;
  if (x.empty()) return e;
  if (e.n_infinite > 0) {
    e.mean = kInf;
    e.std_error = kInf;
    e.heavy_tail_flag = true;
    return e;
  }
  e.heavy_tail_flag = heavy_regime || detail::second_moment_unstable(x);
  if (method == EstimatorMethod::PlainMean || x.size() < 2 * blocks) {
    e.method = EstimatorMethod::PlainMean;
    e.mean = pairwise_mean(x);
    e.std_error = detail::sample_sd(x, e.mean) / std::sqrt(static_cast<double>(x.size()));
    return e;
  }
  e.blocks = blocks;
  std::vector<double> means(blocks);
  const std::size_t n = x.size();
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t lo = b * n / blocks, hi = (b + 1) * n / blocks;
    means[b] = pairwise_sum(x.data() + lo, hi - lo) / static_cast<double>(hi - lo);
  }
  std::vector<double> sorted = means;
  std::sort(sorted.begin(), sorted.end());
  e.mean = blocks % 2 ? sorted[blocks / 2] : 0.5 * (sorted[blocks / 2 - 1] + sorted[blocks / 2]);
  const double mm = pairwise_mean(means);
  e.std_error = 1.2533141373155 * detail::sample_sd(means, mm) / std::sqrt(static_cast<double>(blocks));
  return e;
}

// ---------------------------------------------------------------------------
// Integral sampler

struct SamplerConfig {
  enum class Scheme { Auto, StableGrid, GammaGrid, CompoundPoisson };
  Scheme scheme = Scheme::Auto;
  std::size_t cells = 256;      // grid cells for non-constant integrands
  double grade = 3.0;           // t_k = T (k/K)^grade for integrands singular at 0
  double epsilon = 1e-4;        // compound Poisson cutoff
  GridRule rule = GridRule::Midpoint;
  std::optional<std::vector<double>> nodes;  // explicit grid
  unsigned width = 0;           // worker count, 0 = default
};

/// Draws int_0^T f dS for one replica.
class IntegralSampler {
 public:
  IntegralSampler(const BernsteinFunction& phi, const Integrand& f, double T, const SamplerConfig& cfg = {})
      : phi_(phi), f_(f), T_(T), cfg_(cfg) {
    if (!(T > 0.0)) throw DomainError("sampler: horizon must be positive");
    scheme_ = cfg.scheme;
    if (scheme_ == SamplerConfig::Scheme::Auto)
      scheme_ = phi.is_stable() ? SamplerConfig::Scheme::StableGrid : SamplerConfig::Scheme::CompoundPoisson;
    switch (scheme_) {
      case SamplerConfig::Scheme::StableGrid:
        if (!phi.is_stable()) throw CapabilityError("stable grid sampler needs a stable exponent");
        make_grid();
        break;
      case SamplerConfig::Scheme::GammaGrid:
        if (phi.family() != Family::Gamma) throw CapabilityError("gamma grid sampler needs the gamma exponent");
        make_grid();
        break;
      case SamplerConfig::Scheme::CompoundPoisson:
        if (!phi.simulable()) throw CapabilityError(phi.id() + " is not simulable");
        if (phi.family() != Family::DriftOnly) cp_.emplace(phi, cfg.epsilon);
        integrator_.emplace(f_, T_);
        integrator_->prepare_drift();
        break;
      case SamplerConfig::Scheme::Auto: break;
    }
  }

  double draw(Rng& rng) const {
    switch (scheme_) {
      case SamplerConfig::Scheme::StableGrid: return (*integrator_)(simulate_stable(phi_.stable_alpha(), *grid_, rng));
      case SamplerConfig::Scheme::GammaGrid: return (*integrator_)(simulate_gamma_grid(*grid_, rng));
      case SamplerConfig::Scheme::CompoundPoisson:
        if (!cp_) return (*integrator_)(SubordinatorPath(T_, phi_.drift(), {}, {}));
        return (*integrator_)(cp_->sample(T_, rng));
      case SamplerConfig::Scheme::Auto: break;
    }
    return kNaN;
  }

  const std::optional<TimeGrid>& grid() const { return grid_; }
  SamplerConfig::Scheme scheme() const { return scheme_; }

  std::string description() const {
    char buf[128];
    switch (scheme_) {
      case SamplerConfig::Scheme::StableGrid:
      case SamplerConfig::Scheme::GammaGrid:
        std::snprintf(buf, sizeof buf, "%s grid, %zu cells, %s rule",
                      scheme_ == SamplerConfig::Scheme::StableGrid ? "stable" : "gamma", grid_->cells(),
                      cfg_.rule == GridRule::Midpoint ? "midpoint" : "left-point");
        return buf;
      case SamplerConfig::Scheme::CompoundPoisson:
        std::snprintf(buf, sizeof buf, "compound Poisson, eps=%.6g", cfg_.epsilon);
        return buf;
      case SamplerConfig::Scheme::Auto: break;
    }
    return "?";
  }

 private:
  void make_grid() {
    if (cfg_.nodes) {
      grid_ = TimeGrid::from_nodes(*cfg_.nodes);
    } else {
      const bool flat = (f_.kind() == Integrand::Kind::Constant ||
                         (f_.kind() == Integrand::Kind::PowerSingular && f_.param() == 0.0)) &&
                        f_.window_lo() <= 0.0 && f_.window_hi() >= T_;
      if (flat) {
        grid_ = TimeGrid::uniform(T_, 1);
      } else if (f_.window_lo() > 0.0 && f_.window_lo() < T_) {
        grid_ = TimeGrid::geometric(T_, f_.window_lo(), static_cast<int>(std::max<std::size_t>(cfg_.cells / 8, 8)));
      } else if (f_.singular_at_zero()) {
        grid_ = TimeGrid::graded(T_, cfg_.cells, cfg_.grade);
      } else {
        grid_ = TimeGrid::uniform(T_, cfg_.cells);
      }
    }
    if (std::abs(grid_->horizon() - T_) > 1e-12 * T_) throw DomainError("sampler: grid horizon differs from T");
    integrator_.emplace(f_, *grid_, cfg_.rule);
  }

  BernsteinFunction phi_;
  Integrand f_;
  double T_;
  SamplerConfig cfg_;
  SamplerConfig::Scheme scheme_;
  std::optional<TimeGrid> grid_;
  std::optional<PathIntegrator> integrator_;
  std::optional<CompoundPoissonSampler> cp_;
};

/// One integral per replica, in replica order.
inline std::vector<double> sample_integrals(const BernsteinFunction& phi, const Integrand& f, double T, std::size_t n,
                                            std::uint64_t seed, const SamplerConfig& cfg = {}) {
  IntegralSampler sampler(phi, f, T, cfg);
  return map_replicas(n, seed, [&](std::size_t, Rng& rng) { return sampler.draw(rng); }, cfg.width);
}

// ---------------------------------------------------------------------------
// Characteristic functional

/// exp(-int_a^b phi(f(t)) dt); 0 when the criterion diverges.
inline double char_functional_exact(const BernsteinFunction& phi, const Integrand& f, double a, double b) {
  auto c = finiteness_criterion(f, phi, a, b);
  if (c.status == quad::Status::Undetermined) throw NumericError("characteristic functional undetermined: " + c.diagnostic);
  if (c.infinite()) return 0.0;
  return std::exp(-c.value);
}

/// Mean of exp(-int_0^T f dS) over n paths.
inline MCEstimate char_functional_mc(const BernsteinFunction& phi, const Integrand& f, double T, std::size_t n,
                                     std::uint64_t seed, const SamplerConfig& cfg = {}) {
  auto x = sample_integrals(phi, f, T, n, seed, cfg);
  for (auto& v : x) v = std::isinf(v) ? 0.0 : std::exp(-v);
  return summarize(x, EstimatorMethod::PlainMean);
}

// ---------------------------------------------------------------------------
// Exact stable moments

/// E[(int_a^b f dS)^p] for the alpha-stable subordinator.
inline double exact_stable_moment(double alpha, double p, const Integrand& f, double a, double b) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("exact_stable_moment: alpha must lie in (0,1)");
  auto c = finiteness_criterion(f, BernsteinFunction::stable(alpha), a, b);
  if (c.status == quad::Status::Undetermined) throw NumericError("exact_stable_moment: int f^alpha undetermined");
  if (c.finite() && c.value == 0.0) throw PreconditionRefusal("Leb{f > 0} = 0: int f^alpha dt = 0");
  if (p == 0.0) return 1.0;
  if (p >= alpha) return kInf;
  if (c.infinite()) return p > 0.0 ? kInf : 0.0;
  return gamma_ratio(1.0 - p / alpha, 1.0 - p) * std::pow(c.value, p / alpha);
}

enum class CorollaryCase { PowerHead, PowerTail, ExponentialHead };

inline const char* to_string(CorollaryCase c) {
  switch (c) {
    case CorollaryCase::PowerHead: return "PowerHead";
    case CorollaryCase::PowerTail: return "PowerTail";
    case CorollaryCase::ExponentialHead: return "ExponentialHead";
  }
  return "?";
}

/// Closed forms for int_0^T t^{-theta} dS (PowerHead), int_T^inf t^{-theta} dS
/// (PowerTail) and int_0^T e^{-lambda t} dS (ExponentialHead).
inline double corollary_case_moment(double alpha, double p, double param, double T, CorollaryCase which) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("corollary moment: alpha must lie in (0,1)");
  if (!(T > 0.0)) throw DomainError("corollary moment: T must be positive");
  auto degenerate = [&]() { return p < 0.0 ? 0.0 : (p == 0.0 ? 1.0 : kInf); };
  const double g = p < alpha ? gamma_ratio(1.0 - p / alpha, 1.0 - p) : kInf;
  switch (which) {
    case CorollaryCase::PowerHead: {
      const double theta = param;
      if (theta >= 1.0 / alpha) return degenerate();
      if (p == 0.0) return 1.0;
      if (p >= alpha) return kInf;
      return g / std::pow(1.0 - alpha * theta, p / alpha) * std::pow(T, p * (1.0 / alpha - theta));
    }
    case CorollaryCase::PowerTail: {
      const double theta = param;
      if (theta <= 1.0 / alpha) return degenerate();
      if (p == 0.0) return 1.0;
      if (p >= alpha) return kInf;
      return g / std::pow(alpha * theta - 1.0, p / alpha) * std::pow(T, p * (1.0 / alpha - theta));
    }
    case CorollaryCase::ExponentialHead: {
      const double lambda = param;
      if (!(lambda > 0.0)) throw DomainError("corollary moment: lambda must be positive");
      if (p == 0.0) return 1.0;
      if (p >= alpha) return kInf;
      return g * std::pow(-std::expm1(-alpha * lambda * T) / (alpha * lambda), p / alpha);
    }
  }
  throw DomainError("corollary moment: unknown case");
}

// ---------------------------------------------------------------------------
// Monte Carlo moments

inline bool stable_heavy_regime(const BernsteinFunction& phi, double p) {
  return phi.is_stable() && p >= phi.stable_alpha() / 2.0 && p < phi.stable_alpha();
}

/// Mean of (int_0^T f dS)^p. Infinite integrals give +inf for p > 0 and 0 for
/// p < 0. Without an explicit method, median-of-means is used in the stable
/// regime alpha/2 <= p < alpha where the variance is infinite.
inline MCEstimate mc_moment(const BernsteinFunction& phi, double p, const Integrand& f, double T, std::size_t n,
                            std::uint64_t seed, std::optional<EstimatorMethod> method = std::nullopt,
                            const SamplerConfig& cfg = {}) {
  if (p == 0.0) {
    MCEstimate e;
    e.n_samples = n;
    e.mean = 1.0;
    e.std_error = 0.0;
    return e;
  }
  const bool heavy = stable_heavy_regime(phi, p);
  const EstimatorMethod m = method.value_or(heavy ? EstimatorMethod::MedianOfMeans : EstimatorMethod::PlainMean);
  auto x = sample_integrals(phi, f, T, n, seed, cfg);
  for (auto& v : x) {
    if (std::isinf(v)) v = p > 0.0 ? kInf : 0.0;
    else v = std::pow(v, p);
  }
  return summarize(x, m, 32, heavy);
}

// ---------------------------------------------------------------------------
// Bound scans

enum class BoundKind { Power, Exponential };

struct GateResult {
  bool ok = true;
  std::string clause;     // applicable clause, by content
  std::string violation;  // violated condition, when !ok
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string show(const std::optional<double>& v) { return v ? num(*v) : std::string("undetermined"); }

}  // namespace detail

/// Checks (p, theta or lambda) against the doubling indices for horizons in
/// [Tmin, Tmax]; a range straddling 1 needs both the small-T and large-T
/// clauses.
inline GateResult bound_gate(const BernsteinFunction& phi, double p, BoundKind kind, double param, double Tmin,
                             double Tmax, const DoublingIndices& idx) {
  GateResult g;
  auto fail = [&](std::string why) {
    if (g.ok) g.violation = std::move(why);
    g.ok = false;
  };
  auto lt = [](double x, const std::optional<double>& bound) { return bound && x < *bound; };
  const bool small = Tmin < 1.0;
  const bool large = Tmax >= 1.0;
  const double theta = param;

  if (kind == BoundKind::Exponential) {
    if (!(param > 0.0)) throw DomainError("bound gate: lambda must be positive");
    if (p > 0.0) {
      fail("p > 0 with the exponential integrand: only the integral criterion int_0^1 phi(s) s^{-p-1} ds < inf applies");
      return g;
    }
    g.clause = "exponential integrand, p <= 0";
    if (!(idx.at_infinity && *idx.at_infinity > 0.0))
      fail("log₂ liminf_{s→∞} φ(2s)/φ(s) = " + detail::show(idx.at_infinity) + " is not > 0");
    return g;
  }
  if (!(theta >= 0.0)) throw DomainError("bound gate: theta must be >= 0");

  if (p <= 0.0) {
    g.clause = "power integrand, p <= 0";
    if (large) {
      auto lg = log_growth_liminf(phi);
      if (!(lg && *lg > 0.0)) fail("liminf_{s→∞} φ(s)/log s = " + detail::show(lg) + " is not > 0");
      if (!(idx.at_zero && *idx.at_zero > 0.0))
        fail("log₂ liminf_{s→0} φ(2s)/φ(s) = " + detail::show(idx.at_zero) + " is not > 0");
    }
    if (small && !(idx.at_infinity && *idx.at_infinity > 0.0))
      fail("log₂ liminf_{s→∞} φ(2s)/φ(s) = " + detail::show(idx.at_infinity) + " is not > 0");
    return g;
  }

  if (theta == 0.0) {
    g.clause = "S_T, p >= 0";
    if (small && !lt(p, idx.global_inf))
      fail("p ≥ log₂ inf φ(2s)/φ(s) = " + detail::show(idx.global_inf) + " (needed for T < 1)");
    if (large && !lt(p, idx.at_zero))
      fail("p ≥ log₂ liminf_{s→0} φ(2s)/φ(s) = " + detail::show(idx.at_zero) + " (needed for T ≥ 1)");
    return g;
  }

  g.clause = "power integrand, p >= 0, theta > 0";
  if (large) {
    if (!lt(p, idx.at_zero))
      fail("p ≥ log₂ liminf_{s→0} φ(2s)/φ(s) = " + detail::show(idx.at_zero) + " (needed for T ≥ 1)");
    if (!(idx.global_sup && theta * *idx.global_sup < 1.0))
      fail("θ ≥ 1/log₂ sup φ(2s)/φ(s), with log₂ sup = " + detail::show(idx.global_sup) + " (needed for T ≥ 1)");
  }
  if (small) {
    if (!lt(p, idx.global_inf))
      fail("p ≥ log₂ inf φ(2s)/φ(s) = " + detail::show(idx.global_inf) + " (needed for T ≤ 1)");
    if (!(idx.at_infinity && theta * *idx.at_infinity < 1.0))
      fail("θ ≥ 1/log₂ limsup_{s→∞} φ(2s)/φ(s), with log₂ limsup = " + detail::show(idx.at_infinity) +
           " (needed for T ≤ 1)");
  }
  return g;
}

/// Right-hand side of the moment bound without its constant.
inline double bound_rhs(const BernsteinFunction& phi, double p, BoundKind kind, double param, double T) {
  if (kind == BoundKind::Exponential) return std::pow(phi.inverse(1.0 / std::min(T, 1.0)), -p);
  return std::pow(T, -p * param) * std::pow(phi.inverse(1.0 / T), -p);
}

struct BoundReport {
  std::vector<double> T_grid;
  std::vector<MCEstimate> mc_values;
  std::vector<double> bound_rhs;
  std::vector<double> ratio;
  std::vector<double> ratio_se;
  double max_ratio = kNaN;
  double min_ratio = kNaN;
  double sup_mc = kNaN;  // largest MC value over the grid
  std::string clause;

  void push(double T, const MCEstimate& est, double rhs) {
    const double q = est.mean / rhs;
    if (T_grid.empty()) {
      max_ratio = min_ratio = q;
      sup_mc = est.mean;
    } else {
      max_ratio = std::max(max_ratio, q);
      min_ratio = std::min(min_ratio, q);
      sup_mc = std::max(sup_mc, est.mean);
    }
    T_grid.push_back(T);
    mc_values.push_back(est);
    bound_rhs.push_back(rhs);
    ratio.push_back(q);
    ratio_se.push_back(est.std_error / rhs);
  }
};

/// MC left sides against the bound's right side on a grid of horizons.
/// Throws PreconditionRefusal naming the violated index condition.
inline BoundReport bound_scan(const BernsteinFunction& phi, double p, BoundKind kind, double param,
                              const std::vector<double>& T_grid, std::size_t n, std::uint64_t seed,
                              const SamplerConfig& cfg = {}) {
  if (T_grid.empty()) throw DomainError("bound_scan: empty horizon grid");
  for (double T : T_grid)
    if (!(T > 0.0)) throw DomainError("bound_scan: horizons must be positive");
  BoundReport r;
  if (p != 0.0) {
    const auto idx = doubling_indices(phi);
    const auto [tmin, tmax] = std::minmax_element(T_grid.begin(), T_grid.end());
    auto gate = bound_gate(phi, p, kind, param, *tmin, *tmax, idx);
    if (!gate.ok) throw PreconditionRefusal(gate.violation);
    r.clause = gate.clause;
  } else {
    r.clause = "p = 0";
  }
  for (std::size_t i = 0; i < T_grid.size(); ++i) {
    const double T = T_grid[i];
    const Integrand f = kind == BoundKind::Power ? Integrand::power(param) : Integrand::exponential(param);
    auto est = mc_moment(phi, p, f, T, n, stream_seed(seed, 0x5ca1ab1eULL + i), std::nullopt, cfg);
    const double rhs = p == 0.0 ? 1.0 : bound_rhs(phi, p, kind, param, T);
    r.push(T, est, rhs);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Exponential-integrand moment criterion

enum class Equivalence { BothFinite, BothInfinite, Undetermined };

inline const char* to_string(Equivalence e) {
  switch (e) {
    case Equivalence::BothFinite: return "BothFinite";
    case Equivalence::BothInfinite: return "BothInfinite";
    case Equivalence::Undetermined: return "Undetermined";
  }
  return "?";
}

struct EquivalenceResult {
  Equivalence verdict = Equivalence::Undetermined;
  double criterion = kNaN;  // int_0^1 phi(s) s^{-p-1} ds
  std::string diagnostic;
};

/// E[(int_0^inf e^{-lambda t} dS)^p] < inf iff int_0^1 phi(s) s^{-p-1} ds < inf.
inline EquivalenceResult exp_moment_equivalence(const BernsteinFunction& phi, double p, double lambda) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("exp_moment_equivalence: p must lie in (0,1)");
  if (!(lambda > 0.0)) throw DomainError("exp_moment_equivalence: lambda must be positive");
  auto r = quad::improper([&](double s) { return phi.eval_unchecked(s) * std::pow(s, -p - 1.0); }, 0.0, 1.0);
  EquivalenceResult e;
  e.diagnostic = r.diagnostic;
  switch (r.status) {
    case quad::Status::Finite:
      e.verdict = Equivalence::BothFinite;
      e.criterion = r.value;
      break;
    case quad::Status::Infinite:
      e.verdict = Equivalence::BothInfinite;
      e.criterion = kInf;
      break;
    case quad::Status::Undetermined: break;
  }
  return e;
}

}  // namespace levyint
