#pragma once

// Pathwise Lebesgue-Stieltjes integrals int f dS and the deterministic
// criterion int phi(f(t)) dt that decides their almost-sure finiteness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "levyint/bernstein.hpp"
#include "levyint/integrand.hpp"
#include "levyint/parallel.hpp"
#include "levyint/quadrature.hpp"
#include "levyint/subordinator.hpp"

namespace levyint {

inline constexpr double kOverflowGuard = 1e300;

/// Evaluation node inside each grid cell.
enum class GridRule { Midpoint, LeftPoint };

/// Integrand weights attached to the cells of a grid. LeftPoint replaces t_0
/// by t_1 when f is unbounded at 0.
inline std::vector<double> grid_weights(const Integrand& f, const std::vector<double>& times, GridRule rule) {
  std::vector<double> w(times.size() - 1);
  for (std::size_t k = 0; k < w.size(); ++k) {
    double t = rule == GridRule::Midpoint ? 0.5 * (times[k] + times[k + 1]) : times[k];
    if (rule == GridRule::LeftPoint && k == 0 && (f.singular_at_zero() || !std::isfinite(f(t)))) t = times[1];
    w[k] = f(t);
  }
  return w;
}

namespace detail {

// sum_k w_k dS_k with the overflow guard; infinite weights on empty cells are skipped.
inline double weighted_sum(const std::vector<double>& w, const std::vector<double>& values) {
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double ds = values[k + 1] - values[k];
    if (ds == 0.0 || w[k] == 0.0) continue;
    acc += w[k] * ds;
    if (!(acc <= kOverflowGuard)) return kInf;
  }
  return acc;
}

}  // namespace detail

/// Riemann-Stieltjes sum over a grid path.
inline double stieltjes(const Integrand& f, const GridPath& path, GridRule rule = GridRule::Midpoint) {
  return detail::weighted_sum(grid_weights(f, path.times, rule), path.values);
}

/// int_0^T f(t) dt by the improper-integral driver, +inf when divergent.
inline double drift_integral(const Integrand& f, double T) {
  const double lo = std::max(0.0, f.window_lo());
  const double hi = std::min(T, f.window_hi());
  if (!(hi > lo)) return 0.0;
  if (f.kind() == Integrand::Kind::Constant) return f.param() * (hi - lo);
  auto r = quad::improper([&](double t) { return f.raw(t); }, lo, hi);
  if (r.status == quad::Status::Infinite) return kInf;
  if (r.status == quad::Status::Undetermined) throw NumericError("drift integral undetermined: " + r.diagnostic);
  return r.value;
}

/// Exact integral over a drift-plus-jumps path.
inline double stieltjes(const Integrand& f, const SubordinatorPath& path, double drift_part_of_f) {
  double acc = 0.0;
  if (path.drift() > 0.0) {
    if (!std::isfinite(drift_part_of_f)) return kInf;
    acc = path.drift() * drift_part_of_f;
  }
  const auto& t = path.jump_times();
  const auto& s = path.jump_sizes();
  for (std::size_t j = 0; j < t.size(); ++j) {
    acc += f(t[j]) * s[j];
    if (!(acc <= kOverflowGuard)) return kInf;
  }
  return acc;
}

inline double stieltjes(const Integrand& f, const SubordinatorPath& path) {
  return stieltjes(f, path, path.drift() > 0.0 ? drift_integral(f, path.horizon()) : 0.0);
}

/// Integrator for many paths sharing one integrand, grid and horizon.
class PathIntegrator {
 public:
  PathIntegrator(Integrand f, double T) : f_(std::move(f)), T_(T) {}
  PathIntegrator(Integrand f, const TimeGrid& grid, GridRule rule = GridRule::Midpoint)
      : f_(std::move(f)), T_(grid.horizon()), weights_(grid_weights(f_, grid.nodes(), rule)) {}

  double operator()(const GridPath& p) const {
    if (weights_.size() + 1 != p.values.size()) throw DomainError("PathIntegrator: grid mismatch");
    return detail::weighted_sum(weights_, p.values);
  }

  double operator()(const SubordinatorPath& p) const {
    if (p.drift() > 0.0 && !drift_cached_) {
      drift_value_ = drift_integral(f_, T_);
      drift_cached_ = true;
    }
    return stieltjes(f_, p, p.drift() > 0.0 ? drift_value_ : 0.0);
  }

  /// Must be called once before concurrent use on paths with drift.
  void prepare_drift() const {
    if (!drift_cached_) {
      drift_value_ = drift_integral(f_, T_);
      drift_cached_ = true;
    }
  }

  const Integrand& integrand() const { return f_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  Integrand f_;
  double T_;
  std::vector<double> weights_;
  mutable bool drift_cached_ = false;
  mutable double drift_value_ = 0.0;
};

// ---------------------------------------------------------------------------
// Finiteness criterion and zero-one verdict

struct Criterion {
  quad::Status status = quad::Status::Undetermined;
  double value = kNaN;
  std::string route;       // "closed-form" or "quadrature"
  std::string diagnostic;

  bool finite() const { return status == quad::Status::Finite; }
  bool infinite() const { return status == quad::Status::Infinite; }
};

namespace detail {

inline Criterion closed(double v) {
  Criterion c;
  c.route = "closed-form";
  if (std::isinf(v)) {
    c.status = quad::Status::Infinite;
    c.value = kInf;
  } else {
    c.status = quad::Status::Finite;
    c.value = v;
  }
  return c;
}

// int_a^b t^{-k} dt for 0 <= a < b <= inf.
inline double power_integral(double k, double a, double b) {
  if (k == 1.0) return (a > 0.0 && std::isfinite(b)) ? std::log(b / a) : kInf;
  if (k > 1.0 && a == 0.0) return kInf;
  if (k < 1.0 && std::isinf(b)) return kInf;
  const double e = 1.0 - k;
  const double fb = std::isinf(b) ? 0.0 : std::pow(b, e);
  const double fa = a == 0.0 ? 0.0 : std::pow(a, e);
  return (fb - fa) / e;
}

}  // namespace detail

/// int_a^b phi(f(t)) dt, with closed forms for the stable/power, constant and
/// stable/exponential pairs.
inline Criterion finiteness_criterion(const Integrand& f, const BernsteinFunction& phi, double a, double b,
                                      const quad::Options& opt = {}) {
  if (!(b > a) || !(a >= 0.0)) throw DomainError("finiteness_criterion: need 0 <= a < b");
  const double lo = std::max(a, f.window_lo());
  const double hi = std::min(b, f.window_hi());
  if (!(hi > lo) || f.identically_zero()) return detail::closed(0.0);

  if (f.kind() == Integrand::Kind::Constant) {
    const double v = phi(f.param());
    return detail::closed(std::isinf(hi) ? kInf : v * (hi - lo));
  }
  if (phi.is_stable()) {
    const double alpha = phi.stable_alpha();
    if (f.kind() == Integrand::Kind::PowerSingular) return detail::closed(detail::power_integral(alpha * f.param(), lo, hi));
    if (f.kind() == Integrand::Kind::Exponential) {
      const double k = alpha * f.param();
      const double eb = std::isinf(hi) ? 0.0 : std::exp(-k * hi);
      return detail::closed((std::exp(-k * lo) - eb) / k);
    }
  }
  auto g = [&](double t) {
    const double v = f.raw(t);
    return v > 0.0 ? phi.eval_unchecked(v) : 0.0;
  };
  auto r = quad::improper(g, lo, hi, opt);
  Criterion c;
  c.route = "quadrature";
  c.status = r.status;
  c.value = r.status == quad::Status::Infinite ? kInf : r.value;
  c.diagnostic = r.diagnostic;
  return c;
}

enum class Verdict { AlmostSurelyFinite, AlmostSurelyInfinite, Undetermined };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::AlmostSurelyFinite: return "AlmostSurelyFinite";
    case Verdict::AlmostSurelyInfinite: return "AlmostSurelyInfinite";
    case Verdict::Undetermined: return "Undetermined";
  }
  return "?";
}

struct ZeroOneResult {
  Verdict verdict = Verdict::Undetermined;
  Criterion criterion;
};

/// {int f dS < inf} has probability 0 or 1 according to int phi(f) dt.
inline ZeroOneResult zero_one_verdict(const Integrand& f, const BernsteinFunction& phi, double a, double b) {
  ZeroOneResult r;
  r.criterion = finiteness_criterion(f, phi, a, b);
  switch (r.criterion.status) {
    case quad::Status::Finite: r.verdict = Verdict::AlmostSurelyFinite; break;
    case quad::Status::Infinite: r.verdict = Verdict::AlmostSurelyInfinite; break;
    case quad::Status::Undetermined: r.verdict = Verdict::Undetermined; break;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Empirical truncation study

/// Medians over paths of int_delta^T f dS for delta = T 10^{-j} and of the
/// contributions of single decades. Geometric decay of the decade
/// contributions means the truncated integrals settle; otherwise they grow.
struct TruncationStudy {
  std::vector<double> deltas;
  std::vector<double> median_truncated;
  std::vector<double> median_decade;
  double decade_ratio = kNaN;  // fitted factor between consecutive decade medians
  bool grows = false;
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Driver must be stable (exact grid increments) or gamma (exact grid
/// increments); paths live on a geometric grid down to T 10^{-decades}.
inline TruncationStudy truncation_study(const Integrand& f, const BernsteinFunction& phi, double T, int decades,
                                        int per_decade, std::size_t paths, std::uint64_t seed,
                                        double growth_threshold = 0.9, unsigned width = 0) {
  if (decades < 3) throw DomainError("truncation_study: need at least 3 decades");
  const bool stable = phi.is_stable();
  if (!stable && phi.family() != Family::Gamma)
    throw CapabilityError("truncation_study: needs an exact grid sampler (stable or gamma)");
  const double tmin = T * std::pow(10.0, -decades);
  // Nodes: 0, then per_decade cells in each decade [T 10^{-j-1}, T 10^{-j}].
  std::vector<double> nodes{0.0};
  for (int k = 0; k <= decades * per_decade; ++k)
    nodes.push_back(tmin * std::pow(10.0, static_cast<double>(k) / per_decade));
  nodes.back() = T;
  const TimeGrid grid = TimeGrid::from_nodes(nodes);
  const auto w = grid_weights(f, grid.nodes(), GridRule::Midpoint);

  auto per_path = map_replicas(
      paths, seed,
      [&](std::size_t, Rng& rng) {
        GridPath p = stable ? simulate_stable(phi.stable_alpha(), grid, rng) : simulate_gamma_grid(grid, rng);
        // decade j (j = 0 nearest T): cells with index in [1 + (decades-1-j) per_decade, ...).
        std::vector<double> d(decades, 0.0);
        for (int j = 0; j < decades; ++j) {
          const std::size_t first = 1 + static_cast<std::size_t>((decades - 1 - j) * per_decade);
          for (int c = 0; c < per_decade; ++c) {
            const std::size_t k = first + static_cast<std::size_t>(c);
            d[j] += w[k] * p.increment(k);
          }
        }
        return d;
      },
      width);

  TruncationStudy out;
  std::vector<double> col(paths), cum(paths, 0.0);
  for (int j = 0; j < decades; ++j) {
    for (std::size_t i = 0; i < paths; ++i) {
      col[i] = per_path[i][j];
      cum[i] += col[i];
    }
    out.deltas.push_back(T * std::pow(10.0, -(j + 1)));
    out.median_decade.push_back(detail::median(col));
    out.median_truncated.push_back(detail::median(cum));
  }
  // Least-squares slope of log10(median decade contribution) against j >= 1.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int j = 1; j < decades; ++j) {
    const double y = std::log10(std::max(out.median_decade[j], 1e-300));
    sx += j;
    sy += y;
    sxx += double(j) * j;
    sxy += j * y;
    ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  out.decade_ratio = std::pow(10.0, slope);
  out.grows = out.decade_ratio >= growth_threshold;
  return out;
}

}  // namespace levyint
