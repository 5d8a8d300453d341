#pragma once

// Bernstein functions: catalog, Levy triplets, inversion, doubling indices
// and the structural checks used to gate moment bounds.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "levyint/errors.hpp"
#include "levyint/quadrature.hpp"
#include "levyint/special.hpp"

namespace levyint {

/// Drift b and Levy measure nu of a subordinator, given through its density
/// and two derived functions used by the compound Poisson sampler.
struct LevyTriplet {
  double drift = 0.0;
  std::function<double(double)> levy_density;     // empty: no density available
  std::function<double(double)> tail_mass;        // eps -> nu([eps, inf))
  std::function<double(double)> small_jump_mean;  // eps -> int_0^eps s nu(ds)

  bool has_density() const { return static_cast<bool>(levy_density); }
};

enum class Family { Stable, Gamma, TemperedStable, StableLog, StableLogInv, Ratio, DriftOnly, Custom };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::Stable: return "stable";
    case Family::Gamma: return "gamma";
    case Family::TemperedStable: return "tempered";
    case Family::StableLog: return "stablelog";
    case Family::StableLogInv: return "stableloginv";
    case Family::Ratio: return "ratio";
    case Family::DriftOnly: return "drift";
    case Family::Custom: return "custom";
  }
  return "?";
}

namespace detail {

inline std::string fmt_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Tail mass and small-jump mean of a density by quadrature.
inline LevyTriplet triplet_from_density(double drift, std::function<double(double)> density) {
  LevyTriplet t;
  t.drift = drift;
  t.levy_density = density;
  t.tail_mass = [density](double eps) {
    if (!(eps > 0.0)) throw DomainError("tail_mass: eps must be positive");
    auto r = quad::improper([&](double s) { return density(s); }, eps, quad::kInfinity);
    if (r.status == quad::Status::Infinite) return kInf;
    return r.value;
  };
  t.small_jump_mean = [density](double eps) {
    if (!(eps > 0.0)) throw DomainError("small_jump_mean: eps must be positive");
    auto r = quad::improper([&](double s) { return s * density(s); }, 0.0, eps);
    if (r.status == quad::Status::Infinite) return kInf;
    return r.value;
  };
  return t;
}

}  // namespace detail

class BernsteinFunction {
 public:
  static BernsteinFunction stable(double alpha) {
    require_open_unit(alpha, "stable: alpha");
    BernsteinFunction f(Family::Stable, {alpha});
    const double c = alpha / gamma_fn(1.0 - alpha);
    LevyTriplet t;
    t.levy_density = [alpha, c](double s) { return c * std::pow(s, -alpha - 1.0); };
    t.tail_mass = [alpha](double eps) { return std::pow(eps, -alpha) / gamma_fn(1.0 - alpha); };
    t.small_jump_mean = [alpha, c](double eps) { return c * std::pow(eps, 1.0 - alpha) / (1.0 - alpha); };
    f.triplet_ = std::move(t);
    return f;
  }

  static BernsteinFunction gamma() {
    BernsteinFunction f(Family::Gamma, {});
    LevyTriplet t;
    t.levy_density = [](double s) { return std::exp(-s) / s; };
    t.tail_mass = [](double eps) { return expint_e1(eps); };
    t.small_jump_mean = [](double eps) { return -std::expm1(-eps); };
    f.triplet_ = std::move(t);
    return f;
  }

  static BernsteinFunction tempered_stable(double alpha, double lambda) {
    require_open_unit(alpha, "tempered: alpha");
    if (!(lambda > 0.0)) throw DomainError("tempered: lambda must be positive");
    BernsteinFunction f(Family::TemperedStable, {alpha, lambda});
    const double c = alpha / gamma_fn(1.0 - alpha);
    f.triplet_ = detail::triplet_from_density(
        0.0, [alpha, lambda, c](double s) { return c * std::pow(s, -alpha - 1.0) * std::exp(-lambda * s); });
    return f;
  }

  static BernsteinFunction stable_log(double alpha, double beta) {
    require_open_unit(alpha, "stablelog: alpha");
    if (!(beta >= 0.0 && beta <= 1.0 - alpha)) throw DomainError("stablelog: need 0 <= beta <= 1 - alpha");
    return BernsteinFunction(Family::StableLog, {alpha, beta});
  }

  static BernsteinFunction stable_log_inv(double alpha, double beta) {
    require_open_unit(alpha, "stableloginv: alpha");
    if (!(beta >= 0.0 && beta <= alpha)) throw DomainError("stableloginv: need 0 <= beta <= alpha");
    return BernsteinFunction(Family::StableLogInv, {alpha, beta});
  }

  static BernsteinFunction ratio(double alpha) {
    require_open_unit(alpha, "ratio: alpha");
    return BernsteinFunction(Family::Ratio, {alpha});
  }

  static BernsteinFunction drift_only(double b) {
    if (!(b > 0.0)) throw DomainError("drift: b must be positive");
    BernsteinFunction f(Family::DriftOnly, {b});
    LevyTriplet t;
    t.drift = b;
    t.levy_density = [](double) { return 0.0; };
    t.tail_mass = [](double) { return 0.0; };
    t.small_jump_mean = [](double) { return 0.0; };
    f.triplet_ = std::move(t);
    return f;
  }

  /// User-supplied exponent. `supremum` is finite for bounded phi.
  static BernsteinFunction custom(std::string name, std::function<double(double)> eval,
                                  std::optional<LevyTriplet> triplet = std::nullopt,
                                  double supremum = kInf) {
    BernsteinFunction f(Family::Custom, {});
    f.name_ = std::move(name);
    f.custom_ = std::move(eval);
    if (triplet && triplet->drift < 0.0) throw DomainError("custom: negative drift");
    if (triplet && triplet->has_density() && !triplet->tail_mass)
      *triplet = detail::triplet_from_density(triplet->drift, triplet->levy_density);
    f.triplet_ = std::move(triplet);
    f.supremum_ = supremum;
    return f;
  }

  /// Catalog lookup from ids such as "stable:0.5", "gamma", "tempered:0.5,1",
  /// "stablelog:0.5,0.3", "stableloginv:0.6,0.2", "ratio:0.5", "drift:1".
  static BernsteinFunction parse(std::string_view spec) {
    std::string_view name = spec;
    std::vector<double> args;
    if (auto colon = spec.find(':'); colon != std::string_view::npos) {
      name = spec.substr(0, colon);
      std::string_view rest = spec.substr(colon + 1);
      while (!rest.empty()) {
        auto comma = rest.find(',');
        std::string tok(rest.substr(0, comma));
        try {
          std::size_t used = 0;
          args.push_back(std::stod(tok, &used));
          if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
          throw DomainError("bad parameter '" + tok + "' in phi spec '" + std::string(spec) + "'");
        }
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
    }
    auto need = [&](std::size_t n) {
      if (args.size() != n)
        throw DomainError("phi spec '" + std::string(spec) + "' expects " + std::to_string(n) + " parameter(s)");
    };
    if (name == "stable") { need(1); return stable(args[0]); }
    if (name == "gamma") { need(0); return gamma(); }
    if (name == "tempered") { need(2); return tempered_stable(args[0], args[1]); }
    if (name == "stablelog") { need(2); return stable_log(args[0], args[1]); }
    if (name == "stableloginv") { need(2); return stable_log_inv(args[0], args[1]); }
    if (name == "ratio") { need(1); return ratio(args[0]); }
    if (name == "drift") { need(1); return drift_only(args[0]); }
    throw DomainError("unknown phi family '" + std::string(name) + "'");
  }

  double operator()(double s) const {
    if (!(s > 0.0)) throw DomainError("phi: argument must be positive");
    return eval_unchecked(s);
  }
  double eval(double s) const { return (*this)(s); }

  /// Evaluation without the domain check, for hot loops with s > 0 known.
  double eval_unchecked(double s) const {
    switch (family_) {
      case Family::Stable: return std::pow(s, p_[0]);
      case Family::Gamma: return std::log1p(s);
      case Family::TemperedStable:
        return std::pow(p_[1], p_[0]) * std::expm1(p_[0] * std::log1p(s / p_[1]));
      case Family::StableLog: return std::pow(s, p_[0]) * std::pow(std::log1p(s), p_[1]);
      case Family::StableLogInv: return std::pow(s, p_[0]) * std::pow(std::log1p(s), -p_[1]);
      case Family::Ratio: return s * std::exp(-p_[0] * std::log1p(s));
      case Family::DriftOnly: return p_[0] * s;
      case Family::Custom: return custom_(s);
    }
    return kNaN;
  }

  /// phi^{-1}(y) by geometric bisection; |phi(s) - y| <= rtol * y on return.
  double inverse(double y, double rtol = 1e-12, int max_iter = 200) const {
    if (!(y > 0.0)) throw DomainError("inverse: y must be positive");
    if (y >= supremum_) throw RangeError("inverse: y is not below sup phi");
    double lo = 1.0, hi = 1.0;
    int grow = 0;
    if (eval_unchecked(1.0) < y) {
      while (eval_unchecked(hi) < y) {
        lo = hi;
        hi *= 2.0;
        if (++grow > 2100 || !std::isfinite(hi)) throw RangeError("inverse: y exceeds the numerical range of phi");
      }
    } else {
      while (eval_unchecked(lo) >= y) {
        hi = lo;
        lo *= 0.5;
        if (++grow > 2100 || lo == 0.0) throw RangeError("inverse: y below the numerical range of phi");
      }
    }
    double best = hi;
    double best_res = std::abs(eval_unchecked(hi) - y);
    for (int it = 0; it < max_iter; ++it) {
      const double mid = std::sqrt(lo) * std::sqrt(hi);
      if (!(mid > lo && mid < hi)) break;
      const double v = eval_unchecked(mid);
      const double res = std::abs(v - y);
      if (res < best_res) {
        best = mid;
        best_res = res;
      }
      if (v < y) lo = mid; else hi = mid;
    }
    if (best_res > rtol * y) throw NumericError("inverse: bisection did not reach the requested tolerance");
    return best;
  }

  Family family() const { return family_; }
  const std::vector<double>& params() const { return p_; }
  double param(std::size_t i) const { return p_.at(i); }
  bool simulable() const { return triplet_.has_value() && triplet_->has_density(); }
  const std::optional<LevyTriplet>& triplet() const { return triplet_; }
  double supremum() const { return supremum_; }
  bool is_stable() const { return family_ == Family::Stable; }
  double stable_alpha() const {
    if (family_ != Family::Stable) throw CapabilityError("not a stable exponent");
    return p_[0];
  }
  /// Drift coefficient b, when known.
  double drift() const { return triplet_ ? triplet_->drift : 0.0; }

  std::string id() const {
    if (family_ == Family::Custom) return "custom:" + name_;
    std::string s = to_string(family_);
    for (std::size_t i = 0; i < p_.size(); ++i) s += (i == 0 ? ":" : ",") + detail::fmt_param(p_[i]);
    return s;
  }

 private:
  BernsteinFunction(Family f, std::vector<double> p) : family_(f), p_(std::move(p)) {}

  static void require_open_unit(double a, const char* what) {
    if (!(a > 0.0 && a < 1.0)) throw DomainError(std::string(what) + " must lie in (0,1)");
  }

  Family family_;
  std::vector<double> p_;
  std::string name_;
  std::function<double(double)> custom_;
  std::optional<LevyTriplet> triplet_;
  double supremum_ = kInf;
};

// ---------------------------------------------------------------------------
// Doubling indices

struct DoublingGrid {
  double lo = 1e-8;
  double hi = 1e8;
  int per_decade = 20;
  int decade_step = 8;    // endpoint sequence s = 10^{+-d}, d = step, 2 step, ...
  int max_decade = 296;
  double atol = 1e-8;
};

struct DoublingIndices {
  std::optional<double> global_inf;
  std::optional<double> global_sup;
  std::optional<double> at_zero;
  std::optional<double> at_infinity;
};

/// Limit of g(s) as s -> 0 (toward_zero) or s -> inf, sampled at decades and
/// extrapolated quadratically in x = 1/ln s. Empty if successive extrapolants
/// never agree within atol.
template <class G>
std::optional<double> endpoint_limit(G&& g, bool toward_zero, const DoublingGrid& grid = {}) {
  std::vector<double> xs, vs, extrap;
  for (int d = grid.decade_step; d <= grid.max_decade; d += grid.decade_step) {
    const double s = std::pow(10.0, toward_zero ? -d : d);
    const double v = g(s);
    if (!std::isfinite(v)) break;
    xs.push_back(1.0 / std::log(s));
    vs.push_back(v);
    const std::size_t n = xs.size();
    if (n < 3) continue;
    // Neville: quadratic through the last three points, evaluated at x = 0.
    const double x0 = xs[n - 3], x1 = xs[n - 2], x2 = xs[n - 1];
    const double y0 = vs[n - 3], y1 = vs[n - 2], y2 = vs[n - 1];
    const double p01 = (x1 * y0 - x0 * y1) / (x1 - x0);
    const double p12 = (x2 * y1 - x1 * y2) / (x2 - x1);
    const double p012 = (x2 * p01 - x0 * p12) / (x2 - x0);
    extrap.push_back(p012);
    const std::size_t m = extrap.size();
    if (m >= 3 && std::abs(extrap[m - 1] - extrap[m - 2]) <= grid.atol &&
        std::abs(extrap[m - 2] - extrap[m - 3]) <= grid.atol)
      return extrap[m - 1];
  }
  return std::nullopt;
}

inline double log2_doubling_ratio(const BernsteinFunction& phi, double s) {
  return std::log2(phi.eval_unchecked(2.0 * s) / phi.eval_unchecked(s));
}

inline DoublingIndices doubling_indices(const BernsteinFunction& phi, const DoublingGrid& grid = {}) {
  if (!(grid.lo > 0.0 && grid.hi > grid.lo) || std::log10(grid.hi / grid.lo) < 12.0 - 1e-9)
    throw DomainError("doubling_indices: grid must span at least 12 decades");
  auto ratio = [&](double s) { return log2_doubling_ratio(phi, s); };
  DoublingIndices out;
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  if (auto z = endpoint_limit(ratio, true, grid)) out.at_zero = clamp01(*z);
  if (auto i = endpoint_limit(ratio, false, grid)) out.at_infinity = clamp01(*i);

  double mn = kInf, mx = -kInf;
  const int n = static_cast<int>(std::ceil(std::log10(grid.hi / grid.lo) * grid.per_decade));
  for (int k = 0; k <= n; ++k) {
    const double s = grid.lo * std::pow(10.0, static_cast<double>(k) / grid.per_decade);
    const double v = ratio(s);
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  for (const auto& lim : {out.at_zero, out.at_infinity}) {
    if (lim) {
      mn = std::min(mn, *lim);
      mx = std::max(mx, *lim);
    }
  }
  out.global_inf = clamp01(mn);
  out.global_sup = clamp01(mx);
  return out;
}

/// liminf_{s->inf} phi(s)/log s: +inf when the ratio keeps growing, empty when
/// it neither settles nor grows.
inline std::optional<double> log_growth_liminf(const BernsteinFunction& phi, const DoublingGrid& grid = {}) {
  auto g = [&](double s) { return phi.eval_unchecked(s) / std::log(s); };
  if (auto v = endpoint_limit(g, false, grid)) return std::max(0.0, *v);
  double prev = g(std::pow(10.0, grid.decade_step));
  bool growing = true;
  for (int d = 2 * grid.decade_step; d <= grid.max_decade; d += grid.decade_step) {
    const double v = g(std::pow(10.0, d));
    if (!std::isfinite(v)) return kInf;
    growing = growing && v > prev * (1.0 + 1e-3);
    prev = v;
  }
  if (growing) return kInf;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Structural checks

struct ShapeReport {
  bool increasing = true;
  bool concave = true;
  bool subadditive = true;        // phi(2s) <= 2 phi(s)
  bool derivative_bound = true;   // phi'(s) <= phi(s)/s
  bool vanishes_at_zero = true;   // phi(0+) = 0
  double worst_s = kNaN;          // first offending s, if any
};

inline ShapeReport check_shape(const BernsteinFunction& phi, double lo = 1e-6, double hi = 1e6, int per_decade = 20,
                               double rtol = 1e-9) {
  ShapeReport r;
  const int n = static_cast<int>(std::ceil(std::log10(hi / lo) * per_decade));
  std::vector<double> s(n + 1), v(n + 1);
  for (int k = 0; k <= n; ++k) {
    s[k] = lo * std::pow(10.0, static_cast<double>(k) / per_decade);
    v[k] = phi(s[k]);
  }
  auto flag = [&](bool& which, double at) {
    if (which && std::isnan(r.worst_s)) r.worst_s = at;
    which = false;
  };
  double prev_slope = kInf;
  for (int k = 0; k <= n; ++k) {
    if (k > 0) {
      if (v[k] < v[k - 1] * (1.0 - rtol)) flag(r.increasing, s[k]);
      const double slope = (v[k] - v[k - 1]) / (s[k] - s[k - 1]);
      if (slope > prev_slope * (1.0 + 1e-7) + 1e-300) flag(r.concave, s[k]);
      prev_slope = slope;
    }
    if (phi(2.0 * s[k]) > 2.0 * v[k] * (1.0 + rtol)) flag(r.subadditive, s[k]);
    const double h = 1e-5 * s[k];
    const double deriv = (phi(s[k] + h) - phi(s[k] - h)) / (2.0 * h);
    if (deriv > v[k] / s[k] * (1.0 + 1e-6)) flag(r.derivative_bound, s[k]);
  }
  // phi(0+): along s = 10^{-d}, compared with phi(1).
  const double scale = phi(1.0);
  double tail = kInf;
  for (int d = 8; d <= 300; d += 4) tail = phi(std::pow(10.0, -d));
  if (!(tail <= 1e-6 * scale)) flag(r.vanishes_at_zero, 0.0);
  return r;
}

/// Numerical check of int_0^inf (1 ^ s) nu(ds) < inf; returns the value.
inline quad::Result levy_integrability(const LevyTriplet& t) {
  if (!t.has_density()) throw CapabilityError("levy_integrability: no Levy density");
  auto g = [&](double s) { return std::min(1.0, s) * t.levy_density(s); };
  auto head = quad::improper(g, 0.0, 1.0);
  auto tail = quad::improper(g, 1.0, quad::kInfinity);
  return quad::detail::combine(head, tail);
}

// ---------------------------------------------------------------------------
// Regular variation at zero

struct RegvarCheck {
  bool holds = false;
  double constant = kNaN;        // smallest C on the grid with g(s) <= C s^{kappa-eps}
  double delta = kNaN;           // doubling inequality verified on (0, delta]
  double violating_s = kNaN;
};

/// For increasing g on (0,1): verifies 2^{kappa-eps} g(s) <= g(2s) on a
/// neighbourhood (0, delta] of zero and reports the grid constant in
/// g(s) <= C s^{kappa-eps} over (0,1].
template <class G>
RegvarCheck regvar_upper_check(G&& g, double kappa, double eps, double lo = 1e-12, int per_decade = 20) {
  if (!(kappa > 0.0) || !(eps > 0.0 && eps < kappa)) throw DomainError("regvar_upper_check: need 0 < eps < kappa");
  DoublingGrid dg;
  dg.atol = 1e-6;
  dg.max_decade = 296;
  auto z = endpoint_limit([&](double s) { return std::log2(g(2.0 * s) / g(s)); }, true, dg);
  if (!z) throw NumericError("regvar_upper_check: doubling index at zero is undetermined");
  if (!(*z > kappa - eps / 2.0)) throw DomainError("regvar_upper_check: doubling index at zero below kappa - eps/2");

  RegvarCheck r;
  const double e = kappa - eps;
  const int n = static_cast<int>(std::ceil(-std::log10(lo) * per_decade));
  std::vector<double> s(n + 1);
  for (int k = 0; k <= n; ++k) s[k] = std::pow(10.0, -static_cast<double>(n - k) / per_decade);  // ascending to 1

  // Largest grid delta <= 1/2 such that the doubling inequality holds below it.
  const double factor = std::pow(2.0, e);
  for (int k = 0; k <= n && s[k] <= 0.5; ++k) {
    if (factor * g(s[k]) <= g(2.0 * s[k]) * (1.0 + 1e-12)) {
      r.delta = s[k];
    } else {
      if (k < per_decade) {
        r.violating_s = s[k];
        return r;
      }
      break;
    }
  }
  if (std::isnan(r.delta)) {
    r.violating_s = s[0];
    return r;
  }
  double c = 0.0;
  for (double x : s) c = std::max(c, g(x) / std::pow(x, e));
  r.constant = c;
  r.holds = std::isfinite(c);
  return r;
}

}  // namespace levyint
