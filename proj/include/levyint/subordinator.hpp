#pragma once

// Subordinator sample paths: exact grid increments for the stable and gamma
// cases, compound Poisson approximation with drift compensation for any
// exponent carrying a Levy density.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "levyint/bernstein.hpp"
#include "levyint/errors.hpp"
#include "levyint/rng.hpp"
#include "levyint/special.hpp"

namespace levyint {

/// Time grid 0 = t_0 < ... < t_K = T.
class TimeGrid {
 public:
  static TimeGrid uniform(double T, std::size_t cells) {
    check(T, cells);
    std::vector<double> t(cells + 1);
    for (std::size_t k = 0; k <= cells; ++k) t[k] = T * static_cast<double>(k) / static_cast<double>(cells);
    t.back() = T;
    return TimeGrid(std::move(t));
  }

  /// t_k = T (k/K)^q: cells shrink polynomially toward 0.
  static TimeGrid graded(double T, std::size_t cells, double q) {
    check(T, cells);
    if (!(q >= 1.0)) throw DomainError("graded grid: exponent must be >= 1");
    std::vector<double> t(cells + 1);
    for (std::size_t k = 0; k <= cells; ++k) t[k] = T * std::pow(static_cast<double>(k) / static_cast<double>(cells), q);
    t.back() = T;
    return TimeGrid(std::move(t));
  }

  /// 0, t_min, then log-spaced nodes up to T with `per_decade` cells per decade.
  static TimeGrid geometric(double T, double t_min, int per_decade) {
    if (!(T > 0.0) || !(t_min > 0.0 && t_min < T) || per_decade < 1) throw DomainError("geometric grid: bad parameters");
    const int n = static_cast<int>(std::ceil(std::log10(T / t_min) * per_decade));
    std::vector<double> t{0.0};
    for (int k = 0; k <= n; ++k) t.push_back(t_min * std::pow(T / t_min, static_cast<double>(k) / n));
    t.back() = T;
    return TimeGrid(std::move(t));
  }

  /// Arbitrary strictly increasing nodes starting at 0.
  static TimeGrid from_nodes(std::vector<double> t) {
    if (t.size() < 2 || t.front() != 0.0) throw DomainError("time grid must start at 0 and contain a cell");
    for (std::size_t k = 1; k < t.size(); ++k)
      if (!(t[k] > t[k - 1])) throw DomainError("time grid must be strictly increasing");
    return TimeGrid(std::move(t));
  }

  const std::vector<double>& nodes() const { return t_; }
  std::size_t cells() const { return t_.size() - 1; }
  double horizon() const { return t_.back(); }
  double operator[](std::size_t k) const { return t_[k]; }

  /// Refinement splitting every cell in two at its midpoint.
  TimeGrid refined() const {
    std::vector<double> t;
    t.reserve(2 * t_.size());
    for (std::size_t k = 0; k + 1 < t_.size(); ++k) {
      t.push_back(t_[k]);
      t.push_back(0.5 * (t_[k] + t_[k + 1]));
    }
    t.push_back(t_.back());
    return TimeGrid(std::move(t));
  }

 private:
  explicit TimeGrid(std::vector<double> t) : t_(std::move(t)) {}
  static void check(double T, std::size_t cells) {
    if (!(T > 0.0)) throw DomainError("time grid: horizon must be positive");
    if (cells == 0) throw DomainError("time grid: need at least one cell");
  }
  std::vector<double> t_;
};

struct Provenance {
  enum class Kind { ExactStable, ExactGamma, CompoundPoisson, DriftOnly };
  Kind kind = Kind::DriftOnly;
  double parameter = 0.0;  // alpha for ExactStable, epsilon for CompoundPoisson
  double max_dt = 0.0;     // largest grid cell for grid provenances
};

inline const char* to_string(Provenance::Kind k) {
  switch (k) {
    case Provenance::Kind::ExactStable: return "ExactStable";
    case Provenance::Kind::ExactGamma: return "ExactGamma";
    case Provenance::Kind::CompoundPoisson: return "CompoundPoisson";
    case Provenance::Kind::DriftOnly: return "DriftOnly";
  }
  return "?";
}

/// S sampled at the nodes of a time grid.
struct GridPath {
  std::vector<double> times;
  std::vector<double> values;
  Provenance provenance;

  double horizon() const { return times.back(); }
  double increment(std::size_t k) const { return values[k + 1] - values[k]; }
};

/// Drift plus finitely many jumps on [0, T].
class SubordinatorPath {
 public:
  SubordinatorPath(double horizon, double drift, std::vector<double> jump_times, std::vector<double> jump_sizes,
                   Provenance prov = {})
      : T_(horizon), b_(drift), times_(std::move(jump_times)), sizes_(std::move(jump_sizes)), prov_(prov) {
    if (!(T_ > 0.0)) throw DomainError("path horizon must be positive");
    if (!(b_ >= 0.0)) throw DomainError("path drift must be nonnegative");
    if (times_.size() != sizes_.size()) throw DomainError("jump times and sizes differ in length");
    for (std::size_t j = 0; j < times_.size(); ++j) {
      if (!(times_[j] > 0.0 && times_[j] <= T_)) throw DomainError("jump time outside (0, T]");
      if (j > 0 && !(times_[j] > times_[j - 1])) throw DomainError("jump times must be strictly increasing");
      if (!(sizes_[j] > 0.0)) throw DomainError("jump sizes must be positive");
    }
    cumulative_.resize(sizes_.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < sizes_.size(); ++j) cumulative_[j] = (acc += sizes_[j]);
  }

  double horizon() const { return T_; }
  double drift() const { return b_; }
  const std::vector<double>& jump_times() const { return times_; }
  const std::vector<double>& jump_sizes() const { return sizes_; }
  const Provenance& provenance() const { return prov_; }

  /// Sum of jumps with time <= t.
  double jumps_up_to(double t) const {
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    if (it == times_.begin()) return 0.0;
    return cumulative_[static_cast<std::size_t>(it - times_.begin()) - 1];
  }

  /// S_t, right-continuous.
  double evaluate(double t) const {
    if (!(t >= 0.0 && t <= T_)) throw DomainError("evaluate: t outside [0, T]");
    return b_ * t + jumps_up_to(t);
  }

  double total() const { return b_ * T_ + (cumulative_.empty() ? 0.0 : cumulative_.back()); }

  /// inf{ s >= 0 : S_s > t } for 0 <= t < S_T.
  double inverse_time(double t) const {
    if (!(t >= 0.0)) throw DomainError("inverse_time: t must be nonnegative");
    if (!(t < total())) throw RangeError("inverse_time: t must be below S_T");
    double before = 0.0;  // jump mass strictly before the current segment
    double seg_start = 0.0;
    for (std::size_t j = 0; j <= times_.size(); ++j) {
      const double seg_end = j < times_.size() ? times_[j] : T_;
      // On [seg_start, seg_end): S_s = b s + before.
      if (b_ > 0.0) {
        const double s = (t - before) / b_;
        if (s < seg_end) return std::max(s, seg_start);
      }
      if (j == times_.size()) break;
      before = cumulative_[j];
      if (b_ * seg_end + before > t) return seg_end;
      seg_start = seg_end;
    }
    return T_;
  }

  /// Path sampled on a time grid.
  GridPath on_grid(const TimeGrid& grid) const {
    if (std::abs(grid.horizon() - T_) > 1e-12 * T_) throw DomainError("on_grid: grid horizon differs from path");
    GridPath g;
    g.times = grid.nodes();
    g.values.resize(g.times.size());
    for (std::size_t k = 0; k < g.times.size(); ++k) g.values[k] = b_ * g.times[k] + jumps_up_to(g.times[k]);
    g.provenance = prov_;
    return g;
  }

 private:
  double T_;
  double b_;
  std::vector<double> times_;
  std::vector<double> sizes_;
  std::vector<double> cumulative_;
  Provenance prov_;
};

// ---------------------------------------------------------------------------
// Exact grid simulation

/// Log of a standard positive alpha-stable variate (E e^{-rV} = e^{-r^alpha}),
/// Kanter's representation.
inline double log_stable_variate(double alpha, Rng& rng) {
  const double u = std::numbers::pi * rng.uniform();
  const double e = rng.exponential();
  return std::log(std::sin(alpha * u)) - std::log(std::sin(u)) / alpha +
         (1.0 - alpha) / alpha * (std::log(std::sin((1.0 - alpha) * u)) - std::log(e));
}

inline double stable_variate(double alpha, Rng& rng) { return std::exp(log_stable_variate(alpha, rng)); }

inline GridPath simulate_stable(double alpha, const TimeGrid& grid, Rng& rng) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("simulate_stable: alpha must lie in (0,1)");
  GridPath p;
  p.times = grid.nodes();
  p.values.assign(p.times.size(), 0.0);
  double max_dt = 0.0;
  for (std::size_t k = 0; k + 1 < p.times.size(); ++k) {
    const double dt = p.times[k + 1] - p.times[k];
    max_dt = std::max(max_dt, dt);
    p.values[k + 1] = p.values[k] + std::exp(std::log(dt) / alpha + log_stable_variate(alpha, rng));
  }
  p.provenance = {Provenance::Kind::ExactStable, alpha, max_dt};
  return p;
}

inline GridPath simulate_stable(double alpha, const TimeGrid& grid, std::uint64_t seed) {
  Rng rng(seed);
  return simulate_stable(alpha, grid, rng);
}

/// Gamma subordinator (phi = log(1+s)): increments Gamma(dt, 1).
inline GridPath simulate_gamma_grid(const TimeGrid& grid, Rng& rng) {
  GridPath p;
  p.times = grid.nodes();
  p.values.assign(p.times.size(), 0.0);
  double max_dt = 0.0;
  for (std::size_t k = 0; k + 1 < p.times.size(); ++k) {
    const double dt = p.times[k + 1] - p.times[k];
    max_dt = std::max(max_dt, dt);
    p.values[k + 1] = p.values[k] + rng.gamma(dt);
  }
  p.provenance = {Provenance::Kind::ExactGamma, 0.0, max_dt};
  return p;
}

// ---------------------------------------------------------------------------
// Compound Poisson approximation

/// Jumps of size >= eps drawn from nu restricted to [eps, inf) by inverse CDF
/// on a log-spaced table; smaller jumps are replaced by their mean as drift.
class CompoundPoissonSampler {
 public:
  static constexpr std::size_t kKnots = std::size_t{1} << 14;

  CompoundPoissonSampler(const BernsteinFunction& phi, double eps) : eps_(eps) {
    if (!(eps > 0.0)) throw DomainError("compound Poisson: epsilon must be positive");
    if (!phi.triplet()) throw CapabilityError("compound Poisson: " + phi.id() + " has no Levy triplet");
    const LevyTriplet& tr = *phi.triplet();
    if (!tr.has_density()) throw CapabilityError("compound Poisson: " + phi.id() + " has no Levy density");
    drift_ = tr.drift + tr.small_jump_mean(eps);
    const double rate = tr.tail_mass(eps);
    if (!std::isfinite(rate)) throw DomainError("compound Poisson: tail mass at epsilon is infinite");
    rate_ = rate;
    if (rate_ <= 0.0) return;

    // Upper end of the table: tail below 1e-14 of the total, or 1e300.
    double xmax = std::max(eps, 1.0);
    while (tr.tail_mass(xmax) > 1e-14 * rate_ && xmax < 1e300) xmax *= 16.0;
    xmax = std::min(xmax, 1e300);

    const std::size_t n = kKnots;
    log_x_.resize(n);
    log_tail_.resize(n);
    std::vector<double> x(n), tail(n);
    const double lr = std::log(xmax / eps);
    for (std::size_t i = 0; i < n; ++i) x[i] = eps * std::exp(lr * static_cast<double>(i) / static_cast<double>(n - 1));
    x[0] = eps;
    tail[n - 1] = tr.tail_mass(x[n - 1]);
    for (std::size_t i = n - 1; i-- > 0;) {
      auto piece = quad::adaptive(tr.levy_density, x[i], x[i + 1], {0.0, 1e-12, 50});
      tail[i] = tail[i + 1] + piece.value;
    }
    table_error_ = std::abs(tail[0] - rate_) / rate_;
    for (std::size_t i = 0; i < n; ++i) {
      log_x_[i] = std::log(x[i]);
      log_tail_[i] = std::log(std::max(tail[i] / tail[0], 1e-300));
    }
    // Log-log slope of the last segment for extrapolation beyond xmax.
    const double dl = log_tail_[n - 1] - log_tail_[n - 2];
    tail_slope_ = dl < 0.0 ? (log_x_[n - 1] - log_x_[n - 2]) / dl : 0.0;
  }

  double epsilon() const { return eps_; }
  double rate() const { return rate_; }
  double effective_drift() const { return drift_; }
  /// Relative mismatch between the integrated table and the tail mass at eps.
  double table_error() const { return table_error_; }

  /// Jump size with law nu(ds | s >= eps).
  double draw_size(Rng& rng) const {
    const double lu = std::log(rng.uniform());  // log of the target tail fraction in (0,1)
    const std::size_t n = log_tail_.size();
    if (lu <= log_tail_[n - 1]) {
      if (tail_slope_ == 0.0) return std::exp(log_x_[n - 1]);
      return std::exp(log_x_[n - 1] + tail_slope_ * (lu - log_tail_[n - 1]));
    }
    // log_tail_ is decreasing; find i with log_tail_[i] >= lu > log_tail_[i+1].
    auto it = std::upper_bound(log_tail_.begin(), log_tail_.end(), lu, std::greater<double>());
    const std::size_t i = static_cast<std::size_t>(it - log_tail_.begin()) - 1;
    const double w = (log_tail_[i] - lu) / (log_tail_[i] - log_tail_[i + 1]);
    return std::exp(log_x_[i] + w * (log_x_[i + 1] - log_x_[i]));
  }

  SubordinatorPath sample(double T, Rng& rng) const {
    if (!(T > 0.0)) throw DomainError("compound Poisson: horizon must be positive");
    const std::uint64_t n = rng.poisson(rate_ * T);
    std::vector<double> times(n), sizes(n);
    for (auto& t : times) t = T * rng.uniform();
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    sizes.resize(times.size());
    for (auto& s : sizes) s = draw_size(rng);
    return SubordinatorPath(T, drift_, std::move(times), std::move(sizes),
                            {Provenance::Kind::CompoundPoisson, eps_, 0.0});
  }

 private:
  double eps_;
  double rate_ = 0.0;
  double drift_ = 0.0;
  double table_error_ = 0.0;
  double tail_slope_ = 0.0;
  std::vector<double> log_x_;
  std::vector<double> log_tail_;
};

inline SubordinatorPath simulate_general(const BernsteinFunction& phi, double T, double eps, Rng& rng) {
  if (!phi.simulable()) throw CapabilityError("simulate_general: " + phi.id() + " is not simulable");
  if (!(eps > 0.0)) throw DomainError("simulate_general: epsilon must be positive");
  if (phi.family() == Family::DriftOnly)
    return SubordinatorPath(T, phi.drift(), {}, {}, {Provenance::Kind::DriftOnly, 0.0, 0.0});
  return CompoundPoissonSampler(phi, eps).sample(T, rng);
}

inline SubordinatorPath simulate_general(const BernsteinFunction& phi, double T, double eps, std::uint64_t seed) {
  Rng rng(seed);
  return simulate_general(phi, T, eps, rng);
}

// ---------------------------------------------------------------------------
// CSV export

inline void write_csv(std::ostream& os, const GridPath& p) {
  char buf[64];
  os << "t,S_t\n";
  for (std::size_t k = 0; k < p.times.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.times[k], p.values[k]);
    os << buf;
  }
}

inline void write_csv(std::ostream& os, const SubordinatorPath& p) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "drift=%.17g,T=%.17g\n", p.drift(), p.horizon());
  os << buf << "time,size\n";
  for (std::size_t j = 0; j < p.jump_times().size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p.jump_times()[j], p.jump_sizes()[j]);
    os << buf;
  }
}

}  // namespace levyint
