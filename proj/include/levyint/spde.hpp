#pragma once

// Spectral Galerkin simulation of dX = [-AX + F(X)]dt + Q(X-)dW_{S_t} with A
// diagonal, A e_k = gamma_k e_k. Paths are drawn in two stages: the
// subordinator on the time grid first, then Gaussian increments conditional
// on it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "levyint/bernstein.hpp"
#include "levyint/errors.hpp"
#include "levyint/moments.hpp"
#include "levyint/parallel.hpp"
#include "levyint/rng.hpp"
#include "levyint/special.hpp"
#include "levyint/stats.hpp"
#include "levyint/subordinator.hpp"

namespace levyint::spde {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Semigroup estimates for diagonal A

/// (theta/e)^theta, with C_0 = 1.
inline double c_theta(double theta) {
  if (!(theta >= 0.0)) throw DomainError("c_theta: theta must be >= 0");
  return theta == 0.0 ? 1.0 : std::pow(theta / std::numbers::e, theta);
}

/// ||A^theta e^{-tA}|| = max_k gamma_k^theta e^{-t gamma_k}.
inline double semigroup_theta_norm(const Vec& gamma, double theta, double t) {
  double m = 0.0;
  for (Eigen::Index k = 0; k < gamma.size(); ++k) m = std::max(m, std::pow(gamma[k], theta) * std::exp(-t * gamma[k]));
  return m;
}

/// |A^theta x|.
inline double theta_norm(const Vec& gamma, double theta, const Vec& x) {
  if (theta == 0.0) return x.norm();
  return (gamma.array().pow(theta) * x.array()).matrix().norm();
}

// ---------------------------------------------------------------------------
// System data

/// Constants (C, delta) with ||Q(x)^{-1} e^{-tA}|| <= C t^{-delta}.
struct InverseBound {
  double C = 0.0;
  double delta = 0.0;
};

struct GalerkinSystem {
  Vec gamma;
  Vec x0;

  std::function<Vec(const Vec&)> F;  // empty: F = 0
  double F_sup = 0.0;
  double F_lip = 0.0;

  // Exactly one of Q_diag / Q_full may be set; neither means Q = 0.
  std::function<Vec(const Vec&)> Q_diag;
  std::function<Mat(const Vec&)> Q_full;
  double Q_hs = 0.0;
  double Q_lip = 0.0;

  std::optional<InverseBound> inverse_bound;
  std::string name = "custom";

  Eigen::Index dim() const { return gamma.size(); }
  bool has_drift() const { return static_cast<bool>(F); }
  bool has_noise() const { return static_cast<bool>(Q_diag) || static_cast<bool>(Q_full); }

  void check() const {
    if (gamma.size() == 0) throw DomainError("galerkin system: dimension must be positive");
    if (x0.size() != gamma.size()) throw DomainError("galerkin system: x0 dimension differs from eigenvalues");
    if (!(gamma[0] > 0.0)) throw DomainError("galerkin system: gamma_1 must be positive (spectral gap)");
    for (Eigen::Index k = 1; k < gamma.size(); ++k)
      if (!(gamma[k] >= gamma[k - 1])) throw DomainError("galerkin system: eigenvalues must be ascending");
    if (Q_diag && Q_full) throw DomainError("galerkin system: set either a diagonal or a full Q, not both");
    if (!(F_sup >= 0.0 && F_lip >= 0.0 && Q_hs >= 0.0 && Q_lip >= 0.0))
      throw DomainError("galerkin system: declared bounds must be >= 0");
  }

  Vec drift(const Vec& x) const { return F ? F(x) : Vec::Zero(dim()); }

  /// Q(x) v.
  Vec apply_q(const Vec& x, const Vec& v) const {
    if (Q_diag) return (Q_diag(x).array() * v.array()).matrix();
    if (Q_full) return Q_full(x) * v;
    return Vec::Zero(dim());
  }

  double hs_norm(const Vec& x) const {
    if (Q_diag) return Q_diag(x).norm();
    if (Q_full) return Q_full(x).norm();
    return 0.0;
  }

  /// Q(x)^{-1} v; CapabilityError when Q(x) is not invertible.
  Vec solve_q(const Vec& x, const Vec& v) const {
    if (Q_diag) {
      Vec q = Q_diag(x);
      for (Eigen::Index k = 0; k < q.size(); ++k)
        if (!(std::abs(q[k]) > 0.0) || !std::isfinite(1.0 / q[k]))
          throw CapabilityError("Q(x) is singular: diagonal entry " + std::to_string(k + 1) + " vanishes");
      return (v.array() / q.array()).matrix();
    }
    if (Q_full) {
      Eigen::FullPivLU<Mat> lu(Q_full(x));
      if (!lu.isInvertible()) throw CapabilityError("Q(x) is singular");
      return lu.solve(v);
    }
    throw CapabilityError("Q = 0 has no inverse");
  }

  /// ||Q(x)^{-1} e^{-tA}|| in operator norm.
  double inverse_semigroup_norm(const Vec& x, double t) const {
    const Vec e = (-t * gamma.array()).exp().matrix();
    if (Q_diag) {
      Vec q = Q_diag(x);
      double m = 0.0;
      for (Eigen::Index k = 0; k < q.size(); ++k) {
        if (!(std::abs(q[k]) > 0.0)) throw CapabilityError("Q(x) is singular");
        m = std::max(m, e[k] / std::abs(q[k]));
      }
      return m;
    }
    if (Q_full) {
      Eigen::FullPivLU<Mat> lu(Q_full(x));
      if (!lu.isInvertible()) throw CapabilityError("Q(x) is singular");
      Mat m = lu.inverse() * e.asDiagonal();
      Eigen::JacobiSVD<Mat> svd(m);
      return svd.singularValues()[0];
    }
    throw CapabilityError("Q = 0 has no inverse");
  }

  /// Projection onto the first m eigenvectors: Pi_m x, Pi_m F, Pi_m Q Pi_m.
  GalerkinSystem truncated(Eigen::Index m) const {
    check();
    if (m < 1 || m > dim()) throw DomainError("truncation dimension must lie in [1, n]");
    GalerkinSystem t = *this;
    const Eigen::Index n = dim();
    t.gamma = gamma.head(m);
    t.x0 = x0.head(m);
    auto embed = [n, m](const Vec& y) {
      Vec z = Vec::Zero(n);
      z.head(m) = y;
      return z;
    };
    if (F) {
      auto f = F;
      t.F = [f, embed, m](const Vec& y) -> Vec { return f(embed(y)).head(m); };
    }
    if (Q_diag) {
      auto q = Q_diag;
      t.Q_diag = [q, embed, m](const Vec& y) -> Vec { return q(embed(y)).head(m); };
    }
    if (Q_full) {
      auto q = Q_full;
      t.Q_full = [q, embed, m](const Vec& y) -> Mat { return q(embed(y)).topLeftCorner(m, m); };
    }
    t.name = name + "|" + std::to_string(m);
    return t;
  }
};

struct HeatChainParams {
  double f_amp = 1.0;
  double q_amp = 1.0;
  double q_decay = 2.0;
  double x_scale = 1.0;
};

/// gamma_k = k^2, x_k = x_scale k^{-2},
/// F_k(x) = f_amp k^{-2} sin(<w, x>) with w_k = k^{-2},
/// Q(x) = diag(q_amp k^{-q_decay} (1 + sin(x_k)/2)).
inline GalerkinSystem heat_chain(Eigen::Index n, const HeatChainParams& hp = {}) {
  if (n < 1) throw DomainError("heat chain: dimension must be positive");
  if (!(hp.f_amp >= 0.0 && hp.q_amp >= 0.0 && hp.q_decay >= 0.0)) throw DomainError("heat chain: parameters must be >= 0");
  GalerkinSystem s;
  s.gamma.resize(n);
  s.x0.resize(n);
  Vec w(n), qk(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double kk = static_cast<double>(k + 1);
    s.gamma[k] = kk * kk;
    w[k] = 1.0 / (kk * kk);
    s.x0[k] = hp.x_scale * w[k];
    qk[k] = hp.q_amp * std::pow(kk, -hp.q_decay);
  }
  if (hp.f_amp > 0.0) {
    const double a = hp.f_amp;
    s.F = [a, w](const Vec& x) -> Vec { return a * std::sin(w.dot(x)) * w; };
    s.F_sup = a * w.norm();
    s.F_lip = a * w.squaredNorm();
  }
  if (hp.q_amp > 0.0) {
    s.Q_diag = [qk](const Vec& x) -> Vec { return (qk.array() * (1.0 + 0.5 * x.array().sin())).matrix(); };
    s.Q_hs = 1.5 * qk.norm();
    s.Q_lip = 0.5 * qk.maxCoeff();
    s.inverse_bound = InverseBound{(2.0 / hp.q_amp) * std::pow(hp.q_decay / (2.0 * std::numbers::e), hp.q_decay / 2.0),
                       hp.q_decay / 2.0};
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "heat(n=%ld,f=%g,q=%g,decay=%g,x=%g)", static_cast<long>(n), hp.f_amp, hp.q_amp,
                hp.q_decay, hp.x_scale);
  s.name = buf;
  return s;
}

/// F = 0 and constant diagonal Q = diag(q).
inline GalerkinSystem additive(Vec gamma, Vec x0, Vec q) {
  GalerkinSystem s;
  s.gamma = std::move(gamma);
  s.x0 = std::move(x0);
  if (q.size() != s.gamma.size()) throw DomainError("additive system: q dimension differs");
  if (q.cwiseAbs().maxCoeff() > 0.0) {
    s.Q_diag = [q](const Vec&) { return q; };
    s.Q_hs = q.norm();
  }
  s.name = "additive";
  s.check();
  return s;
}

struct ProbeReport {
  bool ok = true;
  double worst_F_sup = 0.0;  // max ||F(x)|| / F_sup
  double worst_Q_hs = 0.0;   // max ||Q(x)||_HS / Q_hs
  double worst_F_lip = 0.0;
  double worst_Q_lip = 0.0;
  std::string violation;
};

/// Checks the declared bounds on random probe states at scales 0.1, 1, 10.
inline ProbeReport validate(const GalerkinSystem& sys, std::size_t probes = 200, std::uint64_t seed = 1) {
  sys.check();
  ProbeReport r;
  Rng rng(seed);
  const Eigen::Index n = sys.dim();
  auto draw = [&](double scale) {
    Vec x(n);
    for (Eigen::Index k = 0; k < n; ++k) x[k] = scale * rng.normal();
    return x;
  };
  auto ratio = [](double v, double bound) { return bound > 0.0 ? v / bound : (v > 0.0 ? kInf : 0.0); };
  for (std::size_t i = 0; i < probes; ++i) {
    const double scale = i % 3 == 0 ? 0.1 : (i % 3 == 1 ? 1.0 : 10.0);
    const Vec x = draw(scale), y = x + draw(0.1 * scale);
    const double dxy = (x - y).norm();
    const Vec fx = sys.drift(x), fy = sys.drift(y);
    r.worst_F_sup = std::max(r.worst_F_sup, ratio(fx.norm(), sys.F_sup));
    r.worst_F_lip = std::max(r.worst_F_lip, ratio((fx - fy).norm() / dxy, sys.F_lip));
    r.worst_Q_hs = std::max(r.worst_Q_hs, ratio(sys.hs_norm(x), sys.Q_hs));
    double dq = 0.0;
    if (sys.Q_diag) dq = (sys.Q_diag(x) - sys.Q_diag(y)).norm();
    if (sys.Q_full) dq = (sys.Q_full(x) - sys.Q_full(y)).norm();
    r.worst_Q_lip = std::max(r.worst_Q_lip, ratio(dq / dxy, sys.Q_lip));
  }
  constexpr double slack = 1.0 + 1e-10;
  auto flag = [&](double worst, const char* what) {
    if (worst > slack && r.ok) {
      r.ok = false;
      r.violation = std::string(what) + " exceeded on a probe state";
    }
  };
  flag(r.worst_F_sup, "declared ||F||_inf");
  flag(r.worst_F_lip, "declared ||F||_Lip");
  flag(r.worst_Q_hs, "declared ||Q||_HS,inf");
  flag(r.worst_Q_lip, "declared Lipschitz constant of Q");
  return r;
}

struct InverseBoundReport {
  bool ok = false;
  double worst_ratio = kNaN;  // max ||Q^{-1}e^{-tA}|| / (C t^{-delta})
  double worst_t = kNaN;
  std::string violation;
};

/// Samples ||Q(x)^{-1} e^{-tA}|| on a log grid of t in [t_min, t_max] and
/// random probe states against the declared C t^{-delta}.
inline InverseBoundReport check_inverse_bound(const GalerkinSystem& sys, std::size_t probes = 50, std::uint64_t seed = 2,
                         double t_min = 1e-4, double t_max = 10.0, int per_decade = 10) {
  sys.check();
  InverseBoundReport r;
  if (!sys.inverse_bound) {
    r.violation = "no inverse constants declared";
    return r;
  }
  Rng rng(seed);
  const int decades = static_cast<int>(std::ceil(std::log10(t_max / t_min) * per_decade));
  r.worst_ratio = 0.0;
  for (std::size_t i = 0; i < probes; ++i) {
    Vec x(sys.dim());
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = (i % 2 ? 10.0 : 1.0) * rng.normal();
    for (int j = 0; j <= decades; ++j) {
      const double t = t_min * std::pow(10.0, static_cast<double>(j) / per_decade);
      const double q = sys.inverse_semigroup_norm(x, t) / (sys.inverse_bound->C * std::pow(t, -sys.inverse_bound->delta));
      if (q > r.worst_ratio) {
        r.worst_ratio = q;
        r.worst_t = t;
      }
    }
  }
  r.ok = r.worst_ratio <= 1.0 + 1e-10;
  if (!r.ok) r.violation = "||Q(x)^{-1}e^{-tA}|| > C t^{-delta} on a probe";
  return r;
}

// ---------------------------------------------------------------------------
// Subordinator on a grid

/// Exact grid sampling for stable, gamma and pure-drift exponents; compound
/// Poisson approximation for any other simulable exponent.
class GridDriver {
 public:
  explicit GridDriver(const BernsteinFunction& phi, double eps = 1e-4) : phi_(phi) {
    if (phi.is_stable() || phi.family() == Family::Gamma || phi.family() == Family::DriftOnly) return;
    if (!phi.simulable()) throw CapabilityError("exponent " + phi.id() + " has no Levy density to simulate from");
    cp_.emplace(phi, eps);
  }

  GridPath sample(const TimeGrid& grid, Rng& rng) const {
    if (phi_.is_stable()) return simulate_stable(phi_.stable_alpha(), grid, rng);
    if (phi_.family() == Family::Gamma) return simulate_gamma_grid(grid, rng);
    if (phi_.family() == Family::DriftOnly) {
      GridPath p;
      p.times = grid.nodes();
      p.values.resize(p.times.size());
      for (std::size_t k = 0; k < p.times.size(); ++k) p.values[k] = phi_.drift() * p.times[k];
      p.provenance = {Provenance::Kind::DriftOnly, phi_.drift(), 0.0};
      return p;
    }
    return cp_->sample(grid.horizon(), rng).on_grid(grid);
  }

  const BernsteinFunction& phi() const { return phi_; }

 private:
  BernsteinFunction phi_;
  std::optional<CompoundPoissonSampler> cp_;
};

// ---------------------------------------------------------------------------
// Time stepping

/// Uniform grid of step dt on [0, T]; dt must divide T.
inline TimeGrid step_grid(double T, double dt) {
  if (!(T > 0.0 && dt > 0.0)) throw DomainError("horizon and step must be positive");
  const double r = T / dt;
  const double k = std::round(r);
  if (k < 1.0 || std::abs(r - k) > 1e-9 * std::max(1.0, r)) throw DomainError("step must divide the horizon");
  return TimeGrid::uniform(T, static_cast<std::size_t>(k));
}

/// Node index of t on a uniform grid of step dt.
inline std::size_t node_index(double t, double dt) {
  const double r = t / dt;
  const double k = std::round(r);
  if (k < 0.0 || std::abs(r - k) > 1e-9 * std::max(1.0, r)) throw DomainError("time is not a grid node");
  return static_cast<std::size_t>(k);
}

/// Standard normals, one row per cell; increments are sqrt(dS_k) xi_k.
inline Mat draw_gaussians(std::size_t cells, Eigen::Index n, Rng& rng) {
  Mat xi(static_cast<Eigen::Index>(cells), n);
  for (Eigen::Index k = 0; k < xi.rows(); ++k)
    for (Eigen::Index j = 0; j < n; ++j) xi(k, j) = rng.normal();
  return xi;
}

/// Exponential-Euler recursion
///   X_{k+1} = E (X_k + Q(X_k) dW_k) + G F(X_k),  Z_{k+1} = E (Z_k + Q(X_k) dW_k)
/// with E = e^{-dt A}, G = A^{-1}(I - E), dW_k = sqrt(dS_k) xi_k (first dim()
/// columns of xi). Calls obs(k, X_k, Z_k) for every node.
template <class Obs>
void propagate(const GalerkinSystem& sys, const GridPath& S, const Mat& xi, Obs&& obs) {
  const Eigen::Index n = sys.dim();
  const std::size_t cells = S.times.size() - 1;
  if (static_cast<std::size_t>(xi.rows()) < cells || xi.cols() < n) throw DomainError("propagate: noise record too small");
  Vec X = sys.x0, Z = Vec::Zero(n);
  Vec E(n), G(n), dW(n);
  double cached_dt = -1.0;
  obs(std::size_t{0}, X, Z);
  for (std::size_t k = 0; k < cells; ++k) {
    const double dt = S.times[k + 1] - S.times[k];
    if (dt != cached_dt) {
      E = (-dt * sys.gamma.array()).exp().matrix();
      G = (-(-dt * sys.gamma.array()).unaryExpr([](double v) { return std::expm1(v); }) / sys.gamma.array()).matrix();
      cached_dt = dt;
    }
    const double dS = S.increment(k);
    Vec noise;
    if (sys.has_noise() && dS > 0.0) {
      dW = std::sqrt(dS) * xi.row(static_cast<Eigen::Index>(k)).head(n).transpose();
      noise = sys.apply_q(X, dW);
    } else {
      noise = Vec::Zero(n);
    }
    Vec next = (E.array() * (X + noise).array()).matrix();
    if (sys.has_drift()) next += (G.array() * sys.drift(X).array()).matrix();
    Z = (E.array() * (Z + noise).array()).matrix();
    X = std::move(next);
    if (!X.allFinite()) throw NumericError("propagate: state overflow at step " + std::to_string(k + 1));
    obs(k + 1, X, Z);
  }
}

struct SolutionPath {
  std::vector<double> times;
  Mat X;  // row k = X_{t_k}
  Mat Z;
  GridPath S;
  Mat xi;  // standard normals; dW_k = sqrt(dS_k) xi_k
};

inline SolutionPath simulate(const GalerkinSystem& sys, const GridDriver& driver, double T, double dt, Rng& rng) {
  sys.check();
  const TimeGrid grid = step_grid(T, dt);
  SolutionPath out;
  out.S = driver.sample(grid, rng);
  out.xi = draw_gaussians(grid.cells(), sys.dim(), rng);
  out.times = grid.nodes();
  out.X.resize(static_cast<Eigen::Index>(out.times.size()), sys.dim());
  out.Z.resizeLike(out.X);
  propagate(sys, out.S, out.xi, [&](std::size_t k, const Vec& X, const Vec& Z) {
    out.X.row(static_cast<Eigen::Index>(k)) = X.transpose();
    out.Z.row(static_cast<Eigen::Index>(k)) = Z.transpose();
  });
  return out;
}

inline SolutionPath simulate(const GalerkinSystem& sys, const BernsteinFunction& phi, double T, double dt,
                             std::uint64_t seed, double eps = 1e-4) {
  Rng rng(seed);
  return simulate(sys, GridDriver(phi, eps), T, dt, rng);
}

/// Same noise law with S frozen to a given grid path.
inline SolutionPath simulate_frozen(const GalerkinSystem& sys, const GridPath& ell, Rng& rng) {
  sys.check();
  SolutionPath out;
  out.S = ell;
  out.times = ell.times;
  out.xi = draw_gaussians(ell.times.size() - 1, sys.dim(), rng);
  out.X.resize(static_cast<Eigen::Index>(out.times.size()), sys.dim());
  out.Z.resizeLike(out.X);
  propagate(sys, out.S, out.xi, [&](std::size_t k, const Vec& X, const Vec& Z) {
    out.X.row(static_cast<Eigen::Index>(k)) = X.transpose();
    out.Z.row(static_cast<Eigen::Index>(k)) = Z.transpose();
  });
  return out;
}

/// Writes t, S_t, |X_t|, |Z_t| and the coordinates of X.
inline void write_csv(std::ostream& os, const SolutionPath& p) {
  char buf[128];
  os << "t,S_t,norm_X,norm_Z";
  for (Eigen::Index j = 0; j < p.X.cols(); ++j) os << ",X" << (j + 1);
  os << '\n';
  for (std::size_t k = 0; k < p.times.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", p.times[k], p.S.values[k], p.X.row(r).norm(),
                  p.Z.row(r).norm());
    os << buf;
    for (Eigen::Index j = 0; j < p.X.cols(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", p.X(r, j));
      os << buf;
    }
    os << '\n';
  }
}

struct ScanConfig {
  double dt = 1.0 / 256.0;
  double epsilon = 1e-4;  // compound Poisson cutoff for non-exact exponents
  unsigned width = 0;
};

// ---------------------------------------------------------------------------
// Doubling-index gates

namespace detail {

inline std::string show(const std::optional<double>& v) { return levyint::detail::show(v); }

inline bool heavy(const BernsteinFunction& phi, double p) {
  return phi.is_stable() && p / 2.0 >= phi.stable_alpha() / 2.0;
}

inline MCEstimate estimate(const std::vector<double>& x, bool heavy_regime) {
  return summarize(x, heavy_regime ? EstimatorMethod::MedianOfMeans : EstimatorMethod::PlainMean, 32, heavy_regime);
}

}  // namespace detail

/// Gate for moments of A^theta Z_t: horizons t <= 1 only need
/// p/2 < log₂ inf φ(2s)/φ(s) and θ·log₂ limsup_{s→∞} < 1/2; any t > 1 needs
/// p/2 < log₂ liminf_{s→0} and θ·log₂ sup < 1/2, which bounds sup over t > 0.
inline GateResult convolution_gate(double p, double theta, bool beyond_one, const DoublingIndices& idx) {
  if (!(p > 0.0)) throw DomainError("convolution moments: p must be positive");
  if (!(theta >= 0.0)) throw DomainError("convolution moments: theta must be >= 0");
  GateResult g;
  auto fail = [&](std::string why) {
    if (g.ok) g.violation = std::move(why);
    g.ok = false;
  };
  if (!beyond_one) {
    g.clause = "t in (0,1]";
    if (!(idx.global_inf && p / 2.0 < *idx.global_inf))
      fail("p/2 ≥ log₂ inf φ(2s)/φ(s) = " + detail::show(idx.global_inf));
    if (!(idx.at_infinity && 2.0 * theta * *idx.at_infinity < 1.0))
      fail("log₂ limsup_{s→∞} φ(2s)/φ(s) = " + detail::show(idx.at_infinity) + " is not < 1/(2θ)");
  } else {
    g.clause = "sup over t > 0";
    if (!(idx.at_zero && p / 2.0 < *idx.at_zero))
      fail("p/2 ≥ log₂ liminf_{s→0} φ(2s)/φ(s) = " + detail::show(idx.at_zero));
    if (!(idx.global_sup && 2.0 * theta * *idx.global_sup < 1.0))
      fail("log₂ sup φ(2s)/φ(s) = " + detail::show(idx.global_sup) + " is not < 1/(2θ)");
  }
  return g;
}

/// Gate for the maximal inequality: 0 < p < 2 log₂ liminf_{s→0} for T ≥ 1,
/// or 0 < p < 2 log₂ inf for all T > 0.
inline GateResult maximal_gate(double p, bool below_one, const DoublingIndices& idx) {
  GateResult g;
  if (!(p > 0.0)) {
    g.ok = false;
    g.violation = "p ≤ 0";
    return g;
  }
  if (below_one) {
    g.clause = "all T > 0";
    if (!(idx.global_inf && p < 2.0 * *idx.global_inf)) {
      g.ok = false;
      g.violation = "p ≥ 2 log₂ inf φ(2s)/φ(s) = 2·" + detail::show(idx.global_inf) + " (needed for T < 1)";
    }
    return g;
  }
  g.clause = "T ≥ 1";
  if (!(idx.at_zero && p < 2.0 * *idx.at_zero)) {
    g.ok = false;
    g.violation = "p ≥ 2 log₂ liminf_{s→0} φ(2s)/φ(s) = 2·" + detail::show(idx.at_zero);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Moment scans

/// E|A^theta Z_t|^p against t^{-p theta} [phi^{-1}(1/t)]^{-p/2}. All t must be
/// nodes of the dt grid. sup_mc carries the sup over the grid.
inline BoundReport convolution_moment_scan(const GalerkinSystem& sys, const BernsteinFunction& phi, double p,
                                           double theta, const std::vector<double>& t_grid, std::size_t N,
                                           std::uint64_t seed, const ScanConfig& cfg = {}) {
  sys.check();
  if (t_grid.empty()) throw DomainError("convolution scan: empty time grid");
  const double t_max = *std::max_element(t_grid.begin(), t_grid.end());
  auto gate = convolution_gate(p, theta, t_max > 1.0, doubling_indices(phi));
  if (!gate.ok) throw PreconditionRefusal(gate.violation);
  std::vector<std::size_t> idx;
  for (double t : t_grid) {
    if (!(t > 0.0)) throw DomainError("convolution scan: times must be positive");
    idx.push_back(node_index(t, cfg.dt));
  }
  const GridDriver driver(phi, cfg.epsilon);
  const TimeGrid grid = step_grid(t_max, cfg.dt);
  auto rows = map_replicas(
      N, seed,
      [&](std::size_t, Rng& rng) {
        const GridPath S = driver.sample(grid, rng);
        const Mat xi = draw_gaussians(grid.cells(), sys.dim(), rng);
        std::vector<double> out(idx.size());
        propagate(sys, S, xi, [&](std::size_t k, const Vec&, const Vec& Z) {
          for (std::size_t i = 0; i < idx.size(); ++i)
            if (idx[i] == k) out[i] = std::pow(theta_norm(sys.gamma, theta, Z), p);
        });
        return out;
      },
      cfg.width);
  BoundReport r;
  r.clause = gate.clause;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    std::vector<double> col(N);
    for (std::size_t j = 0; j < N; ++j) col[j] = rows[j][i];
    const double t = t_grid[i];
    r.push(t, detail::estimate(col, detail::heavy(phi, p)),
           std::pow(t, -p * theta) * std::pow(phi.inverse(1.0 / t), -p / 2.0));
  }
  return r;
}

/// 3^p ||Q||^p E[S_T^{p/2}] / T^{p/(2 alpha)} for the alpha-stable driver.
inline double stable_maximal_constant(double alpha, double p, double Q_hs) {
  if (!(p > 0.0 && p < 2.0 * alpha)) return kInf;
  return std::pow(3.0 * Q_hs, p) * gamma_ratio(1.0 - p / (2.0 * alpha), 1.0 - p / 2.0);
}

/// E[max over grid nodes in [0,T] of |Z_t|^p] against [phi^{-1}(1/T)]^{-p/2}.
/// One path to max T per replica; each T reads its running maximum.
inline BoundReport maximal_inequality_scan(const GalerkinSystem& sys, const BernsteinFunction& phi, double p,
                                           const std::vector<double>& T_grid, std::size_t N, std::uint64_t seed,
                                           const ScanConfig& cfg = {}) {
  sys.check();
  if (T_grid.empty()) throw DomainError("maximal scan: empty horizon grid");
  const auto [tmin, tmax] = std::minmax_element(T_grid.begin(), T_grid.end());
  auto gate = maximal_gate(p, *tmin < 1.0, doubling_indices(phi));
  if (!gate.ok) throw PreconditionRefusal(gate.violation);
  std::vector<std::size_t> idx;
  for (double T : T_grid) idx.push_back(node_index(T, cfg.dt));
  const GridDriver driver(phi, cfg.epsilon);
  const TimeGrid grid = step_grid(*tmax, cfg.dt);
  auto rows = map_replicas(
      N, seed,
      [&](std::size_t, Rng& rng) {
        const GridPath S = driver.sample(grid, rng);
        const Mat xi = draw_gaussians(grid.cells(), sys.dim(), rng);
        std::vector<double> out(idx.size());
        double running = 0.0;
        propagate(sys, S, xi, [&](std::size_t k, const Vec&, const Vec& Z) {
          running = std::max(running, Z.norm());
          for (std::size_t i = 0; i < idx.size(); ++i)
            if (idx[i] == k) out[i] = std::pow(running, p);
        });
        return out;
      },
      cfg.width);
  BoundReport r;
  r.clause = gate.clause;
  for (std::size_t i = 0; i < T_grid.size(); ++i) {
    std::vector<double> col(N);
    for (std::size_t j = 0; j < N; ++j) col[j] = rows[j][i];
    r.push(T_grid[i], detail::estimate(col, detail::heavy(phi, p)), std::pow(phi.inverse(1.0 / T_grid[i]), -p / 2.0));
  }
  return r;
}

struct ConditionalMaximal {
  MCEstimate sup_sq;  // E^W max_k |Z^ell_{t_k}|^2
  double bound = kNaN;  // 9 ||Q||^2_{HS,inf} ell_T
  bool ok = false;      // mean - 3 SE <= bound
};

/// Frozen-path check of E^W sup|Z^ell|^2 <= 9 ||Q||^2_{HS,inf} ell_T.
inline ConditionalMaximal conditional_maximal_check(const GalerkinSystem& sys, const GridPath& ell, std::size_t N,
                                                    std::uint64_t seed, unsigned width = 0) {
  sys.check();
  auto x = map_replicas(
      N, seed,
      [&](std::size_t, Rng& rng) {
        const Mat xi = draw_gaussians(ell.times.size() - 1, sys.dim(), rng);
        double m = 0.0;
        propagate(sys, ell, xi, [&](std::size_t, const Vec&, const Vec& Z) { m = std::max(m, Z.squaredNorm()); });
        return m;
      },
      width);
  ConditionalMaximal c;
  c.sup_sq = summarize(x);
  c.bound = 9.0 * sys.Q_hs * sys.Q_hs * (ell.values.back() - ell.values.front());
  c.ok = c.sup_sq.mean - 3.0 * c.sup_sq.std_error <= c.bound;
  return c;
}

// ---------------------------------------------------------------------------
// Small ball

struct SmallBallReport {
  double T = kNaN;
  double delta = kNaN;
  std::size_t hits = 0;
  std::size_t n = 0;
  MCEstimate estimate;  // frequency of max_k |Z_{t_k}| < delta
  stats::Interval wilson99{0.0, 1.0};

  // Lower bound kappa (1 - C1 [dtilde^4 phi^{-1}(1/T)]^{-p}) with
  // dtilde = min(delta, sqrt(1-kappa)/(3||Q||)) and C1 the largest observed
  // E S_T^p / [phi^{-1}(1/T)]^{-p}; NaN when inf phi(2s)/phi(s) = 1.
  bool lower_bound_available = false;
  double kappa = kNaN;
  double p = kNaN;
  double C1 = kNaN;
  double delta_tilde = kNaN;
  double lower_bound = kNaN;
  double T_threshold = kNaN;  // bound positive for T below this
  std::string note;
};

struct SmallBallOptions {
  double kappa = 0.5;
  std::optional<double> p;  // default: half the global lower index
  std::size_t constant_paths = 20000;
  std::size_t cells = 256;  // uniform cells on [0, T]
  double epsilon = 1e-4;
  unsigned width = 0;
};

inline SmallBallReport small_ball(const GalerkinSystem& sys, const BernsteinFunction& phi, double delta, double T,
                                  std::size_t N, std::uint64_t seed, const SmallBallOptions& opt = {}) {
  sys.check();
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("small ball: delta must lie in (0,1)");
  if (!(T > 0.0)) throw DomainError("small ball: T must be positive");
  if (!(opt.kappa > 0.0 && opt.kappa < 1.0)) throw DomainError("small ball: kappa must lie in (0,1)");
  const TimeGrid grid = TimeGrid::uniform(T, opt.cells);
  const GridDriver driver(phi, opt.epsilon);
  auto hit = map_replicas(
      N, seed,
      [&](std::size_t, Rng& rng) {
        const GridPath S = driver.sample(grid, rng);
        const Mat xi = draw_gaussians(grid.cells(), sys.dim(), rng);
        double m = 0.0;
        propagate(sys, S, xi, [&](std::size_t, const Vec&, const Vec& Z) { m = std::max(m, Z.norm()); });
        return m < delta ? 1.0 : 0.0;
      },
      opt.width);
  SmallBallReport r;
  r.T = T;
  r.delta = delta;
  r.n = N;
  for (double h : hit) r.hits += h > 0.0 ? 1 : 0;
  r.estimate = summarize(hit);
  r.wilson99 = stats::wilson(r.hits, N);
  r.kappa = opt.kappa;

  const auto idx = doubling_indices(phi);
  if (!(idx.global_inf && *idx.global_inf > 0.0)) {
    r.note = "log₂ inf φ(2s)/φ(s) = " + detail::show(idx.global_inf) + " is not > 0: no lower-bound expression";
    return r;
  }
  r.p = opt.p.value_or(*idx.global_inf / 2.0);
  if (!(r.p > 0.0 && r.p < *idx.global_inf)) throw DomainError("small ball: p must lie in (0, log₂ inf φ(2s)/φ(s))");
  const auto scan = bound_scan(phi, r.p, BoundKind::Power, 0.0, {T}, opt.constant_paths, stream_seed(seed, 0xba11));
  r.C1 = scan.max_ratio;
  r.delta_tilde = sys.Q_hs > 0.0 ? std::min(delta, std::sqrt(1.0 - r.kappa) / (3.0 * sys.Q_hs)) : delta;
  const double inv = phi.inverse(1.0 / T);
  r.lower_bound = r.kappa * (1.0 - r.C1 * std::pow(std::pow(r.delta_tilde, 4) * inv, -r.p));
  // positive iff phi^{-1}(1/T) > C1^{1/p} dtilde^{-4}
  r.T_threshold = 1.0 / phi(std::pow(r.C1, 1.0 / r.p) * std::pow(r.delta_tilde, -4.0));
  r.lower_bound_available = true;
  return r;
}

// ---------------------------------------------------------------------------
// Long-run moments

struct LongRunRow {
  double T = kNaN;
  MCEstimate average;  // (1/T) int_1^{T+1} |A^theta X_t|^p dt, averaged over paths
};

/// Per path, the trapezoidal time average of |A^theta X_t|^p over [1, T+1];
/// the table reports its MC mean for each T.
inline std::vector<LongRunRow> longrun_moment_scan(const GalerkinSystem& sys, const BernsteinFunction& phi, double p,
                                                   double theta, const std::vector<double>& T_list, std::size_t N,
                                                   std::uint64_t seed, const ScanConfig& cfg = {}) {
  sys.check();
  if (T_list.empty()) throw DomainError("long-run scan: empty horizon list");
  auto gate = convolution_gate(p, theta, true, doubling_indices(phi));
  if (!gate.ok) throw PreconditionRefusal(gate.violation);
  const double T_max = *std::max_element(T_list.begin(), T_list.end());
  const std::size_t k1 = node_index(1.0, cfg.dt);
  std::vector<std::size_t> ends;
  for (double T : T_list) {
    if (!(T > 0.0)) throw DomainError("long-run scan: horizons must be positive");
    ends.push_back(node_index(T + 1.0, cfg.dt));
  }
  const GridDriver driver(phi, cfg.epsilon);
  const TimeGrid grid = step_grid(T_max + 1.0, cfg.dt);
  auto rows = map_replicas(
      N, seed,
      [&](std::size_t, Rng& rng) {
        const GridPath S = driver.sample(grid, rng);
        const Mat xi = sys.has_noise() ? draw_gaussians(grid.cells(), sys.dim(), rng) : Mat::Zero(grid.cells(), sys.dim());
        std::vector<double> acc(ends.size(), 0.0);
        double prev = 0.0;
        propagate(sys, S, xi, [&](std::size_t k, const Vec& X, const Vec&) {
          const double v = std::pow(theta_norm(sys.gamma, theta, X), p);
          if (k > k1) {
            const double piece = 0.5 * (prev + v) * cfg.dt;
            for (std::size_t i = 0; i < ends.size(); ++i)
              if (k <= ends[i]) acc[i] += piece;
          }
          prev = v;
        });
        for (std::size_t i = 0; i < ends.size(); ++i) acc[i] /= T_list[i];
        return acc;
      },
      cfg.width);
  std::vector<LongRunRow> out;
  for (std::size_t i = 0; i < T_list.size(); ++i) {
    std::vector<double> col(N);
    for (std::size_t j = 0; j < N; ++j) col[j] = rows[j][i];
    out.push_back({T_list[i], detail::estimate(col, detail::heavy(phi, p))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Null controller

struct ControllerResult {
  std::vector<double> times;
  Mat u;            // row k = u_{ell_{t_k}}
  Vec phi_terminal;  // Phi_{T~}
  Vec y_terminal;    // Y_{T~} of the last iterate
  std::vector<double> history;  // history[n-1] = max_k |Y^{(n)}_k - Y^{(n-1)}_k|
  std::size_t iterations = 0;
  bool converged = false;
  double contraction = kNaN;  // T~ ||F||_Lip
  double y_bound = kNaN;      // ||F||_inf T~
  double fitted_slope = kNaN;  // least-squares slope of log history against n
};

struct ControllerOptions {
  std::size_t max_iterations = 60;
  double atol = 1e-13;
  bool verify_inverse_bound = true;
};

/// Slope of log h_n against n over the entries above the rounding floor.
inline double fit_log_slope(const std::vector<double>& h, double floor) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!(h[i] > floor)) break;
    xs.push_back(static_cast<double>(i + 1));
    ys.push_back(std::log(h[i]));
  }
  if (xs.size() < 2) return kNaN;
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

/// Fixed-point iteration on the grid of ell:
///   du_k = -(1/ell_T) Q(Y^{(n)}_k)^{-1} e^{-t_k A} x (ell_{k+1} - ell_k),
///   Phi_{k+1} = E_k (Phi_k + Q(Y^{(n)}_k) du_k),  Phi_0 = x,
///   I_{k+1} = E_k I_k + G_k F(Y^{(n)}_k),         I_0 = 0,
///   Y^{(n+1)} = I + Phi,  Y^{(0)} = x.
inline ControllerResult synthesize_null_controller(const GalerkinSystem& sys, const GridPath& ell,
                                                   const ControllerOptions& opt = {}) {
  sys.check();
  const std::size_t K = ell.times.size() - 1;
  if (K < 1) throw DomainError("controller: path needs at least one cell");
  for (std::size_t k = 0; k < K; ++k)
    if (!(ell.values[k + 1] > ell.values[k])) throw DomainError("controller: ell must be strictly increasing");
  const double T = ell.times.back() - ell.times.front();
  const double ellT = ell.values.back() - ell.values.front();
  ControllerResult r;
  r.contraction = T * sys.F_lip;
  r.y_bound = sys.F_sup * T;
  if (!(r.contraction < 1.0))
    throw PreconditionRefusal("T̃ ≥ 1/‖F‖_Lip: T̃·‖F‖_Lip = " + levyint::detail::num(r.contraction) + " is not < 1");
  if (!sys.has_noise()) throw CapabilityError("controller: Q = 0 has no inverse");
  if (opt.verify_inverse_bound) {
    auto chk = check_inverse_bound(sys);
    if (!chk.ok) throw CapabilityError("controller: inverse bound not verified (" + chk.violation + ")");
  }

  const Eigen::Index n = sys.dim();
  const auto rows = static_cast<Eigen::Index>(K + 1);
  r.times = ell.times;
  Mat Y = sys.x0.transpose().replicate(rows, 1);
  Mat Ynext(rows, n);
  Mat semigroup_x(rows, n);  // e^{-t_k A} x
  for (Eigen::Index k = 0; k < rows; ++k)
    semigroup_x.row(k) = ((-(ell.times[k] - ell.times[0]) * sys.gamma.array()).exp() * sys.x0.array()).matrix().transpose();

  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    Mat u = Mat::Zero(rows, n);
    Vec Phi = sys.x0, I = Vec::Zero(n);
    Ynext.row(0) = (I + Phi).transpose();
    for (std::size_t k = 0; k < K; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double dt = ell.times[k + 1] - ell.times[k];
      const Vec E = (-dt * sys.gamma.array()).exp().matrix();
      const Vec G = (-(-dt * sys.gamma.array()).unaryExpr([](double v) { return std::expm1(v); }) /
                     sys.gamma.array()).matrix();
      const Vec y = Y.row(kk).transpose();
      const double dl = ell.values[k + 1] - ell.values[k];
      const Vec du = -(dl / ellT) * sys.solve_q(y, semigroup_x.row(kk).transpose());
      u.row(kk + 1) = u.row(kk) + du.transpose();
      Phi = (E.array() * (Phi + sys.apply_q(y, du)).array()).matrix();
      I = (E.array() * I.array()).matrix();
      if (sys.has_drift()) I += (G.array() * sys.drift(y).array()).matrix();
      Ynext.row(kk + 1) = (I + Phi).transpose();
    }
    const double diff = (Ynext - Y).rowwise().norm().maxCoeff();
    r.history.push_back(diff);
    Y.swap(Ynext);
    r.u = std::move(u);
    r.phi_terminal = Phi;
    r.y_terminal = Y.row(rows - 1).transpose();
    r.iterations = it + 1;
    if (diff < opt.atol) {
      r.converged = true;
      break;
    }
  }
  const double scale = std::max(1.0, Y.rowwise().norm().maxCoeff());
  r.fitted_slope = fit_log_slope(r.history, 1e-12 * scale);
  return r;
}

// ---------------------------------------------------------------------------
// Galerkin convergence

struct GalerkinLevel {
  Eigen::Index n = 0;
  MCEstimate sup_sq;  // E max_k |X^n_{t_k} - X_{t_k}|^2
  std::size_t exceed = 0;
  MCEstimate exceed_prob;  // P(max_k |X^n - X| > delta)
  stats::Interval wilson99{0.0, 1.0};
};

/// Truncations share the reference noise: the n-system uses the first n
/// columns of the Gaussian record and the same subordinator path.
inline std::vector<GalerkinLevel> galerkin_error(const GalerkinSystem& ref, const std::vector<Eigen::Index>& n_list,
                                                 const BernsteinFunction& phi, double T, std::size_t N,
                                                 std::uint64_t seed, double delta = 0.05, const ScanConfig& cfg = {}) {
  ref.check();
  if (n_list.empty()) throw DomainError("galerkin: empty truncation list");
  std::vector<GalerkinSystem> trunc;
  for (auto m : n_list) trunc.push_back(ref.truncated(m));
  const GridDriver driver(phi, cfg.epsilon);
  const TimeGrid grid = step_grid(T, cfg.dt);
  const auto rows_n = static_cast<Eigen::Index>(grid.nodes().size());
  auto rows = map_replicas(
      N, seed,
      [&](std::size_t, Rng& rng) {
        const GridPath S = driver.sample(grid, rng);
        const Mat xi = draw_gaussians(grid.cells(), ref.dim(), rng);
        Mat Xref(rows_n, ref.dim());
        propagate(ref, S, xi, [&](std::size_t k, const Vec& X, const Vec&) { Xref.row(static_cast<Eigen::Index>(k)) = X.transpose(); });
        std::vector<double> out(trunc.size());
        for (std::size_t i = 0; i < trunc.size(); ++i) {
          const Eigen::Index m = trunc[i].dim();
          double worst = 0.0;
          propagate(trunc[i], S, xi, [&](std::size_t k, const Vec& X, const Vec&) {
            const auto kk = static_cast<Eigen::Index>(k);
            const double head = (Xref.row(kk).head(m).transpose() - X).squaredNorm();
            const double tail = Xref.row(kk).tail(ref.dim() - m).squaredNorm();
            worst = std::max(worst, head + tail);
          });
          out[i] = worst;
        }
        return out;
      },
      cfg.width);
  std::vector<GalerkinLevel> levels;
  for (std::size_t i = 0; i < trunc.size(); ++i) {
    GalerkinLevel L;
    L.n = n_list[i];
    std::vector<double> col(N), ex(N);
    for (std::size_t j = 0; j < N; ++j) {
      col[j] = rows[j][i];
      ex[j] = std::sqrt(col[j]) > delta ? 1.0 : 0.0;
      L.exceed += ex[j] > 0.0 ? 1 : 0;
    }
    L.sup_sq = summarize(col);
    L.exceed_prob = summarize(ex);
    L.wilson99 = stats::wilson(L.exceed, N);
    levels.push_back(L);
  }
  return levels;
}

}  // namespace levyint::spde
