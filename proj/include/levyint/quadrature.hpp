#pragma once

// Adaptive Gauss-Kronrod quadrature plus an improper-integral driver that
// decides between "finite", "infinite" and "undetermined".
//
// Improper integrals are split into dyadic pieces accumulating at each
// endpoint: [a + h 2^{-(k+1)}, a + h 2^{-k}] toward a finite endpoint and
// [m + h(2^k - 1), m + h(2^{k+1} - 1)] toward +inf. A power-type endpoint
// behaviour t^{-beta} makes consecutive pieces a geometric sequence with ratio
// 2^{beta-1}, so the piece ratios decide convergence: ratios settling below 1
// give a summable geometric tail, ratios stuck at or above 1 mean divergence,
// anything else is reported as undetermined.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

namespace levyint::quad {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class Status { Finite, Infinite, Undetermined };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Finite: return "Finite";
    case Status::Infinite: return "Infinite";
    case Status::Undetermined: return "Undetermined";
  }
  return "?";
}

struct Result {
  Status status = Status::Undetermined;
  double value = 0.0;
  double error = 0.0;
  std::size_t evaluations = 0;
  std::string diagnostic;

  bool finite() const { return status == Status::Finite; }
};

struct Options {
  double atol = 1e-10;
  double rtol = 1e-8;
  std::size_t max_intervals = 400;  // per adaptive call
  std::size_t max_pieces = 1000;    // per improper endpoint
  double overflow = 1e300;
};

namespace detail {

inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double lo, hi, value, error;
  bool operator<(const Panel& o) const { return error < o.error; }
};

// One 15-point Kronrod panel with the QUADPACK error heuristic.
template <class F>
Panel qk15(F& f, double lo, double hi) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double fc = f(center);
  double resk = fc * kWgk[7];
  double resg = fc * kWg[3];
  double resabs = std::abs(resk);
  std::array<double, 7> f1{}, f2{};
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    f1[j] = f(center - dx);
    f2[j] = f(center + dx);
    const double sum = f1[j] + f2[j];
    resk += kWgk[j] * sum;
    resabs += kWgk[j] * (std::abs(f1[j]) + std::abs(f2[j]));
    if (j % 2 == 1) resg += kWg[j / 2] * sum;
  }
  const double mean = resk * 0.5;
  double resasc = kWgk[7] * std::abs(fc - mean);
  for (int j = 0; j < 7; ++j) resasc += kWgk[j] * (std::abs(f1[j] - mean) + std::abs(f2[j] - mean));
  const double ah = std::abs(half);
  resk *= half;
  resg *= half;
  resabs *= ah;
  resasc *= ah;
  double err = std::abs(resk - resg);
  if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) err = std::max(50.0 * eps * resabs, err);
  return {lo, hi, resk, err};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (7/15) on a finite interval. The integrand
/// is never evaluated at the endpoints, so integrable endpoint singularities
/// are tolerated, though slowly; use `improper` for those.
template <class F>
Result adaptive(F&& f, double lo, double hi, const Options& opt = {}) {
  Result r;
  if (lo == hi) {
    r.status = Status::Finite;
    return r;
  }
  std::priority_queue<detail::Panel> heap;
  auto first = detail::qk15(f, lo, hi);
  r.evaluations = 15;
  double total = first.value;
  double err = first.error;
  heap.push(first);
  while (true) {
    if (!std::isfinite(total)) {
      r.status = Status::Infinite;
      r.value = std::numeric_limits<double>::infinity();
      r.error = r.value;
      r.diagnostic = "non-finite integrand value";
      return r;
    }
    if (err <= std::max(opt.atol, opt.rtol * std::abs(total))) {
      r.status = Status::Finite;
      break;
    }
    if (heap.size() >= opt.max_intervals) {
      r.status = Status::Undetermined;
      r.diagnostic = "interval budget exhausted";
      break;
    }
    auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.lo + worst.hi);
    if (!(mid > worst.lo && mid < worst.hi)) {
      heap.push(worst);
      r.status = Status::Undetermined;
      r.diagnostic = "interval too small to bisect";
      break;
    }
    auto left = detail::qk15(f, worst.lo, mid);
    auto right = detail::qk15(f, mid, worst.hi);
    r.evaluations += 30;
    total += left.value + right.value - worst.value;
    err += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  // Re-sum from the panels to drop accumulated update round-off.
  total = 0.0;
  err = 0.0;
  while (!heap.empty()) {
    total += heap.top().value;
    err += heap.top().error;
    heap.pop();
  }
  r.value = total;
  r.error = err;
  return r;
}

namespace detail {

// Sums a sequence of pieces produced by `piece(k)` with the ratio-based
// convergence/divergence rule. `resolvable(k)` reports whether piece k can
// still be represented in floating point; divergence is only declared from
// piece `trust_from` on.
template <class Piece, class Resolvable>
Result sum_tail(Piece&& piece, Resolvable&& resolvable, const Options& opt, std::size_t trust_from = 0) {
  Result r;
  double sum = 0.0;
  double err = 0.0;
  std::vector<double> pieces;
  std::vector<double> ratios;
  int zero_run = 0;
  for (std::size_t k = 0; k < opt.max_pieces; ++k) {
    if (!resolvable(k)) {
      r.status = Status::Undetermined;
      r.diagnostic = "endpoint not resolvable in floating point";
      break;
    }
    Result p = piece(k);
    r.evaluations += p.evaluations;
    if (p.status == Status::Infinite || !std::isfinite(p.value)) {
      r.status = Status::Infinite;
      r.diagnostic = "non-finite piece";
      r.value = std::numeric_limits<double>::infinity();
      return r;
    }
    sum += p.value;
    err += p.error;
    if (std::abs(sum) > opt.overflow) {
      r.status = Status::Infinite;
      r.diagnostic = "partial sum exceeded overflow guard";
      r.value = std::numeric_limits<double>::infinity();
      return r;
    }
    const double mag = std::abs(p.value);
    if (!pieces.empty() && std::abs(pieces.back()) > 0.0) ratios.push_back(mag / std::abs(pieces.back()));
    pieces.push_back(p.value);

    zero_run = (mag == 0.0) ? zero_run + 1 : 0;
    if (zero_run >= 3) {
      r.status = Status::Finite;
      break;
    }
    if (ratios.size() < 4) continue;

    const std::size_t n = ratios.size();
    const double r0 = ratios[n - 1], r1 = ratios[n - 2], r2 = ratios[n - 3], r3 = ratios[n - 4];
    const double rho = std::max({r0, r1, r2});
    const double spread = std::max({r0, r1, r2, r3}) - std::min({r0, r1, r2, r3});
    const double target = std::max(opt.atol, opt.rtol * std::abs(sum));

    if (spread <= 1e-9 * std::max(1.0, rho)) {
      // Piece ratios have settled: exact geometric tail.
      if (r0 < 1.0 - 1e-7) {
        const double tail = mag * r0 / (1.0 - r0);
        if (tail <= target || k >= 8) {
          sum += std::copysign(tail, p.value);
          err += 1e-9 * tail / (1.0 - r0);
          r.status = Status::Finite;
          break;
        }
      } else if (r0 > 1.0 - 1e-12 && k >= trust_from + 4) {
        r.status = Status::Infinite;
        r.diagnostic = "pieces do not decay (ratio " + std::to_string(r0) + ")";
        r.value = std::numeric_limits<double>::infinity();
        return r;
      }
    }
    if (rho < 0.95) {
      const double bound = mag * rho / (1.0 - rho);
      if (bound <= target) {
        const double tail = mag * r0 / (1.0 - r0);
        sum += std::copysign(tail, p.value);
        err += std::abs(bound - tail) + 1e-3 * tail;
        r.status = Status::Finite;
        break;
      }
    }
    if (n >= 8 && k >= 12 && k >= trust_from + 8) {
      bool growing = true;
      for (std::size_t j = n - 8; j < n; ++j) growing = growing && ratios[j] >= 1.0 - 1e-12;
      if (growing) {
        r.status = Status::Infinite;
        r.diagnostic = "pieces non-decreasing over 8 consecutive dyadic scales";
        r.value = std::numeric_limits<double>::infinity();
        return r;
      }
    }
    if (k + 1 == opt.max_pieces) {
      r.status = Status::Undetermined;
      r.diagnostic = "piece sequence did not settle";
    }
  }
  r.value = sum;
  r.error = err;
  return r;
}

// First dyadic piece narrower than 1e-3 |x| when halving from width h0
// toward the endpoint x; 0 for x = 0.
inline std::size_t resolved_from(double x, double h0) {
  if (x == 0.0) return 0;
  const double k = std::ceil(std::log2(h0 / (1e-3 * std::abs(x))));
  return k > 0.0 ? static_cast<std::size_t>(k) : 0;
}

inline Result combine(const Result& a, const Result& b) {
  Result r;
  r.evaluations = a.evaluations + b.evaluations;
  if (a.status == Status::Infinite || b.status == Status::Infinite) {
    r.status = Status::Infinite;
    r.value = std::numeric_limits<double>::infinity();
    r.diagnostic = a.status == Status::Infinite ? a.diagnostic : b.diagnostic;
    return r;
  }
  r.value = a.value + b.value;
  r.error = a.error + b.error;
  if (a.status == Status::Undetermined || b.status == Status::Undetermined) {
    r.status = Status::Undetermined;
    r.diagnostic = a.status == Status::Undetermined ? a.diagnostic : b.diagnostic;
  } else {
    r.status = Status::Finite;
  }
  return r;
}

}  // namespace detail

/// Integral of f over (a, b) for finite a and b <= +inf. Either endpoint may
/// carry an integrable or non-integrable singularity.
template <class F>
Result improper(F&& f, double a, double b, const Options& opt = {}) {
  Result r;
  if (!(b > a)) {
    r.status = Status::Finite;
    return r;
  }
  Options piece_opt = opt;
  piece_opt.atol = 0.0;
  piece_opt.rtol = std::min(opt.rtol, 1e-10);
  piece_opt.max_intervals = 200;

  auto piece_result = [&](double lo, double hi) {
    Result p = adaptive(f, lo, hi, piece_opt);
    if (p.status == Status::Undetermined) p.status = Status::Finite;  // piece accuracy only
    return p;
  };

  if (std::isinf(b)) {
    const double m = a + 1.0;
    auto left = detail::sum_tail(
        [&](std::size_t k) {
          const double hi = a + std::ldexp(1.0, -static_cast<int>(k));
          const double lo = a + std::ldexp(1.0, -static_cast<int>(k) - 1);
          return piece_result(lo, hi);
        },
        [&](std::size_t k) { return a + std::ldexp(1.0, -static_cast<int>(k) - 1) > a; }, opt,
        detail::resolved_from(a, 1.0));
    auto right = detail::sum_tail(
        [&](std::size_t k) {
          const double lo = m + (std::ldexp(1.0, static_cast<int>(k)) - 1.0);
          const double hi = m + (std::ldexp(1.0, static_cast<int>(k) + 1) - 1.0);
          return piece_result(lo, hi);
        },
        [&](std::size_t k) { return k < 1000; }, opt);
    return detail::combine(left, right);
  }

  const double m = 0.5 * (a + b);
  const double h = m - a;
  auto left = detail::sum_tail(
      [&](std::size_t k) {
        const double hi = a + h * std::ldexp(1.0, -static_cast<int>(k));
        const double lo = a + h * std::ldexp(1.0, -static_cast<int>(k) - 1);
        return piece_result(lo, hi);
      },
      [&](std::size_t k) { return a + h * std::ldexp(1.0, -static_cast<int>(k) - 1) > a; }, opt,
      detail::resolved_from(a, h));
  auto right = detail::sum_tail(
      [&](std::size_t k) {
        const double lo = b - h * std::ldexp(1.0, -static_cast<int>(k));
        const double hi = b - h * std::ldexp(1.0, -static_cast<int>(k) - 1);
        return piece_result(lo, hi);
      },
      [&](std::size_t k) { return b - h * std::ldexp(1.0, -static_cast<int>(k) - 1) < b; }, opt,
      detail::resolved_from(b, h));
  return detail::combine(left, right);
}

}  // namespace levyint::quad
