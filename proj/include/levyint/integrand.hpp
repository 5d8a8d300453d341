#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "levyint/errors.hpp"
#include "levyint/special.hpp"

namespace levyint {

/// Deterministic nonnegative integrand f on (0, inf), optionally restricted to
/// a window (lo, hi) outside of which it vanishes.
class Integrand {
 public:
  enum class Kind { PowerSingular, Exponential, Constant, Tabulated, TimeReversed };

  /// f(t) = t^{-theta}.
  static Integrand power(double theta) { return Integrand(Kind::PowerSingular, theta); }

  /// f(t) = e^{-lambda t}.
  static Integrand exponential(double lambda) {
    if (!(lambda > 0.0)) throw DomainError("exponential integrand: lambda must be positive");
    return Integrand(Kind::Exponential, lambda);
  }

  static Integrand constant(double c) {
    if (!(c >= 0.0) || !std::isfinite(c)) throw DomainError("constant integrand: c must be finite and >= 0");
    return Integrand(Kind::Constant, c);
  }

  /// Piecewise linear through (t_i, v_i); zero outside [t_0, t_last].
  static Integrand tabulated(std::vector<double> t, std::vector<double> v) {
    if (t.size() < 2 || t.size() != v.size()) throw DomainError("tabulated integrand: need >= 2 matching knots");
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!(v[i] >= 0.0) || !std::isfinite(v[i])) throw DomainError("tabulated integrand: values must be finite and >= 0");
      if (i > 0 && !(t[i] > t[i - 1])) throw DomainError("tabulated integrand: knots must increase");
    }
    if (!(t.front() >= 0.0)) throw DomainError("tabulated integrand: knots must be >= 0");
    Integrand f(Kind::Tabulated, 0.0);
    f.knots_ = std::make_shared<const std::pair<std::vector<double>, std::vector<double>>>(std::move(t), std::move(v));
    return f;
  }

  /// t -> inner(T - t) on (0, T).
  static Integrand time_reversed(const Integrand& inner, double T) {
    if (!(T > 0.0)) throw DomainError("time reversal: horizon must be positive");
    Integrand f(Kind::TimeReversed, T);
    f.inner_ = std::make_shared<const Integrand>(inner);
    f.hi_ = T;
    return f;
  }

  /// Specs: "pow:theta" (t^{-theta}), "exp:lambda", "const:c",
  /// "tab:t0:v0;t1:v1;...".
  static Integrand parse(std::string_view spec) {
    auto colon = spec.find(':');
    if (colon == std::string_view::npos) throw DomainError("integrand spec needs kind:params, got '" + std::string(spec) + "'");
    const std::string_view kind = spec.substr(0, colon);
    const std::string rest(spec.substr(colon + 1));
    auto num = [&](const std::string& s) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = std::string::npos;
      }
      if (used != s.size()) throw DomainError("bad number '" + s + "' in integrand spec");
      return v;
    };
    if (kind == "pow") return power(num(rest));
    if (kind == "exp") return exponential(num(rest));
    if (kind == "const") return constant(num(rest));
    if (kind == "tab") {
      std::vector<double> t, v;
      std::size_t pos = 0;
      while (pos <= rest.size()) {
        auto semi = rest.find(';', pos);
        std::string item = rest.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos);
        auto c = item.find(':');
        if (c == std::string::npos) throw DomainError("tabulated knot must be t:v, got '" + item + "'");
        t.push_back(num(item.substr(0, c)));
        v.push_back(num(item.substr(c + 1)));
        if (semi == std::string::npos) break;
        pos = semi + 1;
      }
      return tabulated(std::move(t), std::move(v));
    }
    throw DomainError("unknown integrand kind '" + std::string(kind) + "'");
  }

  /// Copy vanishing outside (lo, hi).
  Integrand restricted(double lo, double hi) const {
    if (!(hi > lo)) throw DomainError("restricted: empty window");
    Integrand f = *this;
    f.lo_ = std::max(lo_, lo);
    f.hi_ = std::min(hi_, hi);
    return f;
  }

  double operator()(double t) const {
    if (!(t > lo_ && t <= hi_)) return 0.0;
    return raw(t);
  }

  /// Value ignoring the window.
  double raw(double t) const {
    switch (kind_) {
      case Kind::PowerSingular: return param_ == 0.0 ? 1.0 : std::pow(t, -param_);
      case Kind::Exponential: return std::exp(-param_ * t);
      case Kind::Constant: return param_;
      case Kind::Tabulated: {
        const auto& [ts, vs] = *knots_;
        if (t < ts.front() || t > ts.back()) return 0.0;
        auto it = std::upper_bound(ts.begin(), ts.end(), t);
        if (it == ts.end()) return vs.back();
        const std::size_t i = static_cast<std::size_t>(it - ts.begin()) - 1;
        const double w = (t - ts[i]) / (ts[i + 1] - ts[i]);
        return vs[i] + w * (vs[i + 1] - vs[i]);
      }
      case Kind::TimeReversed: return (*inner_)(param_ - t);
    }
    return kNaN;
  }

  Kind kind() const { return kind_; }
  double param() const { return param_; }
  double window_lo() const { return lo_; }
  double window_hi() const { return hi_; }
  const Integrand* inner() const { return inner_.get(); }

  /// Unbounded near t = 0: a power with theta > 0 whose window reaches 0.
  bool singular_at_zero() const { return kind_ == Kind::PowerSingular && param_ > 0.0 && lo_ <= 0.0; }

  bool identically_zero() const { return kind_ == Kind::Constant && param_ == 0.0; }

  std::string id() const {
    char buf[64];
    std::string s;
    switch (kind_) {
      case Kind::PowerSingular: std::snprintf(buf, sizeof buf, "pow:%.10g", param_); s = buf; break;
      case Kind::Exponential: std::snprintf(buf, sizeof buf, "exp:%.10g", param_); s = buf; break;
      case Kind::Constant: std::snprintf(buf, sizeof buf, "const:%.10g", param_); s = buf; break;
      case Kind::Tabulated: s = "tab:" + std::to_string(knots_->first.size()) + "knots"; break;
      case Kind::TimeReversed: std::snprintf(buf, sizeof buf, "rev(%s,%.10g)", inner_->id().c_str(), param_); s = buf; break;
    }
    if (lo_ > 0.0 || std::isfinite(hi_)) {
      std::snprintf(buf, sizeof buf, "[%.10g,%.10g]", lo_, hi_);
      s += buf;
    }
    return s;
  }

 private:
  Integrand(Kind k, double p) : kind_(k), param_(p) {}

  Kind kind_;
  double param_;
  double lo_ = 0.0;
  double hi_ = kInf;
  std::shared_ptr<const std::pair<std::vector<double>, std::vector<double>>> knots_;
  std::shared_ptr<const Integrand> inner_;
};

}  // namespace levyint
