// levyint command-line tool: one subcommand per experiment, CSV on stdout or
// --out, run manifest as JSON next to the CSV.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "levyint/levyint.hpp"

namespace {

using namespace levyint;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string("undetermined"); }

double parse_bound(const std::string& s) {
  if (s == "inf" || s == "+inf" || s == "infinity") return kInf;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = std::string::npos;
  }
  if (used != s.size()) throw DomainError("bad number '" + s + "'");
  return v;
}

/// Collects CSV rows; the header echoes the resolved configuration.
class Table {
 public:
  void comment(const std::string& line) { out_ << "# " << line << '\n'; }
  void columns(std::initializer_list<const char*> names) {
    bool first = true;
    for (const char* n : names) {
      out_ << (first ? "" : ",") << n;
      first = false;
    }
    out_ << '\n';
  }
  template <class... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }
  std::ostringstream& raw() { return out_; }
  std::string str() const { return out_.str(); }

 private:
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(const std::optional<double>& v) { return fmt(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(bool b) { return b ? "true" : "false"; }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(int v) { return std::to_string(v); }

  std::ostringstream out_;
};

struct Globals {
  std::uint64_t seed = 1;
  std::string out;
  std::string manifest;
  unsigned threads = 0;
};

/// Resolved options of the selected subcommand chain as key = value pairs.
std::vector<std::pair<std::string, std::string>> resolved_config(CLI::App& app) {
  std::vector<std::pair<std::string, std::string>> kv;
  static const std::vector<std::string> skip{"help", "version", "out", "manifest", "threads", "config"};
  std::string prefix;
  for (CLI::App* a = &app; a != nullptr;) {
    for (const CLI::Option* o : a->get_options()) {
      if (o->get_lnames().empty()) continue;
      const std::string name = o->get_lnames().front();
      if (std::find(skip.begin(), skip.end(), name) != skip.end()) continue;
      std::string value;
      if (o->count() > 0) {
        for (const auto& r : o->results()) value += (value.empty() ? "" : ",") + r;
      } else {
        value = o->get_default_str();
      }
      if (o->get_items_expected_max() == 0) value = o->count() > 0 ? "true" : "false";
      kv.emplace_back(prefix + name, value);
    }
    CLI::App* next = nullptr;
    for (CLI::App* s : a->get_subcommands()) next = s;
    if (next) prefix += next->get_name() + ".";
    a = next;
  }
  return kv;
}

std::string command_path(CLI::App& app) {
  std::string path;
  for (CLI::App* a = &app; a != nullptr;) {
    CLI::App* next = nullptr;
    for (CLI::App* s : a->get_subcommands()) next = s;
    if (next) path += (path.empty() ? "" : " ") + next->get_name();
    a = next;
  }
  return path;
}

// ---------------------------------------------------------------------------

struct SystemOptions {
  long n = 8;
  double f_amp = 1.0;
  double q_amp = 1.0;
  double q_decay = 2.0;
  double x_scale = 1.0;
  std::string phi = "stable:0.5";
  double dt = 1.0 / 256.0;
  std::size_t paths = 2000;
  double eps = 1e-4;

  void attach(CLI::App* c, bool with_dim = true) {
    if (with_dim) c->add_option("--n", n, "Galerkin dimension")->capture_default_str();
    c->add_option("--f-amp", f_amp, "drift amplitude")->capture_default_str();
    c->add_option("--q-amp", q_amp, "noise amplitude")->capture_default_str();
    c->add_option("--q-decay", q_decay, "noise decay exponent in k")->capture_default_str();
    c->add_option("--x-scale", x_scale, "initial state scale")->capture_default_str();
    c->add_option("--phi", phi, "Bernstein function")->capture_default_str();
    c->add_option("--dt", dt, "time step")->capture_default_str();
    c->add_option("--paths", paths, "replicas")->capture_default_str();
    c->add_option("--eps", eps, "compound Poisson cutoff")->capture_default_str();
  }
  spde::GalerkinSystem system(long dim = -1) const {
    spde::HeatChainParams hp{f_amp, q_amp, q_decay, x_scale};
    return spde::heat_chain(dim > 0 ? dim : n, hp);
  }
  spde::ScanConfig scan(unsigned width) const { return {dt, eps, width}; }
};

void bound_table(Table& t, const BoundReport& r, const char* header) {
  t.comment("clause: " + r.clause);
  t.raw() << header << '\n';
  for (std::size_t i = 0; i < r.T_grid.size(); ++i)
    t.row(r.T_grid[i], r.mc_values[i].mean, r.mc_values[i].std_error, r.bound_rhs[i], r.ratio[i]);
  t.comment("max_ratio = " + fmt(r.max_ratio) + ", min_ratio = " + fmt(r.min_ratio) + ", sup_statistic = " +
            fmt(r.sup_mc));
}

SamplerConfig sampler(std::size_t cells, double eps, unsigned width) {
  SamplerConfig c;
  c.cells = cells;
  c.epsilon = eps;
  c.width = width;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subordinator integrals and subordinated-noise SPDE experiments", "levyint"};
  app.set_version_flag("--version", std::string(levyint::version()));
  app.set_config("--config", "", "key = value config file; flags win on conflict");
  app.fallthrough();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--out", g.out, "CSV output path (default stdout)");
  app.add_option("--manifest", g.manifest, "run manifest path (default <out>.json)");
  app.add_option("--threads", g.threads, "worker count (default LEVYINT_THREADS or all cores)");

  std::function<void(Table&)> action;

  // --- bf -------------------------------------------------------------------
  auto* bf = app.add_subcommand("bf", "Bernstein function evaluation, inverse, doubling indices, shape");
  bf->require_subcommand(1);
  std::string phi_spec;
  std::vector<double> s_list{1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0, 1000.0};
  {
    auto* c = bf->add_subcommand("eval", "phi(s) and log2 phi(2s)/phi(s)");
    c->add_option("--phi", phi_spec, "e.g. stable:0.5, gamma, tempered:0.5:1")->required();
    c->add_option("--s", s_list, "arguments")->delimiter(',')->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        auto phi = BernsteinFunction::parse(phi_spec);
        t.columns({"s", "phi", "log2_ratio"});
        for (double s : s_list) t.row(s, phi(s), log2_doubling_ratio(phi, s));
      };
    });
  }
  std::vector<double> y_list{0.5, 1.0, 2.0};
  {
    auto* c = bf->add_subcommand("inverse", "phi^{-1}(y)");
    c->add_option("--phi", phi_spec)->required();
    c->add_option("--y", y_list)->delimiter(',')->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        auto phi = BernsteinFunction::parse(phi_spec);
        t.columns({"y", "inverse"});
        for (double y : y_list) t.row(y, phi.inverse(y));
      };
    });
  }
  {
    auto* c = bf->add_subcommand("indices", "doubling indices");
    c->add_option("--phi", phi_spec)->required();
    c->callback([&] {
      action = [&](Table& t) {
        auto phi = BernsteinFunction::parse(phi_spec);
        auto idx = doubling_indices(phi);
        t.columns({"index", "value"});
        t.row("global_inf", idx.global_inf);
        t.row("global_sup", idx.global_sup);
        t.row("at_zero", idx.at_zero);
        t.row("at_infinity", idx.at_infinity);
        t.row("log_growth_liminf", log_growth_liminf(phi));
      };
    });
  }
  {
    auto* c = bf->add_subcommand("shape", "Bernstein shape checks on a log grid");
    c->add_option("--phi", phi_spec)->required();
    c->callback([&] {
      action = [&](Table& t) {
        auto r = check_shape(BernsteinFunction::parse(phi_spec));
        t.columns({"property", "holds"});
        t.row("increasing", r.increasing);
        t.row("concave", r.concave);
        t.row("subadditive", r.subadditive);
        t.row("derivative_bound", r.derivative_bound);
        t.row("vanishes_at_zero", r.vanishes_at_zero);
        t.comment("worst_s = " + fmt(r.worst_s));
      };
    });
  }

  // --- sim ------------------------------------------------------------------
  double T = 1.0;
  std::size_t cells = 256;
  double eps = 1e-4;
  double sim_dt = 0.0;
  std::size_t sim_paths = 1;
  bool jumps = false;
  {
    auto* c = app.add_subcommand("sim", "subordinator sample paths");
    c->add_option("--phi", phi_spec)->required();
    c->add_option("--T", T)->capture_default_str();
    c->add_option("--cells", cells)->capture_default_str();
    c->add_option("--dt", sim_dt, "grid step; overrides --cells when positive")->capture_default_str();
    c->add_option("--paths", sim_paths)->capture_default_str();
    c->add_option("--eps", eps, "compound Poisson cutoff")->capture_default_str();
    c->add_flag("--jumps", jumps, "emit the compound Poisson jump list instead of grid values");
    c->callback([&] {
      action = [&](Table& t) {
        auto phi = BernsteinFunction::parse(phi_spec);
        if (jumps) {
          if (sim_paths != 1) throw DomainError("--jumps writes a single path");
          Rng rng(g.seed);
          write_csv(t.raw(), simulate_general(phi, T, eps, rng));
          return;
        }
        const TimeGrid grid = sim_dt > 0.0 ? spde::step_grid(T, sim_dt) : TimeGrid::uniform(T, cells);
        const spde::GridDriver driver(phi, eps);
        if (sim_paths == 1) {
          Rng rng(g.seed);
          write_csv(t.raw(), driver.sample(grid, rng));
          return;
        }
        auto all = map_replicas(sim_paths, g.seed, [&](std::size_t, Rng& rng) { return driver.sample(grid, rng); },
                                g.threads);
        t.columns({"path", "t", "S_t"});
        for (std::size_t i = 0; i < all.size(); ++i)
          for (std::size_t k = 0; k < all[i].times.size(); ++k) t.row(i, all[i].times[k], all[i].values[k]);
      };
    });
  }

  // --- integrate ------------------------------------------------------------
  std::string f_spec = "const:1";
  std::size_t paths = 10000;
  bool samples = false;
  {
    auto* c = app.add_subcommand("integrate", "pathwise int_0^T f dS: criterion and Laplace functional");
    c->add_option("--phi", phi_spec)->required();
    c->add_option("--f", f_spec, "pow:theta, exp:lambda, const:c, tab:t:v;...")->capture_default_str();
    c->add_option("--T", T)->capture_default_str();
    c->add_option("--paths", paths)->capture_default_str();
    c->add_option("--cells", cells)->capture_default_str();
    c->add_option("--eps", eps)->capture_default_str();
    c->add_flag("--samples", samples, "emit one integral per replica");
    c->callback([&] {
      action = [&](Table& t) {
        auto phi = BernsteinFunction::parse(phi_spec);
        auto f = Integrand::parse(f_spec);
        const auto cfg = sampler(cells, eps, g.threads);
        if (samples) {
          auto x = sample_integrals(phi, f, T, paths, g.seed, cfg);
          t.columns({"replica", "integral"});
          for (std::size_t i = 0; i < x.size(); ++i) t.row(i, x[i]);
          return;
        }
        auto crit = finiteness_criterion(f, phi, 0.0, T);
        auto mc = char_functional_mc(phi, f, T, paths, g.seed, cfg);
        t.comment("criterion route: " + crit.route);
        t.columns({"statistic", "value", "se"});
        t.row("int_phi_f", crit.value, 0.0);
        t.row("laplace_exact", char_functional_exact(phi, f, 0.0, T), 0.0);
        t.row("laplace_mc", mc.mean, mc.std_error);
      };
    });
  }

  // --- zeroone --------------------------------------------------------------
  std::string a_str = "0", b_str = "inf";
  bool study = false;
  int decades = 6, per_decade = 8;
  {
    auto* c = app.add_subcommand("zeroone", "zero-one verdict for {int f dS < inf}");
    c->add_option("--phi", phi_spec)->required();
    c->add_option("--f", f_spec)->required();
    c->add_option("--a", a_str, "lower limit")->capture_default_str();
    c->add_option("--b", b_str, "upper limit (inf allowed)")->capture_default_str();
    c->add_flag("--study", study, "append the empirical truncation study on (0, T]");
    c->add_option("--T", T, "horizon of the truncation study")->capture_default_str();
    c->add_option("--decades", decades)->capture_default_str();
    c->add_option("--per-decade", per_decade)->capture_default_str();
    c->add_option("--paths", paths)->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        auto phi = BernsteinFunction::parse(phi_spec);
        auto f = Integrand::parse(f_spec);
        auto r = zero_one_verdict(f, phi, parse_bound(a_str), parse_bound(b_str));
        t.columns({"verdict", "criterion", "route"});
        t.row(std::string(to_string(r.verdict)), r.criterion.value, r.criterion.route);
        if (study) {
          auto s = truncation_study(f, phi, T, decades, per_decade, paths, g.seed, 0.9, g.threads);
          t.comment("truncation study: decade_ratio = " + fmt(s.decade_ratio) + ", grows = " + (s.grows ? "true" : "false"));
          t.raw() << "delta,median_truncated,median_decade\n";
          for (std::size_t i = 0; i < s.deltas.size(); ++i) t.row(s.deltas[i], s.median_truncated[i], s.median_decade[i]);
        }
      };
    });
  }

  // --- moment ---------------------------------------------------------------
  auto* moment = app.add_subcommand("moment", "exact, Monte Carlo, bound and equivalence moment experiments");
  moment->require_subcommand(1);
  double p = 0.25, alpha = 0.5, param = 0.5;
  std::string which_case, method = "auto", kind = "pow";
  std::vector<double> T_list{1, 2, 4, 8};
  {
    auto* c = moment->add_subcommand("exact", "closed-form stable moments");
    c->add_option("--alpha", alpha)->capture_default_str();
    c->add_option("--p", p)->capture_default_str();
    c->add_option("--f", f_spec)->capture_default_str();
    c->add_option("--T", T)->capture_default_str();
    c->add_option("--case", which_case, "head | tail | exphead (uses --param)")
        ->check(CLI::IsMember({"head", "tail", "exphead"}));
    c->add_option("--param", param, "theta or lambda for --case")->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        double v;
        if (which_case.empty()) {
          v = exact_stable_moment(alpha, p, Integrand::parse(f_spec), 0.0, T);
        } else {
          const auto cc = which_case == "head"   ? CorollaryCase::PowerHead
                          : which_case == "tail" ? CorollaryCase::PowerTail
                                                 : CorollaryCase::ExponentialHead;
          v = corollary_case_moment(alpha, p, param, T, cc);
        }
        t.columns({"p", "value"});
        t.row(p, v);
      };
    });
  }
  {
    auto* c = moment->add_subcommand("mc", "Monte Carlo moment of int_0^T f dS");
    c->add_option("--phi", phi_spec)->required();
    c->add_option("--p", p)->capture_default_str();
    c->add_option("--f", f_spec)->capture_default_str();
    c->add_option("--T", T)->capture_default_str();
    c->add_option("--paths", paths)->capture_default_str();
    c->add_option("--method", method, "auto | plain | mom")->check(CLI::IsMember({"auto", "plain", "mom"}))
        ->capture_default_str();
    c->add_option("--cells", cells)->capture_default_str();
    c->add_option("--eps", eps)->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        std::optional<EstimatorMethod> m;
        if (method == "plain") m = EstimatorMethod::PlainMean;
        if (method == "mom") m = EstimatorMethod::MedianOfMeans;
        auto e = mc_moment(BernsteinFunction::parse(phi_spec), p, Integrand::parse(f_spec), T, paths, g.seed, m,
                           sampler(cells, eps, g.threads));
        t.columns({"p", "mean", "se", "n", "method", "heavy_tail", "n_infinite"});
        t.row(p, e.mean, e.std_error, e.n_samples, std::string(to_string(e.method)), e.heavy_tail_flag, e.n_infinite);
      };
    });
  }
  {
    auto* c = moment->add_subcommand("bound", "MC moments against the doubling-index bound over horizons");
    c->add_option("--phi", phi_spec)->required();
    c->add_option("--p", p)->capture_default_str();
    c->add_option("--kind", kind, "pow | exp")->check(CLI::IsMember({"pow", "exp"}))->capture_default_str();
    c->add_option("--param", param, "theta (pow) or lambda (exp)")->capture_default_str();
    c->add_option("--T", T_list)->delimiter(',')->capture_default_str();
    c->add_option("--paths", paths)->capture_default_str();
    c->add_option("--cells", cells)->capture_default_str();
    c->add_option("--eps", eps)->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        auto r = bound_scan(BernsteinFunction::parse(phi_spec), p, kind == "pow" ? BoundKind::Power : BoundKind::Exponential,
                            param, T_list, paths, g.seed, sampler(cells, eps, g.threads));
        bound_table(t, r, "T,mc_mean,mc_se,rhs,ratio");
      };
    });
  }
  double lambda = 1.0;
  {
    auto* c = moment->add_subcommand("equiv", "finiteness of E[(int e^{-lambda t} dS)^p] via int_0^1 phi(s) s^{-p-1} ds");
    c->add_option("--phi", phi_spec)->required();
    c->add_option("--p", p)->capture_default_str();
    c->add_option("--lambda", lambda)->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        auto r = exp_moment_equivalence(BernsteinFunction::parse(phi_spec), p, lambda);
        t.columns({"verdict", "criterion"});
        t.row(std::string(to_string(r.verdict)), r.criterion);
      };
    });
  }

  // --- spde -----------------------------------------------------------------
  auto* spde_cmd = app.add_subcommand("spde", "Galerkin SPDE experiments (heat chain gamma_k = k^2)");
  spde_cmd->require_subcommand(1);
  SystemOptions so;
  double theta = 0.0, delta = 0.5, kappa = 0.5, contraction = -1.0;
  long frozen = 0, nref = 64;
  std::vector<long> n_list{4, 8, 16, 32};
  {
    auto* c = spde_cmd->add_subcommand("sim", "one solution path");
    so.attach(c);
    c->add_option("--T", T)->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        auto path = spde::simulate(so.system(), BernsteinFunction::parse(so.phi), T, so.dt, g.seed, so.eps);
        spde::write_csv(t.raw(), path);
      };
    });
  }
  std::vector<double> t_list{1.0 / 64, 1.0 / 16, 0.25, 1.0};
  {
    auto* c = spde_cmd->add_subcommand("convmom", "E|A^theta Z_t|^p against t^{-p theta}[phi^{-1}(1/t)]^{-p/2}");
    so.attach(c);
    c->add_option("--p", p)->capture_default_str();
    c->add_option("--theta", theta)->capture_default_str();
    c->add_option("--t", t_list)->delimiter(',')->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        auto r = spde::convolution_moment_scan(so.system(), BernsteinFunction::parse(so.phi), p, theta, t_list,
                                               so.paths, g.seed, so.scan(g.threads));
        bound_table(t, r, "t,statistic,se,rhs,ratio");
      };
    });
  }
  {
    auto* c = spde_cmd->add_subcommand("maximal", "E sup|Z|^p against [phi^{-1}(1/T)]^{-p/2}");
    so.attach(c);
    c->add_option("--p", p)->capture_default_str();
    c->add_option("--T", T_list)->delimiter(',')->capture_default_str();
    c->add_option("--frozen", frozen, "frozen subordinator paths for the conditional check")->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        auto phi = BernsteinFunction::parse(so.phi);
        auto sys = so.system();
        auto r = spde::maximal_inequality_scan(sys, phi, p, T_list, so.paths, g.seed, so.scan(g.threads));
        bound_table(t, r, "t,statistic,se,rhs,ratio");
        const spde::GridDriver driver(phi, so.eps);
        const double Tmax = *std::max_element(T_list.begin(), T_list.end());
        for (long i = 0; i < frozen; ++i) {
          Rng rng(g.seed, 0xf0f0ULL + static_cast<std::uint64_t>(i));
          auto ell = driver.sample(spde::step_grid(Tmax, so.dt), rng);
          auto cm = spde::conditional_maximal_check(sys, ell, so.paths, stream_seed(g.seed, 0xc0deULL + i), g.threads);
          t.comment("frozen path " + std::to_string(i) + ": E sup|Z|^2 = " + fmt(cm.sup_sq.mean) + " +- " +
                    fmt(cm.sup_sq.std_error) + ", 9||Q||^2 ell_T = " + fmt(cm.bound) + (cm.ok ? ", holds" : ", VIOLATED"));
        }
      };
    });
  }
  std::vector<double> sb_T{1.0 / 16};
  {
    auto* c = spde_cmd->add_subcommand("smallball", "P(sup|Z| < delta) with the lower-bound expression");
    so.attach(c);
    c->add_option("--delta", delta)->capture_default_str();
    c->add_option("--T", sb_T)->delimiter(',')->capture_default_str();
    c->add_option("--kappa", kappa)->capture_default_str();
    c->add_option("--cells", cells)->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        auto phi = BernsteinFunction::parse(so.phi);
        auto sys = so.system();
        spde::SmallBallOptions opt;
        opt.kappa = kappa;
        opt.cells = cells;
        opt.epsilon = so.eps;
        opt.width = g.threads;
        t.columns({"T", "statistic", "se", "wilson_lo", "wilson_hi", "lower_bound", "T_threshold"});
        std::string note;
        for (std::size_t i = 0; i < sb_T.size(); ++i) {
          auto r = spde::small_ball(sys, phi, delta, sb_T[i], so.paths, stream_seed(g.seed, i), opt);
          t.row(r.T, r.estimate.mean, r.estimate.std_error, r.wilson99.lo, r.wilson99.hi, r.lower_bound, r.T_threshold);
          note = r.note;
        }
        if (!note.empty()) t.comment(note);
      };
    });
  }
  std::vector<double> lr_T{4, 8, 16};
  {
    auto* c = spde_cmd->add_subcommand("longrun", "(1/T) int_1^{T+1} E|A^theta X_t|^p dt");
    so.attach(c);
    c->add_option("--p", p)->capture_default_str();
    c->add_option("--theta", theta)->capture_default_str();
    c->add_option("--T", lr_T)->delimiter(',')->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        auto rows = spde::longrun_moment_scan(so.system(), BernsteinFunction::parse(so.phi), p, theta, lr_T, so.paths,
                                              g.seed, so.scan(g.threads));
        t.columns({"T", "statistic", "se"});
        for (const auto& r : rows) t.row(r.T, r.average.mean, r.average.std_error);
      };
    });
  }
  {
    auto* c = spde_cmd->add_subcommand("control", "null controller along a frozen subordinator path");
    so.attach(c);
    c->add_option("--T", T, "controller horizon")->capture_default_str();
    c->add_option("--cells", cells)->capture_default_str();
    c->add_option("--contraction", contraction, "set f-amp so that T ||F||_Lip equals this value");
    c->callback([&] {
      action = [&](Table& t) {
        auto phi = BernsteinFunction::parse(so.phi);
        auto sys = so.system();
        if (contraction > 0.0) {
          SystemOptions unit = so;
          unit.f_amp = 1.0;
          SystemOptions tuned = so;
          tuned.f_amp = contraction / (T * unit.system().F_lip);
          sys = tuned.system();
        }
        Rng rng(g.seed);
        auto ell = spde::GridDriver(phi, so.eps).sample(TimeGrid::uniform(T, cells), rng);
        auto r = spde::synthesize_null_controller(sys, ell);
        t.comment("contraction T||F||_Lip = " + fmt(r.contraction) + ", fitted slope = " + fmt(r.fitted_slope) +
                  ", log contraction = " + fmt(std::log(r.contraction)));
        t.comment("|Phi_T| = " + fmt(r.phi_terminal.norm()) + ", |x| = " + fmt(sys.x0.norm()) + ", |Y_T| = " +
                  fmt(r.y_terminal.norm()) + ", ||F||_inf T = " + fmt(r.y_bound));
        t.comment("iterations = " + std::to_string(r.iterations) + (r.converged ? ", converged" : ", cap reached"));
        t.columns({"iteration", "sup_diff"});
        for (std::size_t i = 0; i < r.history.size(); ++i) t.row(i + 1, r.history[i]);
      };
    });
  }
  {
    auto* c = spde_cmd->add_subcommand("galerkin", "truncation error against a reference dimension");
    so.attach(c, false);
    c->add_option("--nref", nref)->capture_default_str();
    c->add_option("--n", n_list, "truncation dimensions")->delimiter(',')->capture_default_str();
    c->add_option("--T", T)->capture_default_str();
    c->add_option("--delta", delta, "exceedance level")->capture_default_str();
    c->callback([&] {
      action = [&](Table& t) {
        for (long m : n_list)
          if (m >= nref || m < 1) throw PreconditionRefusal("truncation must be < reference (n = " + std::to_string(m) +
                                                             ", nref = " + std::to_string(nref) + ")");
        std::vector<Eigen::Index> ns(n_list.begin(), n_list.end());
        auto levels = spde::galerkin_error(so.system(nref), ns, BernsteinFunction::parse(so.phi), T, so.paths, g.seed,
                                           delta, so.scan(g.threads));
        t.columns({"n", "statistic", "se", "exceed_prob", "wilson_lo", "wilson_hi"});
        for (const auto& L : levels)
          t.row(static_cast<long>(L.n), L.sup_sq.mean, L.sup_sq.std_error, L.exceed_prob.mean, L.wilson99.lo,
                L.wilson99.hi);
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    if (rc == 0) return 0;
    std::cerr << app.help();
    return 64;
  }

  const auto start = std::chrono::steady_clock::now();
  Table table;
  const std::string command = command_path(app);
  table.comment(std::string("levyint ") + levyint::version());
  table.comment("command: " + command);
  table.comment("seed = " + std::to_string(g.seed));
  const auto config = resolved_config(app);
  for (const auto& [k, v] : config)
    if (k != "seed") table.comment(k + " = " + v);

  int status = 0;
  std::string error;
  try {
    action(table);
  } catch (const PreconditionRefusal& e) {
    status = 2;
    error = e.what();
  } catch (const std::exception& e) {
    status = 1;
    error = e.what();
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (status != 0) std::cerr << "levyint: " << (status == 2 ? "refused: " : "error: ") << error << '\n';

  if (status == 0) {
    if (g.out.empty()) {
      std::cout << table.str();
    } else {
      std::ofstream os(g.out, std::ios::binary);
      os << table.str();
      if (!os) {
        std::cerr << "levyint: error: cannot write " << g.out << '\n';
        return 1;
      }
    }
  }
  std::string manifest = g.manifest;
  if (manifest.empty() && !g.out.empty()) manifest = g.out + ".json";
  if (!manifest.empty()) {
    nlohmann::ordered_json m;
    m["tool"] = "levyint";
    m["version"] = levyint::version();
    m["command"] = command;
    m["seed"] = g.seed;
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : config) cfg[k] = v;
    m["config"] = cfg;
    m["output"] = g.out.empty() ? "stdout" : g.out;
    m["exit_status"] = status;
    if (!error.empty()) m["message"] = error;
    m["wall_time_seconds"] = wall;
    std::ofstream(manifest) << m.dump(2) << '\n';
  }
  return status;
}
