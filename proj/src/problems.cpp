#include "steprl/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "steprl/quad.hpp"

namespace steprl::problems {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Ascending-power polynomial evaluation.
double horner(std::span<const double> coeffs, double x) {
  double acc = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * x + coeffs[i];
  return acc;
}

double poly_antiderivative(std::span<const double> coeffs, double x) {
  double acc = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 0;) {
    acc = acc * x + coeffs[i] / static_cast<double>(i + 1);
  }
  return acc * x;
}

// Integral of c * sin(w x + p) over [a, b], stable for w near zero.
double sine_term_integral(double c, double w, double p, double a, double b) {
  const double half = 0.5 * w * (a - b);
  double s_over_w;  // sin(w (a - b) / 2) / w
  if (std::fabs(w) < 1e-8) {
    const double u = 0.5 * (a - b);
    s_over_w = u * (1.0 - (half * half) / 6.0);
  } else {
    s_over_w = std::sin(half) / w;
  }
  return -2.0 * c * std::sin(0.5 * w * (a + b) + p) * s_over_w;
}

}  // namespace

FunctionClassSpec FunctionClassSpec::make(FunctionClass cls) {
  FunctionClassSpec spec;
  spec.cls = cls;
  switch (cls) {
    case FunctionClass::SuperposedSines5:
    case FunctionClass::SingleSine:
      spec.domain_a = 0.0;
      spec.domain_b = 20.0;
      break;
    case FunctionClass::BrokenPoly5:
      spec.domain_a = -1.0;
      spec.domain_b = 1.0;
      break;
    case FunctionClass::PolyDegN:
    case FunctionClass::DampedOscillatorVelocity:
      spec.domain_a = 0.0;
      spec.domain_b = 1.0;
      break;
  }
  return spec;
}

// Parameter layouts:
//   SingleSine                [c, w, p]
//   SuperposedSines5          [c1..c5, w1..w5, p1..p5]
//   BrokenPoly5 / PolyDegN    ascending coefficients
//   DampedOscillatorVelocity  [A, w, p, D]
double SampledFunction::operator()(double x) const {
  switch (cls) {
    case FunctionClass::SingleSine:
      return params[0] * std::sin(params[1] * x + params[2]);
    case FunctionClass::SuperposedSines5: {
      double acc = 0.0;
      for (int i = 0; i < 5; ++i) acc += params[i] * std::sin(params[5 + i] * x + params[10 + i]);
      return acc;
    }
    case FunctionClass::BrokenPoly5:
      if (x > break_point) return 0.0;
      return horner(params, x);
    case FunctionClass::PolyDegN:
      return horner(params, x);
    case FunctionClass::DampedOscillatorVelocity: {
      const double A = params[0], w = params[1], p = params[2], D = params[3];
      return -A * std::exp(-D * x) * (D * std::sin(w * x + p) - w * std::cos(w * x + p));
    }
  }
  throw usage_error("unknown function class");
}

double SampledFunction::exact_integral(double a, double b) const {
  switch (cls) {
    case FunctionClass::SingleSine:
      return sine_term_integral(params[0], params[1], params[2], a, b);
    case FunctionClass::SuperposedSines5: {
      double acc = 0.0;
      for (int i = 0; i < 5; ++i) {
        acc += sine_term_integral(params[i], params[5 + i], params[10 + i], a, b);
      }
      return acc;
    }
    case FunctionClass::BrokenPoly5: {
      const double hi = std::min(b, break_point);
      if (hi <= a) return 0.0;
      return poly_antiderivative(params, hi) - poly_antiderivative(params, a);
    }
    case FunctionClass::PolyDegN:
      return poly_antiderivative(params, b) - poly_antiderivative(params, a);
    case FunctionClass::DampedOscillatorVelocity: {
      const double A = params[0], w = params[1], p = params[2], D = params[3];
      const auto s = [&](double t) { return A * std::sin(w * t + p) * std::exp(-D * t); };
      return s(b) - s(a);
    }
  }
  throw usage_error("unknown function class");
}

std::optional<double> locate_break(std::span<const double> coeffs, double a, double b) {
  if (!(a < b)) throw usage_error("locate_break needs a < b");
  if (coeffs.size() < 2) return std::nullopt;  // constant polynomial, derivative 0

  std::vector<double> dcoef(coeffs.size() - 1);
  for (std::size_t i = 1; i < coeffs.size(); ++i) {
    dcoef[i - 1] = coeffs[i] * static_cast<double>(i);
  }
  const auto g = [&](double x) { return horner(dcoef, x) - 1.0; };

  constexpr int kScan = 4096;
  const double step = (b - a) / kScan;
  double xl = a;
  double gl = g(xl);
  if (gl == 0.0) return xl;
  for (int i = 1; i <= kScan; ++i) {
    const double xr = (i == kScan) ? b : a + step * i;
    const double gr = g(xr);
    if (gr == 0.0) return xr;
    if ((gl < 0.0) != (gr < 0.0)) {
      double lo = xl, hi = xr;
      for (int it = 0; it < 200 && (hi - lo) > 1e-16 * std::max(1.0, std::fabs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (gm == 0.0) return mid;
        if ((gm < 0.0) == (gl < 0.0)) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
    xl = xr;
    gl = gr;
  }
  return std::nullopt;
}

SampledFunction sample_function(const FunctionClassSpec& spec, RngStream& rng) {
  SampledFunction f;
  f.cls = spec.cls;
  f.domain_a = spec.domain_a;
  f.domain_b = spec.domain_b;
  switch (spec.cls) {
    case FunctionClass::SingleSine:
      f.params = {rng.uniform01(), rng.uniform(0.0, kTwoPi), rng.uniform(0.0, kTwoPi)};
      return f;
    case FunctionClass::SuperposedSines5: {
      f.params.resize(15);
      for (int i = 0; i < 5; ++i) f.params[i] = rng.uniform01();
      for (int i = 0; i < 5; ++i) f.params[5 + i] = rng.uniform(0.0, kTwoPi);
      for (int i = 0; i < 5; ++i) f.params[10 + i] = rng.uniform(0.0, kTwoPi);
      return f;
    }
    case FunctionClass::BrokenPoly5: {
      for (int attempt = 0; attempt < 10000; ++attempt) {
        f.params.resize(6);
        for (double& c : f.params) c = rng.uniform(-1.0, 1.0);
        const auto brk = locate_break(f.params, spec.domain_a, spec.domain_b);
        if (brk) {
          f.break_point = *brk;
          return f;
        }
      }
      throw numeric_error("BrokenPoly5 sampling found no derivative-1 break in 10000 draws");
    }
    case FunctionClass::PolyDegN: {
      if (spec.degree < 0) throw usage_error("PolyDegN needs degree >= 0");
      f.params.resize(spec.degree + 1);
      for (double& c : f.params) {
        c = spec.coeff_dist == CoeffDist::Normal ? rng.normal() : rng.uniform(-1.0, 1.0);
      }
      return f;
    }
    case FunctionClass::DampedOscillatorVelocity:
      f.params = {rng.uniform01(), rng.uniform(0.0, kTwoPi), rng.uniform(0.0, kTwoPi),
                  rng.uniform01()};
      return f;
  }
  throw usage_error("unknown function class");
}

SampledFunction make_single_sine(double c, double w, double phi, double a, double b) {
  SampledFunction f;
  f.cls = FunctionClass::SingleSine;
  f.params = {c, w, phi};
  f.domain_a = a;
  f.domain_b = b;
  return f;
}

SampledFunction make_superposed_sines(std::span<const double> c, std::span<const double> w,
                                      std::span<const double> phi, double a, double b) {
  if (c.size() != 5 || w.size() != 5 || phi.size() != 5) {
    throw usage_error("make_superposed_sines needs five terms");
  }
  SampledFunction f;
  f.cls = FunctionClass::SuperposedSines5;
  f.params.assign(15, 0.0);
  std::copy(c.begin(), c.end(), f.params.begin());
  std::copy(w.begin(), w.end(), f.params.begin() + 5);
  std::copy(phi.begin(), phi.end(), f.params.begin() + 10);
  f.domain_a = a;
  f.domain_b = b;
  return f;
}

SampledFunction make_poly(std::span<const double> coeffs, double a, double b) {
  SampledFunction f;
  f.cls = FunctionClass::PolyDegN;
  f.params.assign(coeffs.begin(), coeffs.end());
  f.domain_a = a;
  f.domain_b = b;
  return f;
}

SampledFunction make_broken_poly(std::span<const double> coeffs, double a, double b) {
  SampledFunction f;
  f.cls = FunctionClass::BrokenPoly5;
  f.params.assign(coeffs.begin(), coeffs.end());
  f.domain_a = a;
  f.domain_b = b;
  const auto brk = locate_break(f.params, a, b);
  if (!brk) throw usage_error("make_broken_poly: polynomial has no derivative-1 point in domain");
  f.break_point = *brk;
  return f;
}

SampledFunction make_damped_oscillator(double A, double w, double phi, double D) {
  SampledFunction f;
  f.cls = FunctionClass::DampedOscillatorVelocity;
  f.params = {A, w, phi, D};
  f.domain_a = 0.0;
  f.domain_b = 1.0;
  return f;
}

double reference_integral(const SampledFunction& f, double a, double b, double h_ref) {
  if (!(a < b)) throw usage_error("reference_integral needs a < b");
  const double h = h_ref > 0.0 ? h_ref : (b - a) / 65536.0;
  return quad::composite_simpson([&](double x) { return f(x); }, a, b, h).integral;
}

// ---------------------------------------------------------------------------
// ODE systems
// ---------------------------------------------------------------------------

OdeSystem OdeSystem::lorenz() {
  OdeSystem sys;
  sys.id = SystemId::Lorenz;
  sys.dim = 3;
  sys.x0 = {10.0, 10.0, 10.0};
  return sys;
}

OdeSystem OdeSystem::hybrid_pendulum() {
  OdeSystem sys;
  sys.id = SystemId::HybridPendulum;
  sys.dim = 2;
  sys.x0 = {1.0, 1.0};
  return sys;
}

void eval_rhs(const OdeSystem& sys, double t, const double* x, int mode, double f2_anchor,
              double* out) {
  switch (sys.id) {
    case SystemId::Lorenz:
      if (mode != 1) throw usage_error("Lorenz has a single mode (1)");
      out[0] = sys.sigma * (x[1] - x[0]);
      out[1] = x[0] * (sys.rho - x[2]) - x[1];
      out[2] = x[0] * x[1] - sys.beta * x[2];
      return;
    case SystemId::HybridPendulum:
      if (mode == 1) {
        out[0] = sys.b * x[0] + sys.a * x[1];
        out[1] = -sys.a * x[0] + sys.b * x[1];
        return;
      }
      if (mode == 2) {
        out[0] = 0.0;
        out[1] = sys.c * (t - f2_anchor) + sys.d;
        return;
      }
      throw usage_error("HybridPendulum modes are 1 and 2");
  }
  throw usage_error("unknown system");
}

std::vector<double> eval_rhs(const OdeSystem& sys, double t, std::span<const double> x, int mode,
                             double f2_anchor) {
  if (static_cast<int>(x.size()) != sys.dim) throw usage_error("eval_rhs state dimension mismatch");
  std::vector<double> out(x.size());
  eval_rhs(sys, t, x.data(), mode, f2_anchor, out.data());
  return out;
}

void SwitchingRhs::operator()(double t, const double* x, double* out) {
  if (sys_->id == SystemId::HybridPendulum) {
    const double norm = std::sqrt(x[0] * x[0] + x[1] * x[1]);
    if (st_.mode == 1 && norm < sys_->c1) {
      st_.mode = 2;
      st_.t_anchor = t;
    } else if (st_.mode == 2 && norm > sys_->c2) {
      st_.mode = 1;
    }
  }
  eval_rhs(*sys_, t, x, st_.mode, st_.t_anchor, out);
}

ode::Rhs SwitchingRhs::as_rhs() {
  return [this](double t, const double* x, double* out) { (*this)(t, x, out); };
}

namespace {

// Threshold function for the active mode; an event fires when it goes negative.
double event_gap(const OdeSystem& sys, const HybridState& st, const std::vector<double>& x) {
  const double norm = std::sqrt(x[0] * x[0] + x[1] * x[1]);
  return st.mode == 1 ? norm - sys.c1 : sys.c2 - norm;
}

struct NodeCollector {
  std::vector<double>* t = nullptr;
  std::vector<std::vector<double>>* x = nullptr;
  std::vector<std::vector<double>>* dx = nullptr;

  void add(double tt, const std::vector<double>& xx, const std::vector<double>& dd) const {
    if (!t) return;
    if (!t->empty() && t->back() == tt && x->back() == xx && dx->back() == dd) return;
    t->push_back(tt);
    x->push_back(xx);
    dx->push_back(dd);
  }
};

// Integrates with the mode frozen; returns the accepted-node trajectory.
ode::AdaptiveResult frozen_mode_run(const OdeSystem& sys, double t0,
                                    const std::vector<double>& x0, double t1,
                                    const HybridState& st, const OracleOptions& opt) {
  ode::AdaptiveConfig cfg;
  cfg.atol = opt.tol;
  cfg.rtol = opt.tol;
  cfg.h_max = opt.h_max;
  cfg.h_init = std::min(opt.h_max, (t1 - t0) * 0.5);
  const int mode = st.mode;
  const double anchor = st.t_anchor;
  return ode::rk45_adaptive(
      [&sys, mode, anchor](double t, const double* x, double* out) {
        eval_rhs(sys, t, x, mode, anchor, out);
      },
      x0, t0, t1, cfg);
}

std::vector<double> frozen_mode_state_at(const OdeSystem& sys, double t0,
                                         const std::vector<double>& x0, double t1,
                                         const HybridState& st, const OracleOptions& opt) {
  if (t1 <= t0) return x0;
  return frozen_mode_run(sys, t0, x0, t1, st, opt).x.back();
}

}  // namespace

static OracleSegment oracle_integrate_impl(const OdeSystem& sys, double t0,
                                           std::span<const double> x0, double t1, HybridState st,
                                           const OracleOptions& opt,
                                           const NodeCollector& collect) {
  if (static_cast<int>(x0.size()) != sys.dim) {
    throw usage_error("oracle_integrate state dimension mismatch");
  }
  if (!(t1 >= t0)) throw usage_error("oracle_integrate needs t1 >= t0");

  OracleSegment seg;
  std::vector<double> x(x0.begin(), x0.end());
  double t = t0;

  if (sys.num_modes() == 1) {
    auto run = frozen_mode_run(sys, t0, x, t1, st, opt);
    for (std::size_t i = 0; i < run.t.size(); ++i) collect.add(run.t[i], run.x[i], run.dx[i]);
    seg.x_end = run.x.back();
    seg.end_state = st;
    return seg;
  }

  const double span_floor = 1e-13 * std::max(1.0, std::fabs(t1));
  while (t < t1 - span_floor) {
    // A state already past the active threshold switches immediately.
    if (event_gap(sys, st, x) < 0.0) {
      const int from = st.mode;
      st.mode = st.mode == 1 ? 2 : 1;
      if (st.mode == 2) st.t_anchor = t;
      seg.events.push_back({t, from, st.mode});
    }

    auto run = frozen_mode_run(sys, t, x, t1, st, opt);

    // First node where the gap goes negative brackets the mode switch.
    std::size_t cross = run.t.size();
    for (std::size_t i = 1; i < run.t.size(); ++i) {
      if (event_gap(sys, st, run.x[i]) < 0.0) {
        cross = i;
        break;
      }
    }

    if (cross == run.t.size()) {
      for (std::size_t i = 0; i < run.t.size(); ++i) collect.add(run.t[i], run.x[i], run.dx[i]);
      x = run.x.back();
      t = t1;
      break;
    }

    for (std::size_t i = 0; i + 1 < cross; ++i) collect.add(run.t[i], run.x[i], run.dx[i]);

    const double ta = run.t[cross - 1];
    const std::vector<double> xa = run.x[cross - 1];
    double lo = ta, hi = run.t[cross];
    while (hi - lo > opt.event_time_tol) {
      const double mid = 0.5 * (lo + hi);
      const auto x_mid = frozen_mode_state_at(sys, ta, xa, mid, st, opt);
      if (event_gap(sys, st, x_mid) < 0.0) {
        hi = mid;
      } else {
        lo = mid;
      }
    }

    const double tau = hi;
    const auto x_tau = frozen_mode_state_at(sys, ta, xa, tau, st, opt);
    // Node at the event with the outgoing-mode derivative, then switch.
    collect.add(run.t[cross - 1], run.x[cross - 1], run.dx[cross - 1]);
    collect.add(tau, x_tau, eval_rhs(sys, tau, x_tau, st.mode, st.t_anchor));

    const int from = st.mode;
    st.mode = st.mode == 1 ? 2 : 1;
    if (st.mode == 2) st.t_anchor = tau;
    seg.events.push_back({tau, from, st.mode});
    collect.add(tau, x_tau, eval_rhs(sys, tau, x_tau, st.mode, st.t_anchor));

    x = x_tau;
    t = tau;
  }

  seg.x_end = x;
  seg.end_state = st;
  return seg;
}

OracleSegment oracle_integrate(const OdeSystem& sys, double t0, std::span<const double> x0,
                               double t1, HybridState st, const OracleOptions& opt) {
  return oracle_integrate_impl(sys, t0, x0, t1, st, opt, {});
}

std::vector<double> oracle_step(const OdeSystem& sys, double t, std::span<const double> x, double h,
                                HybridState& st, std::vector<SwitchEvent>* events,
                                const OracleOptions& opt) {
  auto seg = oracle_integrate(sys, t, x, t + h, st, opt);
  st = seg.end_state;
  if (events) *events = seg.events;
  return seg.x_end;
}

std::vector<double> ReferenceSolution::eval(double at) const {
  if (t.empty()) throw usage_error("empty reference solution");
  if (at < t.front() - 1e-12 || at > t.back() + 1e-12) {
    throw usage_error("reference solution evaluated outside its range");
  }
  at = std::clamp(at, t.front(), t.back());
  auto it = std::upper_bound(t.begin(), t.end(), at);
  std::size_t hi = std::min<std::size_t>(std::distance(t.begin(), it), t.size() - 1);
  if (hi == 0) hi = 1;
  const std::size_t lo = hi - 1;
  const double dt = t[hi] - t[lo];
  if (dt <= 0.0) return x[lo];

  const double s = (at - t[lo]) / dt;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  std::vector<double> out(x[lo].size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = h00 * x[lo][i] + h10 * dt * dx[lo][i] + h01 * x[hi][i] + h11 * dt * dx[hi][i];
  }
  return out;
}

ReferenceSolution reference_trajectory(const OdeSystem& sys, double t0, double t1,
                                       const OracleOptions& opt) {
  ReferenceSolution sol;
  NodeCollector collect{&sol.t, &sol.x, &sol.dx};
  auto seg = oracle_integrate_impl(sys, t0, sys.x0, t1, HybridState{}, opt, collect);
  sol.switches = seg.events;
  return sol;
}

}  // namespace steprl::problems
