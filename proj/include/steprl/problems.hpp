#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "steprl/errors.hpp"
#include "steprl/ode.hpp"
#include "steprl/rng.hpp"

namespace steprl::problems {

// ---------------------------------------------------------------------------
// Random integrand families
// ---------------------------------------------------------------------------

enum class FunctionClass {
  SuperposedSines5,          // sum of five c*sin(w*x + p), c ~ U[0,1], w,p ~ U[0,2pi]
  SingleSine,                // one such term
  BrokenPoly5,               // degree-5 poly, U[-1,1] coefficients, zero after the break
  PolyDegN,                  // degree-N poly, iid coefficients
  DampedOscillatorVelocity,  // velocity of a damped oscillation on [0,1]
};

enum class CoeffDist { Normal, Uniform };  // PolyDegN: N(0,1) or U[-1,1]

struct FunctionClassSpec {
  FunctionClass cls = FunctionClass::SuperposedSines5;
  double domain_a = 0.0;
  double domain_b = 20.0;
  int degree = 5;                           // PolyDegN only
  CoeffDist coeff_dist = CoeffDist::Normal; // PolyDegN only

  // Per-class default domains: sines [0,20], BrokenPoly5 [-1,1],
  // PolyDegN and the oscillator [0,1].
  static FunctionClassSpec make(FunctionClass cls);
};

struct SampledFunction {
  FunctionClass cls = FunctionClass::SingleSine;
  std::vector<double> params;  // layout documented per class in problems.cpp
  double break_point = std::numeric_limits<double>::infinity();
  double domain_a = 0.0;
  double domain_b = 1.0;

  double operator()(double x) const;

  // Closed-form integral over [a, b]; every class here provides one.
  double exact_integral(double a, double b) const;
};

// Draws one function. BrokenPoly5 redraws until the derivative condition
// p'(x) = 1 has a root in the domain; gives up with numeric_error after a cap.
SampledFunction sample_function(const FunctionClassSpec& spec, RngStream& rng);

// First x in [a, b] where the polynomial derivative equals exactly 1, found by
// sign-change scan plus bisection. Coefficients are ascending powers.
std::optional<double> locate_break(std::span<const double> coeffs, double a, double b);

// Explicit constructors used by tests and benchmarks.
SampledFunction make_single_sine(double c, double w, double phi, double a = 0.0, double b = 20.0);
SampledFunction make_superposed_sines(std::span<const double> c, std::span<const double> w,
                                      std::span<const double> phi, double a = 0.0, double b = 20.0);
SampledFunction make_poly(std::span<const double> coeffs, double a = 0.0, double b = 1.0);
SampledFunction make_broken_poly(std::span<const double> coeffs, double a = -1.0, double b = 1.0);
SampledFunction make_damped_oscillator(double A, double w, double phi, double D);

// Composite Simpson ground truth with node spacing h_ref; the default spacing
// is (b - a) / 2^16, fine enough that the oracle error is negligible next to
// every tolerance used here.
double reference_integral(const SampledFunction& f, double a, double b, double h_ref = 0.0);

// ---------------------------------------------------------------------------
// ODE systems
// ---------------------------------------------------------------------------

enum class SystemId { Lorenz, HybridPendulum };

struct OdeSystem {
  SystemId id = SystemId::Lorenz;
  int dim = 3;
  std::vector<double> x0;

  // Lorenz parameters.
  double sigma = 10.0, beta = 8.0 / 3.0, rho = 28.0;

  // Hybrid oscillator parameters: mode 1 is the damped rotation
  // [[b, a], [-a, b]] x, mode 2 the ramp (0, c*(t - t_anchor) + d).
  // Mode 1 -> 2 when |x| drops below c1; mode 2 -> 1 when |x| exceeds c2.
  double a = 2.0, b = -0.2, c = 5.0, d = 1.0, c1 = 0.05, c2 = 3.3;

  static OdeSystem lorenz();
  static OdeSystem hybrid_pendulum();
  int num_modes() const { return id == SystemId::HybridPendulum ? 2 : 1; }
};

// Pure per-mode right-hand side. f2_anchor is the time mode 2 became active
// (only the hybrid ramp reads it). Throws usage_error on invalid mode.
void eval_rhs(const OdeSystem& sys, double t, const double* x, int mode, double f2_anchor,
              double* out);
std::vector<double> eval_rhs(const OdeSystem& sys, double t, std::span<const double> x, int mode,
                             double f2_anchor = 0.0);

struct HybridState {
  int mode = 1;
  double t_anchor = 0.0;  // time mode 2 became active
};

struct SwitchEvent {
  double t = 0.0;
  int from_mode = 1;
  int to_mode = 1;
};

// Stateful wrapper used by the steppers themselves: flips the mode as soon as
// a *trial* state crosses the active threshold. This mimics integrating a
// switching system without event handling and is what makes a classical
// controller reject steps that straddle a switch.
class SwitchingRhs {
 public:
  SwitchingRhs(const OdeSystem& sys, HybridState st) : sys_(&sys), st_(st) {}

  void operator()(double t, const double* x, double* out);
  const HybridState& state() const { return st_; }
  ode::Rhs as_rhs();  // shares this object's mode state

 private:
  const OdeSystem* sys_;
  HybridState st_;
};

struct OracleOptions {
  double tol = 1e-10;        // atol = rtol of the reference integrator
  double h_max = 0.05;       // keeps Hermite interpolation error below the tol scale
  double event_time_tol = 1e-10;
};

struct OracleSegment {
  std::vector<double> x_end;
  HybridState end_state;
  std::vector<SwitchEvent> events;
};

// High-accuracy integration of the true hybrid semantics from (t0, x0) to t1:
// the mode is frozen between events and events are located by bisection on
// |x(t)| - threshold to event_time_tol in time.
OracleSegment oracle_integrate(const OdeSystem& sys, double t0, std::span<const double> x0,
                               double t1, HybridState st = {}, const OracleOptions& opt = {});

// One-step restart oracle: exact state at t + h starting from (t, x); advances
// the hybrid bookkeeping and reports any switches inside the step.
std::vector<double> oracle_step(const OdeSystem& sys, double t, std::span<const double> x, double h,
                                HybridState& st, std::vector<SwitchEvent>* events = nullptr,
                                const OracleOptions& opt = {});

// Dense reference trajectory from the system's own initial condition: cubic
// Hermite interpolation between accepted nodes plus the switch-time list.
struct ReferenceSolution {
  std::vector<double> t;
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> dx;
  std::vector<SwitchEvent> switches;

  std::vector<double> eval(double at) const;
};

ReferenceSolution reference_trajectory(const OdeSystem& sys, double t0, double t1,
                                       const OracleOptions& opt = {});

}  // namespace steprl::problems
