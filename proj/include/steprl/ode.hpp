#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "steprl/errors.hpp"

namespace steprl::ode {

inline constexpr int kStages = 7;

// Explicit embedded 5(4) pair, 7 stages, first-same-as-last: the b row equals
// the last stage row, so an accepted step's final stage seeds the next step.
struct ButcherTableau {
  std::array<double, kStages> c;
  std::array<std::array<double, kStages>, kStages> a;  // strictly lower triangular
  std::array<double, kStages> b5;                      // 5th-order weights
  std::array<double, kStages> b4;                      // embedded 4th-order weights
};

const ButcherTableau& dp54();

using Rhs = std::function<void(double t, const double* x, double* dxdt)>;

struct RkStepResult {
  std::vector<double> x5;  // 5th-order solution at t + h
  std::vector<double> x4;  // embedded 4th-order solution
  std::vector<std::vector<double>> stages;
  int evaluations = 0;
};

// One explicit step. If k1 is provided it is reused (first-same-as-last) and
// not recounted. Throws usage_error for h <= 0 or empty state.
RkStepResult rk_step(const Rhs& f, double t, const std::vector<double>& x, double h,
                     const ButcherTableau& tab = dp54(), const double* k1 = nullptr);

// Controller norm: scaled root-mean-square of the embedded difference,
// component i scaled by atol + rtol * max(|x_i|, |x_next_i|). Accept iff <= 1.
double error_norm(const std::vector<double>& x5, const std::vector<double>& x4,
                  const std::vector<double>& x, double atol, double rtol);

// Plain root-mean-square distance between two states; the norm used when
// comparing a step against a reference solution.
double rms_diff(const std::vector<double>& a, const std::vector<double>& b);

struct StepLogRow {
  double t = 0.0;
  double h = 0.0;
  bool accepted = false;
  double error_estimate = 0.0;  // controller norm of the attempt
  long long cumulative_evals = 0;
};

struct AdaptiveConfig {
  double atol = 1e-6;
  double rtol = 1e-6;
  double h_init = 0.0;  // 0 -> span / 100, clamped by h_max
  double h_min = 0.0;   // 0 -> 1e-14 * span
  double h_max = std::numeric_limits<double>::infinity();
  double safety = 0.9;
  double fac_min = 0.2;
  double fac_max = 10.0;
  bool fsal = true;      // reuse the last stage of an accepted step
  bool keep_log = false;
  long long max_steps = 50'000'000;
};

struct AdaptiveResult {
  std::vector<double> t;
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> dx;  // rhs at each accepted node
  long long evaluations = 0;
  long long accepted = 0;
  long long rejected = 0;
  std::vector<StepLogRow> log;
};

// Integrates from t0 to t1 with the step-size controller
// h_new = h * min(fac_max, max(fac_min, safety * err^(-1/5))).
// Throws numeric_error if the state goes non-finite or h underflows h_min.
AdaptiveResult rk45_adaptive(const Rhs& f, const std::vector<double>& x0, double t0, double t1,
                             const AdaptiveConfig& cfg = {}, const ButcherTableau& tab = dp54());

}  // namespace steprl::ode
