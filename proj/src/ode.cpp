#include "steprl/ode.hpp"

#include <algorithm>
#include <cmath>

namespace steprl::ode {

const ButcherTableau& dp54() {
  static const ButcherTableau tab = [] {
    ButcherTableau t{};
    t.c = {0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};
    t.a = {};
    t.a[1][0] = 1.0 / 5.0;
    t.a[2][0] = 3.0 / 40.0;
    t.a[2][1] = 9.0 / 40.0;
    t.a[3][0] = 44.0 / 45.0;
    t.a[3][1] = -56.0 / 15.0;
    t.a[3][2] = 32.0 / 9.0;
    t.a[4][0] = 19372.0 / 6561.0;
    t.a[4][1] = -25360.0 / 2187.0;
    t.a[4][2] = 64448.0 / 6561.0;
    t.a[4][3] = -212.0 / 729.0;
    t.a[5][0] = 9017.0 / 3168.0;
    t.a[5][1] = -355.0 / 33.0;
    t.a[5][2] = 46732.0 / 5247.0;
    t.a[5][3] = 49.0 / 176.0;
    t.a[5][4] = -5103.0 / 18656.0;
    t.a[6][0] = 35.0 / 384.0;
    t.a[6][1] = 0.0;
    t.a[6][2] = 500.0 / 1113.0;
    t.a[6][3] = 125.0 / 192.0;
    t.a[6][4] = -2187.0 / 6784.0;
    t.a[6][5] = 11.0 / 84.0;
    t.b5 = {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0};
    t.b4 = {5179.0 / 57600.0, 0.0,           7571.0 / 16695.0, 393.0 / 640.0,
            -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0};
    return t;
  }();
  return tab;
}

RkStepResult rk_step(const Rhs& f, double t, const std::vector<double>& x, double h,
                     const ButcherTableau& tab, const double* k1) {
  if (x.empty()) throw usage_error("rk_step needs a non-empty state");
  if (!(h > 0.0) || !std::isfinite(h)) throw usage_error("rk_step needs h > 0");

  const std::size_t n = x.size();
  RkStepResult res;
  res.stages.assign(kStages, std::vector<double>(n, 0.0));
  std::vector<double> work(n);

  if (k1 != nullptr) {
    std::copy(k1, k1 + n, res.stages[0].begin());
  } else {
    f(t, x.data(), res.stages[0].data());
    ++res.evaluations;
  }

  for (int s = 1; s < kStages; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < s; ++j) acc += tab.a[s][j] * res.stages[j][i];
      work[i] = x[i] + h * acc;
    }
    f(t + tab.c[s] * h, work.data(), res.stages[s].data());
    ++res.evaluations;
  }

  res.x5.resize(n);
  res.x4.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc5 = 0.0, acc4 = 0.0;
    for (int s = 0; s < kStages; ++s) {
      acc5 += tab.b5[s] * res.stages[s][i];
      acc4 += tab.b4[s] * res.stages[s][i];
    }
    res.x5[i] = x[i] + h * acc5;
    res.x4[i] = x[i] + h * acc4;
  }
  return res;
}

double error_norm(const std::vector<double>& x5, const std::vector<double>& x4,
                  const std::vector<double>& x, double atol, double rtol) {
  double acc = 0.0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double scale = atol + rtol * std::max(std::fabs(x[i]), std::fabs(x5[i]));
    const double e = (x5[i] - x4[i]) / scale;
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(n));
}

double rms_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw usage_error("rms_diff needs equal-length states");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

AdaptiveResult rk45_adaptive(const Rhs& f, const std::vector<double>& x0, double t0, double t1,
                             const AdaptiveConfig& cfg, const ButcherTableau& tab) {
  if (!(t1 > t0)) throw usage_error("rk45_adaptive needs t1 > t0");
  if (x0.empty()) throw usage_error("rk45_adaptive needs a non-empty state");

  const double span = t1 - t0;
  const double h_min = cfg.h_min > 0.0 ? cfg.h_min : 1e-14 * span;
  double h = cfg.h_init > 0.0 ? cfg.h_init : span / 100.0;
  h = std::min(h, cfg.h_max);

  AdaptiveResult res;
  const std::size_t n = x0.size();
  std::vector<double> x = x0;
  std::vector<double> dx0(n);
  f(t0, x.data(), dx0.data());
  ++res.evaluations;
  res.t.push_back(t0);
  res.x.push_back(x);
  res.dx.push_back(dx0);

  double t = t0;
  std::vector<double> k1 = dx0;  // valid rhs at (t, x)
  bool k1_valid = true;

  long long attempts = 0;
  while (t < t1 - 1e-14 * span) {
    if (++attempts > cfg.max_steps) throw numeric_error("rk45_adaptive exceeded max step attempts");
    h = std::min(h, cfg.h_max);
    bool clipped = false;
    double h_try = h;
    if (t + h_try > t1) {
      h_try = t1 - t;
      clipped = true;
    }
    if (h_try < h_min) throw numeric_error("rk45_adaptive step size underflow");

    RkStepResult step = (cfg.fsal && k1_valid)
                            ? rk_step(f, t, x, h_try, tab, k1.data())
                            : rk_step(f, t, x, h_try, tab, nullptr);
    res.evaluations += step.evaluations;

    for (double v : step.x5) {
      if (!std::isfinite(v)) throw numeric_error("rk45_adaptive produced a non-finite state");
    }

    const double err = error_norm(step.x5, step.x4, x, cfg.atol, cfg.rtol);
    const bool accept = err <= 1.0;
    if (cfg.keep_log) {
      res.log.push_back({t, h_try, accept, err, res.evaluations});
    }

    const double factor =
        err == 0.0 ? cfg.fac_max
                   : std::min(cfg.fac_max, std::max(cfg.fac_min, cfg.safety * std::pow(err, -0.2)));

    if (accept) {
      t = clipped ? t1 : t + h_try;  // land on t1 exactly, no rounding residue
      x = step.x5;
      res.t.push_back(t);
      res.x.push_back(x);
      res.dx.push_back(step.stages.back());  // b row equals the last stage row
      k1 = step.stages.back();
      k1_valid = true;
      ++res.accepted;
      if (!clipped) h = h_try * factor;
    } else {
      ++res.rejected;
      h = h_try * factor;
      // k1 still matches (t, x); reuse on retry.
    }
  }
  return res;
}

}  // namespace steprl::ode
