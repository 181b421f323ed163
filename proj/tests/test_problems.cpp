#include <doctest.h>

#include <cmath>
#include <vector>

#include "steprl/problems.hpp"
#include "steprl/rng.hpp"

using namespace steprl;
using namespace steprl::problems;

namespace {

// Closed-form mode-1 flow of the hybrid oscillator: exp(bt) times a rotation
// by angle a*t (matrix [[b, a], [-a, b]]).
std::vector<double> mode1_flow(const OdeSystem& sys, const std::vector<double>& x0, double t) {
  const double g = std::exp(sys.b * t);
  const double ca = std::cos(sys.a * t), sa = std::sin(sys.a * t);
  return {g * (ca * x0[0] + sa * x0[1]), g * (-sa * x0[0] + ca * x0[1])};
}

double norm2(const std::vector<double>& x) { return std::sqrt(x[0] * x[0] + x[1] * x[1]); }

}  // namespace

TEST_SUITE_BEGIN("problems");

TEST_CASE("class specs carry the documented default domains") {
  CHECK(FunctionClassSpec::make(FunctionClass::SuperposedSines5).domain_b == 20.0);
  CHECK(FunctionClassSpec::make(FunctionClass::SingleSine).domain_b == 20.0);
  CHECK(FunctionClassSpec::make(FunctionClass::BrokenPoly5).domain_a == -1.0);
  CHECK(FunctionClassSpec::make(FunctionClass::BrokenPoly5).domain_b == 1.0);
  CHECK(FunctionClassSpec::make(FunctionClass::PolyDegN).domain_b == 1.0);
  CHECK(FunctionClassSpec::make(FunctionClass::DampedOscillatorVelocity).domain_b == 1.0);
}

TEST_CASE("single sine evaluates and integrates in closed form") {
  auto f = make_single_sine(1.3, 2.0, 0.7);
  CHECK(f(0.5) == doctest::Approx(1.3 * std::sin(2.0 * 0.5 + 0.7)).epsilon(1e-15));
  const double exact = 1.3 / 2.0 * (std::cos(0.7) - std::cos(2.0 * 20.0 + 0.7));
  CHECK(f.exact_integral(0.0, 20.0) == doctest::Approx(exact).epsilon(1e-13));
  CHECK(f.exact_integral(0.0, 20.0) ==
        doctest::Approx(reference_integral(f, 0.0, 20.0)).epsilon(1e-10));
}

TEST_CASE("sine integral stays accurate as the frequency vanishes") {
  auto f = make_single_sine(1.0, 1e-10, 0.7);
  CHECK(f.exact_integral(0.0, 20.0) == doctest::Approx(20.0 * std::sin(0.7)).epsilon(1e-8));
}

TEST_CASE("superposed sines equal the sum of their terms") {
  const std::vector<double> c{0.2, 0.4, 0.6, 0.8, 1.0};
  const std::vector<double> w{1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4, 0.5};
  auto f = make_superposed_sines(c, w, p);
  double direct = 0.0;
  for (int i = 0; i < 5; ++i) direct += c[i] * std::sin(w[i] * 1.7 + p[i]);
  CHECK(f(1.7) == doctest::Approx(direct).epsilon(1e-15));
  CHECK(f.exact_integral(0.0, 20.0) ==
        doctest::Approx(reference_integral(f, 0.0, 20.0)).epsilon(1e-9));
}

TEST_CASE("polynomials use ascending coefficients with exact antiderivatives") {
  const std::vector<double> coeffs{2.0, -1.0, 3.0};  // 2 - x + 3x^2
  auto f = make_poly(coeffs);
  CHECK(f(2.0) == doctest::Approx(2.0 - 2.0 + 12.0).epsilon(1e-15));
  CHECK(f.exact_integral(0.0, 1.0) == doctest::Approx(2.0 - 0.5 + 1.0).epsilon(1e-14));
  CHECK(f.exact_integral(0.0, 1.0) ==
        doctest::Approx(reference_integral(f, 0.0, 1.0)).epsilon(1e-12));
}

TEST_CASE("locate_break finds the first derivative-one point") {
  SUBCASE("p = x^2 has p' = 1 exactly at 1/2") {
    const std::vector<double> coeffs{0.0, 0.0, 1.0};
    auto brk = locate_break(coeffs, -1.0, 1.0);
    REQUIRE(brk.has_value());
    CHECK(*brk == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("constant slope other than one has no break") {
    CHECK(!locate_break(std::vector<double>{0.0, 3.0}, -1.0, 1.0).has_value());
    CHECK(!locate_break(std::vector<double>{5.0}, -1.0, 1.0).has_value());
  }
  SUBCASE("slope exactly one everywhere breaks at the left endpoint") {
    auto brk = locate_break(std::vector<double>{2.0, 1.0}, -1.0, 1.0);
    REQUIRE(brk.has_value());
    CHECK(*brk == -1.0);
  }
  SUBCASE("earliest of several roots wins") {
    // p' = 4x^2: equals 1 at x = -1/2 and x = +1/2.
    const std::vector<double> coeffs{0.0, 0.0, 0.0, 4.0 / 3.0};
    auto brk = locate_break(coeffs, -1.0, 1.0);
    REQUIRE(brk.has_value());
    CHECK(*brk == doctest::Approx(-0.5).epsilon(1e-12));
  }
}

TEST_CASE("broken polynomial vanishes after its break and integrates piecewise") {
  const std::vector<double> coeffs{0.0, 0.0, 1.0};  // x^2, break at 0.5
  auto f = make_broken_poly(coeffs);
  CHECK(f.break_point == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(f(0.25) == doctest::Approx(0.0625).epsilon(1e-15));
  CHECK(f(0.75) == 0.0);
  // integral over [-1, 1] = integral of x^2 over [-1, 0.5] = (0.125 + 1) / 3
  CHECK(f.exact_integral(-1.0, 1.0) == doctest::Approx(1.125 / 3.0).epsilon(1e-12));
  CHECK(f.exact_integral(0.6, 1.0) == 0.0);

  // Independent check: smooth-polynomial quadrature up to the break.
  auto smooth = make_poly(coeffs, -1.0, 1.0);
  CHECK(f.exact_integral(-1.0, 1.0) ==
        doctest::Approx(reference_integral(smooth, -1.0, f.break_point)).epsilon(1e-11));
}

TEST_CASE("damped oscillator velocity integrates to the displacement difference") {
  auto f = make_damped_oscillator(1.3, 2.0, 0.7, 0.25);
  const auto s = [](double t) { return 1.3 * std::sin(2.0 * t + 0.7) * std::exp(-0.25 * t); };
  // Finite-difference sanity on the integrand being s'.
  const double fd = (s(0.4 + 5e-7) - s(0.4 - 5e-7)) / 1e-6;
  CHECK(f(0.4) == doctest::Approx(fd).epsilon(1e-6));
  CHECK(f.exact_integral(0.0, 1.0) == doctest::Approx(s(1.0) - s(0.0)).epsilon(1e-14));
  CHECK(f.exact_integral(0.0, 1.0) ==
        doctest::Approx(reference_integral(f, 0.0, 1.0)).epsilon(1e-11));
}

TEST_CASE("sampling honours the documented parameter distributions") {
  RngStream rng(1234, 0);
  auto spec = FunctionClassSpec::make(FunctionClass::SuperposedSines5);
  const int n = 20000;
  std::vector<double> c_mean(5, 0.0), w_mean(5, 0.0);
  for (int i = 0; i < n; ++i) {
    auto f = sample_function(spec, rng);
    REQUIRE(f.params.size() == 15);
    for (int j = 0; j < 5; ++j) {
      c_mean[j] += f.params[j];
      w_mean[j] += f.params[5 + j];
    }
  }
  const double pi = 3.14159265358979323846;
  for (int j = 0; j < 5; ++j) {
    CHECK(std::fabs(c_mean[j] / n - 0.5) < 0.01);
    CHECK(std::fabs(w_mean[j] / n - pi) < 0.05);
  }
}

TEST_CASE("sampled broken polynomials always carry a verified break") {
  RngStream rng(99, 1);
  auto spec = FunctionClassSpec::make(FunctionClass::BrokenPoly5);
  for (int i = 0; i < 200; ++i) {
    auto f = sample_function(spec, rng);
    REQUIRE(f.params.size() == 6);
    CHECK(f.break_point >= -1.0);
    CHECK(f.break_point <= 1.0);
    // Derivative at the break equals one.
    double dp = 0.0;
    for (int k = 5; k >= 1; --k) dp = dp * f.break_point + f.params[k] * k;
    CHECK(dp == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("sampled functions integrate consistently with quadrature") {
  RngStream rng(7, 2);
  for (FunctionClass cls : {FunctionClass::SingleSine, FunctionClass::SuperposedSines5,
                            FunctionClass::PolyDegN, FunctionClass::DampedOscillatorVelocity}) {
    auto spec = FunctionClassSpec::make(cls);
    for (int i = 0; i < 5; ++i) {
      auto f = sample_function(spec, rng);
      const double exact = f.exact_integral(spec.domain_a, spec.domain_b);
      const double ref = reference_integral(f, spec.domain_a, spec.domain_b);
      CHECK(std::fabs(exact - ref) < 1e-8);
    }
  }
}

TEST_CASE("Lorenz right-hand side matches hand-computed values") {
  auto sys = OdeSystem::lorenz();
  REQUIRE(sys.dim == 3);
  CHECK(sys.x0 == std::vector<double>{10.0, 10.0, 10.0});
  auto out = eval_rhs(sys, 0.0, std::vector<double>{10.0, 10.0, 10.0}, 1);
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[1] == doctest::Approx(170.0).epsilon(1e-15));
  CHECK(out[2] == doctest::Approx(220.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(eval_rhs(sys, 0.0, std::vector<double>{1.0, 1.0, 1.0}, 2), usage_error);
}

TEST_CASE("hybrid oscillator right-hand sides match hand-computed values") {
  auto sys = OdeSystem::hybrid_pendulum();
  REQUIRE(sys.dim == 2);
  auto f1 = eval_rhs(sys, 0.0, std::vector<double>{1.0, 1.0}, 1);
  CHECK(f1[0] == doctest::Approx(1.8).epsilon(1e-15));   // b + a
  CHECK(f1[1] == doctest::Approx(-2.2).epsilon(1e-15));  // -a + b
  auto f2_start = eval_rhs(sys, 3.0, std::vector<double>{0.0, 0.0}, 2, 3.0);
  CHECK(f2_start[0] == 0.0);
  CHECK(f2_start[1] == doctest::Approx(1.0).epsilon(1e-15));
  auto f2_later = eval_rhs(sys, 5.0, std::vector<double>{0.0, 0.0}, 2, 3.0);
  CHECK(f2_later[1] == doctest::Approx(11.0).epsilon(1e-15));
  CHECK_THROWS_AS(eval_rhs(sys, 0.0, std::vector<double>{1.0, 1.0}, 3), usage_error);
}

TEST_CASE("switching wrapper flips modes at the thresholds") {
  auto sys = OdeSystem::hybrid_pendulum();
  SwitchingRhs rhs(sys, HybridState{});
  std::vector<double> out(2);

  // Above the lower threshold: stays in mode 1.
  const double x_hi[2] = {1.0, 0.0};
  rhs(0.0, x_hi, out.data());
  CHECK(rhs.state().mode == 1);

  // Below the lower threshold: flips to mode 2 and anchors the ramp.
  const double x_lo[2] = {0.04, 0.0};
  rhs(2.5, x_lo, out.data());
  CHECK(rhs.state().mode == 2);
  CHECK(rhs.state().t_anchor == 2.5);
  CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-15));  // ramp starts at d

  // Back above the upper threshold: returns to mode 1.
  const double x_big[2] = {0.04, 3.5};
  rhs(3.0, x_big, out.data());
  CHECK(rhs.state().mode == 1);
}

TEST_CASE("mode-1 oracle integration matches the closed-form spiral") {
  auto sys = OdeSystem::hybrid_pendulum();
  const std::vector<double> x0{1.0, 1.0};
  auto seg = oracle_integrate(sys, 0.0, x0, 5.0);
  auto exact = mode1_flow(sys, x0, 5.0);
  CHECK(seg.events.empty());
  CHECK(seg.end_state.mode == 1);
  CHECK(std::fabs(seg.x_end[0] - exact[0]) < 1e-7);
  CHECK(std::fabs(seg.x_end[1] - exact[1]) < 1e-7);
}

TEST_CASE("the first mode switch happens where the spiral hits the lower threshold") {
  auto sys = OdeSystem::hybrid_pendulum();
  // |x(t)| = exp(b t) |x0|, so |x| = c1 at t = ln(|x0| / c1) / |b|.
  const double t_switch = std::log(std::sqrt(2.0) / sys.c1) / (-sys.b);
  auto sol = reference_trajectory(sys, 0.0, 17.0);
  REQUIRE(sol.switches.size() == 1);
  CHECK(sol.switches[0].from_mode == 1);
  CHECK(sol.switches[0].to_mode == 2);
  CHECK(std::fabs(sol.switches[0].t - t_switch) < 1e-6);
}

TEST_CASE("oracle_step crosses a switch and freezes the first component") {
  auto sys = OdeSystem::hybrid_pendulum();
  const double t_switch = std::log(std::sqrt(2.0) / sys.c1) / (-sys.b);
  const double t_start = t_switch - 0.1;
  const auto x_start = mode1_flow(sys, {1.0, 1.0}, t_start);

  HybridState st;
  std::vector<SwitchEvent> events;
  auto x_end = oracle_step(sys, t_start, x_start, 0.25, st, &events);
  REQUIRE(events.size() == 1);
  CHECK(std::fabs(events[0].t - t_switch) < 1e-7);
  CHECK(st.mode == 2);
  CHECK(st.t_anchor == doctest::Approx(events[0].t));
  // Mode 2 leaves the first component untouched.
  const auto x_at_switch = mode1_flow(sys, {1.0, 1.0}, events[0].t);
  CHECK(std::fabs(x_end[0] - x_at_switch[0]) < 1e-7);
  CHECK(norm2(x_at_switch) == doctest::Approx(sys.c1).epsilon(1e-6));
}

TEST_CASE("pure ramp segments integrate exactly") {
  auto sys = OdeSystem::hybrid_pendulum();
  HybridState st{2, 0.0};
  auto seg = oracle_integrate(sys, 0.0, std::vector<double>{0.03, 0.04}, 0.5, st);
  CHECK(seg.events.empty());
  CHECK(seg.x_end[0] == doctest::Approx(0.03).epsilon(1e-12));
  // x2(t) = x2(0) + c t^2 / 2 + d t
  CHECK(seg.x_end[1] == doctest::Approx(0.04 + 5.0 * 0.125 + 0.5).epsilon(1e-10));
}

TEST_CASE("the full horizon shows the alternating switch pattern") {
  auto sys = OdeSystem::hybrid_pendulum();
  auto sol = reference_trajectory(sys, 0.0, 40.0);
  REQUIRE(sol.switches.size() == 4);
  CHECK(sol.switches[0].from_mode == 1);
  CHECK(sol.switches[1].from_mode == 2);
  CHECK(sol.switches[2].from_mode == 1);
  CHECK(sol.switches[3].from_mode == 2);

  // Every switch sits on its threshold.
  for (const auto& sw : sol.switches) {
    const double target = sw.from_mode == 1 ? sys.c1 : sys.c2;
    CHECK(norm2(sol.eval(sw.t)) == doctest::Approx(target).epsilon(1e-5));
  }

  // A full decay from |x| = c2 down to c1 lasts ln(c2 / c1) / |b|.
  const double decay = std::log(sys.c2 / sys.c1) / (-sys.b);
  CHECK(std::fabs((sol.switches[2].t - sol.switches[1].t) - decay) < 1e-5);
}

TEST_CASE("dense reference evaluation matches the closed form between nodes") {
  auto sys = OdeSystem::hybrid_pendulum();
  auto sol = reference_trajectory(sys, 0.0, 10.0);
  for (double t : {0.013, 1.37, 4.99, 7.123, 9.999}) {
    auto xi = sol.eval(t);
    auto exact = mode1_flow(sys, {1.0, 1.0}, t);
    CHECK(std::fabs(xi[0] - exact[0]) < 1e-6);
    CHECK(std::fabs(xi[1] - exact[1]) < 1e-6);
  }
  CHECK_THROWS_AS(sol.eval(10.5), usage_error);
  CHECK_THROWS_AS(sol.eval(-0.5), usage_error);
}

TEST_CASE("Lorenz reference trajectory is reproducible and switch-free") {
  auto sys = OdeSystem::lorenz();
  OracleOptions opt;
  opt.tol = 1e-10;
  auto sol = reference_trajectory(sys, 0.0, 1.0, opt);
  CHECK(sol.switches.empty());
  CHECK(sol.t.front() == 0.0);
  CHECK(sol.t.back() == 1.0);
  // Two runs agree bit for bit (pure deterministic arithmetic).
  auto sol2 = reference_trajectory(sys, 0.0, 1.0, opt);
  CHECK(sol.x.back() == sol2.x.back());
}

TEST_SUITE_END();
