#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "steprl/meta.hpp"
#include "steprl/optweights.hpp"

namespace steprl::bench {

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

// Runs body(0), ..., body(n-1) across up to `threads` workers. Work items must
// be independent (each writes only its own output slot), which keeps results
// identical for every thread count. The first exception thrown by a worker is
// rethrown in the calling thread after all workers join.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

// ---------------------------------------------------------------------------
// Method rows (one per benchmark table line)
// ---------------------------------------------------------------------------

struct MethodRow {
  std::string label;
  double avg_error_per_step = 0.0;
  // Quadrature: mean evaluations per function. ODE: evaluations per time unit.
  double avg_evaluations = 0.0;
  double rejected_steps = 0.0;  // mean per run; zero for fixed-step methods
  long long steps = 0;          // total steps / panels / intervals in the sample
  // ODE only: the evaluation count if the first stage were never reused
  // across steps (equals avg_evaluations for every other method).
  double avg_evaluations_no_fsal = 0.0;
};

// Greedy step-size choice counts, keyed by the executed step size.
using StepHistogram = std::map<double, long long>;

// ---------------------------------------------------------------------------
// Quadrature benchmark
// ---------------------------------------------------------------------------

// One common sample reused by every method row for variance reduction.
std::vector<problems::SampledFunction> draw_functions(const problems::FunctionClassSpec& spec,
                                                      int count, RngStream& rng);

// Greedy rollouts of a trained controller over each function; the histogram
// (optional) collects its step-size choices across the whole sample.
MethodRow bench_quad_learner(const rl::BaseLearner& learner,
                             const std::vector<problems::SampledFunction>& fns, int threads = 1,
                             StepHistogram* histogram = nullptr);

// Equidistant three-point panels with node spacing `node_spacing` (each panel
// spans two spacings, matching the controller's step geometry); the error per
// step is the panel-rule error against the closed-form panel integral.
MethodRow bench_quad_simpson(const std::vector<problems::SampledFunction>& fns,
                             double node_spacing, int threads = 1);

// Greedy interval subdivision under an evaluation budget; the error per step
// is each final interval's fine-estimate error against the closed form.
MethodRow bench_quad_subdivision(const std::vector<problems::SampledFunction>& fns, int max_evals,
                                 int threads = 1);

// ---------------------------------------------------------------------------
// ODE benchmark
// ---------------------------------------------------------------------------

struct OdeRunSpec {
  problems::OdeSystem system;
  double t0 = 0.0;
  double t1 = 200.0;
  // Empty means one run from the system's own initial condition.
  std::vector<std::vector<double>> initial_states;
};

// Draws `count` initial conditions componentwise-uniform in [lo, hi]^dim.
std::vector<std::vector<double>> draw_initial_states(int count, int dim, double lo, double hi,
                                                     RngStream& rng);

// Greedy rollouts of a trained step controller (no rejection mechanism).
MethodRow bench_ode_learner(const rl::BaseLearner& learner, const OdeRunSpec& spec,
                            int threads = 1, StepHistogram* histogram = nullptr);

// Classical embedded 5(4) controller at atol = rtol = tol. Reports the mean
// per-step local error (restarted-reference metric, same as the learners),
// plus both evaluation counts (with and without first-stage reuse).
MethodRow bench_ode_rk45(const OdeRunSpec& spec, double tol, int threads = 1,
                         const ode::AdaptiveConfig& base_cfg = {});

// Dispatched integration; single run from the system's initial condition.
struct MetaBenchResult {
  MethodRow row;
  meta::MetaRolloutResult run;  // trace + dispatch log of the run
};
MetaBenchResult bench_ode_meta(const meta::MetaLearner& ml, rl::OdeEnvConfig base_cfg);

// ---------------------------------------------------------------------------
// CSV / SVG emission
// ---------------------------------------------------------------------------

void write_pareto_csv(const std::vector<MethodRow>& rows, const std::string& path);
void write_histogram_csv(const std::vector<std::pair<std::string, StepHistogram>>& hists,
                         const std::string& path);

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y)
  bool line = true;                               // polyline vs markers only
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  int width = 760;
  int height = 520;
};

// Minimal self-contained SVG line plot (axes, ticks, legend, series).
void write_line_svg(const std::vector<PlotSeries>& series, const PlotOptions& options,
                    const std::string& path);

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

// Subcommands: train-quad, train-ode, train-meta, bench-quad, bench-ode,
// weights, trace. Settings come from an optional JSON config file (--config
// path) with one-to-one flag overrides (--field value); the fully resolved
// config is echoed to <out_dir>/config.json. The default out_dir is taken
// from $STEPRL_OUT_DIR when set.
//
// Exit codes: 0 success, 2 usage error, 3 convergence cap hit, 4 numeric
// failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace steprl::bench
