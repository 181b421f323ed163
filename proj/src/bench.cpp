#include "steprl/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "steprl/quad.hpp"

namespace steprl::bench {

namespace {

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string format_step(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw usage_error(message);
}

std::ofstream open_output(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw usage_error("cannot open output file: " + path);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  if (n <= 0) return;
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> stop{false};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
        stop.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

std::vector<problems::SampledFunction> draw_functions(const problems::FunctionClassSpec& spec,
                                                      int count, RngStream& rng) {
  require(count >= 0, "draw_functions: count must be non-negative");
  std::vector<problems::SampledFunction> fns;
  fns.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) fns.push_back(problems::sample_function(spec, rng));
  return fns;
}

std::vector<std::vector<double>> draw_initial_states(int count, int dim, double lo, double hi,
                                                     RngStream& rng) {
  require(count >= 0, "draw_initial_states: count must be non-negative");
  require(dim >= 1, "draw_initial_states: dim must be positive");
  require(lo < hi, "draw_initial_states: lo must be below hi");
  std::vector<std::vector<double>> states(static_cast<std::size_t>(count));
  for (auto& x : states) {
    x.resize(static_cast<std::size_t>(dim));
    for (auto& c : x) c = rng.uniform(lo, hi);
  }
  return states;
}

// ---------------------------------------------------------------------------
// Quadrature rows
// ---------------------------------------------------------------------------

namespace {

struct QuadSlot {
  double eps_sum = 0.0;
  long long steps = 0;
  long long evals = 0;
  StepHistogram hist;
};

MethodRow reduce_quad(const std::string& label, const std::vector<QuadSlot>& slots,
                      StepHistogram* histogram) {
  MethodRow row;
  row.label = label;
  double eps_sum = 0.0;
  long long steps = 0;
  long long evals = 0;
  for (const auto& s : slots) {
    eps_sum += s.eps_sum;
    steps += s.steps;
    evals += s.evals;
    if (histogram != nullptr) {
      for (const auto& [h, c] : s.hist) (*histogram)[h] += c;
    }
  }
  row.steps = steps;
  row.avg_error_per_step = steps > 0 ? eps_sum / static_cast<double>(steps) : 0.0;
  row.avg_evaluations =
      slots.empty() ? 0.0 : static_cast<double>(evals) / static_cast<double>(slots.size());
  row.avg_evaluations_no_fsal = row.avg_evaluations;
  return row;
}

}  // namespace

MethodRow bench_quad_learner(const rl::BaseLearner& learner,
                             const std::vector<problems::SampledFunction>& fns, int threads,
                             StepHistogram* histogram) {
  require(learner.problem_kind == "quadrature",
          "quadrature benchmark needs a quadrature controller checkpoint");
  require(!fns.empty(), "quadrature benchmark needs a non-empty function sample");
  std::vector<QuadSlot> slots(fns.size());
  parallel_for(static_cast<int>(fns.size()), threads, [&](int i) {
    rl::QuadratureEnvConfig cfg;
    cfg.function_class = problems::FunctionClassSpec::make(fns[static_cast<std::size_t>(i)].cls);
    cfg.actions = learner.actions;
    cfg.reward = learner.reward_cfg;
    cfg.memory_m = learner.memory_m;
    rl::QuadratureEnv env(cfg);
    env.reset_with(fns[static_cast<std::size_t>(i)]);
    const rl::RolloutResult r =
        rl::rollout_from_current(env, learner, /*keep_trace=*/histogram != nullptr);
    QuadSlot& s = slots[static_cast<std::size_t>(i)];
    s.eps_sum = r.avg_error * static_cast<double>(r.steps);
    s.steps = r.steps;
    s.evals = r.evaluations;
    for (const auto& tr : r.trace) {
      s.hist[learner.actions.step_sizes[static_cast<std::size_t>(tr.action)]] += 1;
    }
  });
  return reduce_quad("learner-m" + std::to_string(learner.memory_m), slots, histogram);
}

MethodRow bench_quad_simpson(const std::vector<problems::SampledFunction>& fns,
                             double node_spacing, int threads) {
  require(node_spacing > 0.0, "equidistant sweep needs a positive node spacing");
  require(!fns.empty(), "quadrature benchmark needs a non-empty function sample");
  std::vector<QuadSlot> slots(fns.size());
  parallel_for(static_cast<int>(fns.size()), threads, [&](int i) {
    const auto& f = fns[static_cast<std::size_t>(i)];
    QuadSlot& s = slots[static_cast<std::size_t>(i)];
    const double a = f.domain_a;
    const double b = f.domain_b;
    const double len = b - a;
    const double panel = 2.0 * node_spacing;

    // Panel edges; tiling matches the composite rule: full panels of width
    // 2 * spacing plus one shortened final panel for any remainder.
    std::vector<double> edges{a};
    if (node_spacing >= len) {
      edges.push_back(b);
    } else {
      long long n_full = static_cast<long long>(std::floor(len / panel * (1.0 + 1e-12)));
      double remainder = len - static_cast<double>(n_full) * panel;
      if (remainder <= 1e-12 * len) remainder = 0.0;
      for (long long k = 1; k <= n_full; ++k) {
        edges.push_back((k == n_full && remainder == 0.0) ? b
                                                          : a + static_cast<double>(k) * panel);
      }
      if (remainder > 0.0) edges.push_back(b);
    }

    s.evals = 1;
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
      const double left = edges[k];
      const double right = edges[k + 1];
      const double mid = left + 0.5 * (right - left);
      const double est = ((right - left) / 6.0) * (f(left) + 4.0 * f(mid) + f(right));
      s.eps_sum += std::abs(est - f.exact_integral(left, right));
      s.steps += 1;
      s.evals += 2;
    }
  });
  return reduce_quad("simpson-h" + format_step(node_spacing), slots, nullptr);
}

MethodRow bench_quad_subdivision(const std::vector<problems::SampledFunction>& fns, int max_evals,
                                 int threads) {
  require(max_evals >= 5, "subdivision sweep needs a budget of at least 5 evaluations");
  require(!fns.empty(), "quadrature benchmark needs a non-empty function sample");
  std::vector<QuadSlot> slots(fns.size());
  parallel_for(static_cast<int>(fns.size()), threads, [&](int i) {
    const auto& f = fns[static_cast<std::size_t>(i)];
    QuadSlot& s = slots[static_cast<std::size_t>(i)];
    const quad::SubdivisionResult res =
        quad::subdivide([&f](double x) { return f(x); }, f.domain_a, f.domain_b, max_evals);
    for (const auto& iv : res.intervals) {
      s.eps_sum += std::abs(iv.fine - f.exact_integral(iv.a, iv.b));
      s.steps += 1;
    }
    s.evals = res.evaluations;
  });
  return reduce_quad("subdivide-e" + std::to_string(max_evals), slots, nullptr);
}

// ---------------------------------------------------------------------------
// ODE rows
// ---------------------------------------------------------------------------

namespace {

struct OdeSlot {
  double eps_sum = 0.0;
  long long steps = 0;
  long long evals = 0;
  double no_fsal_evals = 0.0;
  long long rejected = 0;
  double span = 0.0;
  StepHistogram hist;
};

std::vector<std::vector<double>> resolve_initial_states(const OdeRunSpec& spec) {
  std::vector<std::vector<double>> ics =
      spec.initial_states.empty() ? std::vector<std::vector<double>>{spec.system.x0}
                                  : spec.initial_states;
  for (const auto& x : ics) {
    require(static_cast<int>(x.size()) == spec.system.dim,
            "initial state dimension does not match the system");
  }
  require(spec.t1 > spec.t0, "time span must be increasing");
  return ics;
}

MethodRow reduce_ode(const std::string& label, const std::vector<OdeSlot>& slots,
                     StepHistogram* histogram) {
  MethodRow row;
  row.label = label;
  double eps_sum = 0.0;
  double span = 0.0;
  double no_fsal = 0.0;
  long long steps = 0;
  long long evals = 0;
  long long rejected = 0;
  for (const auto& s : slots) {
    eps_sum += s.eps_sum;
    steps += s.steps;
    evals += s.evals;
    no_fsal += s.no_fsal_evals;
    rejected += s.rejected;
    span += s.span;
    if (histogram != nullptr) {
      for (const auto& [h, c] : s.hist) (*histogram)[h] += c;
    }
  }
  row.steps = steps;
  row.avg_error_per_step = steps > 0 ? eps_sum / static_cast<double>(steps) : 0.0;
  row.avg_evaluations = span > 0.0 ? static_cast<double>(evals) / span : 0.0;
  row.avg_evaluations_no_fsal = span > 0.0 ? no_fsal / span : 0.0;
  row.rejected_steps =
      slots.empty() ? 0.0 : static_cast<double>(rejected) / static_cast<double>(slots.size());
  return row;
}

}  // namespace

MethodRow bench_ode_learner(const rl::BaseLearner& learner, const OdeRunSpec& spec, int threads,
                            StepHistogram* histogram) {
  require(learner.problem_kind == "ode", "ODE benchmark needs an ODE controller checkpoint");
  const auto ics = resolve_initial_states(spec);
  const bool single_mode = spec.system.num_modes() == 1;
  std::vector<OdeSlot> slots(ics.size());
  parallel_for(static_cast<int>(ics.size()), threads, [&](int i) {
    rl::OdeEnvConfig cfg;
    cfg.system = spec.system;
    cfg.actions = learner.actions;
    cfg.reward = learner.reward_cfg;
    cfg.memory_m = learner.memory_m;
    cfg.t0 = spec.t0;
    cfg.t1 = spec.t1;
    rl::OdeEnv env(cfg);
    env.reset_from(spec.t0, ics[static_cast<std::size_t>(i)]);
    const rl::RolloutResult r =
        rl::rollout_from_current(env, learner, /*keep_trace=*/histogram != nullptr);
    OdeSlot& s = slots[static_cast<std::size_t>(i)];
    s.eps_sum = r.avg_error * static_cast<double>(r.steps);
    s.steps = r.steps;
    s.evals = r.evaluations;
    // The first stage is reused across steps on single-mode systems, saving
    // one evaluation per executed step.
    s.no_fsal_evals = static_cast<double>(r.evaluations + (single_mode ? r.steps : 0));
    s.span = r.final_position - spec.t0;
    for (const auto& tr : r.trace) {
      s.hist[learner.actions.step_sizes[static_cast<std::size_t>(tr.action)]] += 1;
    }
  });
  return reduce_ode("learner-m" + std::to_string(learner.memory_m), slots, histogram);
}

MethodRow bench_ode_rk45(const OdeRunSpec& spec, double tol, int threads,
                         const ode::AdaptiveConfig& base_cfg) {
  require(tol > 0.0, "embedded controller tolerance must be positive");
  const auto ics = resolve_initial_states(spec);
  const bool multi_mode = spec.system.num_modes() > 1;
  std::vector<OdeSlot> slots(ics.size());
  parallel_for(static_cast<int>(ics.size()), threads, [&](int i) {
    ode::AdaptiveConfig cfg = base_cfg;
    cfg.atol = tol;
    cfg.rtol = tol;
    cfg.keep_log = false;

    const auto make_rhs = [&](problems::SwitchingRhs& sw) -> ode::Rhs {
      if (multi_mode) return sw.as_rhs();
      const problems::OdeSystem& sys = spec.system;
      return [&sys](double t, const double* x, double* out) {
        problems::eval_rhs(sys, t, x, 1, 0.0, out);
      };
    };

    cfg.fsal = true;
    problems::SwitchingRhs sw(spec.system, problems::HybridState{});
    const ode::AdaptiveResult res = ode::rk45_adaptive(
        make_rhs(sw), ics[static_cast<std::size_t>(i)], spec.t0, spec.t1, cfg);

    // Per-step local error with the same restarted-reference metric the
    // learners use; the hybrid bookkeeping follows the method's own nodes.
    OdeSlot& s = slots[static_cast<std::size_t>(i)];
    problems::HybridState hs{};
    for (std::size_t k = 0; k + 1 < res.t.size(); ++k) {
      const double h = res.t[k + 1] - res.t[k];
      const std::vector<double> ref =
          problems::oracle_step(spec.system, res.t[k], res.x[k], h, hs);
      s.eps_sum += ode::rms_diff(res.x[k + 1], ref);
      s.steps += 1;
    }
    s.evals = res.evaluations;
    s.rejected = res.rejected;
    s.span = res.t.back() - spec.t0;

    // Alternative count with the first stage recomputed every step; the
    // trajectory is identical, only the bookkeeping differs.
    cfg.fsal = false;
    problems::SwitchingRhs sw2(spec.system, problems::HybridState{});
    const ode::AdaptiveResult res2 = ode::rk45_adaptive(
        make_rhs(sw2), ics[static_cast<std::size_t>(i)], spec.t0, spec.t1, cfg);
    s.no_fsal_evals = static_cast<double>(res2.evaluations);
  });
  return reduce_ode("rk45-tol" + format_step(tol), slots, nullptr);
}

MetaBenchResult bench_ode_meta(const meta::MetaLearner& ml, rl::OdeEnvConfig base_cfg) {
  const double t0 = base_cfg.t0;
  const bool single_mode = base_cfg.system.num_modes() == 1;
  meta::MetaEnv env(std::move(base_cfg), ml.pool);
  RngStream rng(0);
  MetaBenchResult out;
  out.run = meta::integrate_with_meta(env, ml, rng);
  const rl::RolloutResult& r = out.run.base;
  out.row.label = "meta";
  out.row.avg_error_per_step = r.avg_error;
  out.row.avg_evaluations = r.evals_per_unit;
  out.row.steps = r.steps;
  out.row.rejected_steps = 0.0;
  const double span = r.final_position - t0;
  out.row.avg_evaluations_no_fsal =
      span > 0.0 ? static_cast<double>(r.evaluations + (single_mode ? r.steps : 0)) / span
                 : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_pareto_csv(const std::vector<MethodRow>& rows, const std::string& path) {
  std::ofstream out = open_output(path);
  out << "label,avg_error_per_step,avg_evaluations,rejected_steps,steps,avg_evaluations_no_fsal\n";
  for (const auto& r : rows) {
    out << r.label << ',' << format_real(r.avg_error_per_step) << ','
        << format_real(r.avg_evaluations) << ',' << format_real(r.rejected_steps) << ','
        << r.steps << ',' << format_real(r.avg_evaluations_no_fsal) << '\n';
  }
}

void write_histogram_csv(const std::vector<std::pair<std::string, StepHistogram>>& hists,
                         const std::string& path) {
  std::ofstream out = open_output(path);
  out << "label,step,count\n";
  for (const auto& [label, hist] : hists) {
    for (const auto& [h, c] : hist) {
      out << label << ',' << format_step(h) << ',' << c << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

namespace {

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

struct AxisScale {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;

  double clampable(double v) const { return log ? std::log10(v) : v; }
  bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
};

std::vector<double> axis_ticks(const AxisScale& ax) {
  std::vector<double> ticks;
  if (ax.log) {
    const int lo = static_cast<int>(std::ceil(ax.lo - 1e-9));
    const int hi = static_cast<int>(std::floor(ax.hi + 1e-9));
    int stride = 1;
    while ((hi - lo) / stride + 1 > 8) ++stride;
    for (int e = lo; e <= hi; e += stride) ticks.push_back(static_cast<double>(e));
    if (ticks.empty()) ticks = {ax.lo, ax.hi};
  } else {
    const int n = 5;
    for (int k = 0; k <= n; ++k) {
      ticks.push_back(ax.lo + (ax.hi - ax.lo) * static_cast<double>(k) / n);
    }
  }
  return ticks;
}

std::string tick_label(double t, bool log_axis) {
  char buf[48];
  if (log_axis) {
    std::snprintf(buf, sizeof(buf), "1e%d", static_cast<int>(std::lround(t)));
  } else {
    std::snprintf(buf, sizeof(buf), "%.3g", t);
  }
  return buf;
}

}  // namespace

void write_line_svg(const std::vector<PlotSeries>& series, const PlotOptions& options,
                    const std::string& path) {
  AxisScale xs{0.0, 1.0, options.log_x};
  AxisScale ys{0.0, 1.0, options.log_y};
  bool any = false;
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  for (const auto& s : series) {
    for (const auto& [px, py] : s.points) {
      if (!xs.usable(px) || !ys.usable(py)) continue;
      const double tx = xs.clampable(px);
      const double ty = ys.clampable(py);
      if (!any) {
        x_lo = x_hi = tx;
        y_lo = y_hi = ty;
        any = true;
      } else {
        x_lo = std::min(x_lo, tx);
        x_hi = std::max(x_hi, tx);
        y_lo = std::min(y_lo, ty);
        y_hi = std::max(y_hi, ty);
      }
    }
  }
  if (!any) {
    x_lo = y_lo = 0.0;
    x_hi = y_hi = 1.0;
  }
  const auto widen = [](double& lo, double& hi) {
    if (hi - lo < 1e-12) {
      const double pad = std::max(0.5, std::abs(lo) * 0.05);
      lo -= pad;
      hi += pad;
    } else {
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
  };
  widen(x_lo, x_hi);
  widen(y_lo, y_hi);
  xs.lo = x_lo;
  xs.hi = x_hi;
  ys.lo = y_lo;
  ys.hi = y_hi;

  const double left = 70.0, right = static_cast<double>(options.width) - 20.0;
  const double top = 34.0, bottom = static_cast<double>(options.height) - 50.0;
  const auto x_pix = [&](double v) {
    return left + (xs.clampable(v) - xs.lo) / (xs.hi - xs.lo) * (right - left);
  };
  const auto y_pix = [&](double v) {
    return bottom - (ys.clampable(v) - ys.lo) / (ys.hi - ys.lo) * (bottom - top);
  };

  std::ofstream out = open_output(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << options.width << "\" height=\""
      << options.height << "\" viewBox=\"0 0 " << options.width << ' ' << options.height
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << (left + right) / 2.0
      << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << escape_xml(options.title) << "</text>\n";

  // Grid + ticks.
  out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (const double t : axis_ticks(xs)) {
    const double px = left + (t - xs.lo) / (xs.hi - xs.lo) * (right - left);
    out << "<line x1=\"" << px << "\" y1=\"" << top << "\" x2=\"" << px << "\" y2=\"" << bottom
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << px << "\" y=\"" << bottom + 16 << "\" text-anchor=\"middle\">"
        << tick_label(t, xs.log) << "</text>\n";
  }
  for (const double t : axis_ticks(ys)) {
    const double py = bottom - (t - ys.lo) / (ys.hi - ys.lo) * (bottom - top);
    out << "<line x1=\"" << left << "\" y1=\"" << py << "\" x2=\"" << right << "\" y2=\"" << py
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">"
        << tick_label(t, ys.log) << "</text>\n";
  }
  out << "</g>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left
      << "\" height=\"" << bottom - top << "\" fill=\"none\" stroke=\"#333\"/>\n";
  out << "<text x=\"" << (left + right) / 2.0 << "\" y=\"" << options.height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << escape_xml(options.x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << (top + bottom) / 2.0
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\""
      << "rotate(-90 16 " << (top + bottom) / 2.0 << ")\">" << escape_xml(options.y_label)
      << "</text>\n";

  // Series.
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::ostringstream poly;
    for (const auto& [px, py] : s.points) {
      if (!xs.usable(px) || !ys.usable(py)) continue;
      poly << x_pix(px) << ',' << y_pix(py) << ' ';
      out << "<circle cx=\"" << x_pix(px) << "\" cy=\"" << y_pix(py) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
    }
    if (s.line) {
      out << "<polyline points=\"" << poly.str() << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\"/>\n";
    }
  }

  // Legend.
  out << "<g font-family=\"sans-serif\" font-size=\"12\">\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    const double ly = top + 14.0 + 16.0 * static_cast<double>(si);
    out << "<line x1=\"" << right - 150 << "\" y1=\"" << ly - 4 << "\" x2=\"" << right - 130
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << right - 124 << "\" y=\"" << ly << "\">" << escape_xml(series[si].label)
        << "</text>\n";
  }
  out << "</g>\n</svg>\n";
}

}  // namespace steprl::bench
