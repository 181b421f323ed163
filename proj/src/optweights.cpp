#include "steprl/optweights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace steprl::optweights {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string format_node(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

// Least-squares weights by column-pivoted QR. Throws when the design matrix
// does not have full column rank, naming the nodes whose columns the
// factorization found to be linearly dependent on the pivoted ones.
Eigen::VectorXd solve_weights(const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                              const std::vector<double>& nodes) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(F);
  const auto rank = qr.rank();
  if (rank < F.cols()) {
    const auto& perm = qr.colsPermutation().indices();
    std::ostringstream os;
    os << "fit: design matrix has rank " << rank << " of " << F.cols()
       << "; node columns {";
    for (Eigen::Index i = rank; i < F.cols(); ++i) {
      if (i > rank) os << ", ";
      os << format_node(nodes[static_cast<std::size_t>(perm[i])]);
    }
    os << "} are linearly dependent on the others";
    throw numeric_error(os.str());
  }
  return qr.solve(y);
}

struct ErrorEstimate {
  double eps = 0.0;
  double eps_abs = 0.0;
  double eps_se = 0.0;
};

ErrorEstimate residual_errors(const Eigen::MatrixXd& F, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& w) {
  const Eigen::VectorXd r = F * w - y;
  const double n = static_cast<double>(r.size());
  ErrorEstimate e;
  const double m2 = r.squaredNorm() / n;
  e.eps = std::sqrt(m2);
  e.eps_abs = r.lpNorm<1>() / n;
  const double m4 = r.array().square().square().sum() / n;
  const double var_m2 = std::max(0.0, m4 - m2 * m2);
  if (e.eps > 0.0) e.eps_se = std::sqrt(var_m2 / n) / (2.0 * e.eps);
  return e;
}

void check_interval(double a, double b) {
  if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) {
    throw usage_error("interval endpoints must be finite with a < b");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

Sampler poly_sampler(int degree, CoeffLaw law, double scale) {
  if (degree < 0) throw usage_error("polynomial sampler: degree must be non-negative");
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw usage_error("polynomial sampler: scale must be positive");
  }
  return [degree, law, scale](RngStream& rng) {
    std::vector<double> coeffs(static_cast<std::size_t>(degree) + 1);
    for (auto& c : coeffs) {
      c = scale * (law == CoeffLaw::Normal ? rng.normal() : rng.uniform(-1.0, 1.0));
    }
    return problems::make_poly(coeffs);
  };
}

Sampler oscillator_velocity_sampler() {
  return [](RngStream& rng) {
    const double A = rng.uniform(0.0, 1.0);
    const double w = rng.uniform(0.0, kTwoPi);
    const double phi = rng.uniform(0.0, kTwoPi);
    const double D = rng.uniform(0.0, 1.0);
    return problems::make_damped_oscillator(A, w, phi, D);
  };
}

Sampler random_sine_sampler(double w_lo, double w_hi) {
  if (!(w_lo < w_hi) || !std::isfinite(w_lo) || !std::isfinite(w_hi)) {
    throw usage_error("sine sampler: frequency range must be finite with w_lo < w_hi");
  }
  return [w_lo, w_hi](RngStream& rng) {
    const double w = rng.uniform(w_lo, w_hi);
    const double phi = rng.uniform(0.0, kTwoPi);
    return problems::make_single_sine(1.0, w, phi, 0.0, 1.0);
  };
}

// ---------------------------------------------------------------------------
// Data collection
// ---------------------------------------------------------------------------

BasisEvaluations collect_evaluations(const Sampler& sampler, const std::vector<double>& nodes,
                                     int samples, double a, double b, RngStream& rng) {
  check_interval(a, b);
  if (nodes.empty()) throw usage_error("collect: at least one node is required");
  for (double x : nodes) {
    if (!std::isfinite(x) || x < a || x > b) {
      throw usage_error("collect: node " + format_node(x) + " lies outside the interval");
    }
  }
  if (samples < static_cast<int>(nodes.size())) {
    throw usage_error("collect: need at least as many samples as nodes");
  }
  BasisEvaluations data;
  data.nodes = nodes;
  data.domain_a = a;
  data.domain_b = b;
  data.F.resize(samples, static_cast<Eigen::Index>(nodes.size()));
  data.targets.resize(samples);
  for (int j = 0; j < samples; ++j) {
    const problems::SampledFunction f = sampler(rng);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      data.F(j, static_cast<Eigen::Index>(i)) = f(nodes[i]);
    }
    data.targets(j) = f.exact_integral(a, b);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

OptimalRule fit_weights(const BasisEvaluations& data, const FitOptions& options) {
  const Eigen::Index rows = data.F.rows();
  const Eigen::Index cols = data.F.cols();
  if (rows == 0 || cols == 0) throw usage_error("fit: empty design matrix");
  if (data.targets.size() != rows) throw usage_error("fit: target count must match row count");
  if (static_cast<Eigen::Index>(data.nodes.size()) != cols) {
    throw usage_error("fit: node count must match column count");
  }
  if (!(options.holdout_fraction >= 0.0) || options.holdout_fraction >= 1.0) {
    throw usage_error("fit: holdout fraction must lie in [0, 1)");
  }
  Eigen::Index held = static_cast<Eigen::Index>(
      std::llround(options.holdout_fraction * static_cast<double>(rows)));
  if (options.holdout_fraction > 0.0 && held == 0) held = 1;
  const Eigen::Index train = rows - held;
  if (train < cols) {
    throw usage_error("fit: need at least as many fitting rows as nodes");
  }

  const Eigen::VectorXd w =
      solve_weights(data.F.topRows(train), data.targets.head(train), data.nodes);

  OptimalRule rule;
  rule.nodes = data.nodes;
  rule.weights.assign(w.data(), w.data() + w.size());
  rule.sample_count = static_cast<long long>(train);
  rule.holdout = held > 0;
  rule.domain_a = data.domain_a;
  rule.domain_b = data.domain_b;
  const ErrorEstimate e =
      held > 0 ? residual_errors(data.F.bottomRows(held), data.targets.tail(held), w)
               : residual_errors(data.F.topRows(train), data.targets.head(train), w);
  rule.eps = e.eps;
  rule.eps_abs = e.eps_abs;
  return rule;
}

Eigen::VectorXd gram_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  if (A.rows() == 0 || A.rows() != A.cols()) {
    throw usage_error("gram solve: matrix must be square and nonempty");
  }
  if (b.size() != A.rows()) throw usage_error("gram solve: vector length must match");
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw usage_error("gram solve: matrix must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) {
    throw numeric_error("gram solve: matrix is not positive definite");
  }
  return llt.solve(b);
}

// ---------------------------------------------------------------------------
// Single-node closed forms
// ---------------------------------------------------------------------------

OneNodeResult one_node_analytic(double x1) {
  if (!(x1 >= 0.0) || !(x1 <= 1.0)) {
    throw usage_error("one-node formulas are stated for x1 in [0, 1]");
  }
  const double num = x1 * x1 / 3.0 + x1 / 2.0 + 1.0;
  const double den = x1 * x1 * x1 * x1 + x1 * x1 + 1.0;
  OneNodeResult r;
  r.omega = num / den;
  r.eps_sq = 49.0 / 36.0 - num * num / den;
  return r;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

GridSearchResult node_grid_search(const Sampler& sampler, int n_nodes, double a, double b,
                                  const GridSearchOptions& options, RngStream& rng) {
  check_interval(a, b);
  if (n_nodes != 1 && n_nodes != 2) {
    throw usage_error("grid search supports one or two nodes");
  }
  const int res = options.resolution > 0 ? options.resolution : (n_nodes == 1 ? 500 : 50);
  if (res < 2) throw usage_error("grid search: resolution must be at least 2");
  if (options.samples_per_cell < n_nodes) {
    throw usage_error("grid search: need at least as many samples per cell as nodes");
  }

  const auto grid_point = [&](int i) {
    return a + (b - a) * static_cast<double>(i) / static_cast<double>(res - 1);
  };

  GridSearchResult result;
  result.resolution = res;
  result.best_eps = std::numeric_limits<double>::infinity();
  const int cell_count = n_nodes == 1 ? res : res * res;
  result.cells.reserve(static_cast<std::size_t>(cell_count));

  for (int c = 0; c < cell_count; ++c) {
    GridCell cell;
    if (n_nodes == 1) {
      cell.nodes = {grid_point(c)};
    } else {
      cell.nodes = {grid_point(c / res), grid_point(c % res)};
    }
    const bool coincident = n_nodes == 2 && cell.nodes[0] == cell.nodes[1];
    if (coincident) {
      cell.skipped = true;
      cell.eps = std::numeric_limits<double>::quiet_NaN();
      cell.eps_se = std::numeric_limits<double>::quiet_NaN();
      ++result.skipped_count;
      result.cells.push_back(std::move(cell));
      continue;
    }
    // Fresh draws for every cell; a degenerate fit flags the cell instead of
    // aborting the sweep.
    const BasisEvaluations data =
        collect_evaluations(sampler, cell.nodes, options.samples_per_cell, a, b, rng);
    try {
      const Eigen::VectorXd w = solve_weights(data.F, data.targets, data.nodes);
      const ErrorEstimate e = residual_errors(data.F, data.targets, w);
      cell.eps = e.eps;
      cell.eps_se = e.eps_se;
    } catch (const numeric_error&) {
      cell.skipped = true;
      cell.eps = std::numeric_limits<double>::quiet_NaN();
      cell.eps_se = std::numeric_limits<double>::quiet_NaN();
      ++result.skipped_count;
      result.cells.push_back(std::move(cell));
      continue;
    }
    if (cell.eps < result.best_eps) {
      result.best_eps = cell.eps;
      result.best_nodes = cell.nodes;
    }
    result.cells.push_back(std::move(cell));
  }
  if (result.best_nodes.empty()) {
    throw numeric_error("grid search: every cell was degenerate");
  }
  return result;
}

void write_surface_csv(const GridSearchResult& result, const std::string& path) {
  if (result.cells.empty()) throw usage_error("surface csv: empty result");
  std::ofstream out(path);
  if (!out) throw usage_error("surface csv: cannot open '" + path + "'");
  const std::size_t n = result.cells.front().nodes.size();
  out << std::setprecision(17);
  for (std::size_t i = 0; i < n; ++i) out << "x" << (i + 1) << ",";
  out << "eps,eps_se,skipped\n";
  for (const auto& cell : result.cells) {
    for (double x : cell.nodes) out << x << ",";
    out << cell.eps << "," << cell.eps_se << "," << (cell.skipped ? 1 : 0) << "\n";
  }
  if (!out.good()) throw usage_error("surface csv: write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Simplex node search
// ---------------------------------------------------------------------------

namespace {

// Objective shared by all iterations: refit on one common set of sampled
// functions so the landscape is deterministic.
class CommonSampleObjective {
 public:
  CommonSampleObjective(std::vector<problems::SampledFunction> fns, double a, double b)
      : fns_(std::move(fns)), a_(a), b_(b) {
    targets_.resize(static_cast<Eigen::Index>(fns_.size()));
    for (std::size_t j = 0; j < fns_.size(); ++j) {
      targets_(static_cast<Eigen::Index>(j)) = fns_[j].exact_integral(a_, b_);
    }
  }

  double eps(const std::vector<double>& nodes) const {
    const double span = b_ - a_;
    for (double x : nodes) {
      if (!(x >= a_) || !(x <= b_)) return std::numeric_limits<double>::infinity();
    }
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::size_t j = i + 1; j < nodes.size(); ++j) {
        if (std::abs(nodes[i] - nodes[j]) < 1e-6 * span) {
          return std::numeric_limits<double>::infinity();
        }
      }
    }
    Eigen::MatrixXd F(targets_.size(), static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t j = 0; j < fns_.size(); ++j) {
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        F(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = fns_[j](nodes[i]);
      }
    }
    try {
      const Eigen::VectorXd w = solve_weights(F, targets_, nodes);
      return residual_errors(F, targets_, w).eps;
    } catch (const numeric_error&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  // Full refit at the final nodes for the reported rule.
  OptimalRule rule_at(const std::vector<double>& nodes) const {
    BasisEvaluations data;
    data.nodes = nodes;
    data.domain_a = a_;
    data.domain_b = b_;
    data.F.resize(targets_.size(), static_cast<Eigen::Index>(nodes.size()));
    for (std::size_t j = 0; j < fns_.size(); ++j) {
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        data.F(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = fns_[j](nodes[i]);
      }
    }
    data.targets = targets_;
    return fit_weights(data);
  }

 private:
  std::vector<problems::SampledFunction> fns_;
  Eigen::VectorXd targets_;
  double a_, b_;
};

}  // namespace

NodeOptimizeResult node_optimize(const Sampler& sampler, const std::vector<double>& initial_nodes,
                                 double a, double b, const NodeOptimizeOptions& options,
                                 RngStream& rng) {
  check_interval(a, b);
  const std::size_t n = initial_nodes.size();
  if (n == 0) throw usage_error("node search: at least one initial node is required");
  for (double x : initial_nodes) {
    if (!(x > a) || !(x < b)) {
      throw usage_error("node search: initial nodes must lie strictly inside the interval");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (initial_nodes[i] == initial_nodes[j]) {
        throw usage_error("node search: initial nodes must be pairwise distinct");
      }
    }
  }
  if (options.samples_per_eval < static_cast<int>(n)) {
    throw usage_error("node search: need at least as many samples as nodes");
  }
  if (options.max_iterations < 1) throw usage_error("node search: iteration cap must be positive");

  std::vector<problems::SampledFunction> fns;
  fns.reserve(static_cast<std::size_t>(options.samples_per_eval));
  for (int j = 0; j < options.samples_per_eval; ++j) fns.push_back(sampler(rng));
  const CommonSampleObjective objective(std::move(fns), a, b);

  const double span = b - a;
  using Vertex = std::pair<std::vector<double>, double>;  // nodes, objective
  std::vector<Vertex> simplex;
  simplex.reserve(n + 1);
  simplex.emplace_back(initial_nodes, objective.eps(initial_nodes));
  const double step = 0.1 * span;
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> p = initial_nodes;
    p[k] = p[k] + step < b ? p[k] + step : p[k] - step;
    simplex.emplace_back(std::move(p), 0.0);
    simplex.back().second = objective.eps(simplex.back().first);
  }

  const auto by_value = [](const Vertex& u, const Vertex& v) { return u.second < v.second; };
  NodeOptimizeResult result;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    std::sort(simplex.begin(), simplex.end(), by_value);
    const double f_best = simplex.front().second;
    const double f_worst = simplex.back().second;
    double diameter = 0.0;
    for (const auto& v : simplex) {
      for (std::size_t k = 0; k < n; ++k) {
        diameter = std::max(diameter, std::abs(v.first[k] - simplex.front().first[k]));
      }
    }
    const bool f_tight =
        std::isfinite(f_worst) &&
        f_worst - f_best <= options.ftol_rel * std::max(std::abs(f_best), 1e-12) + 1e-14;
    if (f_tight || diameter <= options.xtol * span) {
      result.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t v = 0; v + 1 < simplex.size(); ++v) {
      for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[v].first[k];
    }
    for (double& c : centroid) c /= static_cast<double>(n);

    const auto blend = [&](double coef) {
      std::vector<double> p(n);
      for (std::size_t k = 0; k < n; ++k) {
        p[k] = centroid[k] + coef * (centroid[k] - simplex.back().first[k]);
      }
      return p;
    };

    std::vector<double> xr = blend(1.0);
    const double fr = objective.eps(xr);
    if (fr < simplex.front().second) {
      std::vector<double> xe = blend(2.0);
      const double fe = objective.eps(xe);
      if (fe < fr) {
        simplex.back() = {std::move(xe), fe};
      } else {
        simplex.back() = {std::move(xr), fr};
      }
      continue;
    }
    if (fr < simplex[simplex.size() - 2].second) {
      simplex.back() = {std::move(xr), fr};
      continue;
    }
    const bool outside = fr < simplex.back().second;
    std::vector<double> xc = blend(outside ? 0.5 : -0.5);
    const double fc = objective.eps(xc);
    if (fc < (outside ? fr : simplex.back().second)) {
      simplex.back() = {std::move(xc), fc};
      continue;
    }
    for (std::size_t v = 1; v < simplex.size(); ++v) {
      for (std::size_t k = 0; k < n; ++k) {
        simplex[v].first[k] = 0.5 * (simplex[v].first[k] + simplex.front().first[k]);
      }
      simplex[v].second = objective.eps(simplex[v].first);
    }
  }
  std::sort(simplex.begin(), simplex.end(), by_value);
  result.hit_cap = !result.converged;
  result.iterations = iter;
  if (!std::isfinite(simplex.front().second)) {
    throw numeric_error("node search: no feasible node tuple was found");
  }
  result.rule = objective.rule_at(simplex.front().first);
  return result;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

quad::QuadratureRule to_quadrature_rule(const OptimalRule& rule) {
  check_interval(rule.domain_a, rule.domain_b);
  if (rule.nodes.size() != rule.weights.size() || rule.nodes.empty()) {
    throw usage_error("rule conversion: nodes and weights must be nonempty and match");
  }
  const double span = rule.domain_b - rule.domain_a;
  quad::QuadratureRule out;
  out.nodes.reserve(rule.nodes.size());
  out.weights.reserve(rule.weights.size());
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    out.nodes.push_back((rule.nodes[i] - rule.domain_a) / span);
    out.weights.push_back(rule.weights[i] / span);
  }
  return out;
}

void save_rule(const OptimalRule& rule, const std::string& path) {
  nlohmann::json j;
  j["format"] = "steprl-rule-v1";
  j["domain_a"] = rule.domain_a;
  j["domain_b"] = rule.domain_b;
  j["nodes"] = rule.nodes;
  j["weights"] = rule.weights;
  j["eps"] = rule.eps;
  j["eps_abs"] = rule.eps_abs;
  j["sample_count"] = rule.sample_count;
  j["holdout"] = rule.holdout;
  std::ofstream out(path);
  if (!out) throw usage_error("rule save: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out.good()) throw usage_error("rule save: write failed for '" + path + "'");
}

OptimalRule load_rule(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("rule load: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error("rule load: invalid JSON in '" + path + "': " + e.what());
  }
  OptimalRule rule;
  try {
    if (j.at("format").get<std::string>() != "steprl-rule-v1") {
      throw usage_error("rule load: unknown format tag");
    }
    rule.domain_a = j.at("domain_a").get<double>();
    rule.domain_b = j.at("domain_b").get<double>();
    rule.nodes = j.at("nodes").get<std::vector<double>>();
    rule.weights = j.at("weights").get<std::vector<double>>();
    rule.eps = j.at("eps").get<double>();
    rule.eps_abs = j.at("eps_abs").get<double>();
    rule.sample_count = j.at("sample_count").get<long long>();
    rule.holdout = j.at("holdout").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw usage_error("rule load: malformed document in '" + path + "': " + e.what());
  }
  check_interval(rule.domain_a, rule.domain_b);
  if (rule.nodes.size() != rule.weights.size() || rule.nodes.empty()) {
    throw usage_error("rule load: nodes and weights must be nonempty and match");
  }
  return rule;
}

}  // namespace steprl::optweights
