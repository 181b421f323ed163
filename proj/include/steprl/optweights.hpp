#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "steprl/errors.hpp"
#include "steprl/problems.hpp"
#include "steprl/quad.hpp"
#include "steprl/rng.hpp"

namespace steprl::optweights {

// Draws one random integrand from a function class.
using Sampler = std::function<problems::SampledFunction(RngStream&)>;

// ---------------------------------------------------------------------------
// Ready-made function-class measures
// ---------------------------------------------------------------------------

enum class CoeffLaw { Normal, Uniform };

// Polynomials of the given degree on [a, b]; coefficients are i.i.d. draws of
// `scale * N(0,1)` or `scale * Unif(-1,1)`.
Sampler poly_sampler(int degree, CoeffLaw law, double scale = 1.0);

// Damped-oscillator velocities with amplitude ~ U[0,1], angular frequency
// ~ U[0,2pi], phase ~ U[0,2pi], damping ~ U[0,1]; the exact integral over
// [a, b] is the position difference s(b) - s(a).
Sampler oscillator_velocity_sampler();

// Unit-amplitude sines sin(W x + phi) with W ~ U[w_lo, w_hi] and
// phi ~ U[0, 2pi). The induced measure is invariant under reflecting the
// argument about any midpoint, which makes it a symmetry oracle.
Sampler random_sine_sampler(double w_lo, double w_hi);

// ---------------------------------------------------------------------------
// Regression data
// ---------------------------------------------------------------------------

// Node values of sampled functions plus their exact integrals over [a, b]:
// row j holds (f_j(x_1), ..., f_j(x_n)), target j holds I(f_j).
struct BasisEvaluations {
  Eigen::MatrixXd F;
  Eigen::VectorXd targets;
  std::vector<double> nodes;
  double domain_a = 0.0;
  double domain_b = 1.0;
};

// Evaluates `samples` fresh draws at the given nodes. Nodes must lie inside
// [a, b] and `samples` must be at least the node count.
BasisEvaluations collect_evaluations(const Sampler& sampler, const std::vector<double>& nodes,
                                     int samples, double a, double b, RngStream& rng);

// ---------------------------------------------------------------------------
// Fitted rules
// ---------------------------------------------------------------------------

struct OptimalRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  double eps = 0.0;      // root-mean-square residual
  double eps_abs = 0.0;  // mean absolute residual; never exceeds eps
  long long sample_count = 0;
  bool holdout = false;  // true when the error columns come from held-out rows
  double domain_a = 0.0;
  double domain_b = 1.0;
};

struct FitOptions {
  // Fraction of rows excluded from the fit and used only to estimate the
  // errors; 0 reports in-sample errors.
  double holdout_fraction = 0.0;
};

// Least-squares weights by orthogonal (QR) factorization — the design matrix
// is never inverted explicitly. A rank-deficient design raises numeric_error
// naming the nodes whose columns are linearly dependent.
OptimalRule fit_weights(const BasisEvaluations& data, const FitOptions& options = {});

// Solves A w = b for a symmetric positive definite A by Cholesky
// factorization. Throws usage_error for a non-symmetric matrix and
// numeric_error when A is not positive definite.
Eigen::VectorXd gram_solve(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

// ---------------------------------------------------------------------------
// Single-node closed forms
// ---------------------------------------------------------------------------

// For degree-2 polynomials with i.i.d. zero-mean unit-variance coefficients
// integrated over [0,1], the best single-node weight and its squared error
// have closed forms in the node position x1 ∈ [0,1].
struct OneNodeResult {
  double omega = 0.0;
  double eps_sq = 0.0;
};

OneNodeResult one_node_analytic(double x1);

// ---------------------------------------------------------------------------
// Node placement search
// ---------------------------------------------------------------------------

struct GridSearchOptions {
  int resolution = 0;  // grid points per axis; 0 -> 500 for one node, 50 for two
  int samples_per_cell = 2000;
};

struct GridCell {
  std::vector<double> nodes;
  double eps = 0.0;
  double eps_se = 0.0;  // sampling standard error of eps (delta method)
  bool skipped = false;  // coincident nodes or a degenerate fit
};

struct GridSearchResult {
  std::vector<GridCell> cells;  // row-major over the axis grids
  std::vector<double> best_nodes;
  double best_eps = 0.0;
  int skipped_count = 0;
  int resolution = 0;
};

// Fits fresh samples at every node tuple of a uniform grid over [a, b] and
// returns the full error surface plus the argmin tuple. Supports one- and
// two-node searches; degenerate tuples are flagged and skipped.
GridSearchResult node_grid_search(const Sampler& sampler, int n_nodes, double a, double b,
                                  const GridSearchOptions& options, RngStream& rng);

// Writes the surface as CSV with columns x1[,x2],eps,eps_se,skipped.
void write_surface_csv(const GridSearchResult& result, const std::string& path);

struct NodeOptimizeOptions {
  int samples_per_eval = 4000;  // one fixed draw shared by every evaluation
  int max_iterations = 200;
  double xtol = 1e-4;      // simplex diameter threshold, relative to b - a
  double ftol_rel = 1e-6;  // objective spread threshold, relative to the best value
};

struct NodeOptimizeResult {
  OptimalRule rule;
  bool converged = false;
  bool hit_cap = false;  // iteration cap reached; rule holds the best visited
  int iterations = 0;
};

// Derivative-free (Nelder–Mead) search over node positions. All objective
// evaluations refit weights on one common set of sampled functions, so the
// objective is deterministic and the search is reproducible for a fixed seed.
// Initial nodes must be strictly inside (a, b) and pairwise distinct.
NodeOptimizeResult node_optimize(const Sampler& sampler, const std::vector<double>& initial_nodes,
                                 double a, double b, const NodeOptimizeOptions& options,
                                 RngStream& rng);

// ---------------------------------------------------------------------------
// Serialization and interop
// ---------------------------------------------------------------------------

// Converts to the shared normalized rule convention: nodes mapped to [0, 1],
// weights divided by (b - a).
quad::QuadratureRule to_quadrature_rule(const OptimalRule& rule);

void save_rule(const OptimalRule& rule, const std::string& path);
OptimalRule load_rule(const std::string& path);

}  // namespace steprl::optweights
