#pragma once

#include <functional>
#include <vector>

#include "steprl/errors.hpp"

namespace steprl::quad {

using Integrand = std::function<double(double)>;

// Nodes live in [0, 1]; weights are normalized so the rule value on [a, b] is
// (b - a) * sum_j w_j * f(a + c_j * (b - a)).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Simpson expressed in the shared rule convention: nodes (0, 1/2, 1),
// weights (1/6, 2/3, 1/6).
const QuadratureRule& simpson_rule();

// Applies a rule to f on [a, b]. Throws usage_error on malformed rules
// (size mismatch, empty, nodes outside [0, 1]) or a >= b.
double apply_rule(const QuadratureRule& rule, const Integrand& f, double a, double b);

// Single Simpson panel; delegates to apply_rule(simpson_rule(), ...) so the
// two paths agree bit-for-bit.
double simpson(const Integrand& f, double a, double b);

struct CompositeResult {
  double integral = 0.0;
  long long evaluations = 0;
};

// Composite Simpson with node spacing h: panels of width 2h tile [a, b] and
// share endpoints; a final shortened panel absorbs any remainder. h >= b - a
// degrades to a single panel over [a, b]. Throws usage_error for h <= 0 or
// a >= b.
CompositeResult composite_simpson(const Integrand& f, double a, double b, double h);

struct SubdivisionInterval {
  double a = 0.0;
  double b = 0.0;
  double rough = 0.0;     // single Simpson panel over [a, b]
  double fine = 0.0;      // two half-width panels
  double estimate = 0.0;  // |rough - fine|
};

struct SubdivisionResult {
  double integral = 0.0;  // sum of fine estimates over the final partition
  long long evaluations = 0;
  std::vector<SubdivisionInterval> intervals;  // sorted by left endpoint
};

// Greedy interval subdivision: repeatedly splits the interval with the largest
// |rough - fine| at its midpoint (leftmost wins ties) until the evaluation
// budget cannot cover another split or every estimate is at rounding level.
// Evaluations are memoized by node position, so shared endpoints are counted
// once. Requires max_evals >= 5 (initial rough + fine of the root interval).
SubdivisionResult subdivide(const Integrand& f, double a, double b, long long max_evals);

}  // namespace steprl::quad
