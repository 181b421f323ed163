#include "steprl/quad.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <unordered_map>

namespace steprl::quad {

namespace {

double midpoint(double a, double b) { return a + 0.5 * (b - a); }

void validate_interval(double a, double b) {
  if (!(a < b)) throw usage_error("quadrature interval requires a < b");
  if (!std::isfinite(a) || !std::isfinite(b)) throw usage_error("quadrature interval must be finite");
}

}  // namespace

const QuadratureRule& simpson_rule() {
  static const QuadratureRule rule{{0.0, 0.5, 1.0}, {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0}};
  return rule;
}

double apply_rule(const QuadratureRule& rule, const Integrand& f, double a, double b) {
  validate_interval(a, b);
  if (rule.nodes.empty() || rule.nodes.size() != rule.weights.size()) {
    throw usage_error("quadrature rule needs matching, non-empty nodes and weights");
  }
  for (double c : rule.nodes) {
    if (!(c >= 0.0 && c <= 1.0)) throw usage_error("quadrature rule nodes must lie in [0, 1]");
  }
  const double len = b - a;
  double acc = 0.0;
  for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
    acc += rule.weights[j] * f(a + rule.nodes[j] * len);
  }
  return len * acc;
}

double simpson(const Integrand& f, double a, double b) { return apply_rule(simpson_rule(), f, a, b); }

CompositeResult composite_simpson(const Integrand& f, double a, double b, double h) {
  validate_interval(a, b);
  if (!(h > 0.0)) throw usage_error("composite_simpson requires h > 0");

  const double len = b - a;
  const double panel = 2.0 * h;
  CompositeResult res;
  if (h >= len) {
    res.integral = simpson(f, a, b);
    res.evaluations = 3;
    return res;
  }

  // Number of full panels; anything left becomes one shortened panel. The
  // relative slack absorbs cases like len / panel == integer up to rounding.
  long long n_full = static_cast<long long>(std::floor(len / panel * (1.0 + 1e-12)));
  double remainder = len - static_cast<double>(n_full) * panel;
  if (remainder <= 1e-12 * len) remainder = 0.0;

  double left = a;
  double f_left = f(a);
  res.evaluations = 1;
  double acc = 0.0;
  for (long long i = 0; i < n_full; ++i) {
    const double right = (i + 1 == n_full && remainder == 0.0) ? b : a + static_cast<double>(i + 1) * panel;
    const double f_mid = f(midpoint(left, right));
    const double f_right = f(right);
    acc += ((right - left) / 6.0) * (f_left + 4.0 * f_mid + f_right);
    res.evaluations += 2;
    left = right;
    f_left = f_right;
  }
  if (remainder > 0.0) {
    const double f_mid = f(midpoint(left, b));
    const double f_right = f(b);
    acc += ((b - left) / 6.0) * (f_left + 4.0 * f_mid + f_right);
    res.evaluations += 2;
  }
  res.integral = acc;
  return res;
}

namespace {

// Memoizes integrand values by the bit pattern of x; node positions are
// recomputed with identical expressions so lookups hit exactly.
class MemoizedFn {
 public:
  explicit MemoizedFn(const Integrand& f) : f_(f) {}

  double operator()(double x) {
    const std::uint64_t key = key_of(x);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double v = f_(x);
    cache_.emplace(key, v);
    ++evaluations_;
    return v;
  }

  bool known(double x) const { return cache_.count(key_of(x)) != 0; }
  long long evaluations() const { return evaluations_; }

 private:
  static std::uint64_t key_of(double x) {
    std::uint64_t k;
    std::memcpy(&k, &x, sizeof k);
    return k;
  }

  const Integrand& f_;
  std::unordered_map<std::uint64_t, double> cache_;
  long long evaluations_ = 0;
};

struct Node {
  double a, b;
  double rough, fine, estimate;
};

Node make_node(MemoizedFn& f, double a, double b) {
  const double m = midpoint(a, b);
  const double q1 = midpoint(a, m);
  const double q2 = midpoint(m, b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double fq1 = f(q1), fq2 = f(q2);
  Node n;
  n.a = a;
  n.b = b;
  n.rough = ((b - a) / 6.0) * (fa + 4.0 * fm + fb);
  const double left = ((m - a) / 6.0) * (fa + 4.0 * fq1 + fm);
  const double right = ((b - m) / 6.0) * (fm + 4.0 * fq2 + fb);
  n.fine = left + right;
  n.estimate = std::fabs(n.rough - n.fine);
  // An interval too narrow to host distinct midpoints cannot be refined.
  if (!(q1 > a && m > q1 && q2 > m && b > q2)) n.estimate = 0.0;
  return n;
}

long long split_cost(const MemoizedFn& f, double a, double b) {
  const double m = midpoint(a, b);
  const double pts[4] = {midpoint(a, midpoint(a, m)), midpoint(midpoint(a, m), m),
                         midpoint(m, midpoint(m, b)), midpoint(midpoint(m, b), b)};
  long long cost = 0;
  for (double x : pts) {
    if (!f.known(x)) ++cost;
  }
  return cost;
}

}  // namespace

SubdivisionResult subdivide(const Integrand& f, double a, double b, long long max_evals) {
  validate_interval(a, b);
  if (max_evals < 5) throw usage_error("subdivide needs max_evals >= 5");

  MemoizedFn mf(f);
  std::vector<Node> leaves;
  leaves.push_back(make_node(mf, a, b));

  for (;;) {
    // Largest estimate, leftmost on ties.
    std::size_t best = 0;
    for (std::size_t i = 1; i < leaves.size(); ++i) {
      if (leaves[i].estimate > leaves[best].estimate ||
          (leaves[i].estimate == leaves[best].estimate && leaves[i].a < leaves[best].a)) {
        best = i;
      }
    }

    double total_scale = 0.0;
    for (const Node& n : leaves) total_scale += std::fabs(n.fine);
    const double floor = 1e-14 * (1.0 + total_scale);
    if (leaves[best].estimate <= floor) break;

    const Node target = leaves[best];
    if (mf.evaluations() + split_cost(mf, target.a, target.b) > max_evals) break;

    const double m = midpoint(target.a, target.b);
    leaves[best] = make_node(mf, target.a, m);
    leaves.push_back(make_node(mf, m, target.b));
  }

  std::sort(leaves.begin(), leaves.end(), [](const Node& x, const Node& y) { return x.a < y.a; });
  SubdivisionResult res;
  res.evaluations = mf.evaluations();
  res.intervals.reserve(leaves.size());
  double acc = 0.0;
  for (const Node& n : leaves) {
    acc += n.fine;
    res.intervals.push_back({n.a, n.b, n.rough, n.fine, n.estimate});
  }
  res.integral = acc;
  return res;
}

}  // namespace steprl::quad
