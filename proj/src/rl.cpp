#include "steprl/rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>

namespace steprl::rl {

namespace {

constexpr double kFailedEps = 1e300;  // stands in for a non-finite local error

double rel_tiny(double span) { return 1e-12 * std::max(1.0, std::abs(span)); }

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Actions and rewards
// ---------------------------------------------------------------------------

void ActionSet::validate() const {
  if (step_sizes.empty()) throw usage_error("action set: empty");
  double prev = 0.0;
  for (double h : step_sizes) {
    if (!std::isfinite(h) || h <= 0.0) throw usage_error("action set: step sizes must be positive");
    if (h <= prev) throw usage_error("action set: step sizes must be strictly increasing");
    prev = h;
  }
}

std::string reward_kind_name(RewardKind k) {
  switch (k) {
    case RewardKind::Piecewise: return "piecewise";
    case RewardKind::Continuous: return "continuous";
    case RewardKind::Log: return "log";
  }
  throw usage_error("reward kind: invalid enum value");
}

RewardKind reward_kind_from_name(const std::string& name) {
  if (name == "piecewise") return RewardKind::Piecewise;
  if (name == "continuous") return RewardKind::Continuous;
  if (name == "log") return RewardKind::Log;
  throw usage_error("reward kind: unknown name '" + name + "'");
}

RewardConfig RewardConfig::calibrated(RewardKind variant, double tol, double L) {
  if (!(tol > 0.0) || !std::isfinite(tol)) throw usage_error("reward: tol must be positive");
  if (!(L > 1.0) || !std::isfinite(L)) throw usage_error("reward: L must exceed 1");
  RewardConfig cfg;
  cfg.variant = variant;
  cfg.tol = tol;
  cfg.L = L;
  cfg.a = L * L / (L - 1.0);
  cfg.b = std::log(L / (L - 1.0)) / tol;
  return cfg;
}

double reward(const RewardConfig& cfg, double eps, double h, double h_max) {
  if (!(h > 0.0) || !(h_max > 0.0)) throw usage_error("reward: h and h_max must be positive");
  if (eps < 0.0) throw usage_error("reward: eps must be non-negative");
  if (!(cfg.tol > 0.0)) throw usage_error("reward: tol must be positive");
  const double ratio = h / h_max;
  switch (cfg.variant) {
    case RewardKind::Piecewise:
      if (eps < cfg.tol) return ratio;
      return cfg.a * std::exp(-cfg.b * eps) - cfg.L;
    case RewardKind::Continuous:
      return ratio * (cfg.a * std::exp(-cfg.b * eps) - cfg.L);
    case RewardKind::Log:
      if (eps < cfg.tol) return ratio;
      return std::log10(cfg.tol / eps);
  }
  throw usage_error("reward: invalid variant");
}

// ---------------------------------------------------------------------------
// States, memory, and encoding
// ---------------------------------------------------------------------------

MemoryBuffer::MemoryBuffer(int m, int feature_dim) : m_(m), feature_dim_(feature_dim) {
  if (m < 0) throw usage_error("memory buffer: m must be non-negative");
  if (feature_dim <= 0) throw usage_error("memory buffer: feature_dim must be positive");
}

void MemoryBuffer::push(double h, const std::vector<double>& features) {
  if (static_cast<int>(features.size()) != feature_dim_) {
    throw usage_error("memory buffer: feature size mismatch");
  }
  if (m_ == 0) return;
  records_.push_front(StepRecord{h, features});
  while (static_cast<int>(records_.size()) > m_) records_.pop_back();
}

void MemoryBuffer::clear() { records_.clear(); }

void MemoryBuffer::fill(StepState& state) const {
  state.memory.clear();
  state.memory.reserve(m_);
  for (const auto& rec : records_) state.memory.push_back(rec);
  state.memory_padded = static_cast<int>(state.memory.size()) < m_;
  while (static_cast<int>(state.memory.size()) < m_) {
    state.memory.push_back(StepRecord{0.0, std::vector<double>(feature_dim_, 0.0)});
  }
}

StepState encode_quadrature(double h, const std::array<double, 3>& f_vals,
                            const MemoryBuffer& memory) {
  if (!(h > 0.0)) throw usage_error("encode: h must be positive");
  if (memory.feature_dim() != 2) throw usage_error("encode: quadrature memory needs feature_dim 2");
  StepState s;
  s.h = h;
  s.features = {f_vals[1] - f_vals[0], f_vals[2] - f_vals[0]};
  memory.fill(s);
  return s;
}

StepState encode_ode(double h, const std::vector<std::vector<double>>& stages,
                     const MemoryBuffer& memory) {
  if (!(h > 0.0)) throw usage_error("encode: h must be positive");
  if (stages.empty() || stages.front().empty()) throw usage_error("encode: empty stage list");
  const std::size_t dim = stages.front().size();
  StepState s;
  s.h = h;
  s.features.reserve(stages.size() * dim);
  for (const auto& stage : stages) {
    if (stage.size() != dim) throw usage_error("encode: inconsistent stage dimensions");
    s.features.insert(s.features.end(), stage.begin(), stage.end());
  }
  if (memory.feature_dim() != static_cast<int>(s.features.size())) {
    throw usage_error("encode: memory feature_dim does not match the stage layout");
  }
  memory.fill(s);
  return s;
}

int input_dim(int feature_dim, int memory_m) {
  if (feature_dim <= 0 || memory_m < 0) throw usage_error("input_dim: bad dimensions");
  return (1 + feature_dim) * (1 + memory_m);
}

Eigen::VectorXd to_input(const StepState& s) {
  const int fd = static_cast<int>(s.features.size());
  const int m = static_cast<int>(s.memory.size());
  Eigen::VectorXd x(input_dim(fd, m));
  int at = 0;
  x[at++] = s.h;
  for (double v : s.features) x[at++] = v;
  for (const auto& rec : s.memory) {
    if (static_cast<int>(rec.features.size()) != fd) {
      throw usage_error("to_input: memory record feature size mismatch");
    }
    x[at++] = rec.h;
    for (double v : rec.features) x[at++] = v;
  }
  return x;
}

void InputNormalizer::fit(const Eigen::MatrixXd& inputs) {
  if (inputs.cols() < 1 || inputs.rows() < 1) throw usage_error("normalizer: empty input matrix");
  mean_ = inputs.rowwise().mean();
  Eigen::MatrixXd centered = inputs.colwise() - mean_;
  scale_ = (centered.array().square().rowwise().mean()).sqrt();
  for (Eigen::Index i = 0; i < scale_.size(); ++i) {
    if (!(scale_[i] > 1e-12)) scale_[i] = 1.0;
  }
  fitted_ = true;
}

Eigen::VectorXd InputNormalizer::apply(const Eigen::VectorXd& x) const {
  if (!fitted_) return x;
  if (x.size() != mean_.size()) throw usage_error("normalizer: input size mismatch");
  return (x - mean_).cwiseQuotient(scale_);
}

nlohmann::json InputNormalizer::to_json() const {
  nlohmann::json j;
  j["fitted"] = fitted_;
  j["mean"] = std::vector<double>(mean_.data(), mean_.data() + mean_.size());
  j["scale"] = std::vector<double>(scale_.data(), scale_.data() + scale_.size());
  return j;
}

InputNormalizer InputNormalizer::from_json(const nlohmann::json& j) {
  InputNormalizer n;
  try {
    n.fitted_ = j.at("fitted").get<bool>();
    auto mean = j.at("mean").get<std::vector<double>>();
    auto scale = j.at("scale").get<std::vector<double>>();
    if (mean.size() != scale.size()) throw usage_error("normalizer: mean/scale size mismatch");
    n.mean_ = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    n.scale_ =
        Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("normalizer: malformed document: ") + e.what());
  }
  return n;
}

// ---------------------------------------------------------------------------
// The learner
// ---------------------------------------------------------------------------

int select_from_q(const Eigen::VectorXd& q, bool explore, double alpha, RngStream& rng) {
  const int n = static_cast<int>(q.size());
  if (n == 0) throw usage_error("select: empty action-value vector");
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (q[i] > q[best]) best = i;
  }
  if (!explore || n == 1) return best;
  if (!(alpha >= 0.5 && alpha <= 1.0)) throw usage_error("select: alpha must lie in [0.5, 1]");
  int second = -1;
  for (int i = 0; i < n; ++i) {
    if (i == best) continue;
    if (second < 0 || q[i] > q[second]) second = i;
  }
  return rng.uniform01() < alpha ? best : second;
}

Eigen::VectorXd BaseLearner::q_values(const StepState& s) const {
  return net.forward(norm.apply(to_input(s)));
}

int BaseLearner::greedy(const StepState& s) const {
  const Eigen::VectorXd q = q_values(s);
  int best = 0;
  for (Eigen::Index i = 1; i < q.size(); ++i) {
    if (q[i] > q[best]) best = static_cast<int>(i);
  }
  return best;
}

int BaseLearner::select(const StepState& s, bool explore, double alpha, RngStream& rng) const {
  return select_from_q(q_values(s), explore, alpha, rng);
}

double q_target(double reward, const StepState& next_state, const BaseLearner& learner,
                double gamma, bool terminal) {
  if (terminal || gamma == 0.0) return reward;
  return reward + gamma * learner.q_values(next_state).maxCoeff();
}

nlohmann::json learner_to_json(const BaseLearner& learner, const neural::AdamState* adam) {
  nlohmann::json j;
  j["format"] = "steprl-learner-v1";
  j["problem_kind"] = learner.problem_kind;
  j["actions"] = learner.actions.step_sizes;
  j["memory_m"] = learner.memory_m;
  j["feature_dim"] = learner.feature_dim;
  j["gamma"] = learner.gamma;
  j["reward"] = {{"variant", reward_kind_name(learner.reward_cfg.variant)},
                 {"tol", learner.reward_cfg.tol},
                 {"a", learner.reward_cfg.a},
                 {"b", learner.reward_cfg.b},
                 {"L", learner.reward_cfg.L}};
  j["normalizer"] = learner.norm.to_json();
  j["net"] = neural::to_json(learner.net, adam);
  return j;
}

BaseLearner learner_from_json(const nlohmann::json& j, neural::AdamState* adam, bool* has_adam) {
  BaseLearner lr;
  try {
    if (j.at("format").get<std::string>() != "steprl-learner-v1") {
      throw usage_error("learner load: unknown format tag");
    }
    lr.problem_kind = j.at("problem_kind").get<std::string>();
    lr.actions.step_sizes = j.at("actions").get<std::vector<double>>();
    lr.actions.validate();
    lr.memory_m = j.at("memory_m").get<int>();
    lr.feature_dim = j.at("feature_dim").get<int>();
    lr.gamma = j.at("gamma").get<double>();
    const auto& r = j.at("reward");
    lr.reward_cfg.variant = reward_kind_from_name(r.at("variant").get<std::string>());
    lr.reward_cfg.tol = r.at("tol").get<double>();
    lr.reward_cfg.a = r.at("a").get<double>();
    lr.reward_cfg.b = r.at("b").get<double>();
    lr.reward_cfg.L = r.at("L").get<double>();
    lr.norm = InputNormalizer::from_json(j.at("normalizer"));
    const bool carried = neural::from_json(j.at("net"), lr.net, adam);
    if (has_adam) *has_adam = carried;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("learner load: malformed document: ") + e.what());
  }
  if (lr.net.spec().input_dim != input_dim(lr.feature_dim, lr.memory_m)) {
    throw usage_error("learner load: network input does not match feature_dim and memory_m");
  }
  if (lr.net.spec().output_dim != lr.actions.size()) {
    throw usage_error("learner load: network output does not match the action count");
  }
  return lr;
}

void BaseLearner::save(const std::string& path, const neural::AdamState* adam) const {
  std::ofstream out(path);
  if (!out) throw usage_error("learner save: cannot open '" + path + "'");
  out << learner_to_json(*this, adam).dump(2) << "\n";
  if (!out.good()) throw usage_error("learner save: write failed for '" + path + "'");
}

BaseLearner BaseLearner::load(const std::string& path, neural::AdamState* adam, bool* has_adam) {
  std::ifstream in(path);
  if (!in) throw usage_error("learner load: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error("learner load: invalid JSON in '" + path + "': " + e.what());
  }
  return learner_from_json(j, adam, has_adam);
}

// ---------------------------------------------------------------------------
// Environments
// ---------------------------------------------------------------------------

Transition Env::apply(int action) {
  if (action < 0 || action >= num_actions()) throw usage_error("env: action index out of range");
  Transition tr = apply_h(actions().step_sizes[static_cast<std::size_t>(action)]);
  tr.action = action;
  return tr;
}

QuadratureEnv::QuadratureEnv(QuadratureEnvConfig cfg)
    : cfg_(std::move(cfg)), mem_(cfg_.memory_m, 2) {
  cfg_.actions.validate();
  if (!(cfg_.reward.tol > 0.0)) throw usage_error("quadrature env: reward tol must be positive");
}

const StepState& QuadratureEnv::reset(RngStream& rng) {
  if (cfg_.fixed_function) {
    f_ = *cfg_.fixed_function;
  } else {
    f_ = problems::sample_function(cfg_.function_class, rng);
  }
  start_episode();
  return state_;
}

const StepState& QuadratureEnv::reset_with(const problems::SampledFunction& f) {
  f_ = f;
  start_episode();
  return state_;
}

void QuadratureEnv::start_episode() {
  if (!(f_.domain_b > f_.domain_a)) throw usage_error("quadrature env: empty domain");
  x_ = f_.domain_a;
  integral_ = 0.0;
  evals_ = 0;
  failed_ = false;
  active_ = true;
  mem_.clear();

  // Warm-up: one probe step with the smallest action. It contributes to the
  // integral and produces the first observable state but no transition.
  const double h1 = std::min(cfg_.actions.smallest(), 0.5 * (f_.domain_b - f_.domain_a));
  const double fa = f_(x_);
  const double fm = f_(x_ + h1);
  const double fb = f_(x_ + 2.0 * h1);
  evals_ = 3;
  integral_ += h1 / 3.0 * (fa + 4.0 * fm + fb);
  state_ = encode_quadrature(h1, {fa, fm, fb}, mem_);
  mem_.push(h1, state_.features);
  f_right_ = fb;
  x_ += 2.0 * h1;
}

bool QuadratureEnv::done() const {
  if (!active_ || failed_) return true;
  return x_ >= f_.domain_b - rel_tiny(f_.domain_b - f_.domain_a);
}

Transition QuadratureEnv::apply_h(double h) {
  if (!active_) throw usage_error("quadrature env: reset before applying steps");
  if (done()) throw usage_error("quadrature env: episode already finished");
  if (!(h > 0.0)) throw usage_error("quadrature env: step size must be positive");

  const double tiny = rel_tiny(f_.domain_b - f_.domain_a);
  const double remaining = f_.domain_b - x_;
  double h_exec = h;
  bool clamped = false;
  bool lands_on_end = false;
  if (2.0 * h >= remaining - tiny) {
    h_exec = 0.5 * remaining;
    clamped = 2.0 * h > remaining + tiny;
    lands_on_end = true;
  }

  Transition tr;
  tr.state = state_;
  tr.action = -1;
  tr.h_executed = h_exec;
  tr.clamped = clamped;

  const double x1 = x_;
  const double x3 = lands_on_end ? f_.domain_b : x1 + 2.0 * h_exec;
  const double fa = f_right_;
  const double fm = f_(x1 + h_exec);
  const double fb = f_(x3);
  evals_ += 2;
  tr.step_evals = 2;

  const double panel = h_exec / 3.0 * (fa + 4.0 * fm + fb);
  const double exact = f_.exact_integral(x1, x3);
  double eps = std::abs(panel - exact);
  if (!std::isfinite(eps)) {
    eps = kFailedEps;
    failed_ = true;
  }
  tr.eps = eps;
  tr.reward = reward(cfg_.reward, eps, h_exec, cfg_.actions.h_max());

  if (!failed_) {
    integral_ += panel;
    x_ = x3;
    f_right_ = fb;
    state_ = encode_quadrature(h_exec, {fa, fm, fb}, mem_);
    mem_.push(h_exec, state_.features);
  }
  tr.next_state = state_;
  tr.position = x_;
  tr.terminal = done();
  return tr;
}

int OdeEnv::feature_dim() const { return ode::kStages * cfg_.system.dim; }

OdeEnv::OdeEnv(OdeEnvConfig cfg)
    : cfg_(std::move(cfg)), mem_(cfg_.memory_m, ode::kStages * cfg_.system.dim) {
  cfg_.actions.validate();
  if (cfg_.system.dim <= 0) throw usage_error("ode env: system dimension must be positive");
  if (!(cfg_.t1 > cfg_.t0)) throw usage_error("ode env: t1 must exceed t0");
  if (cfg_.episode_span < 0.0) throw usage_error("ode env: episode_span must be non-negative");
  if (cfg_.reward_h_max < 0.0) throw usage_error("ode env: reward_h_max must be non-negative");
  if (!(cfg_.reward.tol > 0.0)) throw usage_error("ode env: reward tol must be positive");
}

const StepState& OdeEnv::reset(RngStream& rng) {
  (void)rng;  // the start point is deterministic
  const double tiny = rel_tiny(cfg_.t1 - cfg_.t0);
  if (!(cfg_.continue_trajectory && have_position_ && t_ < cfg_.t1 - tiny && !failed_)) {
    t_ = cfg_.t0;
    x_ = cfg_.system.x0;
    hybrid_ = problems::HybridState{};
  }
  episode_start_ = t_;
  episode_end_ = cfg_.episode_span > 0.0 ? std::min(t_ + cfg_.episode_span, cfg_.t1) : cfg_.t1;
  if (!(episode_end_ > episode_start_)) throw usage_error("ode env: empty episode window");
  active_ = true;
  have_position_ = true;
  warm_up();
  return state_;
}

const StepState& OdeEnv::reset_from(double t, const std::vector<double>& x,
                                    problems::HybridState hybrid) {
  if (static_cast<int>(x.size()) != cfg_.system.dim) {
    throw usage_error("ode env: start state has the wrong dimension");
  }
  t_ = t;
  x_ = x;
  hybrid_ = hybrid;
  episode_start_ = t_;
  episode_end_ = cfg_.episode_span > 0.0 ? std::min(t_ + cfg_.episode_span, cfg_.t1) : cfg_.t1;
  if (!(episode_end_ > episode_start_)) throw usage_error("ode env: empty episode window");
  active_ = true;
  have_position_ = true;
  warm_up();
  return state_;
}

bool OdeEnv::done() const {
  if (!active_) return true;
  if (failed_) return true;
  return t_ >= episode_end_ - rel_tiny(cfg_.t1 - cfg_.t0);
}

void OdeEnv::warm_up() {
  mem_.clear();
  switches_.clear();
  evals_ = 0;
  failed_ = false;
  k1_valid_ = false;

  const double h1 = std::min(cfg_.actions.smallest(), episode_end_ - t_);
  Transition tr = apply_h(h1);  // builds state_, advances, counts evaluations
  (void)tr;                     // the warm-up step is not part of the episode log
}

Transition OdeEnv::apply_h(double h) {
  if (!active_) throw usage_error("ode env: reset before applying steps");
  if (!(h > 0.0)) throw usage_error("ode env: step size must be positive");
  if (evals_ > 0 && done()) throw usage_error("ode env: episode already finished");

  const double tiny = rel_tiny(cfg_.t1 - cfg_.t0);
  const double remaining = episode_end_ - t_;
  double h_exec = h;
  bool clamped = false;
  bool lands_on_end = false;
  if (h >= remaining - tiny) {
    h_exec = remaining;
    clamped = h > remaining + tiny;
    lands_on_end = true;
  }

  Transition tr;
  tr.state = state_;
  tr.action = -1;
  tr.h_executed = h_exec;
  tr.clamped = clamped;

  const auto& sys = cfg_.system;
  const bool single_mode = sys.num_modes() == 1;

  ode::RkStepResult res;
  if (single_mode) {
    ode::Rhs rhs = [&sys](double t, const double* x, double* out) {
      problems::eval_rhs(sys, t, x, 1, 0.0, out);
    };
    res = ode::rk_step(rhs, t_, x_, h_exec, ode::dp54(), k1_valid_ ? k1_.data() : nullptr);
  } else {
    // Event-blind stepping: the right-hand side flips its own mode mid-stage
    // when a trial evaluation crosses a threshold, starting from the
    // authoritative mode of the current point.
    problems::SwitchingRhs srhs(sys, hybrid_);
    res = ode::rk_step(srhs.as_rhs(), t_, x_, h_exec, ode::dp54(), nullptr);
  }
  evals_ += res.evaluations;
  tr.step_evals = res.evaluations;

  // Local error: restart the reference oracle from the current point over the
  // same step. This also advances the authoritative mode state. A step whose
  // update already overflowed skips the reference work and ends the episode.
  double eps = kFailedEps;
  if (all_finite(res.x5)) {
    std::vector<problems::SwitchEvent> events;
    const std::vector<double> x_ref =
        problems::oracle_step(sys, t_, std::span<const double>(x_), h_exec, hybrid_, &events,
                              cfg_.oracle);
    switches_.insert(switches_.end(), events.begin(), events.end());
    eps = ode::rms_diff(res.x5, x_ref);
  }
  if (!std::isfinite(eps) || eps == kFailedEps) {
    eps = kFailedEps;
    failed_ = true;
  }
  tr.eps = eps;
  const double h_max = cfg_.reward_h_max > 0.0 ? cfg_.reward_h_max : cfg_.actions.h_max();
  tr.reward = reward(cfg_.reward, eps, h_exec, h_max);

  if (!failed_) {
    x_ = res.x5;
    t_ = lands_on_end ? episode_end_ : t_ + h_exec;
    if (single_mode) {
      k1_ = res.stages.back();
      k1_valid_ = true;
    }
    state_ = encode_ode(h_exec, res.stages, mem_);
    mem_.push(h_exec, state_.features);
  }
  tr.next_state = state_;
  tr.position = t_;
  tr.terminal = done();
  return tr;
}

// ---------------------------------------------------------------------------
// Episodes, training, rollout
// ---------------------------------------------------------------------------

namespace {

void check_learner_matches_env(const Env& env, const BaseLearner& learner) {
  if (learner.net.spec().input_dim != input_dim(env.feature_dim(), env.memory_m())) {
    throw usage_error("episode: learner input does not match the environment encoding");
  }
  if (learner.net.spec().output_dim != env.num_actions()) {
    throw usage_error("episode: learner output does not match the action count");
  }
}

}  // namespace

std::vector<Transition> run_episode(Env& env, const BaseLearner& learner,
                                    const ExploreConfig& explore, RngStream& rng) {
  check_learner_matches_env(env, learner);
  std::vector<Transition> out;
  env.reset(rng);
  while (!env.done()) {
    const int a = learner.select(env.state(), explore.explore, explore.alpha, rng);
    out.push_back(env.apply(a));
  }
  return out;
}

int build_batch(const std::vector<Transition>& transitions, const BaseLearner& learner,
                double gamma, Eigen::MatrixXd& X, std::vector<int>& actions,
                Eigen::VectorXd& targets) {
  std::vector<const Transition*> used;
  used.reserve(transitions.size());
  for (const auto& tr : transitions) {
    if (!tr.clamped) used.push_back(&tr);
  }
  const int B = static_cast<int>(used.size());
  const int dim = learner.net.spec().input_dim;
  X.resize(dim, B);
  actions.assign(static_cast<std::size_t>(B), 0);
  targets.resize(B);
  for (int i = 0; i < B; ++i) {
    const Transition& tr = *used[static_cast<std::size_t>(i)];
    if (tr.action < 0 || tr.action >= learner.actions.size()) {
      throw usage_error("batch: transition carries an invalid action id");
    }
    X.col(i) = learner.norm.apply(to_input(tr.state));
    actions[static_cast<std::size_t>(i)] = tr.action;
    targets[i] = q_target(tr.reward, tr.next_state, learner, gamma, tr.terminal);
  }
  return B;
}

namespace {

double window_mean(const std::vector<double>& v, int end_inclusive, int window) {
  double sum = 0.0;
  for (int i = end_inclusive - window + 1; i <= end_inclusive; ++i) {
    sum += v[static_cast<std::size_t>(i)];
  }
  return sum / window;
}

}  // namespace

TrainResult train_base_learner(Env& env, const TrainConfig& cfg, RngStream& rng) {
  if (cfg.max_episodes < 0) throw usage_error("train: max_episodes must be non-negative");
  if (cfg.updates_per_episode <= 0) throw usage_error("train: updates_per_episode must be positive");
  if (!(cfg.alpha >= 0.5 && cfg.alpha <= 1.0)) throw usage_error("train: alpha must lie in [0.5, 1]");
  if (cfg.gamma < 0.0 || cfg.gamma >= 1.0) throw usage_error("train: gamma must lie in [0, 1)");
  if (cfg.convergence_window <= 0 || cfg.convergence_gap <= 0) {
    throw usage_error("train: convergence window and gap must be positive");
  }

  TrainResult result;
  BaseLearner& learner = result.learner;

  neural::MlpSpec spec = cfg.net;
  spec.input_dim = input_dim(env.feature_dim(), env.memory_m());
  spec.output_dim = env.num_actions();
  learner.net = neural::Mlp(spec, rng);
  learner.actions = env.actions();
  learner.memory_m = env.memory_m();
  learner.feature_dim = env.feature_dim();
  learner.problem_kind = env.kind();
  learner.reward_cfg = env.reward_config();
  learner.gamma = cfg.gamma;
  result.adam = neural::AdamState(learner.net);

  neural::Mlp last_good_net = learner.net;
  neural::AdamState last_good_adam = result.adam;

  const ExploreConfig explore{true, cfg.alpha};
  std::vector<double> mean_rewards;
  std::vector<Eigen::VectorXd> norm_pool;  // raw inputs until the normalizer is fitted

  Eigen::MatrixXd X;
  std::vector<int> batch_actions;
  Eigen::VectorXd targets;
  Eigen::MatrixXd Xs;
  std::vector<int> actions_s;
  Eigen::VectorXd targets_s;

  for (int ep = 0; ep < cfg.max_episodes; ++ep) {
    const std::vector<Transition> transitions = run_episode(env, learner, explore, rng);

    TrainLogRow row;
    row.episode = ep;
    double reward_sum = 0.0;
    double eps_sum = 0.0;
    int used = 0;
    for (const auto& tr : transitions) {
      if (tr.clamped) continue;
      reward_sum += tr.reward;
      eps_sum += tr.eps;
      ++used;
    }
    row.mean_reward = used > 0 ? reward_sum / used : 0.0;
    row.avg_error = used > 0 ? eps_sum / used : 0.0;
    const double span = env.position() - env.episode_start();
    row.evals_per_unit = span > 0.0 ? static_cast<double>(env.episode_evals()) / span : 0.0;

    const bool collecting = ep < cfg.normalizer_episodes;
    if (collecting) {
      for (const auto& tr : transitions) {
        if (!tr.clamped) norm_pool.push_back(to_input(tr.state));
      }
      if (ep + 1 == cfg.normalizer_episodes && !norm_pool.empty()) {
        Eigen::MatrixXd pool(norm_pool.front().size(),
                             static_cast<Eigen::Index>(norm_pool.size()));
        for (std::size_t i = 0; i < norm_pool.size(); ++i) {
          pool.col(static_cast<Eigen::Index>(i)) = norm_pool[i];
        }
        learner.norm.fit(pool);
        norm_pool.clear();
      }
      result.log.push_back(row);
      mean_rewards.push_back(row.mean_reward);
      result.episodes_run = ep + 1;
      continue;
    }

    const int B = build_batch(transitions, learner, cfg.gamma, X, batch_actions, targets);
    if (B > 0) {
      for (int u = 0; u < cfg.updates_per_episode; ++u) {
        if (cfg.minibatch <= 0 || cfg.minibatch >= B) {
          neural::train_step(learner.net, X, batch_actions, targets, result.adam, cfg.adam);
        } else {
          Xs.resize(X.rows(), cfg.minibatch);
          actions_s.assign(static_cast<std::size_t>(cfg.minibatch), 0);
          targets_s.resize(cfg.minibatch);
          for (int i = 0; i < cfg.minibatch; ++i) {
            const auto pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(B)));
            Xs.col(i) = X.col(pick);
            actions_s[static_cast<std::size_t>(i)] = batch_actions[static_cast<std::size_t>(pick)];
            targets_s[i] = targets[pick];
          }
          neural::train_step(learner.net, Xs, actions_s, targets_s, result.adam, cfg.adam);
        }
      }
      row.loss = neural::masked_l2_loss(learner.net, X, batch_actions, targets);
    }

    if (!std::isfinite(row.loss)) {
      learner.net = last_good_net;
      result.adam = last_good_adam;
      result.diverged = true;
      result.log.push_back(row);
      result.episodes_run = ep + 1;
      break;
    }
    last_good_net = learner.net;
    last_good_adam = result.adam;

    result.log.push_back(row);
    mean_rewards.push_back(row.mean_reward);
    result.episodes_run = ep + 1;

    const int n = static_cast<int>(mean_rewards.size());
    if (n >= cfg.convergence_window + cfg.convergence_gap) {
      const double now = window_mean(mean_rewards, n - 1, cfg.convergence_window);
      const double then = window_mean(mean_rewards, n - 1 - cfg.convergence_gap,
                                      cfg.convergence_window);
      if (std::abs(now - then) < cfg.convergence_rel * std::max(std::abs(then), 1e-8)) {
        result.converged = true;
        break;
      }
    }
  }
  return result;
}

RolloutResult rollout(Env& env, const BaseLearner& learner, RngStream& rng, bool keep_trace) {
  env.reset(rng);
  return rollout_from_current(env, learner, keep_trace);
}

RolloutResult rollout_from_current(Env& env, const BaseLearner& learner, bool keep_trace) {
  check_learner_matches_env(env, learner);
  RolloutResult r;
  double eps_sum = 0.0;
  while (!env.done()) {
    const int a = learner.greedy(env.state());
    const Transition tr = env.apply(a);
    ++r.steps;
    eps_sum += tr.eps;
    r.max_error = std::max(r.max_error, tr.eps);
    if (!(tr.eps < env.reward_config().tol)) ++r.violations;
    if (keep_trace) {
      r.trace.push_back(TraceRow{tr.position, tr.h_executed, tr.action, tr.eps, tr.reward,
                                 !(tr.eps < env.reward_config().tol), tr.clamped});
    }
  }
  r.final_position = env.position();
  r.evaluations = env.episode_evals();
  r.avg_error = r.steps > 0 ? eps_sum / static_cast<double>(r.steps) : 0.0;
  const double span = env.position() - env.episode_start();
  r.evals_per_unit = span > 0.0 ? static_cast<double>(r.evaluations) / span : 0.0;
  if (const auto* q = dynamic_cast<const QuadratureEnv*>(&env)) {
    r.integral = q->integral();
  }
  if (const auto* o = dynamic_cast<const OdeEnv*>(&env)) {
    r.final_state = o->x();
  }
  return r;
}

}  // namespace steprl::rl
