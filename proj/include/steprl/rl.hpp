#pragma once

#include <Eigen/Dense>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "steprl/errors.hpp"
#include "steprl/neural.hpp"
#include "steprl/ode.hpp"
#include "steprl/problems.hpp"
#include "steprl/rng.hpp"

namespace steprl::rl {

// ---------------------------------------------------------------------------
// Actions and rewards
// ---------------------------------------------------------------------------

// The finite menu of candidate step sizes.
struct ActionSet {
  std::vector<double> step_sizes;  // strictly increasing, all positive

  int size() const { return static_cast<int>(step_sizes.size()); }
  double smallest() const { return step_sizes.front(); }
  double h_max() const { return step_sizes.back(); }  // normalizes positive rewards
  void validate() const;
};

enum class RewardKind { Piecewise, Continuous, Log };

std::string reward_kind_name(RewardKind k);
RewardKind reward_kind_from_name(const std::string& name);

struct RewardConfig {
  RewardKind variant = RewardKind::Piecewise;
  double tol = 1e-4;
  double a = 4.5;  // penalty amplitude
  double b = 0.0;  // penalty decay rate
  double L = 3.0;  // penalty asymptote

  // Solves the two calibration constraints r(tol) = 0 and r(2 tol) = -1 for
  // the penalty branch: a = L^2 / (L - 1), b = ln(L / (L - 1)) / tol.
  static RewardConfig calibrated(RewardKind variant, double tol, double L = 3.0);
};

// Piecewise:  h / h_max            if eps < tol, else a e^(-b eps) - L
// Continuous: (h / h_max) * (a e^(-b eps) - L)   (no branch)
// Log:        h / h_max            if eps < tol, else log10(tol / eps)
double reward(const RewardConfig& cfg, double eps, double h, double h_max);

// ---------------------------------------------------------------------------
// States, memory, and encoding
// ---------------------------------------------------------------------------

struct StepRecord {
  double h = 0.0;
  std::vector<double> features;
};

// What the controller sees after a step: the executed step size, the
// problem-kind features of that step, and the m previous records.
struct StepState {
  double h = 0.0;
  std::vector<double> features;
  std::vector<StepRecord> memory;  // exactly m records, most recent first
  bool memory_padded = false;      // zero records filled in during warm-up
};

// Rolling window of the last m (h, features) records.
class MemoryBuffer {
 public:
  MemoryBuffer(int m, int feature_dim);

  void push(double h, const std::vector<double>& features);
  void clear();
  int m() const { return m_; }
  int feature_dim() const { return feature_dim_; }

  // Fills state.memory with the most recent records first, zero-padding and
  // flagging while fewer than m records exist.
  void fill(StepState& state) const;

 private:
  int m_ = 0;
  int feature_dim_ = 0;
  std::deque<StepRecord> records_;
};

// Centered, translation-invariant quadrature encoding: features are
// (f(x2) - f(x1), f(x3) - f(x1)) for the equally spaced triple of the step.
StepState encode_quadrature(double h, const std::array<double, 3>& f_vals,
                            const MemoryBuffer& memory);

// ODE encoding: all RK stages flattened stage-major into the feature vector.
StepState encode_ode(double h, const std::vector<std::vector<double>>& stages,
                     const MemoryBuffer& memory);

// Flat network input: (h, features, then each memory record).
int input_dim(int feature_dim, int memory_m);
Eigen::VectorXd to_input(const StepState& s);

// Per-component affine standardization fit on observed inputs; identity until
// fitted. Components with vanishing spread keep scale one.
class InputNormalizer {
 public:
  void fit(const Eigen::MatrixXd& inputs);  // columns are samples
  bool fitted() const { return fitted_; }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;

  nlohmann::json to_json() const;
  static InputNormalizer from_json(const nlohmann::json& j);

 private:
  bool fitted_ = false;
  Eigen::VectorXd mean_;
  Eigen::VectorXd scale_;
};

// ---------------------------------------------------------------------------
// The learner
// ---------------------------------------------------------------------------

// Picks the best-ranked action with probability alpha and the second best
// with probability 1 - alpha (greedy when explore is false or there is only
// one action). Requires 0.5 <= alpha <= 1 when exploring.
int select_from_q(const Eigen::VectorXd& q, bool explore, double alpha, RngStream& rng);

struct BaseLearner {
  neural::Mlp net;
  ActionSet actions;
  int memory_m = 0;
  int feature_dim = 0;
  std::string problem_kind;  // "quadrature" or "ode"
  RewardConfig reward_cfg;   // training-time metadata
  double gamma = 0.0;        // training-time metadata
  InputNormalizer norm;

  Eigen::VectorXd q_values(const StepState& s) const;
  int greedy(const StepState& s) const;
  int select(const StepState& s, bool explore, double alpha, RngStream& rng) const;
  double propose_step(const StepState& s) const { return actions.step_sizes[greedy(s)]; }

  void save(const std::string& path, const neural::AdamState* adam = nullptr) const;
  static BaseLearner load(const std::string& path, neural::AdamState* adam = nullptr,
                          bool* has_adam = nullptr);
};

// JSON layout shared by files and embedded documents.
nlohmann::json learner_to_json(const BaseLearner& learner, const neural::AdamState* adam = nullptr);
BaseLearner learner_from_json(const nlohmann::json& j, neural::AdamState* adam = nullptr,
                              bool* has_adam = nullptr);

// One-step training target: r + gamma * max_a Q(next, a); plain r on terminal
// transitions or when gamma is zero.
double q_target(double reward, const StepState& next_state, const BaseLearner& learner,
                double gamma, bool terminal);

// ---------------------------------------------------------------------------
// Environments
// ---------------------------------------------------------------------------

struct Transition {
  StepState state;
  int action = 0;
  double reward = 0.0;
  StepState next_state;
  bool terminal = false;
  bool clamped = false;  // executed step shortened to land on the domain end
  double eps = 0.0;      // local error of the executed step vs the oracle
  double h_executed = 0.0;
  double position = 0.0;     // x (quadrature) or t (ODE) after the step
  long long step_evals = 0;  // function evaluations consumed by this step
};

class Env {
 public:
  virtual ~Env() = default;

  virtual int num_actions() const = 0;
  virtual int feature_dim() const = 0;
  virtual int memory_m() const = 0;
  virtual const ActionSet& actions() const = 0;
  virtual const RewardConfig& reward_config() const = 0;
  virtual std::string kind() const = 0;  // "quadrature" or "ode"

  // Starts a new episode and returns the warm-up state (built from one probe
  // step with the smallest action).
  virtual const StepState& reset(RngStream& rng) = 0;

  // Executes one chosen step size; apply(i) uses the i-th action. Dispatching
  // environments reinterpret the index instead.
  virtual Transition apply_h(double h) = 0;
  virtual Transition apply(int action);

  virtual const StepState& state() const = 0;
  virtual bool done() const = 0;
  virtual long long episode_evals() const = 0;  // including warm-up
  virtual double position() const = 0;
  virtual double episode_start() const = 0;  // position where the episode began
};

struct QuadratureEnvConfig {
  problems::FunctionClassSpec function_class;
  ActionSet actions;
  RewardConfig reward;
  int memory_m = 0;
  // When set, every episode integrates this function instead of sampling.
  std::optional<problems::SampledFunction> fixed_function;
};

// Quadrature stepping: each step spans [x, x + 2h] with nodes (x, x+h, x+2h),
// integrated by the three-point panel rule. The left node is shared with the
// previous step, so a step costs 2 evaluations (warm-up costs 3). The local
// error is measured against the class's closed-form integral of the panel.
class QuadratureEnv : public Env {
 public:
  explicit QuadratureEnv(QuadratureEnvConfig cfg);

  int num_actions() const override { return cfg_.actions.size(); }
  int feature_dim() const override { return 2; }
  int memory_m() const override { return cfg_.memory_m; }
  const ActionSet& actions() const override { return cfg_.actions; }
  const RewardConfig& reward_config() const override { return cfg_.reward; }
  std::string kind() const override { return "quadrature"; }

  const StepState& reset(RngStream& rng) override;
  // Starts an episode on a fixed, caller-supplied function instead.
  const StepState& reset_with(const problems::SampledFunction& f);

  Transition apply_h(double h) override;
  const StepState& state() const override { return state_; }
  bool done() const override;
  long long episode_evals() const override { return evals_; }
  double position() const override { return x_; }
  double episode_start() const override { return f_.domain_a; }

  double integral() const { return integral_; }  // accumulated panel sum
  const problems::SampledFunction& function() const { return f_; }

 private:
  void start_episode();

  QuadratureEnvConfig cfg_;
  problems::SampledFunction f_;
  double x_ = 0.0;
  double f_right_ = 0.0;  // cached evaluation at the shared node
  double integral_ = 0.0;
  long long evals_ = 0;
  bool active_ = false;
  bool failed_ = false;
  StepState state_;
  MemoryBuffer mem_;
};

struct OdeEnvConfig {
  problems::OdeSystem system;
  ActionSet actions;
  RewardConfig reward;
  int memory_m = 0;
  double t0 = 0.0;
  double t1 = 200.0;
  // Episode window length; 0 means the full horizon. With continue_trajectory
  // set, consecutive episodes pick up where the previous one ended and wrap
  // back to (t0, x0) at the horizon end.
  double episode_span = 0.0;
  bool continue_trajectory = false;
  // 0 -> actions.h_max(); overridden by the dispatcher when proposals can
  // exceed the action set.
  double reward_h_max = 0.0;
  problems::OracleOptions oracle;
};

// Explicit RK stepping without a rejection mechanism: the chosen h is always
// executed. Local error is the plain RMS distance between the 5th-order
// update and the reference oracle restarted from the current point. Stage
// reuse (first-same-as-last) applies only to single-mode systems, so a step
// costs 6 evaluations there and 7 on switching systems; warm-up costs 7.
class OdeEnv : public Env {
 public:
  explicit OdeEnv(OdeEnvConfig cfg);

  int num_actions() const override { return cfg_.actions.size(); }
  int feature_dim() const override;
  int memory_m() const override { return cfg_.memory_m; }
  const ActionSet& actions() const override { return cfg_.actions; }
  const RewardConfig& reward_config() const override { return cfg_.reward; }
  std::string kind() const override { return "ode"; }

  const StepState& reset(RngStream& rng) override;
  // Starts an episode from a caller-supplied point instead.
  const StepState& reset_from(double t, const std::vector<double>& x,
                              problems::HybridState hybrid = {});

  Transition apply_h(double h) override;
  const StepState& state() const override { return state_; }
  bool done() const override;
  long long episode_evals() const override { return evals_; }
  double position() const override { return t_; }
  double episode_start() const override { return episode_start_; }

  const std::vector<double>& x() const { return x_; }
  const problems::HybridState& hybrid_state() const { return hybrid_; }
  double episode_end() const { return episode_end_; }
  // Oracle switch events observed during executed steps of the episode.
  const std::vector<problems::SwitchEvent>& observed_switches() const { return switches_; }

 private:
  void warm_up();

  OdeEnvConfig cfg_;
  double t_ = 0.0;
  std::vector<double> x_;
  problems::HybridState hybrid_;
  double episode_start_ = 0.0;
  double episode_end_ = 0.0;
  bool have_position_ = false;  // continuation point valid
  std::vector<double> k1_;      // stage reuse for single-mode systems
  bool k1_valid_ = false;
  long long evals_ = 0;
  bool active_ = false;
  bool failed_ = false;
  StepState state_;
  MemoryBuffer mem_;
  std::vector<problems::SwitchEvent> switches_;
};

// ---------------------------------------------------------------------------
// Episodes, training, rollout
// ---------------------------------------------------------------------------

struct ExploreConfig {
  bool explore = true;
  double alpha = 0.8;
};

std::vector<Transition> run_episode(Env& env, const BaseLearner& learner,
                                    const ExploreConfig& explore, RngStream& rng);

// Builds one training batch from logged transitions: normalized inputs as
// columns, chosen action ids, one-step targets. Clamped transitions are
// skipped. Returns the batch size.
int build_batch(const std::vector<Transition>& transitions, const BaseLearner& learner,
                double gamma, Eigen::MatrixXd& X, std::vector<int>& actions,
                Eigen::VectorXd& targets);

struct TrainLogRow {
  int episode = 0;
  double mean_reward = 0.0;
  double loss = 0.0;
  double evals_per_unit = 0.0;
  double avg_error = 0.0;
};

struct TrainConfig {
  int max_episodes = 400;
  int updates_per_episode = 20;
  int minibatch = 64;  // 0 -> full episode batch
  double gamma = 0.0;
  double alpha = 0.8;  // exploration probability of the top action
  neural::MlpSpec net;  // input_dim/output_dim filled from the environment
  neural::AdamConfig adam;
  int normalizer_episodes = 5;  // episodes collected before fitting the input scaling
  double convergence_rel = 0.01;
  int convergence_window = 50;
  int convergence_gap = 100;
};

struct TrainResult {
  BaseLearner learner;
  neural::AdamState adam;
  std::vector<TrainLogRow> log;
  bool converged = false;
  bool diverged = false;  // non-finite loss; learner holds the last good state
  int episodes_run = 0;
};

TrainResult train_base_learner(Env& env, const TrainConfig& cfg, RngStream& rng);

// ---------------------------------------------------------------------------
// Greedy evaluation
// ---------------------------------------------------------------------------

struct TraceRow {
  double position = 0.0;  // x or t after the step
  double h = 0.0;
  int action = 0;
  double eps = 0.0;
  double reward = 0.0;
  bool violation = false;  // eps >= tol
  bool clamped = false;
};

struct RolloutResult {
  double final_position = 0.0;
  double integral = 0.0;              // quadrature envs
  std::vector<double> final_state;    // ODE envs
  long long evaluations = 0;          // episode total including warm-up
  long long steps = 0;                // transitions taken (warm-up excluded)
  double avg_error = 0.0;             // mean local error per step
  double max_error = 0.0;
  double evals_per_unit = 0.0;        // evaluations / covered span
  long long violations = 0;
  std::vector<TraceRow> trace;
};

// Greedy policy rollout over one episode of the environment.
RolloutResult rollout(Env& env, const BaseLearner& learner, RngStream& rng, bool keep_trace = true);

// Same, but on an environment the caller has already reset (e.g. onto a fixed
// function or a custom initial state).
RolloutResult rollout_from_current(Env& env, const BaseLearner& learner, bool keep_trace = true);

}  // namespace steprl::rl
