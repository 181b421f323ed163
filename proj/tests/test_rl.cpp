#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "steprl/ode.hpp"
#include "steprl/problems.hpp"
#include "steprl/rl.hpp"

using namespace steprl;
using namespace steprl::rl;

namespace {

ActionSet quad_actions() { return ActionSet{{0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.75}}; }

// Learner whose network ignores its input and always ranks `top` first: zero
// weights everywhere, output biases descending from the chosen index.
BaseLearner constant_policy_learner(int feature_dim, int memory_m, const ActionSet& actions,
                                    int top, const RewardConfig& rcfg) {
  BaseLearner lr;
  neural::MlpSpec spec;
  spec.input_dim = input_dim(feature_dim, memory_m);
  spec.output_dim = actions.size();
  spec.hidden_layers = 1;
  spec.hidden_width = 4;
  RngStream rng(99);
  lr.net = neural::Mlp(spec, rng);
  for (auto& W : lr.net.weights()) W.setZero();
  for (auto& b : lr.net.biases()) b.setZero();
  auto& out_bias = lr.net.biases().back();
  out_bias[top] = 1.0;
  lr.actions = actions;
  lr.feature_dim = feature_dim;
  lr.memory_m = memory_m;
  lr.reward_cfg = rcfg;
  return lr;
}

}  // namespace

TEST_SUITE("rl") {

TEST_CASE("action sets validate ordering and positivity") {
  CHECK_NOTHROW(quad_actions().validate());
  CHECK(quad_actions().h_max() == 0.75);
  CHECK(quad_actions().smallest() == 0.05);
  const ActionSet empty{{}};
  const ActionSet dup{{0.1, 0.1}};
  const ActionSet reversed{{0.2, 0.1}};
  const ActionSet negative{{-0.1, 0.2}};
  CHECK_THROWS_AS(empty.validate(), usage_error);
  CHECK_THROWS_AS(dup.validate(), usage_error);
  CHECK_THROWS_AS(reversed.validate(), usage_error);
  CHECK_THROWS_AS(negative.validate(), usage_error);
}

TEST_CASE("reward calibration solves r(tol)=0 and r(2 tol)=-1") {
  const double tol = 5e-4;
  for (auto kind : {RewardKind::Piecewise, RewardKind::Continuous, RewardKind::Log}) {
    const RewardConfig cfg = RewardConfig::calibrated(kind, tol, 3.0);
    CHECK(cfg.a == doctest::Approx(4.5).epsilon(1e-12));
    CHECK(cfg.b == doctest::Approx(std::log(1.5) / tol).epsilon(1e-12));
    // The penalty curve itself, independent of the variant wrapping:
    CHECK(cfg.a * std::exp(-cfg.b * tol) - cfg.L == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cfg.a * std::exp(-cfg.b * 2.0 * tol) - cfg.L == doctest::Approx(-1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(RewardConfig::calibrated(RewardKind::Piecewise, -1.0, 3.0), usage_error);
  CHECK_THROWS_AS(RewardConfig::calibrated(RewardKind::Piecewise, 1e-4, 1.0), usage_error);
}

TEST_CASE("reward frozen values") {
  const RewardConfig cfg = RewardConfig::calibrated(RewardKind::Piecewise, 1e-3, 3.0);
  // Accurate step: reward is the step-size fraction.
  CHECK(reward(cfg, 5e-4, 0.2, 0.75) == doctest::Approx(0.2 / 0.75).epsilon(1e-12));
  CHECK(reward(cfg, 5e-4, 0.2, 0.75) == doctest::Approx(0.266666666666667).epsilon(1e-10));
  // Exactly zero error counts as accurate.
  CHECK(reward(cfg, 0.0, 0.3, 0.75) == doctest::Approx(0.4).epsilon(1e-12));
  // Penalty branch at the calibration points.
  CHECK(reward(cfg, 1e-3, 0.2, 0.75) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(reward(cfg, 2e-3, 0.2, 0.75) == doctest::Approx(-1.0).epsilon(1e-12));

  const RewardConfig lg = RewardConfig::calibrated(RewardKind::Log, 1e-3, 3.0);
  CHECK(reward(lg, 100.0 * lg.tol, 0.3, 0.75) == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(reward(lg, 5e-4, 0.3, 0.75) == doctest::Approx(0.4).epsilon(1e-12));

  const RewardConfig ct = RewardConfig::calibrated(RewardKind::Continuous, 1e-3, 3.0);
  CHECK(reward(ct, 1e-3, 0.2, 0.75) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(reward(ct, 2e-3, 0.2, 0.75) == doctest::Approx(-0.2 / 0.75).epsilon(1e-12));
}

TEST_CASE("reward monotonicity and bounds") {
  const double tol = 1e-4;
  for (auto kind : {RewardKind::Piecewise, RewardKind::Continuous, RewardKind::Log}) {
    const RewardConfig cfg = RewardConfig::calibrated(kind, tol, 3.0);
    // Strictly decreasing while the exponential is representable, then
    // non-increasing all the way into the saturated tail.
    double prev = reward(cfg, tol, 0.3, 0.75);
    for (double eps = 1.5 * tol; eps < 100.0 * tol; eps *= 1.7) {
      const double r = reward(cfg, eps, 0.3, 0.75);
      CHECK(r < prev);
      prev = r;
    }
    CHECK(reward(cfg, 1e6 * tol, 0.3, 0.75) <= reward(cfg, 100.0 * tol, 0.3, 0.75));
  }
  const RewardConfig pw = RewardConfig::calibrated(RewardKind::Piecewise, tol, 3.0);
  const RewardConfig lg = RewardConfig::calibrated(RewardKind::Log, tol, 3.0);
  for (double h : {0.05, 0.2, 0.5, 0.75}) {
    CHECK(reward(pw, 0.5 * tol, h, 0.75) <= 1.0);
    CHECK(reward(lg, 0.5 * tol, h, 0.75) <= 1.0);
    // The penalty asymptote is approached from above and never crossed.
    CHECK(reward(pw, 50.0 * tol, h, 0.75) > -3.0);
    CHECK(reward(pw, 1e12, h, 0.75) >= -3.0);
    CHECK(reward(pw, 1e12, h, 0.75) == doctest::Approx(-3.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(reward(pw, 1e-5, -0.1, 0.75), usage_error);
  CHECK_THROWS_AS(reward(pw, -1.0, 0.1, 0.75), usage_error);
}

TEST_CASE("quadrature encoding is translation invariant") {
  MemoryBuffer mem(0, 2);
  const StepState s1 = encode_quadrature(0.2, {1.0, 1.5, 0.25}, mem);
  const StepState s2 = encode_quadrature(0.2, {8.0, 8.5, 7.25}, mem);  // all values + 7
  CHECK((s1.features == s2.features));
  CHECK(s1.features[0] == 0.5);
  CHECK(s1.features[1] == -0.75);
  CHECK(s1.h == 0.2);
  CHECK(s1.memory.empty());
  CHECK_FALSE(s1.memory_padded);
}

TEST_CASE("ode encoding flattens stages stage-major") {
  MemoryBuffer mem(0, 6);
  const std::vector<std::vector<double>> stages = {{1, 2}, {3, 4}, {5, 6}};
  const StepState s = encode_ode(0.1, stages, mem);
  CHECK((s.features == std::vector<double>{1, 2, 3, 4, 5, 6}));
  const Eigen::VectorXd x = to_input(s);
  REQUIRE(x.size() == 7);
  CHECK(x[0] == 0.1);
  CHECK(x[3] == 3.0);
  MemoryBuffer bad(0, 5);
  CHECK_THROWS_AS(encode_ode(0.1, stages, bad), usage_error);
}

TEST_CASE("memory buffer keeps the last m records, newest first, zero-padded") {
  MemoryBuffer mem(2, 2);
  StepState s = encode_quadrature(0.1, {0.0, 1.0, 2.0}, mem);
  REQUIRE(s.memory.size() == 2);
  CHECK(s.memory_padded);
  CHECK(s.memory[0].h == 0.0);
  CHECK((s.memory[0].features == std::vector<double>{0.0, 0.0}));

  mem.push(0.1, {1.0, 2.0});
  s = encode_quadrature(0.2, {0.0, 3.0, 4.0}, mem);
  CHECK(s.memory_padded);
  CHECK(s.memory[0].h == 0.1);
  CHECK((s.memory[0].features == std::vector<double>{1.0, 2.0}));
  CHECK(s.memory[1].h == 0.0);

  mem.push(0.2, {3.0, 4.0});
  mem.push(0.3, {5.0, 6.0});
  s = encode_quadrature(0.4, {0.0, 0.0, 0.0}, mem);
  CHECK_FALSE(s.memory_padded);
  CHECK(s.memory[0].h == 0.3);  // newest first
  CHECK(s.memory[1].h == 0.2);  // the oldest record dropped

  CHECK(input_dim(2, 2) == 9);
  const Eigen::VectorXd x = to_input(s);
  REQUIRE(x.size() == 9);
  CHECK(x[0] == 0.4);
  CHECK(x[3] == 0.3);
  CHECK(x[4] == 5.0);
  CHECK(x[6] == 0.2);
}

TEST_CASE("input normalizer standardizes and round-trips through JSON") {
  Eigen::MatrixXd inputs(2, 4);
  inputs << 1.0, 3.0, 5.0, 7.0,  //
      2.0, 2.0, 2.0, 2.0;        // constant row keeps scale one
  InputNormalizer norm;
  CHECK_FALSE(norm.fitted());
  Eigen::VectorXd probe(2);
  probe << 9.0, 5.0;
  CHECK(norm.apply(probe) == probe);  // identity until fitted

  norm.fit(inputs);
  CHECK(norm.fitted());
  const Eigen::VectorXd z = norm.apply(probe);
  CHECK(z[0] == doctest::Approx((9.0 - 4.0) / std::sqrt(5.0)).epsilon(1e-12));
  CHECK(z[1] == doctest::Approx(3.0).epsilon(1e-12));  // (5 - 2) / 1

  const InputNormalizer back = InputNormalizer::from_json(norm.to_json());
  CHECK(back.apply(probe) == norm.apply(probe));
}

TEST_CASE("action selection follows the two-candidate exploration rule") {
  Eigen::VectorXd q(4);
  q << 0.1, 0.9, 0.4, 0.7;
  RngStream rng(2024);
  CHECK(select_from_q(q, false, 0.7, rng) == 1);

  int count_best = 0, count_second = 0, count_other = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const int a = select_from_q(q, true, 0.7, rng);
    if (a == 1) ++count_best;
    else if (a == 3) ++count_second;
    else ++count_other;
  }
  CHECK(count_other == 0);
  CHECK(std::abs(count_best / static_cast<double>(draws) - 0.7) < 0.02);
  CHECK(std::abs(count_second / static_cast<double>(draws) - 0.3) < 0.02);

  // alpha = 1 is exactly greedy.
  for (int i = 0; i < 100; ++i) CHECK(select_from_q(q, true, 1.0, rng) == 1);

  Eigen::VectorXd single(1);
  single << 0.5;
  CHECK(select_from_q(single, true, 0.7, rng) == 0);
  CHECK_THROWS_AS(select_from_q(q, true, 0.4, rng), usage_error);
  CHECK_THROWS_AS(select_from_q(q, true, 1.2, rng), usage_error);
}

TEST_CASE("q_target reduces to the reward at gamma zero and on terminal steps") {
  const RewardConfig rcfg = RewardConfig::calibrated(RewardKind::Piecewise, 1e-3, 3.0);
  BaseLearner lr = constant_policy_learner(2, 0, quad_actions(), 3, rcfg);
  auto& bias = lr.net.biases().back();
  bias.setZero();
  bias[2] = 0.4;
  bias[5] = 0.1;  // max Q == 0.4 for every state

  MemoryBuffer mem(0, 2);
  const StepState next = encode_quadrature(0.2, {0.0, 1.0, 2.0}, mem);
  CHECK(q_target(0.25, next, lr, 0.0, false) == 0.25);
  CHECK(q_target(0.25, next, lr, 0.9, true) == 0.25);
  CHECK(q_target(0.2, next, lr, 0.5, false) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(q_target(0.2, next, lr, 0.9, false) == doctest::Approx(0.2 + 0.9 * 0.4).epsilon(1e-12));
}

TEST_CASE("quadrature episode matches the step-count ledger") {
  QuadratureEnvConfig cfg;
  cfg.actions = quad_actions();
  cfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 5e-4, 3.0);
  cfg.fixed_function = problems::make_single_sine(1.0, 1.0, 0.0, 0.0, 20.0);
  QuadratureEnv env(cfg);

  BaseLearner lr = constant_policy_learner(2, 0, cfg.actions, 3, cfg.reward);  // always h = 0.2
  RngStream rng(7);
  const auto transitions = run_episode(env, lr, ExploreConfig{false, 1.0}, rng);

  // Warm-up covers [0, 0.1] with the smallest action; 49 full steps of width
  // 0.4 then one clamped remainder step reach exactly 20.
  REQUIRE(transitions.size() == 50);
  CHECK(transitions.front().state.h == 0.05);
  for (std::size_t i = 0; i + 1 < transitions.size(); ++i) {
    CHECK(transitions[i].h_executed == 0.2);
    CHECK_FALSE(transitions[i].clamped);
    CHECK_FALSE(transitions[i].terminal);
  }
  const auto& last = transitions.back();
  CHECK(last.clamped);
  CHECK(last.terminal);
  CHECK(last.h_executed == doctest::Approx(0.15).epsilon(1e-9));
  CHECK(last.position == 20.0);
  CHECK(env.position() == 20.0);
  CHECK(env.episode_evals() == 3 + 2 * 50);

  // Chaining: every next_state is the following transition's state.
  for (std::size_t i = 0; i + 1 < transitions.size(); ++i) {
    const Eigen::VectorXd a = to_input(transitions[i].next_state);
    const Eigen::VectorXd b = to_input(transitions[i + 1].state);
    REQUIRE(a.size() == b.size());
    CHECK(a == b);
  }

  // The accumulated panel sum is the composite three-point rule's value.
  CHECK(env.integral() == doctest::Approx(1.0 - std::cos(20.0)).epsilon(2e-5));
}

TEST_CASE("flat integrands earn the pure step-fraction reward") {
  QuadratureEnvConfig cfg;
  cfg.actions = quad_actions();
  cfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 5e-4, 3.0);
  const std::vector<double> zero{0.0};
  cfg.fixed_function = problems::make_poly(zero, 0.0, 10.0);
  QuadratureEnv env(cfg);

  BaseLearner lr = constant_policy_learner(2, 0, cfg.actions, 4, cfg.reward);  // h = 0.3
  RngStream rng(7);
  const auto transitions = run_episode(env, lr, ExploreConfig{false, 1.0}, rng);
  REQUIRE(!transitions.empty());
  for (const auto& tr : transitions) {
    if (tr.clamped) continue;
    CHECK(tr.eps == 0.0);
    CHECK(tr.reward == doctest::Approx(0.3 / 0.75).epsilon(1e-12));
  }
  CHECK(env.integral() == 0.0);
}

TEST_CASE("greedy policy is invariant under constant shifts of the integrand") {
  QuadratureEnvConfig cfg;
  cfg.actions = quad_actions();
  cfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 5e-4, 3.0);

  RngStream net_rng(31);
  neural::MlpSpec spec;
  spec.input_dim = input_dim(2, 0);
  spec.output_dim = cfg.actions.size();
  BaseLearner lr;
  lr.net = neural::Mlp(spec, net_rng);  // arbitrary untrained network
  lr.actions = cfg.actions;
  lr.feature_dim = 2;
  lr.memory_m = 0;
  lr.reward_cfg = cfg.reward;

  const std::vector<double> c0{0.3, -0.2, 0.05};  // smooth cubic-free polynomial
  const std::vector<double> c7{7.3, -0.2, 0.05};  // the same shape shifted by 7
  cfg.fixed_function = problems::make_poly(c0, 0.0, 6.0);
  QuadratureEnv env_a(cfg);
  cfg.fixed_function = problems::make_poly(c7, 0.0, 6.0);
  QuadratureEnv env_b(cfg);

  RngStream rng(3);
  const RolloutResult ra = rollout(env_a, lr, rng);
  const RolloutResult rb = rollout(env_b, lr, rng);
  REQUIRE(ra.trace.size() == rb.trace.size());
  for (std::size_t i = 0; i < ra.trace.size(); ++i) {
    CHECK(ra.trace[i].h == rb.trace[i].h);
    CHECK(ra.trace[i].action == rb.trace[i].action);
  }
  CHECK(rb.integral == doctest::Approx(ra.integral + 7.0 * 6.0).epsilon(1e-12));
}

TEST_CASE("gamma-zero batches collapse to plain reward regression") {
  QuadratureEnvConfig cfg;
  cfg.actions = quad_actions();
  cfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 5e-4, 3.0);
  cfg.fixed_function = problems::make_single_sine(0.8, 1.3, 0.4, 0.0, 12.0);
  QuadratureEnv env(cfg);
  BaseLearner lr = constant_policy_learner(2, 0, cfg.actions, 2, cfg.reward);
  RngStream rng(11);
  const auto transitions = run_episode(env, lr, ExploreConfig{true, 0.8}, rng);

  Eigen::MatrixXd X;
  std::vector<int> actions;
  Eigen::VectorXd targets;
  const int B = build_batch(transitions, lr, 0.0, X, actions, targets);
  int expected = 0;
  for (const auto& tr : transitions) {
    if (!tr.clamped) ++expected;
  }
  REQUIRE(B == expected);
  int i = 0;
  for (const auto& tr : transitions) {
    if (tr.clamped) continue;
    CHECK(targets[i] == tr.reward);  // exact identity, not approximate
    CHECK(actions[static_cast<std::size_t>(i)] == tr.action);
    ++i;
  }
}

TEST_CASE("lorenz environment counts evaluations and tracks the oracle") {
  OdeEnvConfig cfg;
  cfg.system = problems::OdeSystem::lorenz();
  cfg.actions = ActionSet{{0.025, 0.029, 0.033, 0.039, 0.045, 0.052, 0.060, 0.070}};
  cfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 1e-4, 3.0);
  cfg.t0 = 0.0;
  cfg.t1 = 200.0;
  cfg.episode_span = 0.5;
  OdeEnv env(cfg);

  RngStream rng(5);
  const StepState& s0 = env.reset(rng);
  CHECK(env.episode_evals() == 7);  // warm-up step computes every stage
  CHECK(s0.h == 0.025);
  REQUIRE(s0.features.size() == 21);
  // First stage is the derivative at the initial point (10, 10, 10).
  CHECK(s0.features[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s0.features[1] == doctest::Approx(170.0).epsilon(1e-12));
  CHECK(s0.features[2] == doctest::Approx(100.0 - 80.0 / 3.0).epsilon(1e-12));

  const Transition tr = env.apply(0);
  CHECK(tr.step_evals == 6);  // the first stage is reused from the previous step
  CHECK(tr.eps < 1e-4);       // tiny step on a smooth system
  CHECK(tr.position == doctest::Approx(0.05).epsilon(1e-12));
  CHECK_FALSE(tr.clamped);

  // Greedy run to the window end lands exactly on it, final step clamped.
  BaseLearner lr = constant_policy_learner(21, 0, cfg.actions, 7, cfg.reward);  // h = 0.07
  OdeEnv env2(cfg);
  const auto transitions = run_episode(env2, lr, ExploreConfig{false, 1.0}, rng);
  REQUIRE(!transitions.empty());
  CHECK(env2.position() == 0.5);
  CHECK(transitions.back().terminal);
  CHECK(transitions.back().clamped);
  long long evals = 7;
  for (const auto& t : transitions) evals += t.step_evals;
  CHECK(evals == env2.episode_evals());
}

TEST_CASE("episodes continue along the trajectory when configured") {
  OdeEnvConfig cfg;
  cfg.system = problems::OdeSystem::lorenz();
  cfg.actions = ActionSet{{0.025, 0.029, 0.033, 0.039, 0.045, 0.052, 0.060, 0.070}};
  cfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 1e-4, 3.0);
  cfg.t0 = 0.0;
  cfg.t1 = 200.0;
  cfg.episode_span = 0.4;
  cfg.continue_trajectory = true;
  OdeEnv env(cfg);
  BaseLearner lr = constant_policy_learner(21, 0, cfg.actions, 0, cfg.reward);
  RngStream rng(6);

  run_episode(env, lr, ExploreConfig{false, 1.0}, rng);
  CHECK(env.position() == 0.4);
  const std::vector<double> x_end = env.x();

  env.reset(rng);
  CHECK(env.episode_start() == 0.4);
  CHECK(env.episode_end() == doctest::Approx(0.8).epsilon(1e-12));

  // Without the flag every episode restarts at the initial point.
  cfg.continue_trajectory = false;
  OdeEnv env2(cfg);
  run_episode(env2, lr, ExploreConfig{false, 1.0}, rng);
  env2.reset(rng);
  CHECK(env2.episode_start() == 0.0);
  CHECK((env2.x() != x_end));
}

TEST_CASE("switching system steps pay full stage cost and report events") {
  OdeEnvConfig cfg;
  cfg.system = problems::OdeSystem::hybrid_pendulum();
  cfg.actions = ActionSet{{0.25, 0.27, 0.29, 0.31, 0.33, 0.36, 0.39, 0.42, 0.45, 0.48}};
  cfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 1e-5, 3.0);
  cfg.t0 = 0.0;
  cfg.t1 = 40.0;
  OdeEnv env(cfg);
  RngStream rng(8);
  env.reset(rng);
  CHECK(env.episode_evals() == 7);
  const Transition tr = env.apply(0);
  CHECK(tr.step_evals == 7);  // no stage reuse across mode switches
  CHECK(tr.eps < 1e-4);

  // Crossing the decay threshold records the switch and flips the mode.
  const double t_switch = std::log(std::sqrt(2.0) / 0.05) / 0.2;
  const auto seg = problems::oracle_integrate(cfg.system, 0.0, cfg.system.x0, t_switch - 0.05);
  REQUIRE(seg.end_state.mode == 1);
  OdeEnv env2(cfg);
  env2.reset_from(t_switch - 0.05, seg.x_end, seg.end_state);
  // Warm-up covers 0.25 which already crosses the switch time.
  REQUIRE(env2.observed_switches().size() == 1);
  CHECK(env2.observed_switches()[0].t == doctest::Approx(t_switch).epsilon(1e-6));
  CHECK(env2.hybrid_state().mode == 2);
  CHECK(env2.hybrid_state().t_anchor == doctest::Approx(t_switch).epsilon(1e-6));
}

TEST_CASE("non-finite states terminate the episode with the penalty floor") {
  OdeEnvConfig cfg;
  cfg.system = problems::OdeSystem::lorenz();
  cfg.actions = ActionSet{{0.025, 0.07}};
  cfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 1e-4, 3.0);
  cfg.t1 = 1e12;  // horizon long enough that the oversized probe step is not clamped
  OdeEnv env(cfg);
  RngStream rng(9);
  env.reset(rng);
  const std::vector<double> x_before = env.x();
  const Transition tr = env.apply_h(1e8);  // blows up through the quadratic terms
  CHECK(tr.terminal);
  CHECK(tr.eps == 1e300);
  CHECK(tr.reward == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(env.done());
  CHECK((env.x() == x_before));  // the failed update is not committed
}

TEST_CASE("training on a flat-reward task regresses Q onto the step fractions") {
  QuadratureEnvConfig ecfg;
  ecfg.actions = ActionSet{{0.15, 0.3, 0.45, 0.6}};
  ecfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 5e-4, 3.0);
  const std::vector<double> zero{0.0};
  ecfg.fixed_function = problems::make_poly(zero, 0.0, 3.0);
  QuadratureEnv env(ecfg);

  TrainConfig tcfg;
  tcfg.max_episodes = 150;
  tcfg.updates_per_episode = 60;
  tcfg.minibatch = 0;
  tcfg.gamma = 0.0;
  tcfg.alpha = 0.7;
  tcfg.adam.lr = 5e-3;
  tcfg.normalizer_episodes = 3;
  tcfg.convergence_window = 10;
  tcfg.convergence_gap = 30;
  RngStream rng(42);
  const TrainResult res = train_base_learner(env, tcfg, rng);

  CHECK(res.converged);
  CHECK_FALSE(res.diverged);
  CHECK(res.episodes_run == static_cast<int>(res.log.size()));
  CHECK(res.learner.norm.fitted());

  // On the flat integrand every state sees reward h/h_max per action. The
  // exploration rule only ever visits the top two ranked actions, so the
  // greedy action and whichever action holds the runner-up slot must both
  // regress onto their true step fractions.
  RngStream probe_rng(43);
  env.reset(probe_rng);
  const Eigen::VectorXd q = res.learner.q_values(env.state());
  CHECK(res.learner.greedy(env.state()) == 3);
  CHECK(q[3] == doctest::Approx(1.0).epsilon(0.02));
  int runner_up = -1;
  for (int i = 0; i < 3; ++i) {
    if (runner_up < 0 || q[i] > q[runner_up]) runner_up = i;
  }
  const double truth = ecfg.actions.step_sizes[static_cast<std::size_t>(runner_up)] / 0.6;
  CHECK(q[runner_up] == doctest::Approx(truth).epsilon(0.05));

  // The training log carries reward and cost diagnostics. With the policy
  // locked, every step earns either 1.0 (best) or 0.75 (runner-up).
  REQUIRE(!res.log.empty());
  const auto& tail = res.log.back();
  CHECK(tail.mean_reward >= 0.75);
  CHECK(tail.mean_reward <= 1.0);
  CHECK(tail.evals_per_unit > 0.0);
  CHECK(tail.avg_error == 0.0);
}

TEST_CASE("zero-episode budget returns unconverged immediately") {
  QuadratureEnvConfig ecfg;
  ecfg.actions = ActionSet{{0.15, 0.3}};
  ecfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 5e-4, 3.0);
  const std::vector<double> zero{0.0};
  ecfg.fixed_function = problems::make_poly(zero, 0.0, 3.0);
  QuadratureEnv env(ecfg);
  TrainConfig tcfg;
  tcfg.max_episodes = 0;
  RngStream rng(1);
  const TrainResult res = train_base_learner(env, tcfg, rng);
  CHECK_FALSE(res.converged);
  CHECK_FALSE(res.diverged);
  CHECK(res.episodes_run == 0);
  CHECK(res.log.empty());
}

TEST_CASE("learner checkpoints round-trip exactly") {
  const RewardConfig rcfg = RewardConfig::calibrated(RewardKind::Log, 7.5e-6, 3.0);
  BaseLearner lr;
  neural::MlpSpec spec;
  spec.input_dim = input_dim(2, 1);
  spec.output_dim = 4;
  spec.hidden_layers = 2;
  spec.hidden_width = 6;
  RngStream rng(77);
  lr.net = neural::Mlp(spec, rng);
  lr.actions = ActionSet{{0.05, 0.1, 0.2, 0.4}};
  lr.memory_m = 1;
  lr.feature_dim = 2;
  lr.problem_kind = "quadrature";
  lr.reward_cfg = rcfg;
  lr.gamma = 0.0;
  Eigen::MatrixXd pool = Eigen::MatrixXd::Random(spec.input_dim, 16);
  lr.norm.fit(pool);
  neural::AdamState adam(lr.net);
  adam.step = 12;
  adam.mW[0].setConstant(0.25);

  const std::string path = (std::filesystem::temp_directory_path() / "lr_ckpt.json").string();
  lr.save(path, &adam);

  neural::AdamState adam2;
  bool has_adam = false;
  const BaseLearner back = BaseLearner::load(path, &adam2, &has_adam);
  CHECK(has_adam);
  CHECK(adam2.step == 12);
  CHECK(adam2.mW[0] == adam.mW[0]);
  CHECK(back.problem_kind == "quadrature");
  CHECK((back.actions.step_sizes == lr.actions.step_sizes));
  CHECK(back.memory_m == 1);
  CHECK(back.feature_dim == 2);
  CHECK(back.gamma == 0.0);
  CHECK(back.reward_cfg.variant == RewardKind::Log);
  CHECK(back.reward_cfg.tol == rcfg.tol);
  CHECK(back.reward_cfg.b == rcfg.b);

  MemoryBuffer mem(1, 2);
  mem.push(0.1, {0.4, -0.2});
  const StepState s = encode_quadrature(0.2, {1.0, 0.5, -0.3}, mem);
  const Eigen::VectorXd qa = lr.q_values(s);
  const Eigen::VectorXd qb = back.q_values(s);
  CHECK(qa == qb);

  std::remove(path.c_str());
  CHECK_THROWS_AS(BaseLearner::load("/nonexistent/learner.json"), usage_error);
}

TEST_CASE("greedy rollouts are deterministic and fully traced") {
  QuadratureEnvConfig cfg;
  cfg.actions = quad_actions();
  cfg.reward = RewardConfig::calibrated(RewardKind::Piecewise, 5e-4, 3.0);
  cfg.fixed_function = problems::make_single_sine(1.0, 2.0, 0.3, 0.0, 20.0);

  RngStream net_rng(55);
  neural::MlpSpec spec;
  spec.input_dim = input_dim(2, 0);
  spec.output_dim = cfg.actions.size();
  BaseLearner lr;
  lr.net = neural::Mlp(spec, net_rng);
  lr.actions = cfg.actions;
  lr.feature_dim = 2;
  lr.memory_m = 0;
  lr.reward_cfg = cfg.reward;

  QuadratureEnv env_a(cfg);
  QuadratureEnv env_b(cfg);
  RngStream rng_a(1), rng_b(2);  // greedy rollouts ignore the stream
  const RolloutResult ra = rollout(env_a, lr, rng_a);
  const RolloutResult rb = rollout(env_b, lr, rng_b);
  REQUIRE(ra.steps == rb.steps);
  CHECK(ra.integral == rb.integral);
  CHECK(ra.evaluations == rb.evaluations);
  REQUIRE(ra.trace.size() == static_cast<std::size_t>(ra.steps));
  for (std::size_t i = 0; i < ra.trace.size(); ++i) {
    CHECK(ra.trace[i].h == rb.trace[i].h);
    CHECK(ra.trace[i].eps == rb.trace[i].eps);
  }
  CHECK(ra.final_position == 20.0);
  CHECK(ra.evals_per_unit == doctest::Approx(ra.evaluations / 20.0).epsilon(1e-12));
  for (const auto& row : ra.trace) {
    CHECK(row.violation == !(row.eps < cfg.reward.tol));
  }
}

}  // TEST_SUITE("rl")
