#pragma once

#include <string>
#include <vector>

#include "steprl/rl.hpp"

namespace steprl::meta {

// ---------------------------------------------------------------------------
// The learner pool
// ---------------------------------------------------------------------------

enum class LearnerKind { Trained, ConstantStep };

std::string learner_kind_name(LearnerKind k);

// One dispatchable step-size policy: either a trained controller proposing
// from its own action menu, or a fixed step size.
struct PoolEntry {
  LearnerKind kind = LearnerKind::ConstantStep;
  rl::BaseLearner learner;   // used when kind == Trained
  double constant_h = 0.0;   // used when kind == ConstantStep

  static PoolEntry trained(rl::BaseLearner lr);
  static PoolEntry constant(double h);

  double propose_step(const rl::StepState& s) const;
  double max_step() const;
  std::string label() const;  // "trained" or "constant:<h>"
};

struct LearnerPool {
  std::vector<PoolEntry> entries;

  int size() const { return static_cast<int>(entries.size()); }
  double max_proposable_step() const;
  void validate(int feature_dim, int memory_m) const;
};

// ---------------------------------------------------------------------------
// Dispatching environment
// ---------------------------------------------------------------------------

// Wraps a stepping environment so that an action is a pool index: apply(i)
// asks entry i to propose a step size for the current state and executes it
// on the wrapped environment. The returned transition is the wrapped
// environment's transition unchanged (same reward, same error), with the pool
// index as the action. The reward normalization uses the largest step any
// pool entry can propose unless the base config pins one explicitly.
class MetaEnv : public rl::Env {
 public:
  MetaEnv(rl::OdeEnvConfig base_cfg, LearnerPool pool);

  int num_actions() const override { return pool_.size(); }
  int feature_dim() const override { return base_.feature_dim(); }
  int memory_m() const override { return base_.memory_m(); }
  // Placeholder indices (1..n); dispatch goes through the pool instead.
  const rl::ActionSet& actions() const override { return placeholder_; }
  const rl::RewardConfig& reward_config() const override { return base_.reward_config(); }
  std::string kind() const override { return "meta"; }

  const rl::StepState& reset(RngStream& rng) override { return base_.reset(rng); }
  const rl::StepState& reset_from(double t, const std::vector<double>& x,
                                  problems::HybridState hybrid = {}) {
    return base_.reset_from(t, x, hybrid);
  }

  rl::Transition apply(int action) override;
  rl::Transition apply_h(double h) override { return base_.apply_h(h); }

  const rl::StepState& state() const override { return base_.state(); }
  bool done() const override { return base_.done(); }
  long long episode_evals() const override { return base_.episode_evals(); }
  double position() const override { return base_.position(); }
  double episode_start() const override { return base_.episode_start(); }

  const rl::OdeEnv& base() const { return base_; }
  const LearnerPool& pool() const { return pool_; }

 private:
  rl::OdeEnv base_;
  LearnerPool pool_;
  rl::ActionSet placeholder_;
};

// ---------------------------------------------------------------------------
// The dispatcher
// ---------------------------------------------------------------------------

// A value network over pool indices plus the pool it dispatches among. The
// selector sees exactly the same state encoding as the base learners.
struct MetaLearner {
  rl::BaseLearner selector;
  LearnerPool pool;

  int select(const rl::StepState& s, bool explore, double alpha, RngStream& rng) const {
    return selector.select(s, explore, alpha, rng);
  }
  int greedy(const rl::StepState& s) const { return selector.greedy(s); }

  void save(const std::string& path, const neural::AdamState* adam = nullptr) const;
  static MetaLearner load(const std::string& path, neural::AdamState* adam = nullptr,
                          bool* has_adam = nullptr);
};

struct MetaTrainResult {
  MetaLearner learner;
  neural::AdamState adam;
  std::vector<rl::TrainLogRow> log;
  bool converged = false;
  bool diverged = false;
  int episodes_run = 0;
};

// Trains the dispatcher with the same episodic loop as the base learners.
MetaTrainResult train_meta(MetaEnv& env, const rl::TrainConfig& cfg, RngStream& rng);

// One row per executed step of a dispatched integration.
struct DispatchRow {
  double t = 0.0;
  int learner_index = 0;
  std::string learner_kind;
  double h = 0.0;
  double local_error = 0.0;
  double reward = 0.0;
};

struct MetaRolloutResult {
  rl::RolloutResult base;
  std::vector<DispatchRow> dispatch;
};

// Greedy dispatched integration over one episode of the environment.
MetaRolloutResult integrate_with_meta(MetaEnv& env, const MetaLearner& ml, RngStream& rng);

}  // namespace steprl::meta
