#include "steprl/meta.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace steprl::meta {

std::string learner_kind_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::Trained: return "trained";
    case LearnerKind::ConstantStep: return "constant";
  }
  throw usage_error("learner kind: invalid enum value");
}

PoolEntry PoolEntry::trained(rl::BaseLearner lr) {
  PoolEntry e;
  e.kind = LearnerKind::Trained;
  e.learner = std::move(lr);
  return e;
}

PoolEntry PoolEntry::constant(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw usage_error("pool entry: constant step must be positive");
  }
  PoolEntry e;
  e.kind = LearnerKind::ConstantStep;
  e.constant_h = h;
  return e;
}

double PoolEntry::propose_step(const rl::StepState& s) const {
  switch (kind) {
    case LearnerKind::Trained: return learner.propose_step(s);
    case LearnerKind::ConstantStep: return constant_h;
  }
  throw usage_error("pool entry: invalid kind");
}

double PoolEntry::max_step() const {
  switch (kind) {
    case LearnerKind::Trained: return learner.actions.h_max();
    case LearnerKind::ConstantStep: return constant_h;
  }
  throw usage_error("pool entry: invalid kind");
}

std::string PoolEntry::label() const {
  if (kind == LearnerKind::Trained) return "trained";
  std::ostringstream os;
  os << "constant:" << constant_h;
  return os.str();
}

double LearnerPool::max_proposable_step() const {
  if (entries.empty()) throw usage_error("pool: empty");
  double best = 0.0;
  for (const auto& e : entries) best = std::max(best, e.max_step());
  return best;
}

void LearnerPool::validate(int feature_dim, int memory_m) const {
  if (entries.empty()) throw usage_error("pool: empty");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.kind == LearnerKind::ConstantStep) {
      if (!(e.constant_h > 0.0)) {
        throw usage_error("pool: entry " + std::to_string(i) + " has a non-positive step");
      }
      continue;
    }
    e.learner.actions.validate();
    if (e.learner.feature_dim != feature_dim || e.learner.memory_m != memory_m) {
      throw usage_error("pool: entry " + std::to_string(i) +
                        " was trained on a different state encoding");
    }
    if (e.learner.net.spec().input_dim != rl::input_dim(feature_dim, memory_m)) {
      throw usage_error("pool: entry " + std::to_string(i) +
                        " has a network input that does not match the encoding");
    }
  }
}

MetaEnv::MetaEnv(rl::OdeEnvConfig base_cfg, LearnerPool pool)
    : base_([&] {
        if (pool.entries.empty()) throw usage_error("meta env: pool must not be empty");
        if (base_cfg.reward_h_max == 0.0) {
          base_cfg.reward_h_max = pool.max_proposable_step();
        }
        return rl::OdeEnv(base_cfg);
      }()),
      pool_(std::move(pool)) {
  pool_.validate(base_.feature_dim(), base_.memory_m());
  // Placeholder action values 1..n keep the ActionSet contract (strictly
  // increasing); they are never used as step sizes.
  for (int i = 0; i < pool_.size(); ++i) {
    placeholder_.step_sizes.push_back(static_cast<double>(i + 1));
  }
}

rl::Transition MetaEnv::apply(int action) {
  if (action < 0 || action >= pool_.size()) {
    throw usage_error("meta env: pool index out of range");
  }
  const double h = pool_.entries[static_cast<std::size_t>(action)].propose_step(base_.state());
  rl::Transition tr = base_.apply_h(h);
  tr.action = action;
  return tr;
}

void MetaLearner::save(const std::string& path, const neural::AdamState* adam) const {
  nlohmann::json j;
  j["format"] = "steprl-meta-v1";
  j["selector"] = rl::learner_to_json(selector, adam);
  nlohmann::json pool_json = nlohmann::json::array();
  for (const auto& e : pool.entries) {
    nlohmann::json pe;
    pe["kind"] = learner_kind_name(e.kind);
    if (e.kind == LearnerKind::ConstantStep) {
      pe["h"] = e.constant_h;
    } else {
      pe["learner"] = rl::learner_to_json(e.learner, nullptr);
    }
    pool_json.push_back(std::move(pe));
  }
  j["pool"] = std::move(pool_json);
  std::ofstream out(path);
  if (!out) throw usage_error("meta save: cannot open '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out.good()) throw usage_error("meta save: write failed for '" + path + "'");
}

MetaLearner MetaLearner::load(const std::string& path, neural::AdamState* adam, bool* has_adam) {
  std::ifstream in(path);
  if (!in) throw usage_error("meta load: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw usage_error("meta load: invalid JSON in '" + path + "': " + e.what());
  }
  MetaLearner ml;
  try {
    if (j.at("format").get<std::string>() != "steprl-meta-v1") {
      throw usage_error("meta load: unknown format tag");
    }
    ml.selector = rl::learner_from_json(j.at("selector"), adam, has_adam);
    for (const auto& pe : j.at("pool")) {
      const std::string kind = pe.at("kind").get<std::string>();
      if (kind == "constant") {
        ml.pool.entries.push_back(PoolEntry::constant(pe.at("h").get<double>()));
      } else if (kind == "trained") {
        ml.pool.entries.push_back(PoolEntry::trained(rl::learner_from_json(pe.at("learner"), nullptr,
                                                                       nullptr)));
      } else {
        throw usage_error("meta load: unknown pool entry kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw usage_error("meta load: malformed document in '" + path + "': " + e.what());
  }
  if (ml.selector.net.spec().output_dim != ml.pool.size()) {
    throw usage_error("meta load: selector output does not match the pool size");
  }
  return ml;
}

MetaTrainResult train_meta(MetaEnv& env, const rl::TrainConfig& cfg, RngStream& rng) {
  rl::TrainResult base = rl::train_base_learner(env, cfg, rng);
  MetaTrainResult out;
  out.learner.selector = std::move(base.learner);
  out.learner.pool = env.pool();
  out.adam = std::move(base.adam);
  out.log = std::move(base.log);
  out.converged = base.converged;
  out.diverged = base.diverged;
  out.episodes_run = base.episodes_run;
  return out;
}

MetaRolloutResult integrate_with_meta(MetaEnv& env, const MetaLearner& ml, RngStream& rng) {
  if (ml.selector.net.spec().output_dim != env.num_actions()) {
    throw usage_error("meta rollout: selector output does not match the pool size");
  }
  if (ml.selector.net.spec().input_dim != rl::input_dim(env.feature_dim(), env.memory_m())) {
    throw usage_error("meta rollout: selector input does not match the state encoding");
  }
  MetaRolloutResult out;
  env.reset(rng);
  double eps_sum = 0.0;
  auto& r = out.base;
  while (!env.done()) {
    const int idx = ml.greedy(env.state());
    const rl::Transition tr = env.apply(idx);
    ++r.steps;
    eps_sum += tr.eps;
    r.max_error = std::max(r.max_error, tr.eps);
    if (!(tr.eps < env.reward_config().tol)) ++r.violations;
    r.trace.push_back(rl::TraceRow{tr.position, tr.h_executed, tr.action, tr.eps, tr.reward,
                                   !(tr.eps < env.reward_config().tol), tr.clamped});
    out.dispatch.push_back(DispatchRow{tr.position, idx,
                                       env.pool().entries[static_cast<std::size_t>(idx)].label(),
                                       tr.h_executed, tr.eps, tr.reward});
  }
  r.final_position = env.position();
  r.evaluations = env.episode_evals();
  r.avg_error = r.steps > 0 ? eps_sum / static_cast<double>(r.steps) : 0.0;
  const double span = env.position() - env.episode_start();
  r.evals_per_unit = span > 0.0 ? static_cast<double>(r.evaluations) / span : 0.0;
  r.final_state = env.base().x();
  return out;
}

}  // namespace steprl::meta
