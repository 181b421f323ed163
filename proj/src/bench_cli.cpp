#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "steprl/bench.hpp"

namespace steprl::bench {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct HelpShown {};

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

enum class FieldType { Int, Real, Bool, Str, RealList, IntList, StrList };

struct FieldSpec {
  std::string name;
  FieldType type;
  std::string help;
  double min_value = -std::numeric_limits<double>::infinity();
  double max_value = std::numeric_limits<double>::infinity();
};

const char* type_name(FieldType t) {
  switch (t) {
    case FieldType::Int: return "int";
    case FieldType::Real: return "real";
    case FieldType::Bool: return "bool";
    case FieldType::Str: return "string";
    case FieldType::RealList: return "real list";
    case FieldType::IntList: return "int list";
    case FieldType::StrList: return "string list";
  }
  return "?";
}

std::vector<FieldSpec> common_fields() {
  return {
      {"out_dir", FieldType::Str, "output directory (default $STEPRL_OUT_DIR or ./steprl-out)"},
      {"seed", FieldType::Int, "base RNG seed", 0, 9.0e18},
      {"threads", FieldType::Int, "worker threads for evaluation rollouts", 1, 4096},
  };
}

std::vector<FieldSpec> train_fields() {
  return {
      {"actions", FieldType::RealList, "candidate step sizes, strictly increasing", 1e-12, 1e12},
      {"tol", FieldType::Real, "error tolerance per step", 1e-300, 1e12},
      {"reward", FieldType::Str, "reward variant: piecewise | continuous | log"},
      {"penalty_L", FieldType::Real, "penalty asymptote L", 1.000001, 1e6},
      {"gamma", FieldType::Real, "discount factor", 0.0, 0.9999},
      {"alpha", FieldType::Real, "probability of the top-ranked action", 0.5, 1.0},
      {"memory_m", FieldType::Int, "previous steps included in the state", 0, 64},
      {"episodes", FieldType::Int, "episode cap", 0, 100000000},
      {"updates_per_episode", FieldType::Int, "gradient steps per episode", 1, 1000000},
      {"minibatch", FieldType::Int, "minibatch size (0 = full episode)", 0, 10000000},
      {"lr", FieldType::Real, "Adam learning rate", 1e-12, 1.0},
      {"hidden_layers", FieldType::Int, "hidden layers", 1, 64},
      {"hidden_width", FieldType::Int, "hidden width (0 = 5x input)", 0, 8192},
      {"normalizer_episodes", FieldType::Int, "episodes collected before input scaling", 0,
       1000000},
      {"convergence_rel", FieldType::Real, "relative reward-window convergence threshold", 1e-12,
       1.0},
      {"convergence_window", FieldType::Int, "episodes per convergence window", 2, 1000000},
      {"convergence_gap", FieldType::Int, "episodes between compared windows", 0, 100000000},
      {"checkpoint_out", FieldType::Str, "checkpoint path (default <out_dir>/checkpoint.json)"},
      {"log_out", FieldType::Str, "training log CSV path (default <out_dir>/train_log.csv)"},
  };
}

std::vector<FieldSpec> quad_problem_fields() {
  return {
      {"problem", FieldType::Str,
       "function class: single_sine | superposed_sines5 | broken_poly5 | poly_deg_n | "
       "damped_oscillator_velocity"},
      {"domain", FieldType::RealList, "integration domain [a, b]"},
      {"degree", FieldType::Int, "polynomial degree (poly_deg_n only)", 0, 30},
      {"coeff_dist", FieldType::Str, "poly_deg_n coefficients: normal | uniform"},
  };
}

std::vector<FieldSpec> ode_problem_fields() {
  return {
      {"system", FieldType::Str, "ODE system: lorenz | hybrid_pendulum"},
      {"time_span", FieldType::RealList, "integration horizon [t0, t1]"},
      {"episode_span", FieldType::Real, "episode window length (0 = full horizon)", 0.0, 1e12},
      {"continue_trajectory", FieldType::Bool, "continue episodes along one trajectory"},
      {"reward_h_max", FieldType::Real, "reward normalization step (0 = largest action)", 0.0,
       1e12},
      {"oracle_tol", FieldType::Real, "reference-integrator tolerance", 1e-14, 1e-2},
      {"oracle_h_max", FieldType::Real, "reference-integrator max internal step", 1e-12, 10.0},
  };
}

void append(std::vector<FieldSpec>& dst, std::vector<FieldSpec> src) {
  for (auto& f : src) dst.push_back(std::move(f));
}

std::vector<FieldSpec> schema_for(const std::string& cmd) {
  std::vector<FieldSpec> s;
  if (cmd == "train-quad") {
    append(s, quad_problem_fields());
    append(s, train_fields());
  } else if (cmd == "train-ode") {
    append(s, ode_problem_fields());
    append(s, train_fields());
  } else if (cmd == "train-meta") {
    s.push_back({"base_checkpoint", FieldType::Str, "trained base-controller checkpoint path"});
    s.push_back({"constants", FieldType::RealList, "constant step sizes added to the pool", 1e-12,
                 1e12});
    append(s, ode_problem_fields());
    append(s, train_fields());
  } else if (cmd == "bench-quad") {
    append(s, quad_problem_fields());
    s.push_back({"sample_count", FieldType::Int, "functions in the common sample", 1, 10000000});
    s.push_back({"checkpoints", FieldType::StrList, "controller checkpoints (one row each)"});
    s.push_back({"simpson_steps", FieldType::RealList,
                 "equidistant node spacings (default: first checkpoint's actions)", 1e-12, 1e12});
    s.push_back({"subdivision_budgets", FieldType::IntList,
                 "evaluation budgets (default: matched to the equidistant sweep)", 5, 1000000000});
  } else if (cmd == "bench-ode") {
    s.push_back({"system", FieldType::Str, "ODE system: lorenz | hybrid_pendulum"});
    s.push_back({"time_span", FieldType::RealList, "integration horizon [t0, t1]"});
    s.push_back({"checkpoint", FieldType::Str, "trained step-controller checkpoint"});
    s.push_back({"meta_checkpoint", FieldType::Str, "trained dispatcher checkpoint"});
    s.push_back({"base_actions", FieldType::RealList,
                 "base action set for the dispatcher's wrapped environment", 1e-12, 1e12});
    s.push_back({"reward_h_max", FieldType::Real,
                 "dispatcher reward normalization (0 = largest pool step)", 0.0, 1e12});
    s.push_back({"rk45_tols", FieldType::RealList, "embedded-controller tolerances", 1e-14, 1.0});
    s.push_back({"random_ics", FieldType::Int, "random initial conditions (0 = system default)",
                 0, 1000000});
    s.push_back({"ic_lo", FieldType::Real, "initial-condition box lower bound"});
    s.push_back({"ic_hi", FieldType::Real, "initial-condition box upper bound"});
  } else if (cmd == "weights") {
    s.push_back({"mode", FieldType::Str, "table | surface | one_node | optimize"});
    s.push_back({"class", FieldType::Str, "function class: poly | oscillator | sine"});
    s.push_back({"degree", FieldType::Int, "polynomial degree (poly only)", 0, 30});
    s.push_back({"coeff_dist", FieldType::Str, "poly coefficients: normal | uniform"});
    s.push_back({"nodes", FieldType::RealList, "quadrature nodes"});
    s.push_back({"samples", FieldType::Int, "sampled functions for the fit", 3, 100000000});
    s.push_back({"holdout", FieldType::Real, "held-out fraction for error reporting", 0.0,
                 0.999});
    s.push_back({"domain", FieldType::RealList, "integration domain [a, b]"});
    s.push_back({"n_nodes", FieldType::Int, "nodes for the surface search", 1, 2});
    s.push_back({"resolution", FieldType::Int, "surface grid resolution (0 = auto)", 0, 100000});
    s.push_back({"samples_per_cell", FieldType::Int, "samples per surface cell", 2, 10000000});
    s.push_back({"w_lo", FieldType::Real, "sine class: lowest angular frequency", 1e-9, 1e9});
    s.push_back({"w_hi", FieldType::Real, "sine class: highest angular frequency", 1e-9, 1e9});
    s.push_back({"start_nodes", FieldType::RealList, "optimizer start nodes (default: nodes)"});
    s.push_back({"opt_samples", FieldType::Int, "common sample size for the optimizer", 3,
                 100000000});
    s.push_back({"max_iterations", FieldType::Int, "optimizer iteration cap", 1, 1000000});
  } else if (cmd == "trace") {
    s.push_back({"checkpoint", FieldType::Str, "trained step-controller checkpoint"});
    s.push_back({"meta_checkpoint", FieldType::Str, "trained dispatcher checkpoint"});
    append(s, quad_problem_fields());
    s.push_back({"function_params", FieldType::RealList,
                 "fixed integrand parameters (default: sample one function)"});
    s.push_back({"system", FieldType::Str, "ODE system: lorenz | hybrid_pendulum"});
    s.push_back({"time_span", FieldType::RealList, "integration horizon [t0, t1]"});
    s.push_back({"initial_state", FieldType::RealList, "start state (default: system default)"});
    s.push_back({"base_actions", FieldType::RealList,
                 "base action set for the dispatcher's wrapped environment", 1e-12, 1e12});
    s.push_back({"reward_h_max", FieldType::Real,
                 "dispatcher reward normalization (0 = largest pool step)", 0.0, 1e12});
  } else {
    throw usage_error(
        "unknown subcommand '" + cmd +
        "'; available: train-quad, train-ode, train-meta, bench-quad, bench-ode, weights, trace");
  }
  append(s, common_fields());
  return s;
}

const FieldSpec* find_field(const std::vector<FieldSpec>& schema, const std::string& name) {
  for (const auto& f : schema) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

std::string known_fields(const std::vector<FieldSpec>& schema) {
  std::string s;
  for (const auto& f : schema) {
    if (!s.empty()) s += ", ";
    s += f.name;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Value parsing and validation
// ---------------------------------------------------------------------------

double parse_real_token(const std::string& tok, const std::string& field) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0' || !std::isfinite(v)) {
    throw usage_error("field '" + field + "': cannot parse '" + tok + "' as a real number");
  }
  return v;
}

long long parse_int_token(const std::string& tok, const std::string& field) {
  char* end = nullptr;
  const long long v = std::strtoll(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0') {
    throw usage_error("field '" + field + "': cannot parse '" + tok + "' as an integer");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> parts;
  if (s.empty()) return parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = s.find(',', start);
    if (comma == std::string::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
}

json parse_flag_value(const FieldSpec& spec, const std::string& raw) {
  switch (spec.type) {
    case FieldType::Int: return parse_int_token(raw, spec.name);
    case FieldType::Real: return parse_real_token(raw, spec.name);
    case FieldType::Bool:
      if (raw == "true" || raw == "1") return true;
      if (raw == "false" || raw == "0") return false;
      throw usage_error("field '" + spec.name + "': expected true/false, got '" + raw + "'");
    case FieldType::Str: return raw;
    case FieldType::RealList: {
      json arr = json::array();
      for (const auto& tok : split_csv(raw)) arr.push_back(parse_real_token(tok, spec.name));
      return arr;
    }
    case FieldType::IntList: {
      json arr = json::array();
      for (const auto& tok : split_csv(raw)) arr.push_back(parse_int_token(tok, spec.name));
      return arr;
    }
    case FieldType::StrList: {
      json arr = json::array();
      for (const auto& tok : split_csv(raw)) {
        if (!tok.empty()) arr.push_back(tok);
      }
      return arr;
    }
  }
  throw usage_error("field '" + spec.name + "': unsupported type");
}

void check_range(const FieldSpec& spec, double v) {
  if (v < spec.min_value || v > spec.max_value) {
    std::ostringstream msg;
    msg << "field '" << spec.name << "': value " << v << " outside [" << spec.min_value << ", "
        << spec.max_value << "]";
    throw usage_error(msg.str());
  }
}

void validate_value(const FieldSpec& spec, const json& v) {
  const auto type_fail = [&]() {
    throw usage_error("field '" + spec.name + "': expected " + std::string(type_name(spec.type)));
  };
  switch (spec.type) {
    case FieldType::Int:
      if (!v.is_number_integer() && !v.is_number_unsigned()) type_fail();
      check_range(spec, v.get<double>());
      break;
    case FieldType::Real:
      if (!v.is_number()) type_fail();
      check_range(spec, v.get<double>());
      break;
    case FieldType::Bool:
      if (!v.is_boolean()) type_fail();
      break;
    case FieldType::Str:
      if (!v.is_string()) type_fail();
      break;
    case FieldType::RealList:
      if (!v.is_array()) type_fail();
      for (const auto& e : v) {
        if (!e.is_number()) type_fail();
        check_range(spec, e.get<double>());
      }
      break;
    case FieldType::IntList:
      if (!v.is_array()) type_fail();
      for (const auto& e : v) {
        if (!e.is_number_integer() && !e.is_number_unsigned()) type_fail();
        check_range(spec, e.get<double>());
      }
      break;
    case FieldType::StrList:
      if (!v.is_array()) type_fail();
      for (const auto& e : v) {
        if (!e.is_string()) type_fail();
      }
      break;
  }
}

void print_help(const std::string& cmd, const std::vector<FieldSpec>& schema, std::ostream& out) {
  out << "usage: steprl " << cmd << " [--config file.json] [--<field> <value> ...]\n\n"
      << "Fields (config file keys and flag names are identical):\n";
  for (const auto& f : schema) {
    out << "  --" << f.name << " <" << type_name(f.type) << ">  " << f.help << "\n";
  }
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("config file not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw usage_error("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw usage_error("config file " + path + " must hold a JSON object");
  return j;
}

json parse_args(const std::string& cmd, const std::vector<FieldSpec>& schema,
                const std::vector<std::string>& args, std::ostream& out) {
  json cfg = json::object();
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& arg = args[i];
    if (arg == "--help" || arg == "-h") {
      print_help(cmd, schema, out);
      throw HelpShown{};
    }
    if (arg.rfind("--", 0) != 0) {
      throw usage_error("expected a --flag, got '" + arg + "'");
    }
    const std::string name = arg.substr(2);
    if (i + 1 >= args.size()) throw usage_error("flag --" + name + " is missing its value");
    const std::string& value = args[++i];
    if (name == "config") {
      const json file = load_config_file(value);
      for (const auto& [k, v] : file.items()) {
        if (find_field(schema, k) == nullptr) {
          throw usage_error("unknown field '" + k + "' for " + cmd +
                            "; known fields: " + known_fields(schema));
        }
        cfg[k] = v;
      }
      continue;
    }
    const FieldSpec* spec = find_field(schema, name);
    if (spec == nullptr) {
      throw usage_error("unknown field '" + name + "' for " + cmd +
                        "; known fields: " + known_fields(schema));
    }
    cfg[name] = parse_flag_value(*spec, value);
  }
  return cfg;
}

void validate_config(const json& cfg, const std::vector<FieldSpec>& schema,
                     const std::string& cmd) {
  for (const auto& [k, v] : cfg.items()) {
    const FieldSpec* spec = find_field(schema, k);
    if (spec == nullptr) {
      throw usage_error("unknown field '" + k + "' for " + cmd +
                        "; known fields: " + known_fields(schema));
    }
    validate_value(*spec, v);
  }
}

// ---------------------------------------------------------------------------
// Config -> domain objects
// ---------------------------------------------------------------------------

void set_default(json& cfg, const std::string& key, json value) {
  if (!cfg.contains(key)) cfg[key] = std::move(value);
}

std::string resolve_out_dir(json& cfg) {
  if (!cfg.contains("out_dir")) {
    const char* env = std::getenv("STEPRL_OUT_DIR");
    cfg["out_dir"] = (env != nullptr && *env != '\0') ? std::string(env)
                                                      : std::string("steprl-out");
  }
  return cfg.at("out_dir").get<std::string>();
}

const json kSineActions = {0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.75};
const json kBrokenActions = {0.05, 0.075, 0.1, 0.125, 0.15, 0.2, 0.3, 0.67};
const json kLorenzActions = {0.025, 0.029, 0.033, 0.039, 0.045, 0.052, 0.060, 0.070};
const json kPendulumActions = {0.25, 0.27, 0.29, 0.31, 0.33, 0.36, 0.39, 0.42, 0.45, 0.48};
const json kPoolConstants = {0.1, 0.05, 0.01, 0.005, 0.001};

void fill_common_defaults(json& cfg) {
  resolve_out_dir(cfg);
  set_default(cfg, "seed", 1234);
  set_default(cfg, "threads", 1);
}

void fill_train_defaults(json& cfg, const std::string& default_checkpoint) {
  const std::string out_dir = cfg.at("out_dir").get<std::string>();
  set_default(cfg, "penalty_L", 3.0);
  set_default(cfg, "gamma", 0.0);
  set_default(cfg, "alpha", 0.8);
  set_default(cfg, "memory_m", 0);
  set_default(cfg, "episodes", 400);
  set_default(cfg, "updates_per_episode", 20);
  set_default(cfg, "minibatch", 64);
  set_default(cfg, "lr", 1e-3);
  set_default(cfg, "hidden_layers", 4);
  set_default(cfg, "hidden_width", 0);
  set_default(cfg, "normalizer_episodes", 5);
  set_default(cfg, "convergence_rel", 0.01);
  set_default(cfg, "convergence_window", 50);
  set_default(cfg, "convergence_gap", 100);
  set_default(cfg, "checkpoint_out", (fs::path(out_dir) / default_checkpoint).string());
  set_default(cfg, "log_out", (fs::path(out_dir) / "train_log.csv").string());
}

void fill_quad_problem_defaults(json& cfg) {
  set_default(cfg, "problem", "superposed_sines5");
  const std::string problem = cfg.at("problem").get<std::string>();
  if (problem == "single_sine" || problem == "superposed_sines5") {
    set_default(cfg, "domain", json{0.0, 20.0});
    set_default(cfg, "actions", kSineActions);
    set_default(cfg, "tol", 5e-4);
    set_default(cfg, "reward", "piecewise");
  } else if (problem == "broken_poly5") {
    set_default(cfg, "domain", json{-1.0, 1.0});
    set_default(cfg, "actions", kBrokenActions);
    set_default(cfg, "tol", 7.5e-6);
    set_default(cfg, "reward", "log");
  } else {
    set_default(cfg, "domain", json{0.0, 1.0});
    set_default(cfg, "reward", "piecewise");
  }
  set_default(cfg, "degree", 5);
  set_default(cfg, "coeff_dist", "normal");
}

void fill_ode_problem_defaults(json& cfg) {
  set_default(cfg, "system", "lorenz");
  const std::string system = cfg.at("system").get<std::string>();
  if (system == "lorenz") {
    set_default(cfg, "time_span", json{0.0, 200.0});
    set_default(cfg, "actions", kLorenzActions);
    set_default(cfg, "tol", 1e-4);
    set_default(cfg, "reward", "piecewise");
  } else {
    // The smooth stretch before the first mode switch.
    set_default(cfg, "time_span", json{0.0, 16.0});
    set_default(cfg, "actions", kPendulumActions);
    set_default(cfg, "tol", 1e-5);
    set_default(cfg, "reward", "piecewise");
  }
  set_default(cfg, "episode_span", 0.0);
  set_default(cfg, "continue_trajectory", false);
  set_default(cfg, "reward_h_max", 0.0);
  set_default(cfg, "oracle_tol", 1e-10);
  set_default(cfg, "oracle_h_max", 0.05);
}

std::vector<double> real_list(const json& cfg, const std::string& key) {
  std::vector<double> v;
  for (const auto& e : cfg.at(key)) v.push_back(e.get<double>());
  return v;
}

rl::ActionSet actions_from(const json& cfg, const std::string& key = "actions") {
  rl::ActionSet a;
  a.step_sizes = real_list(cfg, key);
  a.validate();
  return a;
}

rl::RewardConfig reward_from(const json& cfg) {
  const rl::RewardKind kind = rl::reward_kind_from_name(cfg.at("reward").get<std::string>());
  return rl::RewardConfig::calibrated(kind, cfg.at("tol").get<double>(),
                                      cfg.at("penalty_L").get<double>());
}

problems::FunctionClassSpec quad_spec_from(const json& cfg) {
  const std::string problem = cfg.at("problem").get<std::string>();
  problems::FunctionClass cls;
  if (problem == "single_sine") {
    cls = problems::FunctionClass::SingleSine;
  } else if (problem == "superposed_sines5") {
    cls = problems::FunctionClass::SuperposedSines5;
  } else if (problem == "broken_poly5") {
    cls = problems::FunctionClass::BrokenPoly5;
  } else if (problem == "poly_deg_n") {
    cls = problems::FunctionClass::PolyDegN;
  } else if (problem == "damped_oscillator_velocity") {
    cls = problems::FunctionClass::DampedOscillatorVelocity;
  } else {
    throw usage_error("field 'problem': unknown function class '" + problem + "'");
  }
  problems::FunctionClassSpec spec = problems::FunctionClassSpec::make(cls);
  if (cfg.contains("domain")) {
    const auto d = real_list(cfg, "domain");
    if (d.size() != 2 || !(d[0] < d[1])) {
      throw usage_error("field 'domain': expected [a, b] with a < b");
    }
    spec.domain_a = d[0];
    spec.domain_b = d[1];
  }
  if (cfg.contains("degree")) spec.degree = cfg.at("degree").get<int>();
  if (cfg.contains("coeff_dist")) {
    const std::string dist = cfg.at("coeff_dist").get<std::string>();
    if (dist == "normal") {
      spec.coeff_dist = problems::CoeffDist::Normal;
    } else if (dist == "uniform") {
      spec.coeff_dist = problems::CoeffDist::Uniform;
    } else {
      throw usage_error("field 'coeff_dist': expected normal or uniform, got '" + dist + "'");
    }
  }
  return spec;
}

problems::OdeSystem system_from(const json& cfg) {
  const std::string name = cfg.at("system").get<std::string>();
  if (name == "lorenz") return problems::OdeSystem::lorenz();
  if (name == "hybrid_pendulum") return problems::OdeSystem::hybrid_pendulum();
  throw usage_error("field 'system': unknown system '" + name + "'");
}

std::pair<double, double> time_span_from(const json& cfg) {
  const auto ts = real_list(cfg, "time_span");
  if (ts.size() != 2 || !(ts[0] < ts[1])) {
    throw usage_error("field 'time_span': expected [t0, t1] with t0 < t1");
  }
  return {ts[0], ts[1]};
}

rl::OdeEnvConfig ode_env_from(const json& cfg) {
  rl::OdeEnvConfig env;
  env.system = system_from(cfg);
  env.actions = actions_from(cfg);
  env.reward = reward_from(cfg);
  env.memory_m = cfg.at("memory_m").get<int>();
  std::tie(env.t0, env.t1) = time_span_from(cfg);
  env.episode_span = cfg.at("episode_span").get<double>();
  env.continue_trajectory = cfg.at("continue_trajectory").get<bool>();
  env.reward_h_max = cfg.at("reward_h_max").get<double>();
  env.oracle.tol = cfg.at("oracle_tol").get<double>();
  env.oracle.h_max = cfg.at("oracle_h_max").get<double>();
  return env;
}

rl::TrainConfig train_config_from(const json& cfg) {
  rl::TrainConfig tc;
  tc.max_episodes = cfg.at("episodes").get<int>();
  tc.updates_per_episode = cfg.at("updates_per_episode").get<int>();
  tc.minibatch = cfg.at("minibatch").get<int>();
  tc.gamma = cfg.at("gamma").get<double>();
  tc.alpha = cfg.at("alpha").get<double>();
  tc.net.hidden_layers = cfg.at("hidden_layers").get<int>();
  tc.net.hidden_width = cfg.at("hidden_width").get<int>();
  tc.adam.lr = cfg.at("lr").get<double>();
  tc.normalizer_episodes = cfg.at("normalizer_episodes").get<int>();
  tc.convergence_rel = cfg.at("convergence_rel").get<double>();
  tc.convergence_window = cfg.at("convergence_window").get<int>();
  tc.convergence_gap = cfg.at("convergence_gap").get<int>();
  return tc;
}

void echo_config(const json& cfg) {
  const std::string out_dir = cfg.at("out_dir").get<std::string>();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::ofstream out(fs::path(out_dir) / "config.json");
  if (!out) throw usage_error("cannot write to output directory: " + out_dir);
  out << cfg.dump(2) << '\n';
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw usage_error(what + " not found: " + path);
}

std::string out_path(const json& cfg, const std::string& name) {
  return (fs::path(cfg.at("out_dir").get<std::string>()) / name).string();
}

void write_train_log(const std::string& path, const std::vector<rl::TrainLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw usage_error("cannot open output file: " + path);
  out << "episode,mean_reward,loss,evals_per_unit,avg_error\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g\n", r.episode, r.mean_reward,
                  r.loss, r.evals_per_unit, r.avg_error);
    out << buf;
  }
}

int finish_training(const json& cfg, std::ostream& out, std::ostream& err, bool converged,
                    bool diverged, int episodes_run, const std::vector<rl::TrainLogRow>& log,
                    const std::function<void(const std::string&)>& save) {
  write_train_log(cfg.at("log_out").get<std::string>(), log);
  const std::string ckpt = cfg.at("checkpoint_out").get<std::string>();
  bool saved = false;
  if (!diverged && episodes_run > 0) {
    save(ckpt);
    saved = true;
  }
  out << "episodes=" << episodes_run << " converged=" << (converged ? "yes" : "no")
      << " checkpoint=" << (saved ? ckpt : "(none)")
      << " log=" << cfg.at("log_out").get<std::string>() << "\n";
  if (diverged) {
    err << "training diverged (non-finite loss); no checkpoint written\n";
    return 4;
  }
  if (!converged) {
    err << "episode cap reached before convergence\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_train_quad(json& cfg, std::ostream& out, std::ostream& err) {
  fill_common_defaults(cfg);
  fill_quad_problem_defaults(cfg);
  if (!cfg.contains("actions") || !cfg.contains("tol")) {
    throw usage_error("problem class '" + cfg.at("problem").get<std::string>() +
                      "' has no default action set; provide 'actions' and 'tol'");
  }
  fill_train_defaults(cfg, "checkpoint.json");
  validate_config(cfg, schema_for("train-quad"), "train-quad");
  echo_config(cfg);

  if (cfg.at("episodes").get<int>() == 0) {
    err << "episode cap is zero; nothing trained, no checkpoint written\n";
    return 3;
  }
  rl::QuadratureEnvConfig env_cfg;
  env_cfg.function_class = quad_spec_from(cfg);
  env_cfg.actions = actions_from(cfg);
  env_cfg.reward = reward_from(cfg);
  env_cfg.memory_m = cfg.at("memory_m").get<int>();
  rl::QuadratureEnv env(env_cfg);
  RngStream rng(cfg.at("seed").get<std::uint64_t>());
  rl::TrainResult res = rl::train_base_learner(env, train_config_from(cfg), rng);
  return finish_training(cfg, out, err, res.converged, res.diverged, res.episodes_run, res.log,
                         [&](const std::string& p) { res.learner.save(p, &res.adam); });
}

int cmd_train_ode(json& cfg, std::ostream& out, std::ostream& err) {
  fill_common_defaults(cfg);
  fill_ode_problem_defaults(cfg);
  fill_train_defaults(cfg, "checkpoint.json");
  validate_config(cfg, schema_for("train-ode"), "train-ode");
  echo_config(cfg);

  if (cfg.at("episodes").get<int>() == 0) {
    err << "episode cap is zero; nothing trained, no checkpoint written\n";
    return 3;
  }
  rl::OdeEnv env(ode_env_from(cfg));
  RngStream rng(cfg.at("seed").get<std::uint64_t>());
  rl::TrainResult res = rl::train_base_learner(env, train_config_from(cfg), rng);
  return finish_training(cfg, out, err, res.converged, res.diverged, res.episodes_run, res.log,
                         [&](const std::string& p) { res.learner.save(p, &res.adam); });
}

int cmd_train_meta(json& cfg, std::ostream& out, std::ostream& err) {
  fill_common_defaults(cfg);
  set_default(cfg, "system", "hybrid_pendulum");
  if (cfg.at("system").get<std::string>() == "hybrid_pendulum") {
    set_default(cfg, "time_span", json{0.0, 40.0});
  }
  set_default(cfg, "constants", kPoolConstants);
  set_default(cfg, "reward", "log");
  fill_ode_problem_defaults(cfg);
  fill_train_defaults(cfg, "meta_checkpoint.json");
  validate_config(cfg, schema_for("train-meta"), "train-meta");
  if (!cfg.contains("base_checkpoint")) {
    throw usage_error("train-meta requires 'base_checkpoint' (a trained ODE controller)");
  }
  echo_config(cfg);

  const std::string base_path = cfg.at("base_checkpoint").get<std::string>();
  require_file(base_path, "base checkpoint");
  rl::BaseLearner base = rl::BaseLearner::load(base_path);
  if (base.problem_kind != "ode") {
    throw usage_error("base checkpoint " + base_path + " is not an ODE controller");
  }

  if (cfg.at("episodes").get<int>() == 0) {
    err << "episode cap is zero; nothing trained, no checkpoint written\n";
    return 3;
  }
  meta::LearnerPool pool;
  pool.entries.push_back(meta::PoolEntry::trained(std::move(base)));
  for (const double c : real_list(cfg, "constants")) {
    pool.entries.push_back(meta::PoolEntry::constant(c));
  }
  rl::OdeEnvConfig base_cfg = ode_env_from(cfg);
  base_cfg.memory_m = pool.entries.front().learner.memory_m;
  cfg["memory_m"] = base_cfg.memory_m;
  meta::MetaEnv env(std::move(base_cfg), std::move(pool));
  RngStream rng(cfg.at("seed").get<std::uint64_t>());
  meta::MetaTrainResult res = meta::train_meta(env, train_config_from(cfg), rng);
  return finish_training(cfg, out, err, res.converged, res.diverged, res.episodes_run, res.log,
                         [&](const std::string& p) { res.learner.save(p, &res.adam); });
}

void print_rows(const std::vector<MethodRow>& rows, std::ostream& out) {
  char buf[256];
  out << "method                     avg_error    evals     rejected\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-24s %11.4g %9.4g %9.3g\n", r.label.c_str(),
                  r.avg_error_per_step, r.avg_evaluations, r.rejected_steps);
    out << buf;
  }
}

int cmd_bench_quad(json& cfg, std::ostream& out, std::ostream& err) {
  (void)err;
  fill_common_defaults(cfg);
  fill_quad_problem_defaults(cfg);
  set_default(cfg, "sample_count", 5000);
  set_default(cfg, "checkpoints", json::array());
  set_default(cfg, "simpson_steps", json::array());
  set_default(cfg, "subdivision_budgets", json::array());
  validate_config(cfg, schema_for("bench-quad"), "bench-quad");
  echo_config(cfg);

  const problems::FunctionClassSpec spec = quad_spec_from(cfg);
  const int count = cfg.at("sample_count").get<int>();
  const int threads = cfg.at("threads").get<int>();
  RngStream rng(cfg.at("seed").get<std::uint64_t>());
  const auto fns = draw_functions(spec, count, rng);

  std::vector<rl::BaseLearner> learners;
  for (const auto& p : cfg.at("checkpoints")) {
    const std::string path = p.get<std::string>();
    require_file(path, "checkpoint");
    learners.push_back(rl::BaseLearner::load(path));
  }

  std::vector<MethodRow> rows;
  std::vector<std::pair<std::string, StepHistogram>> hists;
  std::map<std::string, int> label_uses;
  for (const auto& lr : learners) {
    StepHistogram hist;
    MethodRow row = bench_quad_learner(lr, fns, threads, &hist);
    if (++label_uses[row.label] > 1) {
      row.label += "#" + std::to_string(label_uses[row.label]);
    }
    hists.emplace_back(row.label, std::move(hist));
    rows.push_back(std::move(row));
  }

  std::vector<double> sweep = real_list(cfg, "simpson_steps");
  if (sweep.empty()) {
    sweep = learners.empty() ? std::vector<double>(kSineActions.begin(), kSineActions.end())
                             : learners.front().actions.step_sizes;
  }
  std::vector<MethodRow> simpson_rows;
  for (const double h : sweep) simpson_rows.push_back(bench_quad_simpson(fns, h, threads));

  std::vector<long long> budgets;
  for (const auto& b : cfg.at("subdivision_budgets")) budgets.push_back(b.get<long long>());
  if (budgets.empty()) {
    // Match the equidistant sweep's evaluation counts so the curves compare
    // at the same budgets.
    for (const auto& r : simpson_rows) {
      const long long evals = static_cast<long long>(std::llround(r.avg_evaluations));
      if (evals >= 5) budgets.push_back(evals);
    }
    std::sort(budgets.begin(), budgets.end());
    budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
  }
  std::vector<MethodRow> subdivision_rows;
  for (const long long b : budgets) {
    subdivision_rows.push_back(bench_quad_subdivision(fns, static_cast<int>(b), threads));
  }

  for (const auto& r : simpson_rows) rows.push_back(r);
  for (const auto& r : subdivision_rows) rows.push_back(r);

  write_pareto_csv(rows, out_path(cfg, "pareto.csv"));
  write_histogram_csv(hists, out_path(cfg, "step_hist.csv"));

  std::vector<PlotSeries> series;
  const auto curve = [](const std::vector<MethodRow>& rs, const std::string& label) {
    PlotSeries s;
    s.label = label;
    for (const auto& r : rs) s.points.emplace_back(r.avg_evaluations, r.avg_error_per_step);
    std::sort(s.points.begin(), s.points.end());
    return s;
  };
  for (std::size_t i = 0; i < learners.size(); ++i) {
    PlotSeries s;
    s.label = rows[i].label;
    s.line = false;
    s.points.emplace_back(rows[i].avg_evaluations, rows[i].avg_error_per_step);
    series.push_back(std::move(s));
  }
  series.push_back(curve(simpson_rows, "equidistant"));
  series.push_back(curve(subdivision_rows, "subdivision"));
  PlotOptions plot;
  plot.title = "error per step vs evaluations (" + cfg.at("problem").get<std::string>() + ")";
  plot.x_label = "average evaluations per function";
  plot.y_label = "average error per step";
  plot.log_x = true;
  plot.log_y = true;
  write_line_svg(series, plot, out_path(cfg, "pareto.svg"));

  print_rows(rows, out);
  out << "wrote " << out_path(cfg, "pareto.csv") << ", " << out_path(cfg, "step_hist.csv")
      << ", " << out_path(cfg, "pareto.svg") << "\n";
  return 0;
}

int cmd_bench_ode(json& cfg, std::ostream& out, std::ostream& err) {
  (void)err;
  fill_common_defaults(cfg);
  set_default(cfg, "system", "lorenz");
  if (cfg.at("system").get<std::string>() == "hybrid_pendulum") {
    set_default(cfg, "time_span", json{0.0, 40.0});
  } else {
    set_default(cfg, "time_span", json{0.0, 200.0});
  }
  set_default(cfg, "checkpoint", "");
  set_default(cfg, "meta_checkpoint", "");
  set_default(cfg, "base_actions", kPendulumActions);
  set_default(cfg, "reward_h_max", 0.0);
  set_default(cfg, "rk45_tols", json{1e-3, 1e-4, 1e-5, 1e-6});
  set_default(cfg, "random_ics", 0);
  set_default(cfg, "ic_lo", -10.0);
  set_default(cfg, "ic_hi", 10.0);
  validate_config(cfg, schema_for("bench-ode"), "bench-ode");
  echo_config(cfg);

  OdeRunSpec spec;
  spec.system = system_from(cfg);
  std::tie(spec.t0, spec.t1) = time_span_from(cfg);
  const int random_ics = cfg.at("random_ics").get<int>();
  if (random_ics > 0) {
    RngStream ic_rng(cfg.at("seed").get<std::uint64_t>(), 1);
    spec.initial_states = draw_initial_states(random_ics, spec.system.dim,
                                              cfg.at("ic_lo").get<double>(),
                                              cfg.at("ic_hi").get<double>(), ic_rng);
  }
  const int threads = cfg.at("threads").get<int>();

  std::vector<MethodRow> rows;
  const std::string ckpt = cfg.at("checkpoint").get<std::string>();
  if (!ckpt.empty()) {
    require_file(ckpt, "checkpoint");
    const rl::BaseLearner lr = rl::BaseLearner::load(ckpt);
    rows.push_back(bench_ode_learner(lr, spec, threads));
  }
  const std::string meta_ckpt = cfg.at("meta_checkpoint").get<std::string>();
  if (!meta_ckpt.empty()) {
    require_file(meta_ckpt, "meta checkpoint");
    const meta::MetaLearner ml = meta::MetaLearner::load(meta_ckpt);
    rl::OdeEnvConfig base_cfg;
    base_cfg.system = spec.system;
    base_cfg.actions = actions_from(cfg, "base_actions");
    base_cfg.reward = ml.selector.reward_cfg;
    base_cfg.memory_m = ml.selector.memory_m;
    base_cfg.t0 = spec.t0;
    base_cfg.t1 = spec.t1;
    base_cfg.reward_h_max = cfg.at("reward_h_max").get<double>();
    MetaBenchResult mb = bench_ode_meta(ml, std::move(base_cfg));
    if (!spec.initial_states.empty()) {
      out << "note: the dispatcher row uses the system's own initial condition\n";
    }
    std::ofstream dispatch(out_path(cfg, "dispatch.csv"));
    dispatch << "t,learner_index,learner_kind,h,local_error,reward\n";
    char buf[256];
    for (const auto& d : mb.run.dispatch) {
      std::snprintf(buf, sizeof(buf), "%.10g,%d,%s,%.10g,%.10g,%.10g\n", d.t, d.learner_index,
                    d.learner_kind.c_str(), d.h, d.local_error, d.reward);
      dispatch << buf;
    }
    rows.push_back(mb.row);
  }
  for (const auto& t : cfg.at("rk45_tols")) {
    rows.push_back(bench_ode_rk45(spec, t.get<double>(), threads));
  }
  if (rows.empty()) {
    throw usage_error(
        "nothing to benchmark: provide 'checkpoint', 'meta_checkpoint', or 'rk45_tols'");
  }

  write_pareto_csv(rows, out_path(cfg, "pareto.csv"));

  std::vector<PlotSeries> series;
  PlotSeries rk;
  rk.label = "embedded 5(4)";
  for (const auto& r : rows) {
    if (r.label.rfind("rk45", 0) == 0) {
      rk.points.emplace_back(r.avg_evaluations, r.avg_error_per_step);
    } else {
      PlotSeries s;
      s.label = r.label;
      s.line = false;
      s.points.emplace_back(r.avg_evaluations, r.avg_error_per_step);
      series.push_back(std::move(s));
    }
  }
  std::sort(rk.points.begin(), rk.points.end());
  if (!rk.points.empty()) series.push_back(std::move(rk));
  PlotOptions plot;
  plot.title = "error per step vs evaluations per time unit (" +
               cfg.at("system").get<std::string>() + ")";
  plot.x_label = "evaluations per time unit";
  plot.y_label = "average local error per step";
  plot.log_y = true;
  write_line_svg(series, plot, out_path(cfg, "pareto.svg"));

  print_rows(rows, out);
  out << "wrote " << out_path(cfg, "pareto.csv") << ", " << out_path(cfg, "pareto.svg") << "\n";
  return 0;
}

optweights::Sampler sampler_from(const json& cfg) {
  const std::string cls = cfg.at("class").get<std::string>();
  if (cls == "poly") {
    const std::string dist = cfg.at("coeff_dist").get<std::string>();
    optweights::CoeffLaw law;
    if (dist == "normal") {
      law = optweights::CoeffLaw::Normal;
    } else if (dist == "uniform") {
      law = optweights::CoeffLaw::Uniform;
    } else {
      throw usage_error("field 'coeff_dist': expected normal or uniform, got '" + dist + "'");
    }
    return optweights::poly_sampler(cfg.at("degree").get<int>(), law);
  }
  if (cls == "oscillator") return optweights::oscillator_velocity_sampler();
  if (cls == "sine") {
    const double lo = cfg.at("w_lo").get<double>();
    const double hi = cfg.at("w_hi").get<double>();
    if (!(lo < hi)) throw usage_error("field 'w_lo': must be below 'w_hi'");
    return optweights::random_sine_sampler(lo, hi);
  }
  throw usage_error("field 'class': expected poly, oscillator, or sine; got '" + cls + "'");
}

int cmd_weights(json& cfg, std::ostream& out, std::ostream& err) {
  fill_common_defaults(cfg);
  set_default(cfg, "mode", "table");
  set_default(cfg, "class", "poly");
  set_default(cfg, "degree", 4);
  set_default(cfg, "coeff_dist", "normal");
  set_default(cfg, "nodes", json{0.0, 0.5, 1.0});
  set_default(cfg, "samples", 100000);
  set_default(cfg, "holdout", 0.0);
  set_default(cfg, "domain", json{0.0, 1.0});
  set_default(cfg, "n_nodes", 2);
  set_default(cfg, "resolution", 0);
  set_default(cfg, "samples_per_cell", 2000);
  set_default(cfg, "w_lo", 0.5);
  set_default(cfg, "w_hi", 6.283185307179586);
  set_default(cfg, "start_nodes", json::array());
  set_default(cfg, "opt_samples", 4000);
  set_default(cfg, "max_iterations", 200);
  validate_config(cfg, schema_for("weights"), "weights");
  echo_config(cfg);

  const std::string mode = cfg.at("mode").get<std::string>();
  const auto domain = real_list(cfg, "domain");
  if (domain.size() != 2 || !(domain[0] < domain[1])) {
    throw usage_error("field 'domain': expected [a, b] with a < b");
  }
  const double a = domain[0];
  const double b = domain[1];
  RngStream rng(cfg.at("seed").get<std::uint64_t>());
  char buf[512];

  if (mode == "one_node") {
    int res = cfg.at("resolution").get<int>();
    if (res <= 1) res = 1001;
    std::vector<optweights::OneNodeResult> curve(static_cast<std::size_t>(res));
    int best = 0;
    for (int i = 0; i < res; ++i) {
      const double x = static_cast<double>(i) / (res - 1);
      curve[static_cast<std::size_t>(i)] = optweights::one_node_analytic(x);
      if (curve[static_cast<std::size_t>(i)].eps_sq < curve[static_cast<std::size_t>(best)].eps_sq)
        best = i;
    }
    std::ofstream csv(out_path(cfg, "one_node.csv"));
    csv << "x1,omega,eps_sq,is_minimum\n";
    for (int i = 0; i < res; ++i) {
      std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%d\n",
                    static_cast<double>(i) / (res - 1), curve[static_cast<std::size_t>(i)].omega,
                    curve[static_cast<std::size_t>(i)].eps_sq, i == best ? 1 : 0);
      csv << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "single-node minimum: x1=%.6g omega=%.6g eps=%.6g (grid of %d)\n",
                  static_cast<double>(best) / (res - 1),
                  curve[static_cast<std::size_t>(best)].omega,
                  std::sqrt(curve[static_cast<std::size_t>(best)].eps_sq), res);
    out << buf << "wrote " << out_path(cfg, "one_node.csv") << "\n";
    return 0;
  }

  const optweights::Sampler sampler = sampler_from(cfg);

  if (mode == "table") {
    const auto nodes = real_list(cfg, "nodes");
    const optweights::BasisEvaluations data = optweights::collect_evaluations(
        sampler, nodes, cfg.at("samples").get<int>(), a, b, rng);
    optweights::FitOptions fit;
    fit.holdout_fraction = cfg.at("holdout").get<double>();
    const optweights::OptimalRule rule = optweights::fit_weights(data, fit);

    struct TableRow {
      std::string method;
      std::vector<double> weights;
      double eps = 0.0;
      double eps_abs = 0.0;
    };
    std::vector<TableRow> table;
    table.push_back({"fitted", rule.weights, rule.eps, rule.eps_abs});

    // Fixed-weight comparison when the nodes form the equispaced triple.
    const double span = b - a;
    const bool simpson_nodes = nodes.size() == 3 && std::abs(nodes[0] - a) <= 1e-9 * span &&
                               std::abs(nodes[1] - (a + 0.5 * span)) <= 1e-9 * span &&
                               std::abs(nodes[2] - b) <= 1e-9 * span;
    if (simpson_nodes) {
      Eigen::VectorXd w(3);
      w << span / 6.0, 4.0 * span / 6.0, span / 6.0;
      const Eigen::VectorXd r = data.F * w - data.targets;
      TableRow srow;
      srow.method = "simpson";
      srow.weights = {w(0), w(1), w(2)};
      srow.eps = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
      srow.eps_abs = r.lpNorm<1>() / static_cast<double>(r.size());
      table.push_back(std::move(srow));
    }

    std::ofstream csv(out_path(cfg, "weights.csv"));
    csv << "method";
    for (std::size_t i = 0; i < nodes.size(); ++i) csv << ",node" << i + 1;
    for (std::size_t i = 0; i < nodes.size(); ++i) csv << ",w" << i + 1;
    csv << ",eps,eps_abs,samples\n";
    for (const auto& row : table) {
      csv << row.method;
      for (const double x : nodes) {
        std::snprintf(buf, sizeof(buf), ",%.10g", x);
        csv << buf;
      }
      for (const double w : row.weights) {
        std::snprintf(buf, sizeof(buf), ",%.10g", w);
        csv << buf;
      }
      std::snprintf(buf, sizeof(buf), ",%.10g,%.10g,%lld\n", row.eps, row.eps_abs,
                    rule.sample_count);
      csv << buf;
    }
    optweights::save_rule(rule, out_path(cfg, "rule.json"));

    out << "fitted weights:";
    for (const double w : rule.weights) {
      std::snprintf(buf, sizeof(buf), " %.6g", w);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "\n  eps=%.6g eps_abs=%.6g", rule.eps, rule.eps_abs);
    out << buf;
    if (table.size() > 1) {
      std::snprintf(buf, sizeof(buf), "  (fixed-weight rule: eps=%.6g eps_abs=%.6g)",
                    table[1].eps, table[1].eps_abs);
      out << buf;
    }
    out << "\nwrote " << out_path(cfg, "weights.csv") << ", " << out_path(cfg, "rule.json")
        << "\n";
    return 0;
  }

  if (mode == "surface") {
    optweights::GridSearchOptions opts;
    opts.resolution = cfg.at("resolution").get<int>();
    opts.samples_per_cell = cfg.at("samples_per_cell").get<int>();
    const optweights::GridSearchResult res =
        optweights::node_grid_search(sampler, cfg.at("n_nodes").get<int>(), a, b, opts, rng);
    optweights::write_surface_csv(res, out_path(cfg, "surface.csv"));
    out << "best nodes:";
    for (const double x : res.best_nodes) {
      std::snprintf(buf, sizeof(buf), " %.6g", x);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "\n  eps=%.6g skipped=%d resolution=%d\n", res.best_eps,
                  res.skipped_count, res.resolution);
    out << buf << "wrote " << out_path(cfg, "surface.csv") << "\n";
    return 0;
  }

  if (mode == "optimize") {
    std::vector<double> start = real_list(cfg, "start_nodes");
    if (start.empty()) start = real_list(cfg, "nodes");
    optweights::NodeOptimizeOptions opts;
    opts.samples_per_eval = cfg.at("opt_samples").get<int>();
    opts.max_iterations = cfg.at("max_iterations").get<int>();
    const optweights::NodeOptimizeResult res =
        optweights::node_optimize(sampler, start, a, b, opts, rng);
    optweights::save_rule(res.rule, out_path(cfg, "rule.json"));
    out << "nodes:";
    for (const double x : res.rule.nodes) {
      std::snprintf(buf, sizeof(buf), " %.6g", x);
      out << buf;
    }
    out << "  weights:";
    for (const double w : res.rule.weights) {
      std::snprintf(buf, sizeof(buf), " %.6g", w);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "\n  eps=%.6g iterations=%d converged=%s\n", res.rule.eps,
                  res.iterations, res.converged ? "yes" : "no");
    out << buf << "wrote " << out_path(cfg, "rule.json") << "\n";
    if (res.hit_cap) {
      err << "node search hit the iteration cap; rule.json holds the best visited nodes\n";
      return 3;
    }
    return 0;
  }

  throw usage_error("field 'mode': expected table, surface, one_node, or optimize; got '" +
                    mode + "'");
}

problems::SampledFunction fixed_function_from(const json& cfg,
                                              const problems::FunctionClassSpec& spec) {
  const auto params = real_list(cfg, "function_params");
  const auto need = [&](std::size_t n, const char* what) {
    if (params.size() != n) {
      throw usage_error("field 'function_params': " + std::string(what) + " needs " +
                        std::to_string(n) + " values, got " + std::to_string(params.size()));
    }
  };
  switch (spec.cls) {
    case problems::FunctionClass::SingleSine:
      need(3, "single_sine (c, w, phi)");
      return problems::make_single_sine(params[0], params[1], params[2], spec.domain_a,
                                        spec.domain_b);
    case problems::FunctionClass::SuperposedSines5: {
      need(15, "superposed_sines5 (c x5, w x5, phi x5)");
      const std::span<const double> all(params);
      return problems::make_superposed_sines(all.subspan(0, 5), all.subspan(5, 5),
                                             all.subspan(10, 5), spec.domain_a, spec.domain_b);
    }
    case problems::FunctionClass::BrokenPoly5:
      need(6, "broken_poly5 (ascending coefficients)");
      return problems::make_broken_poly(params, spec.domain_a, spec.domain_b);
    case problems::FunctionClass::PolyDegN:
      if (params.empty()) {
        throw usage_error("field 'function_params': poly_deg_n needs ascending coefficients");
      }
      return problems::make_poly(params, spec.domain_a, spec.domain_b);
    case problems::FunctionClass::DampedOscillatorVelocity:
      need(4, "damped_oscillator_velocity (A, w, phi, D)");
      return problems::make_damped_oscillator(params[0], params[1], params[2], params[3]);
  }
  throw usage_error("field 'problem': unsupported function class for a fixed function");
}

int cmd_trace(json& cfg, std::ostream& out, std::ostream& err) {
  (void)err;
  fill_common_defaults(cfg);
  set_default(cfg, "checkpoint", "");
  set_default(cfg, "meta_checkpoint", "");
  const std::string ckpt = cfg.at("checkpoint").get<std::string>();
  const std::string meta_ckpt = cfg.at("meta_checkpoint").get<std::string>();
  if (ckpt.empty() == meta_ckpt.empty()) {
    throw usage_error("trace needs exactly one of 'checkpoint' or 'meta_checkpoint'");
  }
  char buf[512];

  if (!meta_ckpt.empty()) {
    set_default(cfg, "system", "hybrid_pendulum");
    if (cfg.at("system").get<std::string>() == "hybrid_pendulum") {
      set_default(cfg, "time_span", json{0.0, 40.0});
    } else {
      set_default(cfg, "time_span", json{0.0, 200.0});
    }
    set_default(cfg, "base_actions", kPendulumActions);
    set_default(cfg, "reward_h_max", 0.0);
    set_default(cfg, "initial_state", json::array());
    validate_config(cfg, schema_for("trace"), "trace");
    echo_config(cfg);

    require_file(meta_ckpt, "meta checkpoint");
    const meta::MetaLearner ml = meta::MetaLearner::load(meta_ckpt);
    rl::OdeEnvConfig base_cfg;
    base_cfg.system = system_from(cfg);
    base_cfg.actions = actions_from(cfg, "base_actions");
    base_cfg.reward = ml.selector.reward_cfg;
    base_cfg.memory_m = ml.selector.memory_m;
    std::tie(base_cfg.t0, base_cfg.t1) = time_span_from(cfg);
    base_cfg.reward_h_max = cfg.at("reward_h_max").get<double>();
    const double tol = base_cfg.reward.tol;
    const int dim = base_cfg.system.dim;
    const double t0 = base_cfg.t0;
    const auto ic = real_list(cfg, "initial_state");
    meta::MetaEnv env(std::move(base_cfg), ml.pool);
    RngStream rng(cfg.at("seed").get<std::uint64_t>());
    if (ic.empty()) {
      env.reset(rng);
    } else {
      env.reset_from(t0, ic);
    }

    std::ofstream csv(out_path(cfg, "trace.csv"));
    csv << "t";
    for (int d = 0; d < dim; ++d) csv << ",x" << d + 1;
    csv << ",h,local_error,violation,reward,learner_index,learner_kind\n";
    long long violations = 0;
    long long steps = 0;
    while (!env.done()) {
      const double t_before = env.position();
      const std::vector<double> x_before = env.base().x();
      const int idx = ml.greedy(env.state());
      const rl::Transition tr = env.apply(idx);
      const bool violation = !(tr.eps < tol);
      violations += violation ? 1 : 0;
      ++steps;
      std::snprintf(buf, sizeof(buf), "%.10g", t_before);
      csv << buf;
      for (const double c : x_before) {
        std::snprintf(buf, sizeof(buf), ",%.10g", c);
        csv << buf;
      }
      std::snprintf(buf, sizeof(buf), ",%.10g,%.10g,%d,%.10g,%d,%s\n", tr.h_executed, tr.eps,
                    violation ? 1 : 0, tr.reward, idx,
                    ml.pool.entries[static_cast<std::size_t>(idx)].label().c_str());
      csv << buf;
    }
    out << "steps=" << steps << " violations=" << violations
        << " final_t=" << format_double_brief(env.position()) << " wrote "
        << out_path(cfg, "trace.csv") << "\n";
    return 0;
  }

  require_file(ckpt, "checkpoint");
  const rl::BaseLearner learner = rl::BaseLearner::load(ckpt);

  if (learner.problem_kind == "quadrature") {
    fill_quad_problem_defaults(cfg);
    set_default(cfg, "function_params", json::array());
    validate_config(cfg, schema_for("trace"), "trace");
    echo_config(cfg);

    const problems::FunctionClassSpec spec = quad_spec_from(cfg);
    RngStream rng(cfg.at("seed").get<std::uint64_t>(), 7);
    const problems::SampledFunction f = cfg.at("function_params").empty()
                                            ? problems::sample_function(spec, rng)
                                            : fixed_function_from(cfg, spec);
    rl::QuadratureEnvConfig env_cfg;
    env_cfg.function_class = spec;
    env_cfg.actions = learner.actions;
    env_cfg.reward = learner.reward_cfg;
    env_cfg.memory_m = learner.memory_m;
    rl::QuadratureEnv env(env_cfg);
    env.reset_with(f);
    const double tol = learner.reward_cfg.tol;

    std::ofstream csv(out_path(cfg, "trace.csv"));
    csv << "x,h,f_left,f_mid,f_right,local_error,violation,reward\n";
    long long violations = 0;
    long long steps = 0;
    while (!env.done()) {
      const double x_before = env.position();
      const int a = learner.greedy(env.state());
      const rl::Transition tr = env.apply(a);
      const bool violation = !(tr.eps < tol);
      violations += violation ? 1 : 0;
      ++steps;
      std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d,%.10g\n", x_before,
                    tr.h_executed, f(x_before), f(x_before + tr.h_executed),
                    f(x_before + 2.0 * tr.h_executed), tr.eps, violation ? 1 : 0, tr.reward);
      csv << buf;
    }
    out << "steps=" << steps << " violations=" << violations
        << " integral=" << format_double_brief(env.integral()) << " wrote "
        << out_path(cfg, "trace.csv") << "\n";
    return 0;
  }

  // Plain ODE controller trace.
  fill_ode_problem_defaults(cfg);
  set_default(cfg, "initial_state", json::array());
  validate_config(cfg, schema_for("trace"), "trace");
  echo_config(cfg);

  rl::OdeEnvConfig env_cfg;
  env_cfg.system = system_from(cfg);
  env_cfg.actions = learner.actions;
  env_cfg.reward = learner.reward_cfg;
  env_cfg.memory_m = learner.memory_m;
  std::tie(env_cfg.t0, env_cfg.t1) = time_span_from(cfg);
  const double tol = learner.reward_cfg.tol;
  const int dim = env_cfg.system.dim;
  const double t0 = env_cfg.t0;
  std::vector<double> ic = real_list(cfg, "initial_state");
  if (ic.empty()) ic = env_cfg.system.x0;
  rl::OdeEnv env(std::move(env_cfg));
  env.reset_from(t0, ic);

  std::ofstream csv(out_path(cfg, "trace.csv"));
  csv << "t";
  for (int d = 0; d < dim; ++d) csv << ",x" << d + 1;
  csv << ",h,local_error,violation,reward\n";
  long long violations = 0;
  long long steps = 0;
  while (!env.done()) {
    const double t_before = env.position();
    const std::vector<double> x_before = env.x();
    const int a = learner.greedy(env.state());
    const rl::Transition tr = env.apply(a);
    const bool violation = !(tr.eps < tol);
    violations += violation ? 1 : 0;
    ++steps;
    std::snprintf(buf, sizeof(buf), "%.10g", t_before);
    csv << buf;
    for (const double c : x_before) {
      std::snprintf(buf, sizeof(buf), ",%.10g", c);
      csv << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.10g,%.10g,%d,%.10g\n", tr.h_executed, tr.eps,
                  violation ? 1 : 0, tr.reward);
    csv << buf;
  }
  out << "steps=" << steps << " violations=" << violations
      << " final_t=" << format_double_brief(env.position()) << " wrote "
      << out_path(cfg, "trace.csv") << "\n";
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
      out << "usage: steprl <subcommand> [--config file.json] [--<field> <value> ...]\n"
          << "subcommands:\n"
          << "  train-quad   train a quadrature step controller\n"
          << "  train-ode    train an ODE step controller\n"
          << "  train-meta   train a dispatcher over a controller pool\n"
          << "  bench-quad   error-vs-evaluations table for quadrature methods\n"
          << "  bench-ode    error-vs-evaluations table for ODE integrators\n"
          << "  weights      statistically optimal quadrature weights\n"
          << "  trace        per-step CSV trace of one integration run\n"
          << "Run 'steprl <subcommand> --help' for the field list.\n"
          << "Exit codes: 0 success, 2 usage, 3 convergence cap, 4 numeric failure.\n";
      return args.empty() ? 2 : 0;
    }
    const std::string cmd = args[0];
    const std::vector<FieldSpec> schema = schema_for(cmd);
    json cfg =
        parse_args(cmd, schema, std::vector<std::string>(args.begin() + 1, args.end()), out);
    validate_config(cfg, schema, cmd);

    if (cmd == "train-quad") return cmd_train_quad(cfg, out, err);
    if (cmd == "train-ode") return cmd_train_ode(cfg, out, err);
    if (cmd == "train-meta") return cmd_train_meta(cfg, out, err);
    if (cmd == "bench-quad") return cmd_bench_quad(cfg, out, err);
    if (cmd == "bench-ode") return cmd_bench_ode(cfg, out, err);
    if (cmd == "weights") return cmd_weights(cfg, out, err);
    return cmd_trace(cfg, out, err);
  } catch (const HelpShown&) {
    return 0;
  } catch (const usage_error& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const convergence_cap_error& e) {
    err << "convergence cap: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const json::exception& e) {
    err << "usage error: invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace steprl::bench
