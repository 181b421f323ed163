#pragma once

#include <stdexcept>
#include <string>

namespace steprl {

// Bad arguments, malformed configs, contract violations at API boundaries.
class usage_error : public std::invalid_argument {
 public:
  explicit usage_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-finite values, solver breakdowns, singular systems.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Training hit the episode cap without meeting the convergence criterion.
class convergence_cap_error : public std::runtime_error {
 public:
  explicit convergence_cap_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace steprl
