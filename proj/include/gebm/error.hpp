#pragma once

#include <stdexcept>
#include <string>

namespace gebm {

/// Shapes or dimensions of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A primitive was evaluated outside its domain (log of a non-positive value,
/// exp overflow, ...). Carries the tape node index when raised by the AD core.
class DomainError : public std::domain_error {
 public:
  DomainError(const std::string& what, long node = -1)
      : std::domain_error(what), node_(node) {}
  long node() const noexcept { return node_; }

 private:
  long node_;
};

/// Bad configuration value, unknown key, or violated precondition.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Iterative procedure produced NaN/inf state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long step = -1)
      : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// Malformed file content (CSV rows, manifests, checkpoints).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gebm
