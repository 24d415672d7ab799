#pragma once

#include <stdexcept>
#include <string>

namespace relmeta {

// Precondition / API misuse. Callers are expected not to trigger these.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Physics integration produced a non-finite state.
struct SimulationDiverged : std::runtime_error {
  int step;
  SimulationDiverged(int step_, const std::string& what)
      : std::runtime_error(what), step(step_) {}
};

// A neural rollout produced a non-finite state.
struct ModelDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; message carries the byte offset when known.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File has a format_version or kind tag this build does not understand.
struct VersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid experiment configuration (maps to CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace relmeta
