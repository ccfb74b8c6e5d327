#pragma once

#include <stdexcept>
#include <string>

namespace acw {

/// Unknown registry ids, malformed configs.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Stepping a world whose episode has already ended.
struct EpisodeOverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Illegal edit path/value or an intervention time outside the trace.
struct InterventionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Observation handed to an agent that does not match its environment.
struct ObservationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Structural problems: cycles, CPT/graph mismatch, unresolved names.
struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Conditioning on an event of probability zero.
struct ConditioningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace acw
