#pragma once

// Reference computations for the tests, written independently of the library's algorithms.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "acw/causal_engine.hpp"

namespace oracle {

/// Plain SCM over integer-coded variables; rows are mixed-radix with the first parent most
/// significant.
struct Net {
  std::vector<std::string> names;
  std::vector<int> card;
  std::vector<std::vector<int>> parents;
  std::vector<std::vector<std::vector<double>>> table;  // [var][row][value]
};

Net from_model(const acw::ScmModel& m);

/// Random DAG over `n` binary variables with random CPTs; some rows are deterministic.
acw::ScmModel random_model(std::mt19937_64& rng, int n);

using Setting = std::map<int, int>;

/// Brute force over every joint response function (one outcome per variable per parent row).
double assoc(const Net& net, const Setting& target, const Setting& evidence);
double interventional(const Net& net, const Setting& target, const Setting& intervention, const Setting& evidence);
double counterfactual(const Net& net, const Setting& target, const Setting& antecedent, const Setting& evidence);
double path(const Net& net, const std::vector<int>& chain, int start_value, int end_value);

/// Fraction of key-door layouts in which a noiseless agent A collects the key with the door open.
double key_door_a_key_rate();

/// Determinism suites over randomized (env, agent, seed, intervention) trials. Each returns
/// the number of failing trials.
int determinism_failures(int trials, std::uint64_t seed);
int branch_prefix_failures(int trials, std::uint64_t seed);
int rewind_replay_failures(int trials, std::uint64_t seed);

}  // namespace oracle
