#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acw/causal_engine.hpp"
#include "acw/cpt.hpp"
#include "acw/simulator.hpp"

namespace acw {

/// Declarative trace feature. Rules (the JSON "rule" field):
///   terminal-side      {entity}            side of the entity's final column: "l" | "r"
///   floor-kind         {t}                 floor material at step t: "g" | "s"
///   midpoint-side      {entity, t}         side of the entity's column at step t: "l" | "r"
///   pill-side          {t}                 side of the pill at step t: "l" | "r"
///   quadrant-of        {tile, t}           pick-up quadrant of a tile at step t: "n" | "e" | "s" | "w"
///   gate-side          {t}                 which gate is open at step t: "l" | "r"
///   door-state         {t}                 key-door door at step t: "o" | "c"
///   picked-up          {entity, item}      item in the final inventory: "y" | "n"
///   pill-color         {entity}            colour of the collected pill: "re" | "gr"
///   reward-collected   {entity}            any pill collected: "1" | "0"
///   move-direction     {entity, t}         action at step t: "u" | "d" | "l" | "r" | "n"
///   constant           {value}
/// An optional "map" object renames rule outputs to domain values. A rule that cannot be
/// evaluated yields the variable's undefined value, or EstimationError if it has none.
struct FeatureExtractor {
  std::string name;
  VariableDef variable;
  nlohmann::json rule;

  [[nodiscard]] std::string evaluate(const Trace& trace) const;
};

nlohmann::json extractor_to_json(const FeatureExtractor& f);
FeatureExtractor extractor_from_json(const nlohmann::json& j);

/// Raw rule output before mapping; nullopt when undefined on this trace.
std::optional<std::string> evaluate_rule(const nlohmann::json& rule, const Trace& trace);

/// Named intervention regime. Each template is either a literal InterventionSpec or one of
/// the trace-dependent forms resolved against the rollout as it unfolds:
///   {"kind":"mirror-entity", "time", "entity"}         move entity to the mirrored column
///   {"kind":"relocate-tile", "time", "tile", "quadrant"} move a tile to a random free cell of a quadrant
///   {"kind":"remove-tile", "time", "tile"}             overwrite a tile with floor
///   {"kind":"grant-tile", "time", "tile", "entity", "item"} remove a tile and put item in inventory
/// The empty template list is the observational regime.
struct Regime {
  std::string name;
  nlohmann::json templates = nlohmann::json::array();
};

nlohmann::json regime_to_json(const Regime& r);
Regime regime_from_json(const nlohmann::json& j);

/// Concrete interventions for one rollout of `regime`.
std::vector<InterventionSpec> resolve_regime(const Regime& regime, const System& system, const Seed& seed,
                                             int horizon);

/// Per-regime counts over full variable assignments.
class RolloutTree {
 public:
  struct Branch {
    nlohmann::json templates = nlohmann::json::array();
    long n = 0;
    std::map<std::vector<std::size_t>, long> counts;

    bool operator==(const Branch&) const = default;
  };

  RolloutTree() = default;
  RolloutTree(std::vector<VariableDef> variables, double alpha = 1.0);

  [[nodiscard]] const std::vector<VariableDef>& variables() const { return vars_; }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] const std::map<std::string, Branch>& regimes() const { return regimes_; }
  [[nodiscard]] bool has_regime(const std::string& name) const { return regimes_.count(name) > 0; }
  [[nodiscard]] const VariableDef& variable(const std::string& name) const;

  void add_regime(const Regime& regime);
  void add(const std::string& regime, const std::vector<std::size_t>& assignment, long count = 1);
  /// Associative, commutative count merge. Throws EstimationError on variable mismatch.
  void merge(const RolloutTree& other);

  /// Count of traces under `regime` matching a partial assignment.
  [[nodiscard]] long count(const std::string& regime, const Assignment& partial) const;

  bool operator==(const RolloutTree&) const = default;

 private:
  std::vector<VariableDef> vars_;
  double alpha_ = 1.0;
  std::map<std::string, Branch> regimes_;
};

/// {"variables", "alpha", "regimes": {name: {"templates", "n", "counts": nested map}}}.
nlohmann::json tree_to_json(const RolloutTree& t);
RolloutTree tree_from_json(const nlohmann::json& j);

struct CollectOptions {
  long n = 1000;
  /// Steps per rollout; 0 runs to termination or the step budget.
  int horizon = 0;
  double alpha = 1.0;
};

/// Generates n rollouts per regime in parallel; rollout i uses master.child({i}) in every
/// regime. The result does not depend on the thread count.
RolloutTree collect(const System& system, const std::vector<Regime>& regimes,
                    const std::vector<FeatureExtractor>& extractors, const Seed& master,
                    const CollectOptions& options);

/// Single-threaded reference implementation of `collect`.
RolloutTree collect_serial(const System& system, const std::vector<Regime>& regimes,
                           const std::vector<FeatureExtractor>& extractors, const Seed& master,
                           const CollectOptions& options);

/// Posterior-mean CPT (count + a) / (total + aK) from the counts pooled over `regimes`.
/// Throws EstimationError for unknown regimes or variables.
Cpt estimate_cpt(const RolloutTree& tree, const std::string& child, const std::vector<std::string>& parents,
                 const std::vector<std::string>& regimes);
Cpt estimate_cpt(const RolloutTree& tree, const std::string& child, const std::vector<std::string>& parents,
                 const std::string& regime);

/// Builds a model from CPTs and a parent map; latent roots get their analyst priors.
/// Throws ModelError on cycles or CPT/graph mismatches.
struct LatentPrior {
  VariableDef variable;
  std::vector<double> prior;
};
ScmModel assemble_model(const std::vector<Cpt>& cpts, const std::map<std::string, std::vector<std::string>>& structure,
                        const std::vector<LatentPrior>& latents = {});

}  // namespace acw
