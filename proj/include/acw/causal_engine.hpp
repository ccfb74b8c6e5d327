#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "acw/cpt.hpp"

namespace acw {

using Assignment = std::map<std::string, std::string>;

/// Discrete structural causal model. Each variable's exogenous noise is one independent
/// uniform per parent row, mapped to an outcome by cumulative thresholds over that row;
/// marginalizing the noise gives back the CPTs.
class ScmModel {
 public:
  ScmModel() = default;
  /// Validates names, parent sets, acyclicity and normalization; throws ModelError.
  ScmModel(std::vector<Cpt> cpts, std::vector<std::string> latent = {});

  [[nodiscard]] const std::vector<VariableDef>& variables() const { return vars_; }
  [[nodiscard]] const VariableDef& variable(const std::string& name) const;
  [[nodiscard]] std::size_t index(const std::string& name) const;
  [[nodiscard]] bool has(const std::string& name) const { return index_.count(name) > 0; }
  [[nodiscard]] const Cpt& cpt(const std::string& name) const;
  [[nodiscard]] const std::vector<std::size_t>& parents(std::size_t i) const { return parents_[i]; }
  [[nodiscard]] bool is_latent(const std::string& name) const;
  [[nodiscard]] const std::vector<std::size_t>& topo_order() const { return topo_; }
  [[nodiscard]] std::vector<std::string> latent_names() const;
  /// Directed edge parent -> child.
  [[nodiscard]] bool has_edge(const std::string& from, const std::string& to) const;

  /// Replaces each intervened variable's mechanism by a point mass without parents.
  [[nodiscard]] ScmModel mutilate(const Assignment& interventions) const;

  /// Probability of a full assignment given as value indices in variables() order.
  [[nodiscard]] double joint(const std::vector<std::size_t>& values) const;

 private:
  std::vector<VariableDef> vars_;
  std::vector<Cpt> cpts_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<bool> latent_;
  std::vector<std::size_t> topo_;
  std::map<std::string, std::size_t> index_;
};

nlohmann::json model_to_json(const ScmModel& m);
ScmModel model_from_json(const nlohmann::json& j);

struct Query {
  enum class Level { associational, interventional, counterfactual, path_response, hypothesis_posterior };

  Level level = Level::associational;
  Assignment target;
  /// Intervention for interventional queries; the antecedent for counterfactuals; the
  /// path setting for path responses.
  Assignment intervention;
  Assignment evidence;
  std::vector<std::string> path;
};

Query query_from_json(const nlohmann::json& j);
nlohmann::json query_to_json(const Query& q);

struct QueryResult {
  double probability = 0.0;
  std::string method;   // "enumeration" | "twin-world" | "chained-enumeration" | "bayes"
  std::string support;  // free-form note
};

nlohmann::json result_to_json(const QueryResult& r);

/// P(target | evidence) by exhaustive enumeration. Throws ConditioningError if P(evidence) = 0.
QueryResult query_assoc(const ScmModel& model, const Assignment& target, const Assignment& evidence);

/// P(target | do(intervention), evidence) on the mutilated model.
QueryResult query_do(const ScmModel& model, const Assignment& target, const Assignment& intervention,
                     const Assignment& evidence);

/// P(target_{do(antecedent)} | evidence): abduction over the row-wise noise, action in the
/// twin world, prediction of the target there.
QueryResult query_counterfactual(const ScmModel& model, const Assignment& target,
                                 const Assignment& antecedent, const Assignment& evidence);

/// Nested potential response along a directed chain X0 -> X1 -> ... -> Xn:
/// sum over mediator settings of prod_i P(X_{i+1} | do(X_i)), with X0 set by `setting`.
QueryResult path_response(const ScmModel& model, const std::vector<std::string>& chain,
                          const Assignment& setting, const Assignment& target);

/// Competing causal models under one hypothesis variable.
struct Hypotheses {
  std::string variable;
  struct Entry {
    std::string label;
    ScmModel model;
    double prior = 0.0;
  };
  std::vector<Entry> entries;
};

nlohmann::json hypotheses_to_json(const Hypotheses& h);
Hypotheses hypotheses_from_json(const nlohmann::json& j);

/// Posterior over hypotheses: prior times the evidence likelihood in each model mutilated by
/// `intervention`. Throws ConditioningError if every likelihood is zero.
std::map<std::string, double> hypothesis_posterior(const Hypotheses& h, const Assignment& intervention,
                                                   const Assignment& evidence);

/// Dispatches on query.level. Hypothesis queries are rejected here.
QueryResult run_query(const ScmModel& model, const Query& query);
/// Only hypothesis-posterior queries; the target names one hypothesis label.
QueryResult run_query(const Hypotheses& h, const Query& query);

}  // namespace acw
