#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "acw/causal_engine.hpp"
#include "acw/estimation.hpp"

namespace acw {

/// One CPT of a model: estimated from the pooled `regimes`, or fixed by the analyst.
struct CptPlan {
  std::string child;
  std::vector<std::string> parents;
  std::vector<std::string> regimes;
  std::optional<Cpt> fixed;
};

struct ModelPlan {
  std::string name;
  std::map<std::string, std::vector<std::string>> structure;
  std::vector<CptPlan> cpts;
  std::vector<LatentPrior> latents;
};

nlohmann::json model_plan_to_json(const ModelPlan& m);
ModelPlan model_plan_from_json(const nlohmann::json& j);
/// Estimates the plan's CPTs from `tree` and assembles the model.
ScmModel build_model(const ModelPlan& plan, const RolloutTree& tree);

nlohmann::json cpt_to_json(const Cpt& c);
Cpt cpt_from_json(const nlohmann::json& j);

struct HypothesisPlan {
  std::string name;
  std::string variable;
  struct Entry {
    std::string label;
    std::string model;
    double prior = 0.0;
  };
  std::vector<Entry> entries;
};

/// A table row: a query on a model or hypothesis set, or the difference of two earlier rows.
struct QueryRow {
  std::string label;
  std::string model;
  Query query;
  std::optional<std::pair<std::string, std::string>> difference;
};

/// Systems whose rollouts are pooled into one column's tree. `constants` adds fixed-valued
/// features (e.g. the agent type) to the source's traces.
struct DataSource {
  std::vector<AgentSpec> agents;
  std::map<std::string, std::string> constants;
};

struct Column {
  std::string label;
  std::vector<DataSource> sources;
};

struct ExperimentSpec {
  std::string name;
  EnvSpec env;
  std::vector<Column> columns;
  long rollouts = 1000;
  int horizon = 0;
  double alpha = 1.0;
  std::vector<Regime> regimes;
  std::vector<FeatureExtractor> extractors;
  std::vector<ModelPlan> models;
  std::vector<HypothesisPlan> hypotheses;
  std::vector<QueryRow> queries;
};

nlohmann::json experiment_to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_from_json(const nlohmann::json& j);

/// Registered experiment names in presentation order.
const std::vector<std::string>& experiment_names();
/// Throws ConfigError for unknown names.
ExperimentSpec make_experiment(const std::string& name);

struct QueryTable {
  std::string experiment;
  std::vector<std::string> columns;
  std::vector<std::string> labels;
  /// values[row][column]
  std::vector<std::vector<double>> values;
  nlohmann::json metadata = nlohmann::json::object();

  [[nodiscard]] std::optional<std::size_t> row(const std::string& label) const;
  [[nodiscard]] std::optional<std::size_t> column(const std::string& label) const;
  /// Throws ConfigError for unknown labels.
  [[nodiscard]] double at(const std::string& row, const std::string& column) const;
};

nlohmann::json table_to_json(const QueryTable& t);
QueryTable table_from_json(const nlohmann::json& j);
/// Aligned plain-text rendering.
std::string table_to_text(const QueryTable& t);

/// Models built from one column's data, exposed for inspection and the service.
struct ColumnModels {
  RolloutTree tree;
  std::map<std::string, ScmModel> models;
  std::map<std::string, Hypotheses> hypotheses;
};

/// Collects, estimates and assembles for one column.
ColumnModels build_column(const ExperimentSpec& spec, std::size_t column, const Seed& master);

/// collect -> estimate -> assemble -> query for every column. Deterministic in the seed.
QueryTable run_experiment(const ExperimentSpec& spec, const Seed& master);
QueryTable run_experiment(const std::string& name, long rollouts, std::uint64_t seed);

/// Per-cell tolerances. Document shape:
///   {"default": 0.05,
///    "experiments": {name: {"default": tol,
///                           "cells": {row: {column: tol | "skip"}},
///                           "orderings": [{"column": c, "increasing": [row, ...]}]}}}
struct DiffCell {
  std::string experiment;
  std::string row;
  std::string column;
  double actual = 0.0;
  std::optional<double> reference;
  std::optional<double> tolerance;  // nullopt: not checked
  bool pass = true;
};

struct DiffReport {
  std::vector<DiffCell> cells;
  std::vector<std::string> ordering_failures;
  std::vector<std::string> orderings_checked;

  [[nodiscard]] bool pass() const;
  [[nodiscard]] std::string to_text() const;
};

/// Throws ConfigError on row or column label mismatch.
DiffReport diff_tables(const QueryTable& actual, const QueryTable& reference, const nlohmann::json& tolerances);

}  // namespace acw
