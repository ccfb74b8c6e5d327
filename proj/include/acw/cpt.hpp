#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace acw {

/// A discrete model variable with an ordered domain.
struct VariableDef {
  std::string name;
  std::vector<std::string> domain;
  /// Reserved domain value for traces where the feature is undefined (e.g. "?").
  std::optional<std::string> undefined_value;

  VariableDef() = default;
  VariableDef(std::string n, std::vector<std::string> d,
              std::optional<std::string> undefined = std::nullopt);

  [[nodiscard]] std::size_t size() const { return domain.size(); }
  /// Throws ModelError for values outside the domain.
  [[nodiscard]] std::size_t index_of(const std::string& value) const;
  [[nodiscard]] std::optional<std::size_t> find(const std::string& value) const;

  bool operator==(const VariableDef&) const = default;
};

void to_json(nlohmann::json& j, const VariableDef& v);
void from_json(const nlohmann::json& j, VariableDef& v);

/// Conditional probability table P(child | parents). Rows are indexed mixed-radix over the
/// parents with the first parent most significant; each row holds |child| probabilities.
struct Cpt {
  VariableDef child;
  std::vector<VariableDef> parents;
  std::vector<double> table;

  Cpt() = default;
  Cpt(VariableDef child, std::vector<VariableDef> parents, std::vector<double> table);

  /// Root CPT from a probability vector.
  static Cpt prior(VariableDef child, std::vector<double> probs);
  /// Deterministic child = mapping[parent row].
  static Cpt deterministic(VariableDef child, std::vector<VariableDef> parents,
                           const std::vector<std::string>& mapping);

  [[nodiscard]] std::size_t rows() const;
  [[nodiscard]] std::size_t row_of(const std::vector<std::size_t>& parent_values) const;
  [[nodiscard]] double p(std::size_t row, std::size_t value) const {
    return table[row * child.size() + value];
  }
  [[nodiscard]] std::vector<double> row(std::size_t r) const;

  /// Each row sums to 1 within `tol`, entries in [0, 1].
  [[nodiscard]] bool normalized(double tol = 1e-12) const;

  bool operator==(const Cpt&) const = default;
};

}  // namespace acw
