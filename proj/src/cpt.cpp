#include "acw/cpt.hpp"

#include <cmath>
#include <set>

#include "acw/errors.hpp"

namespace acw {

VariableDef::VariableDef(std::string n, std::vector<std::string> d, std::optional<std::string> undefined)
    : name(std::move(n)), domain(std::move(d)), undefined_value(std::move(undefined)) {
  if (name.empty()) throw ModelError("variable name must be non-empty");
  if (domain.size() < 2) throw ModelError("variable " + name + ": domain needs at least two values");
  std::set<std::string> seen(domain.begin(), domain.end());
  if (seen.size() != domain.size()) throw ModelError("variable " + name + ": duplicate domain values");
  if (undefined_value && !seen.count(*undefined_value))
    throw ModelError("variable " + name + ": undefined value not in domain");
}

std::optional<std::size_t> VariableDef::find(const std::string& value) const {
  for (std::size_t i = 0; i < domain.size(); ++i)
    if (domain[i] == value) return i;
  return std::nullopt;
}

std::size_t VariableDef::index_of(const std::string& value) const {
  auto i = find(value);
  if (!i) throw ModelError("value '" + value + "' not in domain of " + name);
  return *i;
}

void to_json(nlohmann::json& j, const VariableDef& v) {
  j = {{"name", v.name}, {"domain", v.domain}};
  if (v.undefined_value) j["undefined"] = *v.undefined_value;
}

void from_json(const nlohmann::json& j, VariableDef& v) {
  if (!j.is_object() || !j.contains("name") || !j.contains("domain"))
    throw ModelError("variable needs name and domain");
  std::optional<std::string> undef;
  if (j.contains("undefined") && !j["undefined"].is_null()) undef = j["undefined"].get<std::string>();
  v = VariableDef(j["name"].get<std::string>(), j["domain"].get<std::vector<std::string>>(), undef);
}

Cpt::Cpt(VariableDef c, std::vector<VariableDef> ps, std::vector<double> t)
    : child(std::move(c)), parents(std::move(ps)), table(std::move(t)) {
  if (table.size() != rows() * child.size())
    throw ModelError("cpt for " + child.name + ": expected " + std::to_string(rows() * child.size()) +
                     " entries, got " + std::to_string(table.size()));
  for (const auto& p : parents)
    if (p.name == child.name) throw ModelError("cpt for " + child.name + " lists itself as parent");
}

Cpt Cpt::prior(VariableDef child, std::vector<double> probs) {
  return Cpt(std::move(child), {}, std::move(probs));
}

Cpt Cpt::deterministic(VariableDef child, std::vector<VariableDef> parents,
                       const std::vector<std::string>& mapping) {
  std::size_t rows = 1;
  for (const auto& p : parents) rows *= p.size();
  if (mapping.size() != rows) throw ModelError("deterministic cpt for " + child.name + ": mapping size");
  std::vector<double> t(rows * child.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) t[r * child.size() + child.index_of(mapping[r])] = 1.0;
  return Cpt(std::move(child), std::move(parents), std::move(t));
}

std::size_t Cpt::rows() const {
  std::size_t r = 1;
  for (const auto& p : parents) r *= p.size();
  return r;
}

std::size_t Cpt::row_of(const std::vector<std::size_t>& parent_values) const {
  if (parent_values.size() != parents.size()) throw ModelError("cpt row: wrong parent count");
  std::size_t r = 0;
  for (std::size_t i = 0; i < parents.size(); ++i) {
    if (parent_values[i] >= parents[i].size()) throw ModelError("cpt row: parent value out of range");
    r = r * parents[i].size() + parent_values[i];
  }
  return r;
}

std::vector<double> Cpt::row(std::size_t r) const {
  auto k = child.size();
  return {table.begin() + static_cast<long>(r * k), table.begin() + static_cast<long>((r + 1) * k)};
}

bool Cpt::normalized(double tol) const {
  auto k = child.size();
  for (std::size_t r = 0; r < rows(); ++r) {
    double s = 0;
    for (std::size_t v = 0; v < k; ++v) {
      double x = table[r * k + v];
      if (!(x >= 0.0 && x <= 1.0)) return false;
      s += x;
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace acw
