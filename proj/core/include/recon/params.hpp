#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "recon/mdp.hpp"

namespace recon {

/// Which part of theta(M) = <theta_T, theta_R, theta_gamma, theta_mu> a
/// parameter belongs to.
enum class ParamKind { transition, reward, discount, initial };

std::string_view to_string(ParamKind kind) noexcept;
ParamKind parse_param_kind(std::string_view text);

/// Name of one editable model parameter. Tabular ids encode their indices in
/// the key (see tabular::transition_id); domain ids are layout names.
struct ParamId {
  std::string key;

  auto operator<=>(const ParamId&) const = default;
};

/// A full or partial value assignment over a parameter space.
using ParamAssignment = std::map<ParamId, double>;

/// Declaration of one parameter: kind, domain role, legal values, and the
/// categorical group it belongs to (empty when scalar).
struct ParamSpec {
  ParamId id;
  ParamKind kind = ParamKind::reward;
  std::string role;
  /// Closed legal interval; when absent the candidates are the legal set.
  std::optional<std::pair<double, double>> range;
  std::vector<double> candidates;
  double default_value = 0.0;
  /// Members of one group form a categorical distribution and sum to 1.
  std::string group;

  bool is_legal(double value) const;
};

class ParamSchema {
 public:
  ParamSchema() = default;
  /// Throws InvalidModel on duplicate ids or illegal defaults.
  explicit ParamSchema(std::vector<ParamSpec> specs);

  std::span<const ParamSpec> specs() const noexcept { return specs_; }
  std::size_t size() const noexcept { return specs_.size(); }
  bool contains(const ParamId& id) const { return index_.contains(id); }
  /// Throws UnknownParam.
  const ParamSpec& at(const ParamId& id) const;
  const ParamSpec* find(const ParamId& id) const;
  std::vector<ParamId> group_members(const std::string& group) const;
  std::vector<std::string> groups() const;

  ParamAssignment defaults() const;

  /// Assignment covers every parameter, values are legal, groups sum to 1
  /// within 1e-9. Throws InvalidModel naming the offending parameter.
  void validate(const ParamAssignment& assignment) const;

 private:
  std::vector<ParamSpec> specs_;
  std::map<ParamId, std::size_t> index_;
};

/// A family of MDPs over fixed state/action spaces, indexed by a parameter
/// assignment. Domains and raw tabular models both implement it, which is all
/// reconciliation needs.
class ModelFamily {
 public:
  virtual ~ModelFamily() = default;
  virtual const ParamSchema& schema() const = 0;
  /// Throws InvalidModel on missing or out-of-range values.
  virtual Mdp build(const ParamAssignment& params) const = 0;
};

/// Fully tabular parameterization of an MDP: one parameter per T(s,a,s'),
/// R(s,a,s'), gamma, and mu(s). Dense in S, so meant for small models.
class TabularFamily final : public ModelFamily {
 public:
  TabularFamily(int num_states, int num_actions, std::set<StateId> terminal_states = {});

  const ParamSchema& schema() const override { return schema_; }
  Mdp build(const ParamAssignment& params) const override;

  int num_states() const noexcept { return num_states_; }
  int num_actions() const noexcept { return num_actions_; }

  /// theta(M) of an MDP with matching shape.
  ParamAssignment assignment_of(const Mdp& mdp) const;

 private:
  int num_states_;
  int num_actions_;
  std::set<StateId> terminal_;
  ParamSchema schema_;
};

namespace tabular {
ParamId transition_id(StateId s, ActionId a, StateId next);
ParamId reward_id(StateId s, ActionId a, StateId next);
ParamId discount_id();
ParamId initial_id(StateId s);
/// All entries of P(.|s, a): the theta_T^{s,a} block.
std::vector<ParamId> transition_row(int num_states, StateId s, ActionId a);
}  // namespace tabular

}  // namespace recon
