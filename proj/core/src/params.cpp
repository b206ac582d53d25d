#include "recon/params.hpp"

#include <algorithm>
#include <cmath>

#include "recon/error.hpp"

namespace recon {

namespace {
constexpr double kGroupTolerance = 1e-9;
}

std::string_view to_string(ParamKind kind) noexcept {
  switch (kind) {
    case ParamKind::transition: return "transition";
    case ParamKind::reward: return "reward";
    case ParamKind::discount: return "discount";
    case ParamKind::initial: return "initial";
  }
  return "unknown";
}

ParamKind parse_param_kind(std::string_view text) {
  if (text == "transition") return ParamKind::transition;
  if (text == "reward") return ParamKind::reward;
  if (text == "discount") return ParamKind::discount;
  if (text == "initial") return ParamKind::initial;
  throw ConfigError("unknown parameter kind '" + std::string(text) + "'");
}

bool ParamSpec::is_legal(double value) const {
  if (!std::isfinite(value)) return false;
  if (range) return value >= range->first && value <= range->second;
  return std::find(candidates.begin(), candidates.end(), value) != candidates.end();
}

ParamSchema::ParamSchema(std::vector<ParamSpec> specs) : specs_(std::move(specs)) {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const ParamSpec& spec = specs_[i];
    if (!index_.emplace(spec.id, i).second) {
      throw InvalidModel("duplicate parameter '" + spec.id.key + "'");
    }
    if (!spec.range && spec.candidates.empty()) {
      throw InvalidModel("parameter '" + spec.id.key + "' declares neither range nor candidates");
    }
    if (!spec.is_legal(spec.default_value)) {
      throw InvalidModel("default of parameter '" + spec.id.key + "' is outside its legal values");
    }
    for (double c : spec.candidates) {
      if (!spec.is_legal(c)) {
        throw InvalidModel("candidate of parameter '" + spec.id.key + "' is outside its range");
      }
    }
  }
  for (const std::string& group : groups()) {
    double total = 0.0;
    for (const ParamId& id : group_members(group)) total += at(id).default_value;
    if (std::abs(total - 1.0) > kGroupTolerance) {
      throw InvalidModel("parameter group '" + group + "' defaults sum to " +
                         std::to_string(total) + ", expected 1");
    }
  }
}

const ParamSpec& ParamSchema::at(const ParamId& id) const {
  const ParamSpec* spec = find(id);
  if (spec == nullptr) throw UnknownParam("unknown parameter '" + id.key + "'");
  return *spec;
}

const ParamSpec* ParamSchema::find(const ParamId& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &specs_[it->second];
}

std::vector<ParamId> ParamSchema::group_members(const std::string& group) const {
  std::vector<ParamId> members;
  if (group.empty()) return members;
  for (const ParamSpec& spec : specs_) {
    if (spec.group == group) members.push_back(spec.id);
  }
  return members;
}

std::vector<std::string> ParamSchema::groups() const {
  std::vector<std::string> out;
  for (const ParamSpec& spec : specs_) {
    if (!spec.group.empty() && std::find(out.begin(), out.end(), spec.group) == out.end()) {
      out.push_back(spec.group);
    }
  }
  return out;
}

ParamAssignment ParamSchema::defaults() const {
  ParamAssignment out;
  for (const ParamSpec& spec : specs_) out.emplace(spec.id, spec.default_value);
  return out;
}

void ParamSchema::validate(const ParamAssignment& assignment) const {
  for (const auto& [id, value] : assignment) {
    if (!contains(id)) throw InvalidModel("assignment names unknown parameter '" + id.key + "'");
  }
  for (const ParamSpec& spec : specs_) {
    auto it = assignment.find(spec.id);
    if (it == assignment.end()) {
      throw InvalidModel("assignment is missing parameter '" + spec.id.key + "'");
    }
    if (!spec.is_legal(it->second)) {
      throw InvalidModel("parameter '" + spec.id.key + "' has illegal value " +
                         std::to_string(it->second));
    }
  }
  for (const std::string& group : groups()) {
    double total = 0.0;
    for (const ParamId& id : group_members(group)) total += assignment.at(id);
    if (std::abs(total - 1.0) > kGroupTolerance) {
      throw InvalidModel("parameter group '" + group + "' sums to " + std::to_string(total));
    }
  }
}

namespace tabular {

ParamId transition_id(StateId s, ActionId a, StateId next) {
  return {"T[" + std::to_string(s) + "," + std::to_string(a) + "," + std::to_string(next) + "]"};
}

ParamId reward_id(StateId s, ActionId a, StateId next) {
  return {"R[" + std::to_string(s) + "," + std::to_string(a) + "," + std::to_string(next) + "]"};
}

ParamId discount_id() { return {"gamma"}; }

ParamId initial_id(StateId s) { return {"mu[" + std::to_string(s) + "]"}; }

std::vector<ParamId> transition_row(int num_states, StateId s, ActionId a) {
  std::vector<ParamId> row;
  for (StateId next = 0; next < num_states; ++next) row.push_back(transition_id(s, a, next));
  return row;
}

}  // namespace tabular

namespace {

std::string row_group(StateId s, ActionId a) {
  return "T[" + std::to_string(s) + "," + std::to_string(a) + "]";
}

}  // namespace

TabularFamily::TabularFamily(int num_states, int num_actions, std::set<StateId> terminal_states)
    : num_states_(num_states), num_actions_(num_actions), terminal_(std::move(terminal_states)) {
  if (num_states <= 0 || num_actions <= 0) throw InvalidModel("empty tabular model");
  for (StateId t : terminal_) {
    if (t < 0 || t >= num_states) throw InvalidModel("terminal state out of range");
  }
  constexpr double kRewardBound = 1e6;
  std::vector<ParamSpec> specs;
  for (StateId s = 0; s < num_states; ++s) {
    for (ActionId a = 0; a < num_actions; ++a) {
      for (StateId next = 0; next < num_states; ++next) {
        ParamSpec t;
        t.id = tabular::transition_id(s, a, next);
        t.kind = ParamKind::transition;
        t.role = "transition_entry";
        t.range = {0.0, 1.0};
        t.default_value = next == s ? 1.0 : 0.0;
        t.group = row_group(s, a);
        specs.push_back(std::move(t));
      }
    }
  }
  for (StateId s = 0; s < num_states; ++s) {
    for (ActionId a = 0; a < num_actions; ++a) {
      for (StateId next = 0; next < num_states; ++next) {
        ParamSpec r;
        r.id = tabular::reward_id(s, a, next);
        r.kind = ParamKind::reward;
        r.role = "reward_entry";
        r.range = {-kRewardBound, kRewardBound};
        specs.push_back(std::move(r));
      }
    }
  }
  ParamSpec gamma;
  gamma.id = tabular::discount_id();
  gamma.kind = ParamKind::discount;
  gamma.role = "discount";
  gamma.range = {0.0, std::nextafter(1.0, 0.0)};
  gamma.default_value = 0.9;
  specs.push_back(std::move(gamma));
  for (StateId s = 0; s < num_states; ++s) {
    ParamSpec mu;
    mu.id = tabular::initial_id(s);
    mu.kind = ParamKind::initial;
    mu.role = "initial_entry";
    mu.range = {0.0, 1.0};
    mu.default_value = s == 0 ? 1.0 : 0.0;
    mu.group = "mu";
    specs.push_back(std::move(mu));
  }
  schema_ = ParamSchema(std::move(specs));
}

Mdp TabularFamily::build(const ParamAssignment& params) const {
  schema_.validate(params);
  Mdp::Builder builder(num_states_, num_actions_);
  for (StateId s = 0; s < num_states_; ++s) {
    if (terminal_.contains(s)) {
      builder.set_terminal(s);
      continue;
    }
    for (ActionId a = 0; a < num_actions_; ++a) {
      for (StateId next = 0; next < num_states_; ++next) {
        builder.add_transition(s, a, next, params.at(tabular::transition_id(s, a, next)),
                               params.at(tabular::reward_id(s, a, next)));
      }
    }
  }
  builder.set_discount(params.at(tabular::discount_id()));
  for (StateId s = 0; s < num_states_; ++s) builder.set_initial(s, params.at(tabular::initial_id(s)));
  return builder.build();
}

ParamAssignment TabularFamily::assignment_of(const Mdp& mdp) const {
  if (mdp.num_states() != num_states_ || mdp.num_actions() != num_actions_) {
    throw InvalidModel("MDP shape does not match the tabular family");
  }
  ParamAssignment out = schema_.defaults();
  for (StateId s = 0; s < num_states_; ++s) {
    for (ActionId a = 0; a < num_actions_; ++a) {
      for (StateId next = 0; next < num_states_; ++next) {
        out[tabular::transition_id(s, a, next)] = mdp.transition(s, a, next);
        out[tabular::reward_id(s, a, next)] = mdp.reward(s, a, next);
      }
    }
  }
  out[tabular::discount_id()] = mdp.discount();
  const auto mu = mdp.initial_distribution();
  for (StateId s = 0; s < num_states_; ++s) out[tabular::initial_id(s)] = mu[static_cast<std::size_t>(s)];
  return out;
}

}  // namespace recon
