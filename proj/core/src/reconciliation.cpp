#include "recon/reconciliation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "recon/error.hpp"

namespace recon {

std::vector<Message> select_messages_by_mask(const std::vector<Message>& catalog,
                                             MessageMask mask) {
  std::vector<Message> out;
  for (std::size_t i = 0; i < catalog.size() && i < kMaxCatalogSize; ++i) {
    if (mask_has(mask, i)) out.push_back(catalog[i]);
  }
  return out;
}

std::size_t message_index(const std::vector<Message>& catalog, const std::string& id) {
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (catalog[i].id == id) return i;
  }
  throw UnknownParam("unknown message '" + id + "'");
}

MessageMask mask_from_ids(const std::vector<Message>& catalog,
                          const std::vector<std::string>& ids) {
  MessageMask mask = 0;
  for (const std::string& id : ids) {
    std::size_t i = message_index(catalog, id);
    if (i >= kMaxCatalogSize) throw ConfigError("catalog index out of mask range");
    mask |= MessageMask{1} << i;
  }
  return mask;
}

ParamAssignment reconcile(const ParamSchema& schema, const ParamAssignment& human,
                          const ParamAssignment& robot, const std::set<ParamId>& subset) {
  for (const ParamId& id : subset) {
    if (!schema.contains(id)) throw UnknownParam("unknown parameter '" + id.key + "'");
  }
  for (const ParamSpec& spec : schema.specs()) {
    if (!human.contains(spec.id) || !robot.contains(spec.id)) {
      throw InvalidModel("assignment is missing parameter '" + spec.id.key + "'");
    }
  }

  ParamAssignment out = human;
  for (const ParamId& id : subset) out[id] = robot.at(id);

  for (const std::string& group : schema.groups()) {
    std::vector<ParamId> members = schema.group_members(group);
    std::vector<ParamId> free;
    bool touched = false;
    double fixed_mass = 0.0;
    for (const ParamId& id : members) {
      if (subset.contains(id)) {
        touched = true;
        fixed_mass += robot.at(id);
      } else if (human.at(id) == robot.at(id)) {
        fixed_mass += robot.at(id);
      } else {
        free.push_back(id);
      }
    }
    if (!touched || free.empty()) continue;

    double residual = std::max(0.0, 1.0 - fixed_mass);
    double held = 0.0;
    for (const ParamId& id : free) held += human.at(id);
    for (const ParamId& id : free) {
      out[id] = held > 0.0 ? human.at(id) * (residual / held)
                           : residual / static_cast<double>(free.size());
    }
  }
  return out;
}

ParamAssignment message_params(std::span<const Message> messages) {
  ParamAssignment out;
  for (const Message& m : messages) {
    for (const auto& [id, value] : m.params) {
      auto [it, inserted] = out.emplace(id, value);
      if (!inserted && it->second != value) {
        throw ConflictingMessages("messages disagree on parameter '" + id.key + "'");
      }
    }
  }
  return out;
}

std::set<ParamId> message_param_ids(std::span<const Message> messages) {
  std::set<ParamId> out;
  for (const Message& m : messages) {
    for (const auto& entry : m.params) out.insert(entry.first);
  }
  return out;
}

double cost(std::span<const Message> messages) {
  double total = 0.0;
  for (const Message& m : messages) total += m.cost;
  return total;
}

std::vector<Message> messages_for_params(const ParamAssignment& robot,
                                         const std::vector<ParamId>& ids) {
  std::vector<Message> out;
  out.reserve(ids.size());
  for (const ParamId& id : ids) {
    out.push_back(Message{id.key, "set " + id.key, {{id, robot.at(id)}}, 1.0});
  }
  return out;
}

SolvedModel solve_model(Mdp mdp, const SolveOptions& options) {
  Solution solution = value_iteration(mdp, options);
  Policy policy = greedy_policy(solution.q);
  return SolvedModel{std::move(mdp), std::move(solution), std::move(policy)};
}

const SolvedModel& ModelCache::get(const ParamAssignment& params) {
  auto it = cache_.find(params);
  if (it != cache_.end()) return *it->second;
  auto solved = std::make_unique<SolvedModel>(solve_model(family_->build(params), options_));
  return *cache_.emplace(params, std::move(solved)).first->second;
}

std::string_view to_string(ExplanationMode mode) noexcept {
  return mode == ExplanationMode::policy ? "policy" : "behavior";
}

std::string_view to_string(SearchMode mode) noexcept {
  return mode == SearchMode::exhaustive ? "exhaustive" : "greedy";
}

namespace {

PolicyCheck policy_against(const SolvedModel& robot, const SolvedModel& reconciled,
                           double eps_opt) {
  PolicyCheck out;
  for (StateId s = 0; s < robot.mdp.num_states(); ++s) {
    if (robot.mdp.is_terminal(s)) continue;
    if (!is_optimal_action(reconciled.solution.q, s, robot.policy(s), eps_opt)) {
      out.violations.push_back(s);
    }
  }
  out.complete = out.violations.empty();
  return out;
}

std::size_t violation_count(const BehaviorCheck& check) {
  std::size_t n = 0;
  for (const TraceDiagnosis& d : check.traces) {
    n += d.suboptimal_steps.size();
    if (d.inconsistent_policy) ++n;
    if (d.probability_too_low) ++n;
  }
  return n;
}

}  // namespace

PolicyCheck check_policy_complete(const ModelFamily& family, const ParamAssignment& human,
                                  const ParamAssignment& robot, const std::set<ParamId>& subset,
                                  double eps_opt) {
  SolvedModel r = solve_model(family.build(robot));
  SolvedModel rec = solve_model(family.build(reconcile(family.schema(), human, robot, subset)));
  return policy_against(r, rec, eps_opt);
}

std::string TraceDiagnosis::reason() const {
  if (explicable) return "explicable";
  std::ostringstream out;
  const char* sep = "";
  if (!suboptimal_steps.empty()) {
    out << "suboptimal action at step";
    for (std::size_t t : suboptimal_steps) out << ' ' << t;
    sep = "; ";
  }
  if (inconsistent_policy) {
    out << sep << "inconsistent policy";
    sep = "; ";
  }
  if (probability_too_low) out << sep << "probability " << probability;
  return out.str();
}

BehaviorCheck check_behavior_against(const SolvedModel& reconciled,
                                     std::span<const Trajectory> traces,
                                     const CheckOptions& options) {
  BehaviorCheck out;
  out.complete = true;
  for (const Trajectory& traj : traces) {
    TraceDiagnosis d;
    std::map<StateId, ActionId> chosen;
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const Transition& step = traj.steps[t];
      if (!is_optimal_action(reconciled.solution.q, step.state, step.action, options.eps_opt)) {
        d.suboptimal_steps.push_back(t);
      }
      auto [it, inserted] = chosen.emplace(step.state, step.action);
      if (!inserted && it->second != step.action) d.inconsistent_policy = true;
    }
    d.probability = transition_likelihood(reconciled.mdp, traj);
    d.probability_too_low = !(d.probability > options.delta);
    d.explicable = d.suboptimal_steps.empty() && !d.inconsistent_policy && !d.probability_too_low;
    out.complete = out.complete && d.explicable;
    out.traces.push_back(std::move(d));
  }
  return out;
}

BehaviorCheck check_behavior_complete(const ModelFamily& family, const ParamAssignment& human,
                                      const ParamAssignment& robot,
                                      const std::set<ParamId>& subset,
                                      std::span<const Trajectory> traces,
                                      const CheckOptions& options) {
  SolvedModel rec = solve_model(family.build(reconcile(family.schema(), human, robot, subset)));
  return check_behavior_against(rec, traces, options);
}

MinimalExplanation minimal_complete_explanation(const ModelFamily& family,
                                                const ParamAssignment& human,
                                                const ParamAssignment& robot,
                                                const std::vector<Message>& candidates,
                                                const ExplanationQuery& query) {
  const std::size_t n = candidates.size();
  if (query.search == SearchMode::exhaustive && n > kMaxExhaustiveCandidates) {
    throw BudgetExceeded("exhaustive search over " + std::to_string(n) +
                         " candidates exceeds the limit of " +
                         std::to_string(kMaxExhaustiveCandidates));
  }
  for (const Message& m : candidates) {
    for (const auto& entry : m.params) {
      if (!family.schema().contains(entry.first)) {
        throw UnknownParam("message '" + m.id + "' names unknown parameter '" +
                           entry.first.key + "'");
      }
    }
  }

  ModelCache cache(family);
  const SolvedModel* robot_model = query.mode == ExplanationMode::policy ? &cache.get(robot) : nullptr;

  // Candidate order is by id so that index sets compare like id sets.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return candidates[a].id < candidates[b].id; });

  MinimalExplanation out;
  std::size_t best_violations = static_cast<std::size_t>(-1);
  std::vector<std::size_t> best;

  auto evaluate = [&](const std::vector<std::size_t>& picked) {
    std::set<ParamId> subset;
    for (std::size_t i : picked) {
      for (const auto& entry : candidates[order[i]].params) subset.insert(entry.first);
    }
    ++out.subsets_evaluated;
    const SolvedModel& rec = cache.get(reconcile(family.schema(), human, robot, subset));
    if (query.mode == ExplanationMode::policy) {
      return policy_against(*robot_model, rec, query.check.eps_opt).violations.size();
    }
    return violation_count(check_behavior_against(rec, query.traces, query.check));
  };
  auto subset_cost = [&](const std::vector<std::size_t>& picked) {
    double c = 0.0;
    for (std::size_t i : picked) c += candidates[order[i]].cost;
    return c;
  };
  auto finish = [&](const std::vector<std::size_t>& picked, std::size_t violations) {
    out.chosen.clear();
    for (std::size_t i : picked) out.chosen.push_back(candidates[order[i]].id);
    out.cost = subset_cost(picked);
    out.residual_violations = violations;
    out.found = violations == 0;
  };

  if (query.search == SearchMode::exhaustive) {
    std::vector<std::vector<std::size_t>> subsets;
    subsets.reserve(std::size_t{1} << n);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
      std::vector<std::size_t> picked;
      for (std::size_t i = 0; i < n; ++i) {
        if ((mask >> i) & 1U) picked.push_back(i);
      }
      subsets.push_back(std::move(picked));
    }
    std::vector<double> costs(subsets.size());
    for (std::size_t i = 0; i < subsets.size(); ++i) costs[i] = subset_cost(subsets[i]);
    std::vector<std::size_t> rank(subsets.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
      if (costs[a] != costs[b]) return costs[a] < costs[b];
      return subsets[a] < subsets[b];
    });

    for (std::size_t r : rank) {
      std::size_t v = evaluate(subsets[r]);
      if (v == 0) {
        finish(subsets[r], 0);
        out.optimal = true;
        return out;
      }
      if (v < best_violations) {
        best_violations = v;
        best = subsets[r];
      }
    }
    finish(best, best_violations);
    return out;
  }

  std::vector<std::size_t> current(n);
  std::iota(current.begin(), current.end(), std::size_t{0});
  std::size_t v = evaluate(current);
  if (v != 0) {
    finish(current, v);
    return out;
  }
  // Drop the most expensive removable message first; ties go to the larger id.
  bool dropped = true;
  while (dropped) {
    dropped = false;
    std::vector<std::size_t> by_cost = current;
    std::stable_sort(by_cost.begin(), by_cost.end(), [&](std::size_t a, std::size_t b) {
      if (candidates[order[a]].cost != candidates[order[b]].cost) {
        return candidates[order[a]].cost > candidates[order[b]].cost;
      }
      return a > b;
    });
    for (std::size_t drop : by_cost) {
      std::vector<std::size_t> trial;
      for (std::size_t i : current) {
        if (i != drop) trial.push_back(i);
      }
      if (evaluate(trial) == 0) {
        current = std::move(trial);
        dropped = true;
        break;
      }
    }
  }
  finish(current, 0);
  return out;
}

}  // namespace recon
