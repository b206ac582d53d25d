#include "recon/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "recon/error.hpp"

namespace recon {

namespace {

constexpr double kSimplexTolerance = 1e-9;

std::string state_action(StateId s, ActionId a) {
  return "(s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")";
}

}  // namespace

std::size_t Mdp::row_index(StateId s, ActionId a) const {
  if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_) {
    throw InvalidModel("state/action out of range " + state_action(s, a));
  }
  return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) +
         static_cast<std::size_t>(a);
}

std::span<const Outcome> Mdp::outcomes(StateId s, ActionId a) const {
  const std::size_t row = row_index(s, a);
  const std::size_t begin = row_offsets_[row];
  return std::span<const Outcome>(outcomes_).subspan(begin, row_offsets_[row + 1] - begin);
}

double Mdp::transition(StateId s, ActionId a, StateId next) const {
  for (const Outcome& o : outcomes(s, a)) {
    if (o.next == next) return o.probability;
  }
  return 0.0;
}

double Mdp::reward(StateId s, ActionId a, StateId next) const {
  for (const Outcome& o : outcomes(s, a)) {
    if (o.next == next) return o.reward;
  }
  return 0.0;
}

Mdp::Builder::Builder(int num_states, int num_actions)
    : num_states_(num_states), num_actions_(num_actions) {
  if (num_states <= 0 || num_actions <= 0) {
    throw InvalidModel("an MDP needs at least one state and one action");
  }
  rows_.resize(static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions));
  initial_.assign(static_cast<std::size_t>(num_states), 0.0);
  terminal_.assign(static_cast<std::size_t>(num_states), 0);
}

void Mdp::Builder::check_state(StateId s) const {
  if (s < 0 || s >= num_states_) throw InvalidModel("state out of range: " + std::to_string(s));
}

void Mdp::Builder::check_action(ActionId a) const {
  if (a < 0 || a >= num_actions_) throw InvalidModel("action out of range: " + std::to_string(a));
}

Mdp::Builder& Mdp::Builder::add_transition(StateId s, ActionId a, StateId next,
                                           double probability, double reward) {
  check_state(s);
  check_action(a);
  check_state(next);
  if (!(probability >= 0.0) || !std::isfinite(reward)) {
    throw InvalidModel("bad transition entry " + state_action(s, a) + " -> " +
                       std::to_string(next));
  }
  if (probability == 0.0) return *this;
  auto& row = rows_[static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) +
                    static_cast<std::size_t>(a)];
  auto it = std::find_if(row.begin(), row.end(), [&](const Outcome& o) { return o.next == next; });
  if (it == row.end()) {
    row.push_back({next, probability, reward});
  } else {
    if (it->reward != reward) {
      throw InvalidModel("conflicting rewards for " + state_action(s, a) + " -> " +
                         std::to_string(next));
    }
    it->probability += probability;
  }
  return *this;
}

Mdp::Builder& Mdp::Builder::set_discount(double discount) {
  discount_ = discount;
  return *this;
}

Mdp::Builder& Mdp::Builder::set_initial(StateId s, double probability) {
  check_state(s);
  initial_[static_cast<std::size_t>(s)] = probability;
  return *this;
}

Mdp::Builder& Mdp::Builder::set_terminal(StateId s) {
  check_state(s);
  terminal_[static_cast<std::size_t>(s)] = 1;
  return *this;
}

Mdp Mdp::Builder::build() const {
  if (!(discount_ >= 0.0 && discount_ < 1.0)) {
    throw InvalidModel("discount must lie in [0, 1), got " + std::to_string(discount_));
  }
  Mdp mdp;
  mdp.num_states_ = num_states_;
  mdp.num_actions_ = num_actions_;
  mdp.discount_ = discount_;
  mdp.terminal_ = terminal_;
  mdp.row_offsets_.reserve(rows_.size() + 1);
  mdp.row_offsets_.push_back(0);
  for (StateId s = 0; s < num_states_; ++s) {
    for (ActionId a = 0; a < num_actions_; ++a) {
      if (terminal_[static_cast<std::size_t>(s)] != 0) {
        mdp.outcomes_.push_back({s, 1.0, 0.0});
        mdp.row_offsets_.push_back(mdp.outcomes_.size());
        continue;
      }
      auto row = rows_[static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) +
                       static_cast<std::size_t>(a)];
      if (row.empty()) throw InvalidModel("empty transition row " + state_action(s, a));
      std::sort(row.begin(), row.end(),
                [](const Outcome& x, const Outcome& y) { return x.next < y.next; });
      double total = 0.0;
      for (const Outcome& o : row) total += o.probability;
      if (std::abs(total - 1.0) > kSimplexTolerance) {
        throw InvalidModel("transition row " + state_action(s, a) + " sums to " +
                           std::to_string(total));
      }
      mdp.outcomes_.insert(mdp.outcomes_.end(), row.begin(), row.end());
      mdp.row_offsets_.push_back(mdp.outcomes_.size());
    }
  }
  double total = 0.0;
  for (double p : initial_) {
    if (!(p >= 0.0)) throw InvalidModel("negative initial probability");
    total += p;
  }
  if (std::abs(total - 1.0) > kSimplexTolerance) {
    throw InvalidModel("initial distribution sums to " + std::to_string(total));
  }
  mdp.initial_ = initial_;
  return mdp;
}

Solution value_iteration(const Mdp& mdp, const SolveOptions& options) {
  if (!(options.tolerance > 0.0)) throw InvalidModel("tolerance must be positive");
  const int n = mdp.num_states();
  const int m = mdp.num_actions();
  const double gamma = mdp.discount();

  std::vector<double> values(static_cast<std::size_t>(n), 0.0);
  std::vector<double> next(values.size(), 0.0);
  double residual = std::numeric_limits<double>::infinity();
  std::size_t iteration = 0;

  while (iteration < options.max_iterations) {
    ++iteration;
    residual = 0.0;
    for (StateId s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (ActionId a = 0; a < m; ++a) {
        double q = 0.0;
        for (const Outcome& o : mdp.outcomes(s, a)) {
          q += o.probability * (o.reward + gamma * values[static_cast<std::size_t>(o.next)]);
        }
        best = std::max(best, q);
      }
      next[static_cast<std::size_t>(s)] = best;
      residual = std::max(residual, std::abs(best - values[static_cast<std::size_t>(s)]));
    }
    values.swap(next);
    if (residual < options.tolerance) break;
  }
  if (!(residual < options.tolerance)) {
    throw ConvergenceError("value iteration did not converge in " +
                               std::to_string(options.max_iterations) + " iterations",
                           residual);
  }

  Solution solution;
  solution.q = QTable(n, m);
  solution.values.assign(static_cast<std::size_t>(n), 0.0);
  for (StateId s = 0; s < n; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (ActionId a = 0; a < m; ++a) {
      double q = 0.0;
      for (const Outcome& o : mdp.outcomes(s, a)) {
        q += o.probability * (o.reward + gamma * values[static_cast<std::size_t>(o.next)]);
      }
      solution.q(s, a) = q;
      best = std::max(best, q);
    }
    solution.values[static_cast<std::size_t>(s)] = best;
  }
  solution.iterations = iteration;
  solution.residual = residual;
  return solution;
}

Policy greedy_policy(const QTable& q, TieBreak) {
  Policy policy;
  policy.actions.resize(static_cast<std::size_t>(q.num_states()), 0);
  for (StateId s = 0; s < q.num_states(); ++s) {
    const auto row = q.row(s);
    // max_element returns the first maximum, i.e. the lowest action index.
    policy.actions[static_cast<std::size_t>(s)] =
        static_cast<ActionId>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return policy;
}

std::vector<ActionId> optimal_action_set(const QTable& q, StateId s, double eps) {
  const auto row = q.row(s);
  const double best = *std::max_element(row.begin(), row.end());
  std::vector<ActionId> actions;
  for (std::size_t a = 0; a < row.size(); ++a) {
    if (row[a] >= best - eps) actions.push_back(static_cast<ActionId>(a));
  }
  return actions;
}

bool is_optimal_action(const QTable& q, StateId s, ActionId a, double eps) {
  const auto row = q.row(s);
  const double best = *std::max_element(row.begin(), row.end());
  return row[static_cast<std::size_t>(a)] >= best - eps;
}

bool Trajectory::chain_consistent() const noexcept {
  StateId current = start;
  for (const Transition& t : steps) {
    if (t.state != current) return false;
    current = t.next;
  }
  return true;
}

StateId sample_state(std::span<const double> distribution, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  StateId last_positive = 0;
  for (std::size_t i = 0; i < distribution.size(); ++i) {
    if (distribution[i] <= 0.0) continue;
    last_positive = static_cast<StateId>(i);
    cumulative += distribution[i];
    if (u < cumulative) return last_positive;
  }
  // Rounding can leave the cumulative sum a hair under 1.
  return last_positive;
}

namespace {

StateId sample_successor(std::span<const Outcome> row, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (const Outcome& o : row) {
    cumulative += o.probability;
    if (u < cumulative) return o.next;
  }
  return row.back().next;
}

}  // namespace

Trajectory sample_trajectory(const Mdp& mdp, const Policy& policy, StateId start,
                             std::size_t max_len, std::uint64_t seed) {
  Rng rng(seed);
  return sample_trajectory(mdp, policy, start, max_len, rng);
}

Trajectory sample_trajectory(const Mdp& mdp, const Policy& policy, StateId start,
                             std::size_t max_len, Rng& rng) {
  if (start < 0 || start >= mdp.num_states()) throw InvalidModel("start state out of range");
  Trajectory traj{start, {}};
  StateId s = start;
  while (traj.steps.size() < max_len && !mdp.is_terminal(s)) {
    const ActionId a = policy(s);
    const StateId next = sample_successor(mdp.outcomes(s, a), rng);
    traj.steps.push_back({s, a, next});
    s = next;
  }
  return traj;
}

Trajectory most_likely_trajectory(const Mdp& mdp, const Policy& policy, StateId start,
                                  std::size_t max_len) {
  if (start < 0 || start >= mdp.num_states()) throw InvalidModel("start state out of range");
  Trajectory traj{start, {}};
  StateId s = start;
  while (traj.steps.size() < max_len && !mdp.is_terminal(s)) {
    const ActionId a = policy(s);
    const auto row = mdp.outcomes(s, a);
    const Outcome* best = &row.front();
    for (const Outcome& o : row) {
      if (o.probability > best->probability) best = &o;
    }
    traj.steps.push_back({s, a, best->next});
    s = best->next;
  }
  return traj;
}

double trajectory_probability(const Mdp& mdp, const Policy& policy, const Trajectory& traj) {
  double p = 1.0;
  for (const Transition& t : traj.steps) {
    if (policy(t.state) != t.action) return 0.0;
    p *= mdp.transition(t.state, t.action, t.next);
  }
  return p;
}

double transition_likelihood(const Mdp& mdp, const Trajectory& traj) {
  double p = 1.0;
  for (const Transition& t : traj.steps) p *= mdp.transition(t.state, t.action, t.next);
  return p;
}

namespace {

struct Enumerator {
  const Mdp& mdp;
  const Policy& policy;
  std::size_t max_len;
  std::size_t budget;
  std::vector<WeightedTrajectory> out;
  Trajectory current;

  void visit(StateId s, double probability) {
    if (current.steps.size() == max_len || mdp.is_terminal(s)) {
      if (out.size() >= budget) {
        throw BudgetExceeded("trajectory enumeration exceeds " + std::to_string(budget) +
                             " leaves");
      }
      out.push_back({current, probability});
      return;
    }
    const ActionId a = policy(s);
    for (const Outcome& o : mdp.outcomes(s, a)) {
      current.steps.push_back({s, a, o.next});
      visit(o.next, probability * o.probability);
      current.steps.pop_back();
    }
  }
};

}  // namespace

std::vector<WeightedTrajectory> enumerate_trajectories(const Mdp& mdp, const Policy& policy,
                                                       StateId start, std::size_t max_len,
                                                       std::size_t leaf_budget) {
  if (start < 0 || start >= mdp.num_states()) throw InvalidModel("start state out of range");
  Enumerator e{mdp, policy, max_len, leaf_budget, {}, Trajectory{start, {}}};
  e.visit(start, 1.0);
  return std::move(e.out);
}

}  // namespace recon
