#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "recon/random.hpp"

namespace recon {

using StateId = std::int32_t;
using ActionId = std::int32_t;

/// One successor of a (state, action) pair.
struct Outcome {
  StateId next = 0;
  double probability = 0.0;
  double reward = 0.0;

  bool operator==(const Outcome&) const = default;
};

/// Finite discounted MDP <S, A, T, R, gamma, mu> with absorbing terminals.
///
/// Transitions are stored as sparse rows: for every (s, a) the successors with
/// nonzero probability, sorted by next state. Instances are immutable and are
/// only produced by Mdp::Builder, which enforces the invariants:
///   - every row is a probability distribution (sum 1 within 1e-9),
///   - the initial distribution sums to 1 within 1e-9,
///   - 0 <= discount < 1,
///   - terminal states self-loop with probability 1 and reward 0.
class Mdp {
 public:
  class Builder;

  int num_states() const noexcept { return num_states_; }
  int num_actions() const noexcept { return num_actions_; }
  double discount() const noexcept { return discount_; }

  std::span<const Outcome> outcomes(StateId s, ActionId a) const;

  /// T(s, a, next); zero when next is not a successor.
  double transition(StateId s, ActionId a, StateId next) const;
  /// R(s, a, next); zero when next is not a successor.
  double reward(StateId s, ActionId a, StateId next) const;

  std::span<const double> initial_distribution() const noexcept { return initial_; }
  bool is_terminal(StateId s) const { return terminal_.at(static_cast<std::size_t>(s)) != 0; }

  bool operator==(const Mdp&) const = default;

 private:
  Mdp() = default;

  std::size_t row_index(StateId s, ActionId a) const;

  int num_states_ = 0;
  int num_actions_ = 0;
  double discount_ = 0.0;
  std::vector<std::size_t> row_offsets_;
  std::vector<Outcome> outcomes_;
  std::vector<double> initial_;
  std::vector<char> terminal_;
};

class Mdp::Builder {
 public:
  Builder(int num_states, int num_actions);

  /// Adds probability mass to (s, a) -> next. Repeated calls for the same
  /// successor accumulate probability; their rewards must agree.
  Builder& add_transition(StateId s, ActionId a, StateId next, double probability,
                          double reward = 0.0);
  Builder& set_discount(double discount);
  Builder& set_initial(StateId s, double probability);
  /// Marks s absorbing: all actions self-loop with probability 1, reward 0.
  Builder& set_terminal(StateId s);

  /// Validates and freezes. Throws InvalidModel listing the first violation.
  Mdp build() const;

 private:
  void check_state(StateId s) const;
  void check_action(ActionId a) const;

  int num_states_;
  int num_actions_;
  double discount_ = 0.0;
  std::vector<std::vector<Outcome>> rows_;
  std::vector<double> initial_;
  std::vector<char> terminal_;
};

/// Dense Q(s, a) table.
class QTable {
 public:
  QTable() = default;
  QTable(int num_states, int num_actions)
      : num_states_(num_states),
        num_actions_(num_actions),
        values_(static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions)) {}

  int num_states() const noexcept { return num_states_; }
  int num_actions() const noexcept { return num_actions_; }

  double operator()(StateId s, ActionId a) const { return values_[index(s, a)]; }
  double& operator()(StateId s, ActionId a) { return values_[index(s, a)]; }

  std::span<const double> row(StateId s) const {
    return std::span<const double>(values_).subspan(index(s, 0),
                                                    static_cast<std::size_t>(num_actions_));
  }

  bool operator==(const QTable&) const = default;

 private:
  std::size_t index(StateId s, ActionId a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) +
           static_cast<std::size_t>(a);
  }

  int num_states_ = 0;
  int num_actions_ = 0;
  std::vector<double> values_;
};

struct SolveOptions {
  double tolerance = 1e-9;
  std::size_t max_iterations = 100'000;
};

struct Solution {
  std::vector<double> values;  // V(s) = max_a Q(s, a)
  QTable q;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Synchronous value iteration. Stops once max_s |V_{k+1}(s) - V_k(s)| < tol;
/// throws ConvergenceError carrying the last residual otherwise.
Solution value_iteration(const Mdp& mdp, const SolveOptions& options = {});

/// Deterministic stationary policy.
struct Policy {
  std::vector<ActionId> actions;

  ActionId operator()(StateId s) const { return actions.at(static_cast<std::size_t>(s)); }
  bool operator==(const Policy&) const = default;
};

enum class TieBreak { lowest_index };

Policy greedy_policy(const QTable& q, TieBreak tie_break = TieBreak::lowest_index);

/// { a : Q(s, a) >= max_a' Q(s, a') - eps }, in ascending action order.
std::vector<ActionId> optimal_action_set(const QTable& q, StateId s, double eps);

bool is_optimal_action(const QTable& q, StateId s, ActionId a, double eps);

struct Transition {
  StateId state = 0;
  ActionId action = 0;
  StateId next = 0;

  auto operator<=>(const Transition&) const = default;
};

/// Execution trace: a start state followed by chained (s, a, s') steps.
struct Trajectory {
  StateId start = 0;
  std::vector<Transition> steps;

  std::size_t size() const noexcept { return steps.size(); }
  StateId final_state() const noexcept { return steps.empty() ? start : steps.back().next; }
  /// Step t's next state equals step t+1's state, and step 0 starts at start.
  bool chain_consistent() const noexcept;

  bool operator==(const Trajectory&) const = default;
};

StateId sample_state(std::span<const double> distribution, Rng& rng);

/// Follows the policy from start until a terminal state or max_len steps.
Trajectory sample_trajectory(const Mdp& mdp, const Policy& policy, StateId start,
                             std::size_t max_len, std::uint64_t seed);
Trajectory sample_trajectory(const Mdp& mdp, const Policy& policy, StateId start,
                             std::size_t max_len, Rng& rng);

/// Follows the policy taking the most probable successor at every step
/// (lowest state index on ties).
Trajectory most_likely_trajectory(const Mdp& mdp, const Policy& policy, StateId start,
                                  std::size_t max_len);

/// P_M(traj | policy): product of [a_t = pi(s_t)] * T(s_t, a_t, s_{t+1}).
double trajectory_probability(const Mdp& mdp, const Policy& policy, const Trajectory& traj);

/// Product of T(s_t, a_t, s_{t+1}) over the trace, ignoring any policy.
double transition_likelihood(const Mdp& mdp, const Trajectory& traj);

struct WeightedTrajectory {
  Trajectory trajectory;
  double probability = 0.0;
};

/// Every trajectory of the policy from start that ends at a terminal state or
/// has exactly max_len steps, with its probability. Throws BudgetExceeded when
/// more than leaf_budget trajectories would be produced.
std::vector<WeightedTrajectory> enumerate_trajectories(const Mdp& mdp, const Policy& policy,
                                                       StateId start, std::size_t max_len,
                                                       std::size_t leaf_budget = 1'000'000);

}  // namespace recon
