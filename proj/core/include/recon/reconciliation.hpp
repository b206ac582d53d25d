#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "recon/mdp.hpp"
#include "recon/message.hpp"
#include "recon/params.hpp"

namespace recon {

/// The human's model with the parameters in subset replaced by the robot's
/// values.
///
/// Categorical groups that are only partly overwritten are renormalized: the
/// group members that still hold a human belief (not in subset and not already
/// equal to the robot value) are scaled proportionally to fill the remaining
/// mass, or share it uniformly if they carry none. This keeps the operator
/// order-independent: reconcile(h, r, A u B) == reconcile(reconcile(h, r, A), r, B).
///
/// Throws UnknownParam when subset names a parameter outside the schema, and
/// InvalidModel when the assignments do not cover the schema.
ParamAssignment reconcile(const ParamSchema& schema, const ParamAssignment& human,
                          const ParamAssignment& robot, const std::set<ParamId>& subset);

/// E({m1..mk}): union of the messages' parameter values. Throws
/// ConflictingMessages when two messages disagree on a parameter.
ParamAssignment message_params(std::span<const Message> messages);

/// Parameters touched by a message set.
std::set<ParamId> message_param_ids(std::span<const Message> messages);

/// Additive communication cost; cost({}) == 0.
double cost(std::span<const Message> messages);

/// One unit-cost message per parameter, communicating the robot's value.
std::vector<Message> messages_for_params(const ParamAssignment& robot,
                                         const std::vector<ParamId>& ids);

/// An MDP with its solution and greedy policy.
struct SolvedModel {
  Mdp mdp;
  Solution solution;
  Policy policy;
};

SolvedModel solve_model(Mdp mdp, const SolveOptions& options = {});

/// Memoizes solved models by parameter assignment. Not thread-safe.
class ModelCache {
 public:
  explicit ModelCache(const ModelFamily& family, SolveOptions options = {})
      : family_(&family), options_(options) {}

  const SolvedModel& get(const ParamAssignment& params);
  std::size_t size() const noexcept { return cache_.size(); }

 private:
  const ModelFamily* family_;
  SolveOptions options_;
  std::map<ParamAssignment, std::unique_ptr<SolvedModel>> cache_;
};

enum class ExplanationMode { policy, behavior };

std::string_view to_string(ExplanationMode mode) noexcept;

struct CheckOptions {
  double eps_opt = 1e-6;
  double delta = 0.0;
};

struct PolicyCheck {
  bool complete = false;
  /// Non-terminal robot states whose robot action is not optimal in the
  /// reconciled model.
  std::vector<StateId> violations;
};

/// Complete policy explanation test: the robot's optimal policy is optimal in
/// E(subset) at every non-terminal state.
PolicyCheck check_policy_complete(const ModelFamily& family, const ParamAssignment& human,
                                  const ParamAssignment& robot, const std::set<ParamId>& subset,
                                  double eps_opt = 1e-6);

struct TraceDiagnosis {
  bool explicable = true;
  /// Step indices whose action is outside the reconciled optimal set.
  std::vector<std::size_t> suboptimal_steps;
  /// A state is visited with two different actions, so no deterministic
  /// policy produces the trace.
  bool inconsistent_policy = false;
  /// Product of reconciled T over the trace; must exceed delta.
  double probability = 0.0;
  bool probability_too_low = false;

  std::string reason() const;
};

struct BehaviorCheck {
  bool complete = false;
  std::vector<TraceDiagnosis> traces;
};

/// Complete behavior explanation test: every trace is produced with
/// probability > delta by some deterministic optimal policy of E(subset).
BehaviorCheck check_behavior_complete(const ModelFamily& family, const ParamAssignment& human,
                                      const ParamAssignment& robot,
                                      const std::set<ParamId>& subset,
                                      std::span<const Trajectory> traces,
                                      const CheckOptions& options = {});

/// Same test against an already solved reconciled model.
BehaviorCheck check_behavior_against(const SolvedModel& reconciled,
                                     std::span<const Trajectory> traces,
                                     const CheckOptions& options = {});

enum class SearchMode { exhaustive, greedy };

std::string_view to_string(SearchMode mode) noexcept;

struct ExplanationQuery {
  ExplanationMode mode = ExplanationMode::behavior;
  SearchMode search = SearchMode::exhaustive;
  std::vector<Trajectory> traces;  // behavior mode only
  CheckOptions check;
};

struct MinimalExplanation {
  /// False when no candidate subset is complete; chosen then holds the
  /// best-effort subset (fewest violations, then cheapest).
  bool found = false;
  /// True for exhaustive results; greedy results are only inclusion-minimal.
  bool optimal = false;
  std::vector<std::string> chosen;  // message ids, ascending
  double cost = 0.0;
  std::size_t residual_violations = 0;
  std::size_t subsets_evaluated = 0;
};

inline constexpr std::size_t kMaxExhaustiveCandidates = 24;

/// Cheapest complete explanation over subsets of the candidate messages.
/// Exhaustive search visits subsets in (cost, lexicographic id set) order and
/// returns the first complete one; completeness is not assumed monotone.
/// Greedy search starts from the full set and drops messages while the set
/// stays complete. Throws BudgetExceeded for exhaustive search over more than
/// 24 candidates.
MinimalExplanation minimal_complete_explanation(const ModelFamily& family,
                                                const ParamAssignment& human,
                                                const ParamAssignment& robot,
                                                const std::vector<Message>& candidates,
                                                const ExplanationQuery& query);

}  // namespace recon
