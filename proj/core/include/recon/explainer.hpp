#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "recon/learner.hpp"
#include "recon/reconciliation.hpp"

namespace recon {

struct ExplanationResult {
  std::vector<std::string> chosen;  // catalog order
  MessageMask mask = 0;
  double objective = 0.0;
  double cost = 0.0;
  /// Predicted inexplicable transitions, summed over all traces.
  double inexplicable = 0.0;
  double alpha = 1.0;
  /// Per trace, per transition, under the chosen subset.
  std::vector<std::vector<Label>> predicted;
  SearchMode mode = SearchMode::exhaustive;
  std::size_t evaluated = 0;
};

/// Scores message subsets with a learned labeling tree over a fixed catalog.
class Explainer {
 public:
  /// Throws SchemaMismatch when the tree was trained on a different feature
  /// schema than this encoder produces.
  Explainer(const FeatureEncoder& encoder, const DecisionTree& tree,
            const std::vector<Message>& catalog);

  /// cost(mask) + alpha * sum over transitions of (1 - predicted label).
  double objective(MessageMask mask, const std::vector<Trajectory>& traces, double alpha) const;

  /// Exhaustive: global minimum, ties to fewer messages then lexicographically
  /// smaller ids. Greedy: forward selection until no single addition lowers
  /// the objective. Throws BudgetExceeded for exhaustive search over more than
  /// 24 messages, ConfigError for negative alpha.
  ExplanationResult select(const std::vector<Trajectory>& traces, double alpha,
                           SearchMode mode) const;

  std::vector<Label> predict_trace(const Trajectory& trace, MessageMask mask) const;

 private:
  ExplanationResult score(MessageMask mask, const std::vector<Trajectory>& traces,
                          double alpha) const;

  const FeatureEncoder* encoder_;
  const DecisionTree* tree_;
  const std::vector<Message>* catalog_;
};

double objective(const FeatureEncoder& encoder, const DecisionTree& tree,
                 const std::vector<Message>& catalog, MessageMask mask, const Trajectory& trace,
                 double alpha);

ExplanationResult select_messages(const FeatureEncoder& encoder, const DecisionTree& tree,
                                  const std::vector<Message>& catalog, const Trajectory& trace,
                                  double alpha, SearchMode mode);

}  // namespace recon
