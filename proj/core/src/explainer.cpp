#include "recon/explainer.hpp"

#include <algorithm>

#include "recon/error.hpp"

namespace recon {

Explainer::Explainer(const FeatureEncoder& encoder, const DecisionTree& tree,
                     const std::vector<Message>& catalog)
    : encoder_(&encoder), tree_(&tree), catalog_(&catalog) {
  if (tree.schema.hash() != encoder.schema().hash()) {
    throw SchemaMismatch("tree feature schema does not match the domain and catalog");
  }
  if (catalog.size() > kMaxCatalogSize) throw ConfigError("catalog larger than 32 messages");
}

std::vector<Label> Explainer::predict_trace(const Trajectory& trace, MessageMask mask) const {
  std::vector<Label> out;
  out.reserve(trace.steps.size());
  for (const Transition& t : trace.steps) {
    out.push_back(predict(*tree_, encoder_->encode(t, mask)));
  }
  return out;
}

ExplanationResult Explainer::score(MessageMask mask, const std::vector<Trajectory>& traces,
                                   double alpha) const {
  ExplanationResult r;
  r.mask = mask;
  r.alpha = alpha;
  for (std::size_t i = 0; i < catalog_->size(); ++i) {
    if (mask_has(mask, i)) {
      r.chosen.push_back((*catalog_)[i].id);
      r.cost += (*catalog_)[i].cost;
    }
  }
  for (const Trajectory& trace : traces) {
    r.predicted.push_back(predict_trace(trace, mask));
    for (Label l : r.predicted.back()) r.inexplicable += l == Label::inexplicable ? 1.0 : 0.0;
  }
  r.objective = r.cost + alpha * r.inexplicable;
  return r;
}

double Explainer::objective(MessageMask mask, const std::vector<Trajectory>& traces,
                            double alpha) const {
  return score(mask, traces, alpha).objective;
}

namespace {

// Fewer messages first, then lexicographically smaller sorted id lists.
bool tie_preferred(const ExplanationResult& a, const ExplanationResult& b) {
  if (a.chosen.size() != b.chosen.size()) return a.chosen.size() < b.chosen.size();
  std::vector<std::string> x = a.chosen;
  std::vector<std::string> y = b.chosen;
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  return x < y;
}

}  // namespace

ExplanationResult Explainer::select(const std::vector<Trajectory>& traces, double alpha,
                                    SearchMode mode) const {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
  const std::size_t n = catalog_->size();

  if (mode == SearchMode::exhaustive) {
    if (n > kMaxExhaustiveCandidates) {
      throw BudgetExceeded("exhaustive selection over " + std::to_string(n) + " messages");
    }
    ExplanationResult best = score(0, traces, alpha);
    std::size_t evaluated = 1;
    for (std::uint64_t m = 1; m < (std::uint64_t{1} << n); ++m) {
      ExplanationResult r = score(static_cast<MessageMask>(m), traces, alpha);
      ++evaluated;
      if (r.objective < best.objective ||
          (r.objective == best.objective && tie_preferred(r, best))) {
        best = std::move(r);
      }
    }
    best.mode = mode;
    best.evaluated = evaluated;
    return best;
  }

  ExplanationResult best = score(0, traces, alpha);
  std::size_t evaluated = 1;
  while (true) {
    ExplanationResult step_best = best;
    bool improved = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask_has(best.mask, i)) continue;
      ExplanationResult r = score(best.mask | (MessageMask{1} << i), traces, alpha);
      ++evaluated;
      const bool better = r.objective < step_best.objective ||
                          (improved && r.objective == step_best.objective &&
                           tie_preferred(r, step_best));
      if (r.objective < best.objective && better) {
        step_best = std::move(r);
        improved = true;
      }
    }
    if (!improved) break;
    best = std::move(step_best);
  }
  best.mode = mode;
  best.evaluated = evaluated;
  return best;
}

double objective(const FeatureEncoder& encoder, const DecisionTree& tree,
                 const std::vector<Message>& catalog, MessageMask mask, const Trajectory& trace,
                 double alpha) {
  return Explainer(encoder, tree, catalog).objective(mask, {trace}, alpha);
}

ExplanationResult select_messages(const FeatureEncoder& encoder, const DecisionTree& tree,
                                  const std::vector<Message>& catalog, const Trajectory& trace,
                                  double alpha, SearchMode mode) {
  return Explainer(encoder, tree, catalog).select({trace}, alpha, mode);
}

}  // namespace recon
