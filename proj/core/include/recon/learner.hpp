#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "recon/domain.hpp"
#include "recon/sim_user.hpp"

namespace recon {

enum class FeatureKind { numeric, categorical, binary };

std::string_view to_string(FeatureKind kind) noexcept;
FeatureKind parse_feature_kind(std::string_view text);

struct FeatureSchema {
  std::vector<std::string> names;
  std::vector<FeatureKind> kinds;

  std::size_t size() const noexcept { return names.size(); }
  /// FNV-1a over names and kinds.
  std::uint64_t hash() const noexcept;

  bool operator==(const FeatureSchema&) const = default;
};

struct FeatureRow {
  std::vector<int> values;
  Label label = Label::explicable;

  bool operator==(const FeatureRow&) const = default;
};

/// Turns labeled transitions into rows: state features, action index, one bit
/// per catalog message, and optionally the next state's features.
class FeatureEncoder {
 public:
  explicit FeatureEncoder(const DomainSpec& spec, bool include_next_state = false);

  const FeatureSchema& schema() const noexcept { return schema_; }
  bool include_next_state() const noexcept { return include_next_; }

  /// Throws SchemaMismatch when the transition's states are out of range.
  FeatureRow encode(const LabeledTransition& t) const;
  FeatureRow encode(const Transition& t, MessageMask mask) const;
  std::vector<FeatureRow> encode(const std::vector<LabeledTransition>& rows) const;

 private:
  const DomainSpec* spec_;
  bool include_next_;
  FeatureSchema schema_;
};

struct TreeHyper {
  std::string criterion = "gini";
  std::size_t min_leaf = 1;
  std::size_t max_depth = std::numeric_limits<std::size_t>::max();

  bool operator==(const TreeHyper&) const = default;
};

struct TreeNode {
  /// -1 for leaves.
  int feature = -1;
  /// Numeric and binary splits send value <= threshold left; categorical
  /// splits send value == category left.
  double threshold = 0.0;
  int category = 0;
  int left = -1;
  int right = -1;
  Label label = Label::explicable;
  std::size_t count_inexplicable = 0;
  std::size_t count_explicable = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

/// Binary CART classifier. Node 0 is the root.
struct DecisionTree {
  FeatureSchema schema;
  TreeHyper hyper;
  std::uint64_t seed = 0;
  std::vector<TreeNode> nodes;

  std::size_t depth() const;
  std::size_t leaf_count() const;
  /// Hash of schema, hyperparameters, and every node field.
  std::uint64_t structure_hash() const;

  bool operator==(const DecisionTree&) const = default;
};

/// Greedy CART on Gini gain. Ties go to the lowest feature index, then the
/// lowest threshold/category. Impure nodes split even at zero gain as long as
/// some split separates the rows; leaves predict the majority label with ties
/// going to explicable. Throws ConfigError on an empty dataset and
/// SchemaMismatch on rows of the wrong width.
DecisionTree train_tree(const FeatureSchema& schema, const std::vector<FeatureRow>& rows,
                        const TreeHyper& hyper = {}, std::uint64_t seed = 0);

/// Throws SchemaMismatch on rows of the wrong width.
Label predict(const DecisionTree& tree, const std::vector<int>& values);
Label predict(const DecisionTree& tree, const FeatureRow& row);

double accuracy(const DecisionTree& tree, const std::vector<FeatureRow>& rows);

/// Fraction of rows that share features with a row of the other label.
double conflict_rate(const std::vector<FeatureRow>& rows);

struct CrossValidation {
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracy;
};

/// Stratified k-fold: each class is shuffled with the seed and dealt to folds
/// round-robin. Throws ConfigError when k < 2 or k > rows.
CrossValidation cross_validate(const FeatureSchema& schema, const std::vector<FeatureRow>& rows,
                               std::size_t k, std::uint64_t seed, const TreeHyper& hyper = {});

struct CurvePoint {
  std::size_t train_size = 0;
  double test_accuracy = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

/// Shuffles once with the seed, holds out the first test_count rows, and
/// trains on nested prefixes of the rest. Throws ConfigError when
/// max(sizes) + test_count > rows.
std::vector<CurvePoint> training_curve(const FeatureSchema& schema,
                                       const std::vector<FeatureRow>& rows,
                                       const std::vector<std::size_t>& sizes,
                                       std::size_t test_count, std::uint64_t seed,
                                       const TreeHyper& hyper = {});
/// Same with test_count = round(test_fraction * rows).
std::vector<CurvePoint> training_curve_by_fraction(const FeatureSchema& schema,
                                                   const std::vector<FeatureRow>& rows,
                                                   const std::vector<std::size_t>& sizes,
                                                   double test_fraction, std::uint64_t seed,
                                                   const TreeHyper& hyper = {});

}  // namespace recon
